# ============================================
# SCENARIO SERVICE - Carga de escenarios, localización y etapas
# ============================================
# Responsabilidad: leer documentos YAML, validarlos, construir los agentes
# iniciales, proyectar poses sobre carriles y clasificar la etapa de decisión

import copy
import logging
import os
from dataclasses import dataclass, replace

import numpy as np
import yaml

from app.models.constraint import ConstraintBounds, SafetyConfig
from app.models.game import SOLVERS, GridConfig, MpcWeights
from app.models.lane import LaneKind
from app.models.payoff import DrivingStyle, PayoffWeights, STYLE_TABLE, StyleWeights
from app.models.roundabout import (
    PORTS, RINGS, AgentSeed, RoleConfig, RoundaboutGeometry, Route, ScenarioConfig, Stage,
    StageConfig, VehicleAgent
)
from app.models.vehicle import ControlInput, HorizonConfig, VehicleParameters, VehicleState
from app.services.geometry_service import build_map
from app.utils.exceptions import (
    ConfigurationError, LocalizationError, ProjectionError, ScenarioError
)
from app.utils.units import parse_angle, parse_seconds
from app.utils.validators import (
    FiniteNumber, OneOf, PositiveInteger, PositiveNumber, PositiveOrZero
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Prioridad de desempate por tipo de carril en la localización inicial
KIND_PRIORITY = {LaneKind.INBOUND: 0, LaneKind.ENTRY: 1, LaneKind.RING: 2, LaneKind.EXIT: 3}

ANGLE_FIELDS = {'dphi_max', 'ddelta_max', 'delta_max', 'exit_threshold'}


@dataclass(frozen=True)
class Localization:
    """Carril localizado de un agente y su pose relativa"""
    lane: object
    s: float
    dy: float
    dphi: float


def _deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _node_line(node, path):
    """Línea (1-based) del nodo YAML que corresponde a una ruta de campo"""
    current = node
    for part in path:
        if current is None:
            break
        if isinstance(current, yaml.MappingNode):
            current = next((v for k, v in current.value if k.value == part), None)
        elif isinstance(current, yaml.SequenceNode) and isinstance(part, int):
            current = current.value[part] if part < len(current.value) else None
        else:
            current = None
    target = current if current is not None else node
    return target.start_mark.line + 1 if target is not None else None


class _Reader:
    """Lectura validada de una sección con ruta de campo para los errores"""

    def __init__(self, data, path, root):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ScenarioError('Se esperaba una tabla', field=self._name(path),
                                line=_node_line(root, path))
        self.data = data
        self.path = list(path)
        self.root = root

    @staticmethod
    def _name(path):
        out = ''
        for part in path:
            out += f'[{part}]' if isinstance(part, int) else (f'.{part}' if out else part)
        return out

    def field(self, key):
        return self._name(self.path + [key])

    def get(self, key, default, validator, convert=None):
        if key not in self.data or self.data[key] is None:
            return default
        raw = self.data[key]
        try:
            if convert is not None:
                raw = convert(raw)
            return validator(raw, self.field(key))
        except ScenarioError as e:
            raise ScenarioError(e.message, field=self.field(key),
                                line=_node_line(self.root, self.path + [key]))
        except ValueError as e:
            raise ScenarioError(str(e), field=self.field(key),
                                line=_node_line(self.root, self.path + [key]))

    def error(self, message, key=None, agent_id=None):
        path = self.path + ([key] if key is not None else [])
        return ScenarioError(message, field=self._name(path), agent_id=agent_id,
                             line=_node_line(self.root, path))


class ScenarioService:
    """Servicio de escenarios"""

    BASELINE = 'baseline'

    # --------------------------------------------
    # Carga
    # --------------------------------------------

    @classmethod
    def resolve_path(cls, name_or_path, scenario_dir):
        """
        Ruta de un escenario: archivo existente o nombre del corpus incluido

        Raises:
            ScenarioError: si no existe
        """
        candidates = [name_or_path]
        if not name_or_path.endswith(('.yaml', '.yml')):
            candidates.append(os.path.join(scenario_dir, f'{name_or_path}.yaml'))
        for candidate in candidates:
            if os.path.isfile(candidate):
                return candidate
        raise ScenarioError('No se encontró el escenario', path=name_or_path)

    @classmethod
    def load_file(cls, path, scenario_dir=None):
        """Carga y valida un escenario desde un archivo"""
        try:
            with open(path, encoding='utf-8') as handle:
                text = handle.read()
        except OSError as e:
            raise ScenarioError(f'No se pudo leer el escenario: {e.strerror}', path=path)
        default_name = os.path.splitext(os.path.basename(path))[0]
        return cls.load_scenario(text, default_name=default_name,
                                 scenario_dir=scenario_dir or os.path.dirname(path))

    @classmethod
    def _parse(cls, document):
        try:
            root = yaml.compose(document)
            data = yaml.safe_load(document)
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            raise ScenarioError(f'YAML inválido: {getattr(e, "problem", e)}',
                                line=mark.line + 1 if mark else None)
        if not isinstance(data, dict):
            raise ScenarioError('El escenario debe ser una tabla YAML', line=1)
        return data, root

    @classmethod
    def _with_base(cls, data, scenario_dir):
        base_name = data.get('extends')
        if not base_name:
            return data
        if scenario_dir is None:
            raise ScenarioError('No hay directorio para resolver extends', field='extends')
        base_path = cls.resolve_path(base_name, scenario_dir)
        with open(base_path, encoding='utf-8') as handle:
            base, _ = cls._parse(handle.read())
        base = cls._with_base(base, scenario_dir)
        base.pop('name', None)
        merged = _deep_merge(base, {k: v for k, v in data.items() if k != 'extends'})
        return merged

    @classmethod
    def load_scenario(cls, document, default_name='scenario', scenario_dir=None):
        """
        Construye un ScenarioConfig validado a partir de texto YAML

        Args:
            document: texto YAML
            default_name: nombre si el documento no define `name`
            scenario_dir: directorio para resolver `extends`

        Returns:
            ScenarioConfig con todos los valores por defecto resueltos

        Raises:
            ScenarioError: error de sintaxis (con línea), de esquema (con campo)
                o de invariante (con id del agente)
        """
        data, root = cls._parse(document)
        version = data.get('schema_version')
        if version != SCHEMA_VERSION:
            raise ScenarioError(f'schema_version no soportada: {version!r} (se espera {SCHEMA_VERSION})',
                                field='schema_version', line=_node_line(root, ['schema_version']))
        data = cls._with_base(data, scenario_dir)
        top = _Reader(data, [], root)

        try:
            config = cls._build_config(top, default_name)
        except ScenarioError:
            raise
        except ConfigurationError as e:
            raise ScenarioError(e.message, field=e.context.get('field'))

        cls._validate_agents(config)
        logger.info(f"📄 Escenario '{config.name}' cargado: {len(config.agents)} agentes, "
                    f"solver={config.solver}, duración={config.duration:.1f}s")
        return config

    @classmethod
    def _build_config(cls, top, default_name):
        root = top.root
        name = str(top.data.get('name') or default_name)

        section = _Reader(top.data.get('geometry'), ['geometry'], root)
        defaults = RoundaboutGeometry()
        port_reader = _Reader(section.data.get('port_angles'), ['geometry', 'port_angles'], root)
        port_angles = tuple(
            port_reader.get(p, defaults.port_angle(p), FiniteNumber(), parse_angle) for p in PORTS)
        offsets = section.data.get('main_road_lane_offsets', defaults.main_road_lane_offsets)
        if not isinstance(offsets, (list, tuple)) or len(offsets) != 2:
            raise section.error('Se requieren dos desplazamientos', 'main_road_lane_offsets')
        geometry = RoundaboutGeometry(
            inner_lane_radius=section.get('inner_lane_radius', defaults.inner_lane_radius, PositiveNumber()),
            outer_lane_radius=section.get('outer_lane_radius', defaults.outer_lane_radius, PositiveNumber()),
            lane_width=section.get('lane_width', defaults.lane_width, PositiveNumber()),
            main_road_lane_offsets=tuple(PositiveNumber()(o, section.field('main_road_lane_offsets'))
                                         for o in offsets),
            port_angles=port_angles,
            road_length=section.get('road_length', defaults.road_length, PositiveNumber()),
            fillet_radius=section.get('fillet_radius', defaults.fillet_radius, PositiveNumber()),
        )

        section = _Reader(top.data.get('horizon'), ['horizon'], root)
        horizon = HorizonConfig(
            dt=section.get('dt', 0.1, PositiveNumber(), parse_seconds),
            Np=section.get('np', 10, PositiveInteger()),
            Nc=section.get('nc', 2, PositiveInteger()),
        )

        section = _Reader(top.data.get('grid'), ['grid'], root)
        grid = GridConfig(
            levels_ax=section.get('levels_ax', 5, PositiveInteger(2)),
            levels_delta=section.get('levels_delta', 5, PositiveInteger(2)),
        )

        section = _Reader(top.data.get('styles'), ['styles'], root)
        style_weights = {}
        for style in DrivingStyle:
            row = _Reader(section.data.get(style.value), ['styles', style.value], root)
            published = STYLE_TABLE[style]
            style_weights[style] = StyleWeights(
                ks=row.get('ks', published.ks, PositiveOrZero()),
                kc=row.get('kc', published.kc, PositiveOrZero()),
                ke=row.get('ke', published.ke, PositiveOrZero()),
            )

        section = _Reader(top.data.get('payoff'), ['payoff'], root)
        payoff_defaults = PayoffWeights()
        payoff_values = {}
        for key, default in payoff_defaults.to_dict().items():
            validator = PositiveNumber() if key == 'epsilon' else PositiveOrZero()
            payoff_values[key] = section.get(key, default, validator)
        unknown = set(section.data) - set(payoff_values)
        if unknown:
            raise section.error(f'Campos desconocidos: {", ".join(sorted(unknown))}')
        payoff_weights = PayoffWeights(**payoff_values)

        section = _Reader(top.data.get('bounds'), ['bounds'], root)
        bound_defaults = ConstraintBounds()
        bound_values = {}
        for key in ConstraintBounds.LIMIT_NAMES:
            convert = parse_angle if key in ANGLE_FIELDS else None
            bound_values[key] = section.get(key, getattr(bound_defaults, key), PositiveNumber(), convert)
        bound_values['ds_tracking'] = section.get('ds_tracking', True, OneOf([True, False]))
        bound_values['lane_end'] = section.get('lane_end', True, OneOf([True, False]))
        bound_values['lane_constraints'] = section.get(
            'lane_constraints', 'always', OneOf(['always', 'settled', 'off']))
        bounds = ConstraintBounds(**bound_values)

        section = _Reader(top.data.get('mpc'), ['mpc'], root)
        q = section.data.get('q', 100.0)
        if isinstance(q, (list, tuple)):
            q = tuple(PositiveOrZero()(v, section.field('q')) for v in q)
        else:
            q = section.get('q', 100.0, PositiveOrZero())
        r_reader = _Reader(section.data.get('r'), ['mpc', 'r'], root)
        r = tuple(r_reader.get(k, d, PositiveOrZero())
                  for k, d in zip(('ax', 'delta', 'alpha', 'beta'), MpcWeights().R))
        omega = section.data.get('omega')
        if omega is not None:
            omega = tuple(PositiveNumber()(v, section.field('omega')) for v in omega)
        mpc = MpcWeights(Q=q, R=r, omega=omega)

        section = _Reader(top.data.get('roles'), ['roles'], root)
        role_defaults = RoleConfig()
        roles = RoleConfig(
            lookahead=section.get('lookahead', role_defaults.lookahead, PositiveNumber()),
            adjacent_window=section.get('adjacent_window', role_defaults.adjacent_window, PositiveNumber()),
            conflict_arc=section.get('conflict_arc', role_defaults.conflict_arc, PositiveNumber()),
            conflict_horizon=section.get('conflict_horizon', role_defaults.conflict_horizon,
                                         PositiveNumber(), parse_seconds),
            conflict_headway=section.get('conflict_headway', role_defaults.conflict_headway,
                                         PositiveOrZero(), parse_seconds),
            max_nv=section.get('max_nv', role_defaults.max_nv, OneOf([0, 1, 2, 3])),
        )

        section = _Reader(top.data.get('stages'), ['stages'], root)
        stage_defaults = StageConfig()
        stages = StageConfig(
            exit_threshold=section.get('exit_threshold', stage_defaults.exit_threshold,
                                       PositiveNumber(), parse_angle),
            completion_distance=section.get('completion_distance', stage_defaults.completion_distance,
                                            PositiveNumber()),
            capture_lane_widths=section.get('capture_lane_widths', stage_defaults.capture_lane_widths,
                                            PositiveNumber()),
        )

        section = _Reader(top.data.get('safety'), ['safety'], root)
        safety_defaults = SafetyConfig()
        safety = SafetyConfig(
            enabled=section.get('enabled', safety_defaults.enabled, OneOf([True, False])),
            headway_margin=section.get('headway_margin', safety_defaults.headway_margin,
                                       PositiveOrZero()),
            separation_margin=section.get('separation_margin', safety_defaults.separation_margin,
                                          PositiveOrZero()),
            gap_time=section.get('gap_time', safety_defaults.gap_time, PositiveOrZero(),
                                 parse_seconds),
            clear_distance=section.get('clear_distance', safety_defaults.clear_distance,
                                       PositiveOrZero()),
            brake_decel=section.get('brake_decel', safety_defaults.brake_decel, PositiveNumber()),
        )

        vehicle_defaults = cls._vehicle(top.data.get('vehicle'), ['vehicle'], root, VehicleParameters())
        agents = cls._agents(top, vehicle_defaults)

        return ScenarioConfig(
            name=name,
            geometry=geometry,
            agents=agents,
            horizon=horizon,
            solver=top.get('solver', 'sg', OneOf(SOLVERS)),
            style_weights=style_weights,
            payoff_weights=payoff_weights,
            bounds=bounds,
            mpc=mpc,
            grid=grid,
            roles=roles,
            stages=stages,
            safety=safety,
            duration=top.get('duration', 10.0, PositiveNumber(), parse_seconds),
            seed=top.get('seed', 0, PositiveInteger(0)),
            schema_version=SCHEMA_VERSION,
        )

    @staticmethod
    def _vehicle(data, path, root, defaults):
        section = _Reader(data, path, root)
        return VehicleParameters(
            lf=section.get('lf', defaults.lf, PositiveNumber()),
            lr=section.get('lr', defaults.lr, PositiveNumber()),
            Lv=section.get('Lv', defaults.Lv, PositiveNumber()),
            collision_diameter=section.get('collision_diameter', defaults.collision_diameter,
                                           PositiveNumber()),
        )

    @classmethod
    def _agents(cls, top, vehicle_defaults):
        raw_agents = top.data.get('agents')
        if not isinstance(raw_agents, list) or not raw_agents:
            raise top.error('Se requiere al menos un agente', 'agents')
        seeds = []
        seen = set()
        for index, raw in enumerate(raw_agents):
            path = ['agents', index]
            section = _Reader(raw, path, top.root)
            agent_id = str(section.data.get('id', '')).strip()
            if not agent_id:
                raise section.error('Cada agente necesita un id', 'id')
            if agent_id in seen:
                raise section.error('Id de agente duplicado', 'id', agent_id=agent_id)
            seen.add(agent_id)

            position = section.data.get('position')
            if not isinstance(position, (list, tuple)) or len(position) != 2:
                raise section.error('position debe ser [X, Y]', 'position', agent_id=agent_id)
            X = FiniteNumber()(position[0], section.field('position'))
            Y = FiniteNumber()(position[1], section.field('position'))

            route_section = _Reader(section.data.get('route'), path + ['route'], top.root)
            if 'exit' not in route_section.data:
                raise route_section.error('La ruta necesita un acceso de salida', 'exit', agent_id=agent_id)
            route = Route(
                exit=route_section.get('exit', None, OneOf(PORTS)),
                entry=route_section.get('entry', None, OneOf(PORTS)),
                entry_ring=route_section.get('entry_ring', 'outer', OneOf(RINGS)),
                exit_lane=route_section.get('exit_lane', 1, OneOf([0, 1])),
            )
            seeds.append(AgentSeed(
                id=agent_id, X=X, Y=Y,
                vx=section.get('vx', 0.0, PositiveOrZero()),
                style=DrivingStyle(section.get('style', 'normal', OneOf([s.value for s in DrivingStyle]))),
                route=route,
                phi=section.get('heading', None, FiniteNumber(), parse_angle),
                steering=section.get('steering', None, FiniteNumber(), parse_angle),
                params=cls._vehicle(section.data.get('vehicle'), path + ['vehicle'], top.root,
                                    vehicle_defaults),
            ))
        return tuple(seeds)

    @classmethod
    def _validate_agents(cls, config):
        seeds = config.agents
        for i, a in enumerate(seeds):
            for b in seeds[i + 1:]:
                distance = np.hypot(a.X - b.X, a.Y - b.Y)
                limit = 0.5 * (a.params.collision_diameter + b.params.collision_diameter)
                if distance <= limit:
                    raise ScenarioError(
                        f'Posiciones iniciales en colisión ({a.id} y {b.id}: {distance:.2f} m)',
                        agent_id=b.id, field='agents')
        # cada agente debe quedar sobre un carril existente
        try:
            cls.initial_agents(config)
        except LocalizationError as e:
            raise ScenarioError(e.message, agent_id=e.context.get('agent_id'), field='agents')

    @staticmethod
    def with_overrides(config, solver=None, Np=None, Nc=None, dt=None, grid=None, duration=None,
                       seed=None):
        """
        Copia del escenario con overrides de la línea de comandos

        dt y duration aceptan sufijos de tiempo ('0.05', '50ms').

        Raises:
            ConfigurationError: override inválido
        """
        try:
            dt = parse_seconds(dt) if dt is not None else None
            duration = parse_seconds(duration) if duration is not None else None
        except ValueError as e:
            raise ConfigurationError(str(e))
        if duration is not None and duration <= 0:
            raise ConfigurationError('La duración debe ser positiva', duration=duration)
        if solver is not None and solver not in SOLVERS:
            raise ConfigurationError('Solver desconocido', solver=solver)
        if seed is not None and seed < 0:
            raise ConfigurationError('La semilla no puede ser negativa', seed=seed)

        horizon = config.horizon
        horizon = HorizonConfig(
            dt=horizon.dt if dt is None else dt,
            Np=horizon.Np if Np is None else Np,
            Nc=horizon.Nc if Nc is None else Nc,
        )
        grid_config = config.grid if grid is None else GridConfig(grid, grid)
        return replace(
            config,
            solver=solver or config.solver,
            horizon=horizon,
            grid=grid_config,
            duration=config.duration if duration is None else duration,
            seed=config.seed if seed is None else seed,
        )

    # --------------------------------------------
    # Documento resuelto
    # --------------------------------------------

    @staticmethod
    def to_document(config):
        """Documento YAML-serializable con todos los valores resueltos (SI, radianes)"""
        g = config.geometry
        return {
            'schema_version': config.schema_version,
            'name': config.name,
            'solver': config.solver,
            'duration': config.duration,
            'seed': config.seed,
            'horizon': {'dt': config.horizon.dt, 'np': config.horizon.Np, 'nc': config.horizon.Nc},
            'grid': config.grid.to_dict(),
            'geometry': {
                'inner_lane_radius': g.inner_lane_radius,
                'outer_lane_radius': g.outer_lane_radius,
                'lane_width': g.lane_width,
                'main_road_lane_offsets': list(g.main_road_lane_offsets),
                'port_angles': {p: g.port_angle(p) for p in PORTS},
                'road_length': g.road_length,
                'fillet_radius': g.fillet_radius,
            },
            'styles': {s.value: w.to_dict() for s, w in config.style_weights.items()},
            'payoff': config.payoff_weights.to_dict(),
            'bounds': config.bounds.to_dict(),
            'mpc': {
                'q': list(config.mpc.Q) if isinstance(config.mpc.Q, (list, tuple)) else config.mpc.Q,
                'r': dict(zip(('ax', 'delta', 'alpha', 'beta'), config.mpc.R)),
                'omega': list(config.mpc.omega) if config.mpc.omega is not None else None,
            },
            'roles': config.roles.to_dict(),
            'stages': config.stages.to_dict(),
            'safety': config.safety.to_dict(),
            'agents': [{
                'id': a.id,
                'position': [a.X, a.Y],
                'vx': a.vx,
                'style': a.style.value,
                'route': {k: v for k, v in a.route.to_dict().items() if v is not None},
                'heading': a.phi,
                'steering': a.steering,
                'vehicle': a.params.to_dict(),
            } for a in config.agents],
        }

    # --------------------------------------------
    # Proyección y localización
    # --------------------------------------------

    @staticmethod
    def reference_pose(pose, lane, capture=2 * 3.63):
        """
        Error lateral, error de rumbo y estación de una pose respecto a un carril

        Args:
            pose: (X, Y, φ)
            lane: LaneRef
            capture: distancia lateral máxima admitida (m)

        Returns:
            tuple: (dy, dphi, s)

        Raises:
            ProjectionError: fuera del rango de captura
        """
        X, Y, phi = pose
        dy, dphi, s = lane.project(X, Y, phi)
        if abs(dy) >= capture:
            raise ProjectionError('Posición fuera del rango de captura del carril',
                                  lane=lane.id, dy=round(dy, 3))
        return dy, dphi, s

    @staticmethod
    def localize(state, rmap, candidate_ids, prefer=None, capture=2 * 3.63, agent_id=None):
        """
        Carril con menor |dy| entre los candidatos; empate → `prefer`

        Un carril abierto sólo acepta estaciones dentro de [−capture, L + capture].

        Si ninguno queda dentro de la captura se busca en toda la red.

        Returns:
            Localization

        Raises:
            LocalizationError: el vehículo no está sobre ningún carril
        """
        def best_of(ids):
            best, best_key = None, None
            for order, lane_id in enumerate(ids):
                lane = rmap.lane(lane_id)
                dy, dphi, s = lane.project(state.X, state.Y, state.phi)
                if abs(dy) >= capture or not lane.covers(s, capture):
                    continue
                tie = 0 if lane_id == prefer else 1
                key = (round(abs(dy), 9), tie, order)
                if best_key is None or key < best_key:
                    best, best_key = Localization(lane, s, dy, dphi), key
            return best

        found = best_of(candidate_ids)
        if found is None:
            ordered = sorted(rmap.lanes, key=lambda i: (KIND_PRIORITY[rmap.lanes[i].kind], i))
            found = best_of(ordered)
        if found is None:
            raise LocalizationError('El vehículo no está sobre ningún carril', agent_id=agent_id,
                                    X=round(state.X, 3), Y=round(state.Y, 3))
        return found

    @classmethod
    def initial_agents(cls, config):
        """
        Agentes iniciales: carril localizado, rumbo y dirección por defecto

        Returns:
            dict: id → VehicleAgent (orden por id)
        """
        rmap = build_map(config.geometry)
        capture = config.stages.capture_lane_widths * config.geometry.lane_width
        ordered = sorted(rmap.lanes, key=lambda i: (KIND_PRIORITY[rmap.lanes[i].kind], i))
        agents = {}
        for seed in sorted(config.agents, key=lambda a: a.id):
            heading_hint = 0.0 if seed.phi is None else seed.phi
            hinted = VehicleState(seed.vx, heading_hint, seed.X, seed.Y)
            if seed.route.entry is not None:
                preferred = [i for i in ordered if rmap.lanes[i].port == seed.route.entry
                             and rmap.lanes[i].kind in (LaneKind.INBOUND, LaneKind.ENTRY)]
                ordered_ids = preferred + [i for i in ordered if i not in preferred]
            else:
                ordered_ids = ordered
            found = cls.localize(hinted, rmap, ordered_ids, capture=capture, agent_id=seed.id)
            lane = found.lane
            phi = seed.phi
            if phi is None:
                phi = float(lane.heading_at(found.s)[0])
            steering = seed.steering
            if steering is None:
                curvature = float(lane.curvature_at(found.s)[0])
                beta = np.arcsin(np.clip(seed.params.lr * curvature, -1.0, 1.0))
                steering = float(np.arctan(np.tan(beta) * seed.params.wheelbase / seed.params.lr))
            agents[seed.id] = VehicleAgent(
                id=seed.id, style=seed.style, route=seed.route,
                state=VehicleState(seed.vx, phi, seed.X, seed.Y),
                prev_control=ControlInput(0.0, steering),
                params=seed.params, lane=lane.id, target_lane=lane.id,
            )
        return agents

    # --------------------------------------------
    # Etapas
    # --------------------------------------------

    @staticmethod
    def exit_arc(rmap, route, X, Y):
        """Ángulo antihorario desde la posición hasta la bifurcación de salida"""
        branch = rmap.branch_angle(route.exit, route.exit_lane)
        return rmap.ccw_arc(rmap.polar_angle(X, Y), branch)

    @classmethod
    def classify_stage(cls, agent, rmap, stage_config=None, localization=None):
        """
        Etapa de decisión de un agente

        Entering sobre carriles de entrada o conectores; Passing en el anillo
        lejos de la salida; Exiting dentro del umbral de arco o en la salida.

        Raises:
            LocalizationError: el agente no está sobre su carril
        """
        stage_config = stage_config or StageConfig()
        if localization is None:
            lane = rmap.lane(agent.lane)
            dy, dphi, s = lane.project(agent.state.X, agent.state.Y, agent.state.phi)
            capture = stage_config.capture_lane_widths * rmap.geometry.lane_width
            if abs(dy) >= capture or not lane.covers(s, capture):
                raise LocalizationError('El agente está fuera de su carril', agent_id=agent.id,
                                        lane=lane.id)
            localization = Localization(lane, s, dy, dphi)
        lane = localization.lane
        if lane.kind in (LaneKind.INBOUND, LaneKind.ENTRY):
            return Stage.ENTERING
        if lane.kind == LaneKind.EXIT:
            return Stage.EXITING
        arc = cls.exit_arc(rmap, agent.route, agent.state.X, agent.state.Y)
        return Stage.EXITING if arc <= stage_config.exit_threshold else Stage.PASSING
