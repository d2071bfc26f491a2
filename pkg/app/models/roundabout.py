# ============================================
# MODELOS DE ROTONDA - Geometría, agentes y escenario
# ============================================

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.constraint import ConstraintBounds, SafetyConfig
from app.models.game import GridConfig, MpcWeights
from app.models.mixins import LabeledMixin, SerializableMixin
from app.models.payoff import DrivingStyle, PayoffWeights, STYLE_TABLE
from app.models.vehicle import ControlInput, HorizonConfig, VehicleParameters, VehicleState
from app.utils.exceptions import ConfigurationError

PORTS = ('A', 'B', 'C', 'D')
RINGS = ('inner', 'outer')


class Stage(str, enum.Enum):
    ENTERING = 'Entering'
    PASSING = 'Passing'
    EXITING = 'Exiting'


class Role(str, enum.Enum):
    HV = 'HV'
    NV = 'NV'
    LV = 'LV'
    IV = 'IV'


@dataclass(frozen=True)
class RoundaboutGeometry(SerializableMixin):
    """
    Rotonda de dos carriles con cuatro accesos

    port_angles: ángulo del eje de cada acceso en orden A, B, C, D
    (oeste, sur, este, norte).
    main_road_lane_offsets: (carril interior, carril exterior) del camino principal.
    """
    inner_lane_radius: float = 15.0
    outer_lane_radius: float = 19.0
    lane_width: float = 3.63
    main_road_lane_offsets: tuple = (2.45, 6.08)
    port_angles: tuple = (float(np.pi), float(-np.pi / 2), 0.0, float(np.pi / 2))
    road_length: float = 100.0
    fillet_radius: float = 8.0

    def __post_init__(self):
        if not 0 < self.inner_lane_radius < self.outer_lane_radius:
            raise ConfigurationError('Se requiere 0 < radio interior < radio exterior')
        if self.lane_width <= 0 or self.fillet_radius <= 0 or self.road_length <= 0:
            raise ConfigurationError('Ancho de carril, radio de empalme y longitud deben ser > 0')
        if len(self.main_road_lane_offsets) != 2 or not (
                0 < self.main_road_lane_offsets[0] < self.main_road_lane_offsets[1]):
            raise ConfigurationError('Se requieren dos desplazamientos crecientes y positivos')
        if len(self.port_angles) != len(PORTS):
            raise ConfigurationError('Se requieren los ángulos de los accesos A, B, C y D')
        angles = np.sort(np.mod(self.port_angles, 2 * np.pi))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        if np.any(gaps < 1e-6):
            raise ConfigurationError('Los accesos deben estar en ángulos distintos')

    def port_angle(self, port):
        return self.port_angles[PORTS.index(port)]

    def ring_radius(self, ring):
        return self.inner_lane_radius if ring == 'inner' else self.outer_lane_radius

    @property
    def yield_radius(self):
        """Radio de la línea de ceda el paso"""
        return self.outer_lane_radius + self.lane_width


@dataclass(frozen=True)
class Route(SerializableMixin):
    """
    Ruta: acceso de entrada, acceso de salida y carriles preferidos

    entry es None para vehículos que ya circulan por la rotonda.
    """
    exit: str
    entry: Optional[str] = None
    entry_ring: str = 'outer'
    exit_lane: int = 1

    def __post_init__(self):
        if self.exit not in PORTS or (self.entry is not None and self.entry not in PORTS):
            raise ConfigurationError('Acceso desconocido en la ruta', entry=self.entry, exit=self.exit)
        if self.entry_ring not in RINGS or self.exit_lane not in (0, 1):
            raise ConfigurationError('Carril de ruta inválido')


@dataclass(frozen=True, repr=False)
class AgentSeed(LabeledMixin, SerializableMixin):
    """Condición inicial de un agente"""
    id: str
    X: float
    Y: float
    vx: float
    style: DrivingStyle
    route: Route
    phi: Optional[float] = None
    steering: Optional[float] = None
    params: VehicleParameters = field(default_factory=VehicleParameters)


@dataclass(frozen=True, repr=False)
class VehicleAgent(LabeledMixin, SerializableMixin):
    """
    Agente en tiempo de ejecución (inmutable, se reemplaza cada paso)

    lane: carril localizado; target_lane: carril comprometido.
    """
    id: str
    style: DrivingStyle
    route: Route
    state: VehicleState
    prev_control: ControlInput
    params: VehicleParameters
    lane: str
    target_lane: str
    last_deltas: tuple = ()
    active: bool = True


@dataclass(frozen=True)
class RoleConfig(SerializableMixin):
    """
    Ventanas de asignación de roles

    lookahead: búsqueda del LV (m); adjacent_window: ventana de carril
    adyacente (m); conflict_arc: distancia máxima al punto de conflicto (m);
    conflict_horizon: tiempo máximo de llegada (s); conflict_headway: margen
    tras el despeje del punto de conflicto (s); max_nv: cupos NV.
    """
    lookahead: float = 40.0
    adjacent_window: float = 20.0
    conflict_arc: float = 40.0
    conflict_horizon: float = 6.0
    conflict_headway: float = 1.2
    max_nv: int = 3


@dataclass(frozen=True)
class StageConfig(SerializableMixin):
    exit_threshold: float = float(np.pi / 2)
    completion_distance: float = 20.0
    capture_lane_widths: float = 2.0


@dataclass(frozen=True)
class ScenarioConfig(SerializableMixin):
    """Escenario completamente resuelto"""
    name: str
    geometry: RoundaboutGeometry
    agents: tuple
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    solver: str = 'sg'
    style_weights: dict = field(default_factory=lambda: dict(STYLE_TABLE))
    payoff_weights: PayoffWeights = field(default_factory=PayoffWeights)
    bounds: ConstraintBounds = field(default_factory=ConstraintBounds)
    mpc: MpcWeights = field(default_factory=MpcWeights)
    grid: GridConfig = field(default_factory=GridConfig)
    roles: RoleConfig = field(default_factory=RoleConfig)
    stages: StageConfig = field(default_factory=StageConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    duration: float = 10.0
    seed: int = 0
    schema_version: int = 1

    def agent(self, agent_id):
        return next(a for a in self.agents if a.id == agent_id)

    def style_for(self, style):
        return self.style_weights[DrivingStyle(style)]


@dataclass(frozen=True)
class RoleMap(SerializableMixin):
    """
    Roles desde la perspectiva de un ego

    slots: cupo NV (1..3) → id del agente; leader: id del LV o None
    """
    ego: str
    leader: Optional[str] = None
    slots: dict = field(default_factory=dict)
    roles: dict = field(default_factory=dict)

    @property
    def neighbors(self):
        return [self.slots[k] for k in sorted(self.slots)]


@dataclass(frozen=True)
class AgentContext:
    """
    Vista de un agente al inicio del paso

    lane/target: LaneRef localizado y comprometido; s, dy, dphi respecto a lane.
    """
    agent: VehicleAgent
    lane: object
    s: float
    dy: float
    dphi: float
    target: object
    stage: Stage

    @property
    def id(self):
        return self.agent.id

    @property
    def state(self):
        return self.agent.state
