# ============================================
# ROLE SERVICE - Asignación de roles HV/LV/NV/IV
# ============================================
# Responsabilidad: desde la perspectiva de un ego, encontrar el vehículo
# líder sobre su trayectoria y llenar los cupos NV según la etapa

import logging
from dataclasses import dataclass

from app.models.lane import LaneKind
from app.models.roundabout import PORTS, RINGS, Role, RoleConfig, RoleMap, Stage
from app.utils.units import wrap_angle

logger = logging.getLogger(__name__)

# Velocidad mínima para tiempos de llegada (m/s)
MIN_SPEED = 0.1


@dataclass(frozen=True)
class PathSegment:
    """Tramo de la trayectoria del ego: carril, estación de partida y distancia acumulada"""
    lane: object
    start: float
    base: float


class RoleService:
    """Servicio de asignación de roles"""

    # --------------------------------------------
    # Trayectoria del ego y LV
    # --------------------------------------------

    @staticmethod
    def ego_path(ctx, rmap):
        """
        Tramos que recorre el ego sin cambiar de carril

        Sobre un carril de entrada se sigue el conector de la ruta (comparte
        origen con el carril de entrada) y luego su anillo.
        """
        target = ctx.target
        X, Y = ctx.state.X, ctx.state.Y
        if target.kind == LaneKind.INBOUND:
            target = rmap.route_connector(target, ctx.agent.route)
        start = float(target.project_many([[X, Y]])[0][0])
        path = [PathSegment(target, start, 0.0)]
        if target.kind == LaneKind.ENTRY:
            ring = rmap.route_successor(target)
            base = max(target.length - start, 0.0)
            path.append(PathSegment(ring, float(target.stations['ring_s']), base))
        return path

    @classmethod
    def path_distance(cls, path, X, Y, half_width):
        """Distancia a lo largo de la trayectoria hasta (X, Y), o None si no está sobre ella"""
        best = None
        for segment in path:
            lane = segment.lane
            s, dy, _ = lane.project_many([[X, Y]])
            if abs(dy[0]) > half_width:
                continue
            s = float(s[0])
            if not lane.closed and not (0.0 <= s <= lane.length):
                continue
            distance = segment.base + float(lane.forward_distance(segment.start, s))
            if best is None or distance < best:
                best = distance
        return best

    @classmethod
    def find_leader(cls, ego, contexts, rmap, role_config):
        """Agente más cercano delante del ego dentro de la ventana de búsqueda"""
        path = cls.ego_path(ego, rmap)
        half_width = 0.5 * rmap.geometry.lane_width
        best = None
        for other in contexts.values():
            if other.id == ego.id:
                continue
            distance = cls.path_distance(path, other.state.X, other.state.Y, half_width)
            if distance is None or not 0.0 < distance <= role_config.lookahead:
                continue
            key = (distance, other.id)
            if best is None or key < best[0]:
                best = (key, other.id)
        return best[1] if best else None

    # --------------------------------------------
    # Conflictos
    # --------------------------------------------

    @staticmethod
    def _arrival(distance, vx):
        return distance / max(vx, MIN_SPEED)

    @classmethod
    def _conflicts(cls, t_other, v_other, t_ego, params, role_config):
        """Llega dentro del horizonte y no despeja el punto antes que el ego"""
        if t_other > role_config.conflict_horizon:
            return False
        cleared = t_other + params.Lv / max(v_other, MIN_SPEED) + role_config.conflict_headway
        return cleared >= t_ego

    @classmethod
    def _ring_candidates(cls, ego, contexts, rmap, ring, merge_angle, t_ego, role_config):
        """Vehículos del anillo que llegan a un punto de incorporación"""
        radius = rmap.geometry.ring_radius(ring)
        found = []
        for other in contexts.values():
            if other.id == ego.id or rmap.ring_of(other.lane, other.s) != ring:
                continue
            angle = rmap.polar_angle(other.state.X, other.state.Y)
            arc = radius * rmap.ccw_arc(angle, merge_angle)
            if arc > role_config.conflict_arc:
                continue
            if ring == 'outer':
                route = other.agent.route
                exit_arc = radius * rmap.ccw_arc(angle, rmap.branch_angle(route.exit, route.exit_lane))
                if exit_arc < arc:
                    continue
            t_other = cls._arrival(arc, other.state.vx)
            if cls._conflicts(t_other, other.state.vx, t_ego, other.agent.params, role_config):
                found.append(((t_other, arc, other.id), other.id))
        return found

    @classmethod
    def _entering_slots(cls, ego, contexts, rmap, role_config):
        lane = ego.lane
        port, main_lane = lane.port, lane.main_lane
        slots = {1: [], 2: [], 3: []}
        X, Y = ego.state.X, ego.state.Y

        # NV1: carril de entrada adyacente del mismo acceso
        s_ego = float(lane.project_many([[X, Y]])[0][0])
        for other in contexts.values():
            if other.id == ego.id:
                continue
            o_lane = other.lane
            if o_lane.kind not in (LaneKind.INBOUND, LaneKind.ENTRY):
                continue
            if o_lane.port != port or o_lane.main_lane == main_lane:
                continue
            s_other = float(lane.project_many([[other.state.X, other.state.Y]])[0][0])
            gap = abs(s_other - s_ego)
            if gap <= role_config.adjacent_window:
                key = (cls._arrival(gap, ego.state.vx), gap, other.id)
                slots[1].append((key, other.id))

        # NV2 / NV3: conflicto en la incorporación al anillo exterior / interior
        for slot, ring in ((2, 'outer'), (3, 'inner')):
            connector = rmap.entry(port, main_lane, ring)
            s_conn = float(connector.project_many([[X, Y]])[0][0])
            remaining = max(connector.stations['merge'] - s_conn, 0.0)
            t_ego = cls._arrival(remaining, ego.state.vx)
            slots[slot].extend(cls._ring_candidates(
                ego, contexts, rmap, ring, connector.stations['merge_angle'], t_ego, role_config))
        return slots

    @classmethod
    def _ring_slots(cls, ego, contexts, rmap, role_config):
        ring = rmap.ring_of(ego.lane, ego.s)
        radius = rmap.geometry.ring_radius(ring)
        other_ring = RINGS[1 - RINGS.index(ring)]
        ego_angle = rmap.polar_angle(ego.state.X, ego.state.Y)
        slots = {1: [], 2: []}

        # NV1: carril adyacente del anillo
        for other in contexts.values():
            if other.id == ego.id or rmap.ring_of(other.lane, other.s) != other_ring:
                continue
            angle = rmap.polar_angle(other.state.X, other.state.Y)
            gap = abs(wrap_angle(angle - ego_angle)) * radius
            if gap <= role_config.adjacent_window:
                key = (cls._arrival(gap, ego.state.vx), gap, other.id)
                slots[1].append((key, other.id))

        # NV2: vehículo que se incorpora en la siguiente entrada
        best_port, best_arc = None, None
        for port in PORTS:
            merge_angle = rmap.entry(port, 0, ring).stations['merge_angle']
            arc = radius * rmap.ccw_arc(ego_angle, merge_angle)
            if arc <= role_config.conflict_arc and (best_arc is None or arc < best_arc):
                best_port, best_arc = port, arc
        if best_port is not None:
            t_ego = cls._arrival(best_arc, ego.state.vx)
            for other in contexts.values():
                if other.id == ego.id or other.stage != Stage.ENTERING:
                    continue
                if other.lane.port != best_port:
                    continue
                connector = rmap.entry(best_port, other.lane.main_lane, ring)
                s_other = float(connector.project_many([[other.state.X, other.state.Y]])[0][0])
                remaining = max(connector.stations['merge'] - s_other, 0.0)
                t_other = cls._arrival(remaining, other.state.vx)
                if cls._conflicts(t_other, other.state.vx, t_ego, other.agent.params, role_config):
                    slots[2].append(((t_other, remaining, other.id), other.id))
        return slots

    @classmethod
    def _exit_slots(cls, ego, contexts, rmap, role_config):
        lane = ego.lane
        adjacent = rmap.exit_lane(lane.port, 1 - lane.main_lane)
        slots = {1: []}
        for other in contexts.values():
            if other.id == ego.id or other.lane.id != adjacent.id:
                continue
            s_other = float(lane.project_many([[other.state.X, other.state.Y]])[0][0])
            gap = abs(s_other - ego.s)
            if gap <= role_config.adjacent_window:
                slots[1].append(((cls._arrival(gap, ego.state.vx), gap, other.id), other.id))
        return slots

    # --------------------------------------------
    # API
    # --------------------------------------------

    @classmethod
    def assign_roles(cls, contexts, ego_id, rmap, role_config=None):
        """
        Roles de todos los agentes desde la perspectiva de `ego_id`

        Args:
            contexts: dict id → AgentContext (instantánea del paso)
            ego_id: id del ego
            rmap: RoundaboutMap
            role_config: RoleConfig

        Returns:
            RoleMap: LV, cupos NV (como máximo uno por agente) y el resto IV
        """
        role_config = role_config or RoleConfig()
        ego = contexts[ego_id]
        leader = cls.find_leader(ego, contexts, rmap, role_config)

        if ego.stage == Stage.ENTERING:
            candidates = cls._entering_slots(ego, contexts, rmap, role_config)
        elif rmap.ring_of(ego.lane, ego.s) is not None:
            candidates = cls._ring_slots(ego, contexts, rmap, role_config)
        elif ego.lane.kind == LaneKind.EXIT:
            candidates = cls._exit_slots(ego, contexts, rmap, role_config)
        else:
            candidates = {}

        used = {leader} if leader else set()
        slots = {}
        for slot in sorted(candidates):
            if slot > role_config.max_nv:
                continue
            for _, other_id in sorted(candidates[slot]):
                if other_id not in used:
                    slots[slot] = other_id
                    used.add(other_id)
                    break

        roles = {ego_id: Role.HV.value}
        for other_id in contexts:
            if other_id == ego_id:
                continue
            if other_id == leader:
                roles[other_id] = Role.LV.value
            elif other_id in slots.values():
                roles[other_id] = Role.NV.value
            else:
                roles[other_id] = Role.IV.value
        return RoleMap(ego=ego_id, leader=leader, slots=slots, roles=roles)
