# ============================================
# SAFETY SERVICE - Compuertas y contexto de seguridad
# ============================================
# Responsabilidad: decidir cuándo un ego cede antes de incorporarse o no
# tiene hueco para cambiar de carril, y armar las predicciones ajenas con
# las que se verifican headway y separación

import logging
from dataclasses import replace

import numpy as np

from app.models.constraint import GateState, SafetyContext
from app.models.lane import LaneKind
from app.models.roundabout import RINGS, Stage
from app.services.constraint_service import ConstraintService
from app.services.game_service import GameService

logger = logging.getLogger(__name__)

# Tolerancia para seguir cediendo con la detención apenas rebasada (m)
YIELD_TOLERANCE = 0.5


class SafetyService:
    """Servicio de compuertas de cesión y seguridad entre vehículos"""

    # --------------------------------------------
    # Ocupación de los anillos
    # --------------------------------------------

    @staticmethod
    def ring_occupants(contexts, rmap, ring, exclude=None):
        """
        Agentes que circulan por un anillo con su ángulo polar

        Cuenta el anillo (y el prefijo de las salidas en el exterior) y los
        conectores pasada la línea de ceda el paso: uno interior ya ocupa
        también el exterior que atraviesa.
        """
        found = []
        for agent_id in sorted(contexts):
            other = contexts[agent_id]
            if agent_id == exclude:
                continue
            lane = other.lane
            inside = rmap.ring_of(lane, other.s) == ring
            if not inside and lane.kind == LaneKind.ENTRY and other.s >= lane.stations['yield']:
                inside = ring in rmap.conflict_rings(lane.ring)
            if inside:
                found.append((other, rmap.polar_angle(other.state.X, other.state.Y)))
        return found

    @staticmethod
    def _exits_before(other, angle, zone_start, rmap):
        """El agente deja el anillo exterior antes de alcanzar la zona de conflicto"""
        route = other.agent.route
        branch = rmap.branch_angle(route.exit, route.exit_lane)
        return rmap.ccw_arc(angle, branch) < rmap.ccw_arc(angle, zone_start)

    # --------------------------------------------
    # Compuertas
    # --------------------------------------------

    @classmethod
    def entry_blocked(cls, ego, connector, contexts, rmap, safety):
        """
        True si un vehículo del anillo ocupa o alcanza pronto la zona de conflicto

        Por cada anillo que cruza el conector, la zona va desde la entrada a
        su banda hasta el punto de incorporación más clear_distance/2; un
        vehículo aguas arriba la bloquea si llega en gap_time más clear_distance.
        """
        merge_angle = connector.stations['merge_angle']
        for ring in rmap.conflict_rings(connector.ring):
            radius = rmap.geometry.ring_radius(ring)
            start = connector.stations[f'zone_{ring}']
            span = rmap.ccw_arc(start, merge_angle) + 0.5 * safety.clear_distance / radius
            for other, angle in cls.ring_occupants(contexts, rmap, ring, exclude=ego.id):
                if other.lane.id == connector.id:
                    continue
                if ring == 'outer' and rmap.ring_of(other.lane, other.s) == 'outer' \
                        and cls._exits_before(other, angle, start, rmap):
                    continue
                if rmap.ccw_arc(start, angle) <= span:
                    return True
                upstream = radius * rmap.ccw_arc(angle, start)
                if upstream <= other.state.vx * safety.gap_time + safety.clear_distance:
                    return True
        return False

    @classmethod
    def yield_stops(cls, ego, contexts, rmap, safety, braking):
        """
        Estación de detención por conector con el ceda el paso cerrado

        Solo cede un ego que aún no cruzó la línea y puede detenerse antes de
        ella (con YIELD_TOLERANCE); la estación no queda detrás de su propia
        distancia de detención.

        Returns:
            dict: id del conector → estación
        """
        target = ego.target
        if target.kind == LaneKind.INBOUND:
            connectors = [rmap.entry(target.port, target.main_lane, ring) for ring in RINGS]
        elif target.kind == LaneKind.ENTRY:
            connectors = [target]
        else:
            return {}
        state = ego.state
        stopping = float(ConstraintService.stopping_distance(
            state.vx, ego.agent.prev_control.ax, *braking))
        stops = {}
        for connector in connectors:
            station = connector.stations['yield']
            s = float(connector.project_many([[state.X, state.Y]])[0][0])
            if station - s < stopping - YIELD_TOLERANCE:
                continue
            if cls.entry_blocked(ego, connector, contexts, rmap, safety):
                stops[connector.id] = max(station, s + stopping)
        return stops

    @classmethod
    def lane_change_blocked(cls, ego, target, contexts, rmap, safety):
        """
        True si el carril receptor no deja hueco

        En un anillo: alguien a menos de clear_distance por delante, o por
        detrás a menos de clear_distance más lo que se acerca en gap_time.
        En una salida: alguien a menos de clear_distance en estación.
        """
        state = ego.state
        if target.kind == LaneKind.RING:
            radius = rmap.geometry.ring_radius(target.ring)
            ego_angle = rmap.polar_angle(state.X, state.Y)
            for other, angle in cls.ring_occupants(contexts, rmap, target.ring, exclude=ego.id):
                ahead = radius * rmap.ccw_arc(ego_angle, angle)
                behind = radius * rmap.ccw_arc(angle, ego_angle)
                closing = max(other.state.vx - state.vx, 0.0) * safety.gap_time
                if ahead <= safety.clear_distance or behind <= safety.clear_distance + closing:
                    return True
            return False
        if target.kind == LaneKind.EXIT:
            s_ego = float(target.project_many([[state.X, state.Y]])[0][0])
            for agent_id in sorted(contexts):
                other = contexts[agent_id]
                if agent_id == ego.id or other.lane.id != target.id:
                    continue
                if abs(other.s - s_ego) <= safety.clear_distance:
                    return True
        return False

    @classmethod
    def gates(cls, ego, contexts, rmap, config):
        """
        Compuertas de un ego desde la instantánea del paso

        Returns:
            GateState
        """
        safety = config.safety
        if not safety.enabled:
            return GateState()
        braking = safety.braking(config.bounds, config.horizon.dt)
        if ego.stage == Stage.ENTERING:
            return GateState(stops=cls.yield_stops(ego, contexts, rmap, safety, braking))
        blocked = set()
        for behavior in GameService.behaviors_for(ego.stage):
            if behavior.is_keep:
                continue
            target_id = rmap.behavior_target(ego.lane.id, ego.s, ego.target.id, False, behavior,
                                             ego.dy)
            if target_id is not None and cls.lane_change_blocked(
                    ego, rmap.lane(target_id), contexts, rmap, safety):
                blocked.add(target_id)
        return GateState(blocked=frozenset(blocked))

    # --------------------------------------------
    # Headway y separación
    # --------------------------------------------

    @classmethod
    def safety_context(cls, model, models, config):
        """
        Predicciones a control constante del LV y de los vehículos no traseros

        Un vehículo es no trasero si su posición relativa tiene proyección no
        negativa sobre el rumbo del ego.

        Returns:
            SafetyContext o None si la seguridad está desactivada
        """
        safety = config.safety
        if not safety.enabled:
            return None
        jerk, decel = safety.braking(config.bounds, config.horizon.dt)
        ctx = model.ctx
        state = ctx.state
        heading = np.array([np.cos(state.phi), np.sin(state.phi)])
        radius = 0.5 * model.params.collision_diameter
        context = SafetyContext(jerk=jerk, decel=decel, dt=config.horizon.dt)

        leader_id = model.roles.leader if model.roles.leader in models else None
        if leader_id is not None:
            leader = models[leader_id]
            lv_ax = leader.ctx.agent.prev_control.ax
            context = replace(context, leader=leader.constant_outputs, leader_ax=lv_ax,
                              headway_base=(radius + 0.5 * leader.params.collision_diameter
                                            + safety.headway_margin))
            now = ConstraintService.headway_shortfall(
                state.vx, ctx.agent.prev_control.ax, state.position,
                leader.ctx.state.vx, lv_ax, leader.ctx.state.position, context)
            context = replace(context, headway_now=float(now))

        others, bases, nows = [], [], []
        for agent_id in sorted(models):
            if agent_id in (model.id, leader_id):
                continue
            other = models[agent_id]
            rel = other.ctx.state.position - state.position
            if rel @ heading < 0.0:
                continue
            base = radius + 0.5 * other.params.collision_diameter + safety.separation_margin
            others.append(other.constant_outputs)
            bases.append(base)
            nows.append(float(base - np.linalg.norm(rel)))
        return replace(context, others=tuple(others), separation_base=tuple(bases),
                       separation_now=tuple(nows))
