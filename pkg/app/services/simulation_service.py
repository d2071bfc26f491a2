# ============================================
# SIMULATION SERVICE - Bucle de simulación multi-vehículo
# ============================================
# Responsabilidad: avanzar todos los agentes desde una instantánea común,
# resolver la época de cada ego, aplicar el primer incremento y registrar

import logging
from dataclasses import replace

import numpy as np

from app.models.game import DecisionVector
from app.models.lane import LaneKind
from app.models.roundabout import AgentContext
from app.models.simulation import CollisionRecord, SimulationLog, StepRecord
from app.models.vehicle import ControlInput
from app.services.epoch_service import EpochService, solve_epoch
from app.services.geometry_service import build_map
from app.services.kinematics_service import KinematicsService
from app.services.payoff_service import PayoffService
from app.services.scenario_service import ScenarioService
from app.utils.exceptions import LocalizationError

logger = logging.getLogger(__name__)

# Tolerancia al final de un conector de entrada (m)
ENTRY_END_TOLERANCE = 0.5

# Eventos de comportamiento por (eje, valor)
BEHAVIOR_EVENTS = {
    ('alpha', -1): 'merge_inner',
    ('alpha', 1): 'merge_outer',
    ('beta', -1): 'lane_change_left',
    ('beta', 1): 'lane_change_right',
}


class SimulationService:
    """Servicio de simulación"""

    # --------------------------------------------
    # Instantánea del paso
    # --------------------------------------------

    @staticmethod
    def advance_target(agent, localization, target, rmap, stage_config):
        """
        Carril comprometido tras la localización del paso

        Un conector pasa a su anillo al alcanzarlo; el anillo exterior pasa a
        la salida de la ruta dentro del umbral de arco.
        """
        lane, s = localization.lane, localization.s
        if target.kind == LaneKind.ENTRY:
            at_end = lane.id == target.id and s >= target.length - ENTRY_END_TOLERANCE
            if lane.kind == LaneKind.RING or at_end:
                return rmap.lane(target.successors[0])
            return target
        if target.kind == LaneKind.RING and target.ring == 'outer' \
                and rmap.ring_of(lane, s) == 'outer':
            route = agent.route
            arc = ScenarioService.exit_arc(rmap, route, agent.state.X, agent.state.Y)
            if arc <= stage_config.exit_threshold:
                return rmap.exit_lane(route.exit, route.exit_lane)
        return target

    @classmethod
    def build_contexts(cls, agents, config, rmap):
        """
        Localiza y clasifica a todos los agentes activos

        Returns:
            dict: id → AgentContext

        Raises:
            LocalizationError: algún agente quedó fuera de la red
        """
        capture = config.stages.capture_lane_widths * config.geometry.lane_width
        contexts = {}
        for agent_id in sorted(agents):
            agent = agents[agent_id]
            if not agent.active:
                continue
            found = ScenarioService.localize(
                agent.state, rmap, rmap.candidate_lanes([agent.lane, agent.target_lane]),
                prefer=agent.target_lane, capture=capture, agent_id=agent_id)
            target = cls.advance_target(agent, found, rmap.lane(agent.target_lane), rmap,
                                        config.stages)
            agent = replace(agent, lane=found.lane.id, target_lane=target.id)
            stage = ScenarioService.classify_stage(agent, rmap, config.stages, found)
            contexts[agent_id] = AgentContext(agent=agent, lane=found.lane, s=found.s,
                                              dy=found.dy, dphi=found.dphi,
                                              target=target, stage=stage)
        return contexts

    # --------------------------------------------
    # Aplicación de decisiones
    # --------------------------------------------

    @staticmethod
    def apply_decision(agent, decision, bounds):
        """
        u(k) = u(k−1) + Δu acotado a ax_max / delta_max

        Returns:
            tuple: (ControlInput aplicado, DecisionVector con el Δ efectivo)

        Raises:
            InvalidInputError: Δu fuera de las cotas por paso
        """
        prev = agent.prev_control
        delta = decision.delta.checked(bounds)
        control = ControlInput(prev.ax + delta.d_ax, prev.delta_f + delta.d_delta_f).clipped(bounds)
        applied = DecisionVector(control.ax - prev.ax, control.delta_f - prev.delta_f,
                                 decision.alpha, decision.beta)
        return control, applied

    @staticmethod
    def nv_gaps(ctx, slots, contexts):
        """Distancia entre centros − Lv del ego hacia cada NV"""
        gaps = {}
        for slot in sorted(slots):
            other = contexts[slots[slot]].state
            distance = np.hypot(other.X - ctx.state.X, other.Y - ctx.state.Y)
            gaps[slots[slot]] = float(distance - ctx.agent.params.Lv)
        return gaps

    @staticmethod
    def find_collision(agents, time):
        """Primer par (orden por id) cuyos discos de colisión se solapan"""
        active = [agents[i] for i in sorted(agents) if agents[i].active]
        for i, first in enumerate(active):
            for second in active[i + 1:]:
                distance = float(np.hypot(first.state.X - second.state.X,
                                          first.state.Y - second.state.Y))
                limit = 0.5 * (first.params.collision_diameter + second.params.collision_diameter)
                if distance < limit:
                    return CollisionRecord(time=time, agents=(first.id, second.id),
                                           distance=distance)
        return None

    @staticmethod
    def is_complete(ctx, stage_config):
        """El agente recorrió la distancia de cierre más allá del acceso de salida"""
        lane = ctx.lane
        if lane.kind != LaneKind.EXIT or lane.port != ctx.agent.route.exit:
            return False
        return ctx.s >= lane.stations['port'] + stage_config.completion_distance

    # --------------------------------------------
    # Bucle principal
    # --------------------------------------------

    @classmethod
    def step(cls, agents, time, config, rmap, log):
        """
        Un paso de simulación desde la instantánea `agents`

        Returns:
            dict: id → VehicleAgent del siguiente paso
        """
        contexts = cls.build_contexts(agents, config, rmap)
        next_agents = dict(agents)

        for agent_id, ctx in contexts.items():
            if cls.is_complete(ctx, config.stages):
                next_agents[agent_id] = replace(ctx.agent, active=False)
                log.completed[agent_id] = time
                logger.info(f"🏁 {agent_id} completó su ruta en t={time:.2f}s")
        contexts = {i: c for i, c in contexts.items() if next_agents[i].active}
        if not contexts:
            return next_agents

        models = EpochService.prepare_step(contexts, config, rmap)
        for agent_id in sorted(contexts):
            ctx = contexts[agent_id]
            model = models[agent_id]
            game, outcome = solve_epoch(agent_id, models, config)
            choice = outcome.choices[0]
            decision = outcome.sequence_for(agent_id).first
            control, applied = cls.apply_decision(ctx.agent, decision, config.bounds)
            target = model.targets[choice] or ctx.target.id
            fallback = agent_id in outcome.diagnostics.fallback_players

            log.append(StepRecord(
                time=time, agent=agent_id, stage=ctx.stage.value, lane=ctx.lane.id,
                committed_lane=ctx.target.id, target_lane=target,
                state=ctx.state, control=control, decision=applied,
                ay=float(PayoffService.lateral_acceleration(ctx.state.vx, control.delta_f,
                                                            ctx.agent.params)),
                leader=model.roles.leader,
                neighbors=dict(model.roles.slots),
                nv_gaps=cls.nv_gaps(ctx, model.roles.slots, contexts),
                feasible=bool(model.feasible[choice]),
                fallback=fallback,
                payoff=game.breakdown(outcome.choices),
                solve_time=outcome.diagnostics.epoch_time,
            ))

            state = KinematicsService.integrate_plant(ctx.state, control, ctx.agent.params,
                                                      config.horizon.dt)
            next_agents[agent_id] = replace(
                ctx.agent, state=state, prev_control=control, target_lane=target,
                last_deltas=(applied.d_ax, applied.d_delta_f))
        return next_agents

    @classmethod
    def run(cls, config, agents=None):
        """
        Corre un escenario completo

        Args:
            config: ScenarioConfig
            agents: agentes iniciales (por defecto los del escenario)

        Returns:
            SimulationLog
        """
        rmap = build_map(config.geometry)
        agents = agents if agents is not None else ScenarioService.initial_agents(config)
        dt = config.horizon.dt
        steps = int(round(config.duration / dt))
        log = SimulationLog(scenario=config.name, solver=config.solver, dt=dt)
        logger.info(f"🚗 Simulando {config.name} ({config.solver}) con {len(agents)} agentes, "
                    f"{steps} pasos de {dt}s")

        for k in range(steps):
            time = k * dt
            try:
                agents = cls.step(agents, time, config, rmap, log)
            except LocalizationError as e:
                log.termination = 'localization'
                log.error = str(e)
                logger.error(f"❌ Localización perdida en t={time:.2f}s: {e}")
                return log
            collision = cls.find_collision(agents, time + dt)
            if collision is not None:
                log.collision = collision
                log.termination = 'collision'
                logger.warning(f"💥 Colisión entre {collision.agents[0]} y {collision.agents[1]} "
                               f"en t={collision.time:.2f}s")
                return log
            if not any(a.active for a in agents.values()):
                log.termination = 'completed'
                break

        if log.fallback_used:
            logger.warning("⚠️ La corrida usó decisiones de respaldo")
        logger.info(f"✅ Simulación terminada ({log.termination}): {len(log.records)} registros")
        return log

    # --------------------------------------------
    # Eventos
    # --------------------------------------------

    @staticmethod
    def decision_events(log):
        """
        Cambios de carril comprometido con comportamiento no nulo

        Returns:
            list[dict]: {time, agent, event, from_lane, to_lane}
        """
        events = []
        for record in log.records:
            if record.target_lane == record.committed_lane:
                continue
            decision = record.decision
            for axis in ('alpha', 'beta'):
                value = getattr(decision, axis)
                if value:
                    events.append({
                        'time': record.time,
                        'agent': record.agent,
                        'event': BEHAVIOR_EVENTS[(axis, value)],
                        'from_lane': record.committed_lane,
                        'to_lane': record.target_lane,
                    })
        return events
