# ============================================
# EPOCH SERVICE - Modelos de jugador y juego de una época
# ============================================
# Responsabilidad: predecir una vez por paso los candidatos de cada agente,
# marcar su factibilidad y armar las tablas de costo del juego de cada ego

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from app.models.constraint import ConstraintReport, GateState, LaneContext, Violation
from app.models.lane import LaneKind
from app.models.roundabout import AgentContext, RoleMap, Stage
from app.models.vehicle import AugmentedState
from app.services.constraint_service import RELAXATION_LEVELS, ConstraintService
from app.services.game_service import GameService
from app.services.kinematics_service import KinematicsService
from app.services.payoff_service import EgoPrediction, OpponentPrediction, PayoffService
from app.services.role_service import RoleService
from app.services.safety_service import SafetyService

logger = logging.getLogger(__name__)


@dataclass
class PlayerModel:
    """
    Predicciones de todos los candidatos de un agente en el paso actual

    Los arreglos por candidato tienen K filas en el orden de `candidates`.
    tiers: factibilidad sin seguridad por nivel de relajación (niveles, K);
    relaxed: restricciones de seguimiento ignoradas en `feasible`.
    effort_terms: cuadrados de los incrementos sin pesar; el juego aplica su R.
    """
    ctx: AgentContext
    roles: RoleMap
    stage: Stage
    style: object
    payoff_weights: object
    bounds: object
    horizon: object
    mats: object
    xi: np.ndarray
    rmap: object
    candidates: list
    alphas: np.ndarray
    betas: np.ndarray
    deltas: np.ndarray
    outputs: np.ndarray
    controls: np.ndarray
    dy: np.ndarray
    dphi: np.ndarray
    targets: list
    feasible: np.ndarray
    effort_terms: np.ndarray
    fallback: int
    committed_alpha: int
    constant_outputs: np.ndarray
    default_outputs: np.ndarray
    leader_reference: Optional[np.ndarray] = None
    leader_id: Optional[str] = None
    virtual_leader: Optional[tuple] = None
    gates: GateState = field(default_factory=GateState)
    braking: Optional[tuple] = None
    safety: object = None
    tiers: Optional[np.ndarray] = None
    relaxed: tuple = ()
    build_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def id(self):
        return self.ctx.id

    @property
    def params(self):
        return self.ctx.agent.params

    @property
    def effective_alphas(self):
        """Intención de incorporación por candidato (α o el anillo comprometido)"""
        return np.where(self.alphas != 0, self.alphas, self.committed_alpha)

    def effective_alpha_of(self, sequence):
        alpha = sequence.behavior.alpha
        return alpha if alpha != 0 else self.committed_alpha


@dataclass(frozen=True)
class SequenceEvaluation:
    prediction: EgoPrediction
    report: ConstraintReport
    target: Optional[str]


class EpochService:
    """Servicio de épocas de decisión"""

    # --------------------------------------------
    # Predicción y contexto de carril
    # --------------------------------------------

    @staticmethod
    def controls_from(prev_control, deltas, Np):
        """u(k+p−1) = u(k−1) + Σ_{q ≤ min(p, Nc)} Δu_q, forma (K, Np, 2)"""
        deltas = np.asarray(deltas, dtype=float)
        Nc = deltas.shape[1]
        cumulative = np.cumsum(deltas, axis=1)
        index = np.minimum(np.arange(1, Np + 1), Nc) - 1
        return prev_control.as_array()[None, None, :] + cumulative[:, index, :]

    @staticmethod
    def committed_alpha(target):
        if target.kind == LaneKind.ENTRY:
            return 1 if target.ring == 'outer' else -1
        return 0

    @staticmethod
    def lane_context(ctx, target, bounds, current, gates=None, braking=None):
        """
        Contexto de carril de los candidatos que apuntan a `target`

        La estación de parada es el final del carril de entrada o, con el ceda
        el paso cerrado, la línea del conector; `braking` exige que la
        detención quepa antes de ella.
        """
        gates = gates or GateState()
        maneuver = target.id != ctx.target.id
        dy_now, dphi_now = current
        stop = target.length if target.kind == LaneKind.INBOUND else None
        stop = gates.stops.get(target.id, stop)
        return LaneContext(
            source=ctx.target,
            target=target,
            maneuver=maneuver,
            enforce_lane=ConstraintService.lane_enforcement(bounds, maneuver, dy_now, dphi_now),
            nominal_speed=ctx.state.vx,
            start_position=(ctx.state.X, ctx.state.Y),
            stop_station=stop,
            braking=braking,
            blocked=target.id in gates.blocked,
        )

    @staticmethod
    def predict(xi, deltas, mats):
        """Salidas (K, Np, 4) de K secuencias (K, Nc, 2), detenidas al cruzar vx = 0"""
        deltas = np.asarray(deltas, dtype=float)
        outputs = KinematicsService.predict_outputs(xi, deltas.reshape(deltas.shape[0], -1), mats)
        return KinematicsService.hold_at_standstill(outputs, xi)

    @staticmethod
    def virtual_leader(ctx, rmap):
        """
        Líder virtual estacionario donde el carril mantenido deja de servir a la ruta

        Returns:
            tuple (X, Y, heading) o None
        """
        params = ctx.agent.params
        if ctx.target.kind == LaneKind.INBOUND:
            point, heading = rmap.lane_end_point(ctx.target)
            X, Y = point + params.Lv * np.array([np.cos(heading), np.sin(heading)])
            return float(X), float(Y), float(heading)
        if ctx.stage == Stage.EXITING and rmap.ring_of(ctx.target, ctx.s) == 'inner' \
                and ctx.target.kind == LaneKind.RING:
            radius = rmap.geometry.inner_lane_radius
            route = ctx.agent.route
            angle = rmap.branch_angle(route.exit, route.exit_lane) + params.Lv / radius
            X, Y = rmap.ring_point(radius, angle)
            return float(X), float(Y), float(angle + np.pi / 2)
        return None

    @classmethod
    def build_model(cls, ctx, roles, config, rmap, candidate_cache=None, gates=None):
        """
        Predice y clasifica todos los candidatos de un agente

        La factibilidad queda por nivel de relajación en `tiers`; la
        seguridad entre vehículos se agrega en attach_safety.

        Args:
            ctx: AgentContext
            roles: RoleMap del agente como ego
            config: ScenarioConfig
            rmap: RoundaboutMap
            candidate_cache: dict etapa → candidatos (compartido en el paso)
            gates: GateState del agente (por defecto, sin compuertas)

        Returns:
            PlayerModel
        """
        horizon, bounds = config.horizon, config.bounds
        gates = gates or GateState()
        braking = config.safety.braking(bounds, horizon.dt) if config.safety.enabled else None
        agent = ctx.agent
        stage = ctx.stage
        cache = candidate_cache if candidate_cache is not None else {}
        if stage not in cache:
            candidates = GameService.candidate_set(stage, bounds, config.grid, horizon.Nc)
            cache[stage] = (candidates,
                            GameService.effort_terms(candidates),
                            GameService.fallback_index(candidates, bounds))
        candidates, effort_terms, fallback = cache[stage]
        K = len(candidates)

        mats = KinematicsService.prediction_for(agent.state, agent.prev_control, agent.params, horizon)
        xi = AugmentedState(agent.state, agent.prev_control).xi
        deltas = np.stack([c.deltas for c in candidates])
        outputs = cls.predict(xi, deltas, mats)
        controls = cls.controls_from(agent.prev_control, deltas, horizon.Np)
        alphas = np.array([c.behavior.alpha for c in candidates])
        betas = np.array([c.behavior.beta for c in candidates])

        dy_now, dphi_now, _ = ctx.target.project(agent.state.X, agent.state.Y, agent.state.phi)
        dy = np.zeros((K, horizon.Np))
        dphi = np.zeros((K, horizon.Np))
        tiers = np.zeros((len(RELAXATION_LEVELS), K), dtype=bool)
        targets = [None] * K
        groups = {}
        for index, candidate in enumerate(candidates):
            groups.setdefault(candidate.behavior, []).append(index)
        for behavior, rows in groups.items():
            rows = np.array(rows)
            target_id = rmap.behavior_target(ctx.lane.id, ctx.s, ctx.target.id,
                                             stage == Stage.ENTERING, behavior, ctx.dy)
            target = rmap.lane(target_id) if target_id is not None else ctx.target
            context = cls.lane_context(ctx, target, bounds, (dy_now, dphi_now), gates, braking)
            lane = ConstraintService.lane_errors(outputs[rows], context)
            dy[rows], dphi[rows] = lane[0], lane[1]
            if target_id is None:
                continue
            checks = ConstraintService.evaluate(outputs[rows], controls[rows], deltas[rows], bounds,
                                                context, agent.params, horizon.dt, lane=lane)
            tiers[:, rows] = ConstraintService.relaxation_masks(checks)
            for row in rows:
                targets[row] = target_id

        zeros = np.zeros((1, horizon.Nc, 2))
        constant = cls.predict(xi, zeros, mats)[0]
        if agent.last_deltas:
            last = np.tile(np.asarray(agent.last_deltas, dtype=float)[:2], (1, horizon.Nc, 1))
            default = cls.predict(xi, last, mats)[0]
        else:
            default = constant

        return PlayerModel(
            ctx=ctx, roles=roles, stage=stage, style=config.style_for(agent.style),
            payoff_weights=config.payoff_weights, bounds=bounds, horizon=horizon, mats=mats, xi=xi,
            rmap=rmap,
            candidates=candidates, alphas=alphas, betas=betas, deltas=deltas, outputs=outputs,
            controls=controls, dy=dy, dphi=dphi, targets=targets, feasible=tiers[0].copy(),
            effort_terms=effort_terms, fallback=fallback,
            committed_alpha=cls.committed_alpha(ctx.target),
            constant_outputs=constant, default_outputs=default,
            gates=gates, braking=braking, tiers=tiers,
            extra={'infeasible': int(K - tiers[0].sum())},
        )

    @classmethod
    def attach_leaders(cls, models, rmap):
        """Referencia longitudinal fija: LV a control constante o líder virtual si está más cerca"""
        for model in models.values():
            state = model.ctx.state
            lv_id = model.roles.leader
            lv_distance = np.inf
            if lv_id is not None and lv_id in models:
                other = models[lv_id].ctx.state
                lv_distance = float(np.hypot(other.X - state.X, other.Y - state.Y))
            virtual = cls.virtual_leader(model.ctx, rmap)
            model.virtual_leader = virtual
            if virtual is not None and np.hypot(virtual[0] - state.X, virtual[1] - state.Y) < lv_distance:
                row = np.array([0.0, virtual[2], virtual[0], virtual[1]])
                model.leader_reference = np.tile(row, (model.horizon.Np, 1))
                model.leader_id = None
            elif np.isfinite(lv_distance):
                model.leader_reference = models[lv_id].constant_outputs
                model.leader_id = lv_id
        return models

    @classmethod
    def attach_safety(cls, models, config):
        """
        Agrega headway y separación y elige el nivel de relajación

        Se toma el primer nivel con algún candidato factible; la seguridad
        nunca se relaja. Sin candidatos en ningún nivel queda el respaldo.
        """
        for model in models.values():
            model.safety = SafetyService.safety_context(model, models, config)
            safe = np.ones(len(model.candidates), dtype=bool)
            if model.safety is not None:
                checks = ConstraintService.safety_checks(model.outputs, model.controls, model.safety)
                if checks:
                    safe = ConstraintService.feasible_mask(checks)
            for skip, tier in zip(RELAXATION_LEVELS, model.tiers):
                feasible = tier & safe
                if feasible.any():
                    break
            model.feasible = feasible
            model.relaxed = skip
            model.extra['infeasible'] = int(len(feasible) - feasible.sum())
            if skip:
                logger.debug(f"🔧 {model.id}: restricciones relajadas {', '.join(skip)}")
        return models

    @classmethod
    def prepare_step(cls, contexts, config, rmap):
        """
        Roles, compuertas y modelos de todos los agentes desde la instantánea del paso

        build_time de cada modelo incluye su parte del trabajo compartido
        (líderes y seguridad), repartido por igual.

        Returns:
            dict: id → PlayerModel (orden por id)
        """
        cache = {}
        models = {}
        for agent_id in sorted(contexts):
            start = time.perf_counter()
            ctx = contexts[agent_id]
            roles = RoleService.assign_roles(contexts, agent_id, rmap, config.roles)
            gates = SafetyService.gates(ctx, contexts, rmap, config)
            models[agent_id] = cls.build_model(ctx, roles, config, rmap, cache, gates)
            models[agent_id].build_time = time.perf_counter() - start
        start = time.perf_counter()
        cls.attach_leaders(models, rmap)
        cls.attach_safety(models, config)
        shared = (time.perf_counter() - start) / max(len(models), 1)
        for model in models.values():
            model.build_time += shared
        return models

    @classmethod
    def evaluate_sequence(cls, model, sequence):
        """
        Predicción, errores de carril y reporte de restricciones de una secuencia

        Usa las mismas compuertas, seguridad y nivel de relajación que el modelo.

        Returns:
            SequenceEvaluation (report infactible si el comportamiento no tiene carril)
        """
        ctx = model.ctx
        horizon = model.horizon
        deltas = sequence.deltas[None]
        outputs = cls.predict(model.xi, deltas, model.mats)
        controls = cls.controls_from(ctx.agent.prev_control, deltas, horizon.Np)
        target_id = model.rmap.behavior_target(ctx.lane.id, ctx.s, ctx.target.id,
                                               model.stage == Stage.ENTERING, sequence.behavior,
                                               ctx.dy)
        target = ctx.target if target_id is None else model.rmap.lane(target_id)
        dy_now, dphi_now, _ = ctx.target.project(ctx.state.X, ctx.state.Y, ctx.state.phi)
        context = cls.lane_context(ctx, target, model.bounds, (dy_now, dphi_now), model.gates,
                                   model.braking)
        dy, dphi, _ = ConstraintService.lane_errors(outputs, context)
        prediction = EgoPrediction(outputs[0], controls[0], dy[0], dphi[0])
        if target_id is None:
            report = ConstraintReport((Violation('target_lane', 1.0, 0.0, 0),))
        else:
            report = ConstraintService.check(outputs[0], controls[0], sequence.deltas, model.bounds,
                                             context, ctx.agent.params, horizon.dt,
                                             safety=model.safety, skip=model.relaxed)
        return SequenceEvaluation(prediction, report, target_id)


class EpochGame:
    """
    Juego de la época de un ego: líder = ego, seguidores = sus NV por cupo

    Los seguidores responden solo al líder; el resto de los vehículos se
    propaga con sus últimas decisiones.
    """

    def __init__(self, leader, followers, models, mpc):
        self.leader = leader
        self.followers = list(followers)
        self.models = models
        self.mpc = mpc
        slot_of = {agent_id: slot for slot, agent_id in leader.roles.slots.items()}
        self.slots = [slot_of[f.id] for f in self.followers]
        self.players = tuple([leader.id] + [f.id for f in self.followers])
        self.candidates = [leader.candidates] + [f.candidates for f in self.followers]
        self.sizes = tuple(len(c) for c in self.candidates)
        self.feasible = [leader.feasible] + [f.feasible for f in self.followers]
        self.fallback = tuple([leader.fallback] + [f.fallback for f in self.followers])
        self.omega = mpc.allocation(len(self.players))
        R = np.asarray(mpc.R, dtype=float)
        self.effort = [leader.effort_terms @ R] + [f.effort_terms @ R for f in self.followers]
        self._tables = {}

    @staticmethod
    def _on_axis(values, axis, n):
        """Coloca la primera dimensión de `values` en el eje `axis` de n ejes"""
        values = np.asarray(values)
        shape = [1] * n
        shape[axis] = values.shape[0]
        return values.reshape(shape + list(values.shape[1:]))

    def _coupled(self, a, j):
        """El costo del líder depende del candidato del seguidor j"""
        follower = self.followers[j]
        slot = self.slots[j]
        nv2_alpha = follower.effective_alphas if slot == 2 else 0
        weights = PayoffService.blend_weights(self.leader.stage, self.leader.alphas[a],
                                              self.leader.betas[a], nv2_alpha)
        return bool(np.any(np.asarray(weights[slot]) != 0))

    def leader_slice(self, a):
        """Π del líder para su candidato a, con broadcasting sobre los ejes de seguidores"""
        leader = self.leader
        n = len(self.followers)
        opponents = {}
        for j, follower in enumerate(self.followers):
            rows = slice(None) if self._coupled(a, j) else slice(0, 1)
            opponents[self.slots[j]] = OpponentPrediction(
                self._on_axis(follower.outputs[rows], j, n),
                self._on_axis(follower.effective_alphas[rows], j, n))
        ego = EgoPrediction(leader.outputs[a], leader.controls[a], leader.dy[a], leader.dphi[a])
        payoff = PayoffService.payoff_tensor(leader.stage, leader.alphas[a], leader.betas[a], ego,
                                             leader.leader_reference, opponents, leader.style,
                                             leader.payoff_weights, leader.params)
        return GameService.cost_from_payoff(payoff, self.effort[0][a], self.mpc,
                                            leader.payoff_weights.epsilon)

    def _reference(self, agent_id):
        """Salidas de un agente vistas por un seguidor: el líder varía con a, el resto fijo"""
        if agent_id == self.leader.id:
            return self.leader.outputs[:, None], self.leader.effective_alphas[:, None]
        model = self.models[agent_id]
        return model.default_outputs, model.committed_alpha

    def follower_costs(self, j):
        """Π del seguidor j (1..n), forma (K0, Kj)"""
        if j in self._tables:
            return self._tables[j]
        follower = self.followers[j - 1]
        if follower.leader_id is not None and follower.leader_id == self.leader.id:
            leader_out = self.leader.outputs[:, None]
        else:
            leader_out = follower.leader_reference
        opponents = {}
        for slot, agent_id in follower.roles.slots.items():
            if agent_id not in self.models:
                continue
            outputs, alpha = self._reference(agent_id)
            opponents[slot] = OpponentPrediction(outputs, alpha)
        ego = EgoPrediction(follower.outputs[None], follower.controls[None],
                            follower.dy[None], follower.dphi[None])
        payoff = PayoffService.payoff_tensor(follower.stage, follower.alphas[None],
                                             follower.betas[None], ego, leader_out, opponents,
                                             follower.style, follower.payoff_weights,
                                             follower.params)
        costs = GameService.cost_from_payoff(payoff, self.effort[j][None], self.mpc,
                                             follower.payoff_weights.epsilon)
        table = np.broadcast_to(costs, (self.sizes[0], self.sizes[j])).copy()
        self._tables[j] = table
        return table

    def breakdown(self, choices):
        """PayoffBreakdown del líder en el primer paso del perfil elegido"""
        leader = self.leader
        a = choices[0]
        opponents = {}
        for j, follower in enumerate(self.followers):
            b = choices[j + 1]
            opponents[self.slots[j]] = OpponentPrediction(follower.outputs[b],
                                                          follower.effective_alphas[b])
        ego = EgoPrediction(leader.outputs[a], leader.controls[a], leader.dy[a], leader.dphi[a])
        return PayoffService.total_payoff(leader.stage, leader.candidates[a].behavior, ego,
                                          leader.leader_reference, opponents, leader.style,
                                          leader.payoff_weights, leader.params)[0]

    @classmethod
    def for_ego(cls, ego_id, models, mpc):
        leader = models[ego_id]
        followers = [models[agent_id] for slot, agent_id in sorted(leader.roles.slots.items())
                     if agent_id in models]
        return cls(leader, followers, models, mpc)


def solve_epoch(ego_id, models, config):
    """
    Resuelve la época de un ego con el solver configurado

    El tiempo de la época suma la construcción del modelo del ego, la del
    juego y el solver (diagnostics.epoch_time).
    """
    start = time.perf_counter()
    game = EpochGame.for_ego(ego_id, models, config.mpc)
    outcome = GameService.solve(game, config.solver)
    elapsed = time.perf_counter() - start
    model_time = models[ego_id].build_time + max(elapsed - outcome.diagnostics.wall_time, 0.0)
    diagnostics = replace(outcome.diagnostics, model_time=model_time)
    return game, replace(outcome, diagnostics=diagnostics)

