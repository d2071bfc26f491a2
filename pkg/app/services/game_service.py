# ============================================
# GAME SERVICE - Conjuntos de candidatos, costo MPC y solvers
# ============================================
# Responsabilidad: enumerar decisiones, evaluar Π y resolver el juego de
# la época con Stackelberg (líder-seguidores) o coalición total

import itertools
import logging
import time

import numpy as np

from app.models.game import DecisionSequence, GameOutcome, GridConfig, SolverDiagnostics
from app.models.payoff import Behavior
from app.models.roundabout import Stage
from app.utils.exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)


class TabularGame:
    """
    Juego con tablas de costo explícitas

    leader_costs: arreglo (K0, K1, ..., Kn) con el Π del líder por perfil
    follower_costs: lista de n arreglos (K0, Kj) con el Π de cada seguidor
    feasible: lista de máscaras booleanas por jugador (None = todo factible)
    """

    def __init__(self, leader_costs, follower_costs=(), feasible=None, players=None,
                 candidates=None, fallback=None, omega=None):
        self.leader_costs = np.asarray(leader_costs, dtype=float)
        self.tables = [np.asarray(t, dtype=float) for t in follower_costs]
        self.sizes = tuple(self.leader_costs.shape)
        if len(self.sizes) != len(self.tables) + 1:
            raise InvalidInputError('Una tabla por seguidor', players=len(self.sizes),
                                    tables=len(self.tables))
        for j, table in enumerate(self.tables, start=1):
            if table.shape != (self.sizes[0], self.sizes[j]):
                raise InvalidInputError('Tabla de seguidor con forma incorrecta', follower=j,
                                        shape=table.shape)
        if feasible is None:
            feasible = [np.ones(k, dtype=bool) for k in self.sizes]
        self.feasible = [np.asarray(m, dtype=bool) for m in feasible]
        self.players = tuple(players or (f'P{i}' for i in range(len(self.sizes))))
        self.candidates = candidates
        self.fallback = tuple(fallback or (0,) * len(self.sizes))
        self.omega = omega

    def leader_slice(self, a):
        return self.leader_costs[a]

    def follower_costs(self, j):
        return self.tables[j - 1]


class GameService:
    """Servicio del juego de decisión"""

    # --------------------------------------------
    # Candidatos y costo
    # --------------------------------------------

    @staticmethod
    def behaviors_for(stage):
        """Comportamientos válidos en la etapa (mantener primero)"""
        if Stage(stage) == Stage.ENTERING:
            return [Behavior(0, 0), Behavior(-1, 0), Behavior(1, 0)]
        return [Behavior(0, 0), Behavior(0, -1), Behavior(0, 1)]

    @classmethod
    def candidate_set(cls, stage, bounds, grid=None, Nc=1):
        """
        Producto cartesiano comportamientos × rejilla Δax × rejilla Δδf

        La lista se devuelve ordenada por la clave de desempate, de modo que
        el primer mínimo en orden de enumeración respeta el desempate.

        Raises:
            ConfigurationError: rejilla con menos de 2 niveles
        """
        grid = grid or GridConfig()
        if not isinstance(grid, GridConfig):
            grid = GridConfig(*grid)
        if Nc < 1:
            raise ConfigurationError('Nc debe ser >= 1', Nc=Nc)
        ax_levels = np.linspace(-bounds.dax_max, bounds.dax_max, grid.levels_ax)
        delta_levels = np.linspace(-bounds.ddelta_max, bounds.ddelta_max, grid.levels_delta)
        raw = [DecisionSequence.constant(d_ax, d_delta, behavior, Nc)
               for behavior in cls.behaviors_for(stage)
               for d_ax in ax_levels
               for d_delta in delta_levels]
        return sorted(raw, key=DecisionSequence.tie_key)

    @staticmethod
    def fallback_index(candidates, bounds):
        """Mantener carril, Δax = −Δax_max y el Δδf de menor magnitud"""
        best = None
        for index, candidate in enumerate(candidates):
            first = candidate.first
            if not candidate.behavior.is_keep or not np.isclose(first.d_ax, -bounds.dax_max):
                continue
            key = (abs(first.d_delta_f), index)
            if best is None or key < best:
                best = key
        return best[1] if best else 0

    @staticmethod
    def effort_terms(candidates):
        """Σ de cuadrados de (Δax, Δδf, α, β) sobre los pasos, forma (K, 4)"""
        terms = np.zeros((len(candidates), 4))
        for i, candidate in enumerate(candidates):
            steps = np.array([[s.d_ax, s.d_delta_f, s.alpha, s.beta] for s in candidate.steps],
                             dtype=float)
            terms[i] = np.square(steps).sum(axis=0)
        return terms

    @classmethod
    def control_effort(cls, candidates, weights):
        """Término R de Π por candidato, forma (K,)"""
        return cls.effort_terms(candidates) @ np.asarray(weights.R, dtype=float)

    @staticmethod
    def cost_from_payoff(payoff, effort, weights, epsilon):
        """
        Π = Σ_p Q_p·J_p² + R-término con J = 1/(P + ε)

        Args:
            payoff: P por paso, forma (..., Np)
            effort: término R con broadcasting sobre (...)
        """
        payoff = np.asarray(payoff, dtype=float)
        q = weights.q_vector(payoff.shape[-1])
        J = 1.0 / (payoff + epsilon)
        return np.square(J) @ q + effort

    @classmethod
    def mpc_cost(cls, player, candidate, opponents, weights, leader=None):
        """
        Π de un candidato evaluado paso a paso

        Predice la trayectoria del jugador, verifica restricciones, evalúa el
        pago por paso y lo compone en Π.

        Args:
            player: PlayerModel
            candidate: DecisionSequence
            opponents: {cupo: (PlayerModel, DecisionSequence)}
            weights: MpcWeights
            leader: salidas (Np, 4) del LV (por defecto, la referencia fija del jugador)

        Returns:
            float: Π, o +inf si el candidato es infactible
        """
        from app.services.epoch_service import EpochService
        from app.services.payoff_service import OpponentPrediction, PayoffService

        ego = EpochService.evaluate_sequence(player, candidate)
        if ego is None or not ego.report.feasible:
            return float('inf')
        if leader is None:
            leader = player.leader_reference
        predictions = {}
        for slot, (model, sequence) in opponents.items():
            other = EpochService.evaluate_sequence(model, sequence)
            predictions[slot] = OpponentPrediction(other.prediction.outputs,
                                                   model.effective_alpha_of(sequence))
        breakdown = PayoffService.total_payoff(player.stage, candidate.behavior, ego.prediction,
                                               leader, predictions, player.style,
                                               player.payoff_weights, player.params)
        payoff = np.array([b.total for b in breakdown])
        effort = cls.control_effort([candidate], weights)[0]
        return float(cls.cost_from_payoff(payoff, effort, weights, player.payoff_weights.epsilon))

    # --------------------------------------------
    # Solvers
    # --------------------------------------------

    @staticmethod
    def _masks(game):
        """Máscaras efectivas y jugadores sin candidatos factibles"""
        masks, fallback_players = [], []
        for i, mask in enumerate(game.feasible):
            if mask.any():
                masks.append(mask)
            else:
                forced = np.zeros_like(mask)
                forced[game.fallback[i]] = True
                masks.append(forced)
                fallback_players.append(game.players[i])
        return masks, fallback_players

    @classmethod
    def _outcome(cls, game, solver, choices, costs, start, fallback_players, extra=None):
        joint = cls.joint_cost(game, choices)
        sequences, cost_map = {}, {}
        for i, player in enumerate(game.players):
            if game.candidates is not None:
                sequences[player] = game.candidates[i][choices[i]]
            cost_map[player] = float(costs[i])
        evaluated = int(np.prod(game.sizes)) if solver == 'gc' else int(sum(
            game.sizes[0] * k for k in game.sizes[1:]) + game.sizes[0])
        diagnostics = SolverDiagnostics(
            solver=solver,
            candidates_evaluated=evaluated,
            infeasible_count=int(sum((~m).sum() for m in game.feasible)),
            wall_time=time.perf_counter() - start,
            fallback_players=tuple(fallback_players),
        )
        if fallback_players:
            logger.warning(f"⚠️ Decisión de respaldo ({solver}) para: {', '.join(fallback_players)}")
        return GameOutcome(players=tuple(game.players), choices=tuple(int(c) for c in choices),
                           sequences=sequences, costs=cost_map, joint_cost=joint,
                           diagnostics=diagnostics, extra=extra or {})

    @classmethod
    def profile_costs(cls, game, choices):
        """Π de cada jugador en un perfil de estrategias"""
        n = len(game.sizes) - 1
        leader = np.broadcast_to(game.leader_slice(choices[0]), game.sizes[1:])
        costs = [float(leader[tuple(choices[1:])]) if n else float(leader)]
        for j in range(1, n + 1):
            costs.append(float(game.follower_costs(j)[choices[0], choices[j]]))
        return np.array(costs)

    @classmethod
    def solve_stackelberg(cls, game):
        """
        Líder con anticipación del peor caso sobre las mejores respuestas

        Para cada candidato del líder, cada seguidor responde de forma
        independiente (conjunto de mejores respuestas por igualdad exacta); el
        líder minimiza su costo máximo sobre el producto de esos conjuntos.
        """
        start = time.perf_counter()
        masks, fallback_players = cls._masks(game)
        n = len(game.sizes) - 1
        tables = [np.where(masks[j][None, :], game.follower_costs(j), np.inf)
                  for j in range(1, n + 1)]

        best_a, best_value, best_responses = None, np.inf, None
        for a in range(game.sizes[0]):
            if not masks[0][a]:
                continue
            responses = []
            for table in tables:
                row = table[a]
                low = row.min()
                responses.append(np.flatnonzero(row == low))
            leader = np.broadcast_to(game.leader_slice(a), game.sizes[1:])
            worst = float(leader[np.ix_(*responses)].max()) if n else float(leader)
            if best_a is None or worst < best_value:
                best_a, best_value, best_responses = a, worst, responses

        choices = [best_a] + [int(r[0]) for r in best_responses]
        costs = cls.profile_costs(game, choices)
        return cls._outcome(game, 'sg', choices, costs, start, fallback_players,
                            {'leader_worst_case': best_value})

    @classmethod
    def solve_grand_coalition(cls, game):
        """
        Minimiza Σ ω_i·Π_i sobre el producto conjunto de candidatos

        Jugadores sin candidatos factibles quedan fijos en su respaldo.
        """
        start = time.perf_counter()
        masks, fallback_players = cls._masks(game)
        n = len(game.sizes) - 1
        omega = game.omega if game.omega is not None else np.full(n + 1, 1.0 / (n + 1))
        inner = game.sizes[1:]
        tables = [np.where(masks[j][None, :], game.follower_costs(j), np.inf)
                  for j in range(1, n + 1)]

        best_value, best_choices = np.inf, None
        for a in range(game.sizes[0]):
            if not masks[0][a]:
                continue
            total = omega[0] * np.broadcast_to(game.leader_slice(a), inner)
            for j, table in enumerate(tables, start=1):
                shape = [1] * n
                shape[j - 1] = inner[j - 1]
                total = total + omega[j] * table[a].reshape(shape)
            total = np.broadcast_to(total, inner)
            flat = int(np.argmin(total)) if n else 0
            value = float(total.flat[flat]) if n else float(total)
            if best_choices is None or value < best_value:
                best_value = value
                best_choices = [a] + [int(i) for i in np.unravel_index(flat, inner)] if n else [a]

        costs = cls.profile_costs(game, best_choices)
        return cls._outcome(game, 'gc', best_choices, costs, start, fallback_players,
                            {'coalition_cost': best_value})

    @classmethod
    def solve(cls, game, solver):
        if solver == 'sg':
            return cls.solve_stackelberg(game)
        if solver == 'gc':
            return cls.solve_grand_coalition(game)
        raise ConfigurationError('Solver desconocido', solver=solver)

    # --------------------------------------------
    # Enumeración de referencia
    # --------------------------------------------

    @classmethod
    def joint_cost(cls, game, choices):
        """Σ ω_i·Π_i en un perfil, sumado en orden de jugadores"""
        n = len(game.sizes) - 1
        omega = game.omega if game.omega is not None else np.full(n + 1, 1.0 / (n + 1))
        costs = cls.profile_costs(game, choices)
        total = omega[0] * costs[0]
        for j in range(1, n + 1):
            total = total + omega[j] * costs[j]
        return float(total)

    @staticmethod
    def profiles(game):
        """Todos los perfiles en orden lexicográfico"""
        return itertools.product(*(range(k) for k in game.sizes))
