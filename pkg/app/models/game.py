# ============================================
# MODELOS DEL JUEGO - Decisiones, pesos MPC y resultados
# ============================================

from dataclasses import dataclass, field

import numpy as np

from app.models.mixins import SerializableMixin
from app.models.payoff import Behavior
from app.models.vehicle import ControlDelta
from app.utils.exceptions import ConfigurationError, InvalidInputError

SOLVERS = ('sg', 'gc')


@dataclass(frozen=True)
class DecisionVector(SerializableMixin):
    """û = [Δax, Δδf, α, β]"""
    d_ax: float = 0.0
    d_delta_f: float = 0.0
    alpha: int = 0
    beta: int = 0

    @property
    def behavior(self):
        return Behavior(self.alpha, self.beta)

    @property
    def delta(self):
        return ControlDelta(self.d_ax, self.d_delta_f)


@dataclass(frozen=True)
class DecisionSequence(SerializableMixin):
    """Secuencia de Nc decisiones con comportamiento constante"""
    steps: tuple

    def __post_init__(self):
        if not self.steps:
            raise InvalidInputError('Secuencia de decisiones vacía')
        first = self.steps[0]
        if any(s.alpha != first.alpha or s.beta != first.beta for s in self.steps):
            raise InvalidInputError('alpha y beta deben ser constantes en la secuencia')

    @classmethod
    def constant(cls, d_ax, d_delta_f, behavior, Nc):
        step = DecisionVector(float(d_ax), float(d_delta_f), behavior.alpha, behavior.beta)
        return cls(tuple([step] * Nc))

    @property
    def first(self):
        return self.steps[0]

    @property
    def behavior(self):
        return self.steps[0].behavior

    @property
    def deltas(self):
        """Matriz (Nc, 2) de incrementos"""
        return np.array([[s.d_ax, s.d_delta_f] for s in self.steps], dtype=float)

    def tie_key(self):
        """Orden de desempate: mantener carril, |Δax| menor, |Δδf| menor"""
        b = self.behavior
        return (0 if b.is_keep else 1, abs(self.first.d_ax), abs(self.first.d_delta_f))


@dataclass(frozen=True)
class GridConfig(SerializableMixin):
    """Niveles de la rejilla por eje continuo"""
    levels_ax: int = 5
    levels_delta: int = 5

    def __post_init__(self):
        if self.levels_ax < 2 or self.levels_delta < 2:
            raise ConfigurationError('La rejilla necesita al menos 2 niveles por eje',
                                     levels_ax=self.levels_ax, levels_delta=self.levels_delta)


@dataclass(frozen=True)
class MpcWeights(SerializableMixin):
    """
    Pesos del costo MPC

    Q: escalar o tupla de Np valores; R: (Δax, Δδf, α, β); omega: pesos de la
    coalición (None = reparto igualitario).
    """
    Q: object = 100.0
    R: tuple = (0.1, 1.0, 0.01, 0.01)
    omega: object = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.Q, dtype=float))
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ConfigurationError('Q debe ser >= 0', Q=self.Q)
        if len(self.R) != 4 or any(r < 0 for r in self.R):
            raise ConfigurationError('R debe tener 4 entradas >= 0', R=self.R)
        if self.omega is not None and any(w <= 0 for w in self.omega):
            raise ConfigurationError('omega debe ser > 0', omega=self.omega)

    def q_vector(self, Np):
        q = np.atleast_1d(np.asarray(self.Q, dtype=float))
        if q.size == 1:
            return np.full(Np, q[0])
        if q.size != Np:
            raise ConfigurationError('Q por paso debe tener Np entradas', Np=Np, got=q.size)
        return q

    def allocation(self, n_players):
        if self.omega is None:
            return np.full(n_players, 1.0 / n_players)
        if len(self.omega) < n_players:
            raise ConfigurationError('omega no cubre a todos los jugadores', players=n_players)
        return np.asarray(self.omega[:n_players], dtype=float)

    def scaled(self, factor):
        q = np.asarray(self.Q, dtype=float) * factor
        return MpcWeights(q.tolist() if q.ndim else float(q),
                          tuple(r * factor for r in self.R), self.omega)


@dataclass(frozen=True)
class SolverDiagnostics(SerializableMixin):
    """
    wall_time: tiempo del solver; model_time: predicción y clasificación de
    candidatos atribuida a la época (0 si el juego ya venía tabulado)
    """
    solver: str
    candidates_evaluated: int
    infeasible_count: int
    wall_time: float
    fallback_players: tuple = ()
    model_time: float = 0.0

    @property
    def fallback_used(self):
        return bool(self.fallback_players)

    @property
    def epoch_time(self):
        return self.model_time + self.wall_time


@dataclass(frozen=True)
class GameOutcome(SerializableMixin):
    """
    Resultado de una época de decisión

    players: ids en orden (líder primero); choices: índice elegido por jugador
    """
    players: tuple
    choices: tuple
    sequences: dict
    costs: dict
    joint_cost: float
    diagnostics: SolverDiagnostics
    extra: dict = field(default_factory=dict)

    def sequence_for(self, player_id):
        return self.sequences[player_id]
