# ============================================
# MODELOS DE SIMULACIÓN - Registro y métricas
# ============================================

from dataclasses import dataclass, field
from typing import Optional

from app.models.mixins import SerializableMixin


@dataclass(frozen=True)
class StepRecord(SerializableMixin):
    """
    Registro de un agente en un paso

    state es el estado al inicio del paso; control/delta son los aplicados
    durante [t, t+dt]. nv_gaps: id del NV → distancia entre centros − Lv.
    """
    time: float
    agent: str
    stage: str
    lane: str
    committed_lane: str
    target_lane: str
    state: object
    control: object
    decision: object
    ay: float
    leader: Optional[str] = None
    neighbors: dict = field(default_factory=dict)
    nv_gaps: dict = field(default_factory=dict)
    feasible: bool = True
    fallback: bool = False
    payoff: Optional[object] = None
    solve_time: float = 0.0


@dataclass(frozen=True)
class CollisionRecord(SerializableMixin):
    time: float
    agents: tuple
    distance: float


@dataclass
class SimulationLog:
    """
    Historial completo de una corrida

    termination: 'completed' | 'duration' | 'collision' | 'localization'
    """
    scenario: str
    solver: str
    dt: float
    records: list = field(default_factory=list)
    collision: Optional[CollisionRecord] = None
    completed: dict = field(default_factory=dict)
    termination: str = 'duration'
    error: Optional[str] = None

    def append(self, record):
        self.records.append(record)

    @property
    def agents(self):
        return sorted({r.agent for r in self.records})

    def for_agent(self, agent_id):
        return [r for r in self.records if r.agent == agent_id]

    @property
    def fallback_used(self):
        return any(r.fallback for r in self.records)

    @property
    def solve_times(self):
        return [r.solve_time for r in self.records]


@dataclass(frozen=True)
class AgentMetrics(SerializableMixin):
    agent: str
    samples: int
    max_velocity: float
    velocity_rms: float
    ax_quartiles: tuple
    ay_quartiles: tuple
    min_nv_gap: dict
    travel_time: float
    completed: bool
    fallback_count: int


@dataclass(frozen=True)
class MetricsReport(SerializableMixin):
    """Métricas por agente, del sistema y del solver"""
    scenario: str
    solver: str
    agents: dict
    system_velocity_rms: float
    mean_solve_time: float
    collision: bool = False

    def velocity_rms(self, agent_id):
        return self.agents[agent_id].velocity_rms
