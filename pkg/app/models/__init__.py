# ============================================
# EXPORTACIÓN DE MODELOS
# ============================================
# Tipos inmutables del dominio (dataclasses)

from app.models.mixins import SerializableMixin, LabeledMixin
from app.models.vehicle import (
    VehicleState, ControlInput, ControlDelta, VehicleParameters,
    HorizonConfig, AugmentedState, PredictionMatrices
)
from app.models.lane import LaneKind, LaneRef, LineSegment, ArcSegment
from app.models.payoff import DrivingStyle, StyleWeights, PayoffWeights, Behavior, PayoffBreakdown
from app.models.constraint import ConstraintBounds, Violation, ConstraintReport, LaneContext
from app.models.game import (
    DecisionVector, DecisionSequence, GridConfig, MpcWeights,
    SolverDiagnostics, GameOutcome
)
from app.models.roundabout import (
    Stage, Role, RoundaboutGeometry, Route, AgentSeed, VehicleAgent,
    RoleConfig, StageConfig, ScenarioConfig, RoleMap, AgentContext
)
from app.models.simulation import (
    StepRecord, CollisionRecord, SimulationLog, AgentMetrics, MetricsReport
)

__all__ = [
    # Mixins
    'SerializableMixin',
    'LabeledMixin',

    # Vehículo
    'VehicleState',
    'ControlInput',
    'ControlDelta',
    'VehicleParameters',
    'HorizonConfig',
    'AugmentedState',
    'PredictionMatrices',

    # Carriles
    'LaneKind',
    'LaneRef',
    'LineSegment',
    'ArcSegment',

    # Pagos y restricciones
    'DrivingStyle',
    'StyleWeights',
    'PayoffWeights',
    'Behavior',
    'PayoffBreakdown',
    'ConstraintBounds',
    'Violation',
    'ConstraintReport',
    'LaneContext',

    # Juego
    'DecisionVector',
    'DecisionSequence',
    'GridConfig',
    'MpcWeights',
    'SolverDiagnostics',
    'GameOutcome',

    # Escenario
    'Stage',
    'Role',
    'RoundaboutGeometry',
    'Route',
    'AgentSeed',
    'VehicleAgent',
    'RoleConfig',
    'StageConfig',
    'ScenarioConfig',
    'RoleMap',
    'AgentContext',

    # Simulación
    'StepRecord',
    'CollisionRecord',
    'SimulationLog',
    'AgentMetrics',
    'MetricsReport'
]
