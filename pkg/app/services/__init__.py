from app.services.kinematics_service import KinematicsService
from app.services.geometry_service import RoundaboutMap, build_map
from app.services.scenario_service import ScenarioService
from app.services.role_service import RoleService
from app.services.payoff_service import PayoffService
from app.services.constraint_service import ConstraintService
from app.services.safety_service import SafetyService
from app.services.game_service import GameService, TabularGame
from app.services.epoch_service import EpochService, EpochGame, solve_epoch
from app.services.simulation_service import SimulationService
from app.services.metrics_service import MetricsService
from app.services.export_service import ExportService

__all__ = [
    'KinematicsService',
    'RoundaboutMap',
    'build_map',
    'ScenarioService',
    'RoleService',
    'PayoffService',
    'ConstraintService',
    'SafetyService',
    'GameService',
    'TabularGame',
    'EpochService',
    'EpochGame',
    'solve_epoch',
    'SimulationService',
    'MetricsService',
    'ExportService'
]
