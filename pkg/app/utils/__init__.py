from app.utils.decorators import handle_exceptions
from app.utils.exceptions import (
    RoundaboutError,
    InvalidInputError,
    SteeringDomainError,
    ConfigurationError,
    ScenarioError,
    ProjectionError,
    LocalizationError,
    ExportError
)
from app.utils.units import wrap_angle, parse_angle, parse_seconds
from app.utils.validators import (
    FiniteNumber,
    PositiveNumber,
    PositiveOrZero,
    PositiveInteger,
    OneOf
)

__all__ = [
    # Decorators
    'handle_exceptions',

    # Exceptions
    'RoundaboutError',
    'InvalidInputError',
    'SteeringDomainError',
    'ConfigurationError',
    'ScenarioError',
    'ProjectionError',
    'LocalizationError',
    'ExportError',

    # Units
    'wrap_angle',
    'parse_angle',
    'parse_seconds',

    # Validators
    'FiniteNumber',
    'PositiveNumber',
    'PositiveOrZero',
    'PositiveInteger',
    'OneOf'
]
