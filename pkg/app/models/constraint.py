# ============================================
# MODELOS DE RESTRICCIONES
# ============================================

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.mixins import SerializableMixin
from app.utils.exceptions import ConfigurationError

LANE_CONSTRAINT_MODES = ('always', 'settled', 'off')


@dataclass(frozen=True)
class ConstraintBounds(SerializableMixin):
    """
    Cotas del conjunto de restricciones (SI: m, rad, m/s, m/s²)

    ds_tracking desactiva el error de estación; lane_constraints elige cuándo
    se imponen dy/dphi; lane_end impide rebasar el final de un carril sin
    continuación.
    """
    ds_max: float = 0.8
    dy_max: float = 0.2
    dphi_max: float = float(np.radians(2.0))
    ax_max: float = 8.0
    ay_max: float = 5.0
    vx_max: float = 30.0
    dax_max: float = 0.1
    ddelta_max: float = float(np.radians(0.3))
    delta_max: float = float(np.radians(30.0))
    ds_tracking: bool = True
    lane_constraints: str = 'always'
    lane_end: bool = True

    LIMIT_NAMES = ('ds_max', 'dy_max', 'dphi_max', 'ax_max', 'ay_max',
                   'vx_max', 'dax_max', 'ddelta_max', 'delta_max')

    def __post_init__(self):
        for name in self.LIMIT_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError('Las cotas deben ser estrictamente positivas',
                                         field=name, value=value)
        if self.lane_constraints not in LANE_CONSTRAINT_MODES:
            raise ConfigurationError('Modo de restricciones de carril desconocido',
                                     lane_constraints=self.lane_constraints)


@dataclass(frozen=True)
class SafetyConfig(SerializableMixin):
    """
    Restricciones de seguridad entre vehículos

    headway_margin: holgura sobre la suma de radios frente al LV (m);
    separation_margin: holgura frente a vehículos no traseros (m);
    gap_time: brecha temporal aceptada al ceder o cambiar de carril (s);
    clear_distance: distancia libre mínima en el carril receptor (m);
    brake_decel: deceleración sostenida supuesta al calcular la distancia de
    detención (m/s², acotada por ax_max).
    """
    enabled: bool = True
    headway_margin: float = 1.0
    separation_margin: float = 0.25
    gap_time: float = 3.0
    clear_distance: float = 10.0
    brake_decel: float = 4.0

    def __post_init__(self):
        if not np.isfinite(self.brake_decel) or self.brake_decel <= 0:
            raise ConfigurationError('La deceleración de frenado debe ser positiva',
                                     brake_decel=self.brake_decel)
        for name in ('headway_margin', 'separation_margin', 'gap_time', 'clear_distance'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError('Los márgenes de seguridad deben ser >= 0',
                                         field=name, value=value)

    def braking(self, bounds, dt):
        """(jerk, deceleración) de la detención supuesta: Δax_max por paso hasta brake_decel"""
        return bounds.dax_max / dt, min(self.brake_decel, bounds.ax_max)


@dataclass(frozen=True)
class Violation(SerializableMixin):
    name: str
    value: float
    bound: float
    step: int


@dataclass(frozen=True)
class ConstraintReport(SerializableMixin):
    violations: tuple = ()

    @property
    def feasible(self):
        return not self.violations

    def to_dict(self):
        return {'feasible': self.feasible, 'violations': [v.to_dict() for v in self.violations]}


@dataclass(frozen=True)
class LaneContext:
    """
    Contexto de carril de un candidato

    nominal_speed: velocidad de la referencia de estación (v0)
    stop_station: estación en `target` que no se puede rebasar (o None)
    braking: (jerk, deceleración) para exigir que la detención quepa antes de
    stop_station; None verifica solo la posición
    blocked: el carril objetivo no admite el cambio en este paso
    """
    source: object
    target: object
    maneuver: bool = False
    enforce_lane: bool = True
    nominal_speed: float = 0.0
    start_position: tuple = (0.0, 0.0)
    stop_station: Optional[float] = None
    braking: Optional[tuple] = None
    blocked: bool = False
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SafetyContext:
    """
    Predicciones ajenas contra las que se verifica un candidato

    leader: salidas (Np, 4) del LV a control constante o None
    others: salidas (Np, 4) de los vehículos no traseros (sin el LV)
    *_now: holgura faltante medida en el instante actual
    """
    jerk: float
    decel: float
    dt: float
    headway_base: float = 0.0
    leader: Optional[np.ndarray] = None
    leader_ax: float = 0.0
    headway_now: float = float('-inf')
    others: tuple = ()
    separation_base: tuple = ()
    separation_now: tuple = ()


@dataclass(frozen=True)
class GateState:
    """
    Compuertas de un ego en el paso actual

    stops: conector → estación donde debe detenerse (ceda el paso cerrado)
    blocked: carriles de cambio de carril sin hueco suficiente
    """
    stops: dict = field(default_factory=dict)
    blocked: frozenset = frozenset()

    @property
    def closed(self):
        return bool(self.stops or self.blocked)
