# ============================================
# MODELOS DE VEHÍCULO - Estado, control y horizonte
# ============================================
# Tipos inmutables del modelo cinemático de bicicleta

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.mixins import SerializableMixin
from app.utils.exceptions import ConfigurationError, InvalidInputError
from app.utils.units import wrap_angle


def _require_finite(name, *values):
    for value in values:
        if not np.isfinite(value):
            raise InvalidInputError(f'Valor no finito en {name}', value=value)


@dataclass(frozen=True)
class VehicleState(SerializableMixin):
    """
    Estado x = [vx, phi, X, Y]

    vx en m/s (>= 0), phi en rad normalizado a (−π, π], X/Y en m.
    """
    vx: float
    phi: float
    X: float
    Y: float

    def __post_init__(self):
        _require_finite('VehicleState', self.vx, self.phi, self.X, self.Y)
        if self.vx < 0:
            raise InvalidInputError('La velocidad longitudinal no puede ser negativa', vx=self.vx)
        object.__setattr__(self, 'vx', float(self.vx))
        object.__setattr__(self, 'phi', wrap_angle(self.phi))
        object.__setattr__(self, 'X', float(self.X))
        object.__setattr__(self, 'Y', float(self.Y))

    def as_array(self):
        return np.array([self.vx, self.phi, self.X, self.Y], dtype=float)

    @classmethod
    def from_array(cls, values, clamp_speed=False):
        values = np.asarray(values, dtype=float)
        if values.shape != (4,):
            raise InvalidInputError('Se esperaban 4 componentes de estado', shape=values.shape)
        vx = max(values[0], 0.0) if clamp_speed else values[0]
        return cls(vx, values[1], values[2], values[3])

    @property
    def position(self):
        return np.array([self.X, self.Y], dtype=float)


@dataclass(frozen=True)
class ControlInput(SerializableMixin):
    """Control u = [ax, delta_f] (m/s², rad)"""
    ax: float = 0.0
    delta_f: float = 0.0

    def __post_init__(self):
        _require_finite('ControlInput', self.ax, self.delta_f)
        object.__setattr__(self, 'ax', float(self.ax))
        object.__setattr__(self, 'delta_f', float(self.delta_f))

    def as_array(self):
        return np.array([self.ax, self.delta_f], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), float(values[1]))

    def within(self, bounds):
        """True si respeta |ax| <= ax_max y |delta_f| <= delta_max"""
        return abs(self.ax) <= bounds.ax_max and abs(self.delta_f) <= bounds.delta_max

    def clipped(self, bounds):
        return ControlInput(
            float(np.clip(self.ax, -bounds.ax_max, bounds.ax_max)),
            float(np.clip(self.delta_f, -bounds.delta_max, bounds.delta_max)),
        )


@dataclass(frozen=True)
class ControlDelta(SerializableMixin):
    """Incremento por paso Δu = [d_ax, d_delta_f]"""
    d_ax: float = 0.0
    d_delta_f: float = 0.0

    # Tolerancia relativa en la cota (extremos de la rejilla)
    BOUND_TOLERANCE = 1e-12

    def __post_init__(self):
        _require_finite('ControlDelta', self.d_ax, self.d_delta_f)

    def as_array(self):
        return np.array([self.d_ax, self.d_delta_f], dtype=float)

    def within(self, bounds):
        """True si respeta |d_ax| <= dax_max y |d_delta_f| <= ddelta_max"""
        slack = 1.0 + self.BOUND_TOLERANCE
        return (abs(self.d_ax) <= bounds.dax_max * slack
                and abs(self.d_delta_f) <= bounds.ddelta_max * slack)

    def checked(self, bounds):
        """
        El mismo incremento, validado contra las cotas por paso

        Raises:
            InvalidInputError: incremento fuera de [−dax_max, dax_max] o
            [−ddelta_max, ddelta_max]
        """
        if not self.within(bounds):
            raise InvalidInputError('Incremento de control fuera de cota', d_ax=self.d_ax,
                                    d_delta_f=self.d_delta_f, dax_max=bounds.dax_max,
                                    ddelta_max=bounds.ddelta_max)
        return self


@dataclass(frozen=True)
class VehicleParameters(SerializableMixin):
    """
    Geometría del vehículo

    lf/lr: distancias del CG a los ejes (m); Lv: coeficiente de seguridad por
    longitud (m); collision_diameter: disco usado para detectar colisiones (m).
    """
    lf: float = 1.5
    lr: float = 1.5
    Lv: float = 5.0
    collision_diameter: float = 2.5

    def __post_init__(self):
        _require_finite('VehicleParameters', self.lf, self.lr, self.Lv, self.collision_diameter)
        if self.lf <= 0 or self.lr <= 0 or self.Lv <= 0 or self.collision_diameter <= 0:
            raise ConfigurationError('Los parámetros del vehículo deben ser positivos',
                                     lf=self.lf, lr=self.lr, Lv=self.Lv)

    @property
    def wheelbase(self):
        return self.lf + self.lr


@dataclass(frozen=True)
class HorizonConfig(SerializableMixin):
    """
    Muestreo y horizontes del MPC

    Np > Nc >= 1; se admite Np = Nc = 1 (levantamiento de un solo paso).
    """
    dt: float = 0.1
    Np: int = 10
    Nc: int = 2

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ConfigurationError('El periodo de muestreo debe ser positivo', dt=self.dt)
        if int(self.Nc) != self.Nc or int(self.Np) != self.Np:
            raise ConfigurationError('Np y Nc deben ser enteros', Np=self.Np, Nc=self.Nc)
        if self.Nc < 1:
            raise ConfigurationError('Nc debe ser >= 1', Nc=self.Nc)
        single_step = self.Np == 1 and self.Nc == 1
        if not single_step and self.Np <= self.Nc:
            raise ConfigurationError('El horizonte de predicción debe superar al de control',
                                     Np=self.Np, Nc=self.Nc)


@dataclass(frozen=True)
class AugmentedState(SerializableMixin):
    """ξ = [x; u(k−1)] (6 componentes)"""
    state: VehicleState
    prev_control: ControlInput = field(default_factory=ControlInput)

    @property
    def xi(self):
        return np.concatenate([self.state.as_array(), self.prev_control.as_array()])

    @classmethod
    def from_array(cls, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (6,):
            raise InvalidInputError('ξ debe tener 6 componentes', shape=xi.shape)
        return cls(VehicleState.from_array(xi[:4]), ControlInput.from_array(xi[4:]))


@dataclass(frozen=True, eq=False)
class PredictionMatrices(SerializableMixin):
    """
    Matrices del modelo levantado Υ = C̄ξ + D̄Δu + Ē

    E_bar es la respuesta al residuo de linealización (cero si no se pasa deriva).
    """
    A_k: np.ndarray
    B_k: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    C_bar: np.ndarray
    D_bar: np.ndarray
    horizon: HorizonConfig
    E_bar: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.E_bar is None:
            object.__setattr__(self, 'E_bar', np.zeros(4 * self.horizon.Np))
