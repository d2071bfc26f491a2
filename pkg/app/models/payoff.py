# ============================================
# MODELOS DE PAGO - Estilos, pesos y desglose
# ============================================

import enum
from dataclasses import dataclass

import numpy as np

from app.models.mixins import SerializableMixin
from app.utils.exceptions import ConfigurationError, InvalidInputError


class DrivingStyle(str, enum.Enum):
    AGGRESSIVE = 'aggressive'
    NORMAL = 'normal'
    CONSERVATIVE = 'conservative'


@dataclass(frozen=True)
class StyleWeights(SerializableMixin):
    """Pesos de nivel superior: seguridad, confort y eficiencia"""
    ks: float
    kc: float
    ke: float

    def __post_init__(self):
        if min(self.ks, self.kc, self.ke) < 0:
            raise ConfigurationError('Los pesos de estilo deben ser >= 0',
                                     ks=self.ks, kc=self.kc, ke=self.ke)


# Filas publicadas (ks, kc, ke) por estilo
STYLE_TABLE = {
    DrivingStyle.AGGRESSIVE: StyleWeights(0.4, 0.5, 0.1),
    DrivingStyle.NORMAL: StyleWeights(0.3, 0.3, 0.4),
    DrivingStyle.CONSERVATIVE: StyleWeights(0.1, 0.4, 0.5),
}


@dataclass(frozen=True)
class PayoffWeights(SerializableMixin):
    """
    Pesos internos de los términos de pago

    d_far es la distancia de la convención de oponente ausente.
    """
    kv_log: float = 1.0
    ks_log: float = 0.05
    kv_lat: float = 1.0
    ks_lat: float = 0.05
    ky_lk: float = 0.5
    kphi_lk: float = 0.5
    kax: float = 1.0
    kay: float = 1.0
    ke_inner: float = 10.0
    epsilon: float = 0.01
    vx_max: float = 30.0
    d_far: float = 50.0

    def __post_init__(self):
        values = self.to_dict()
        if any(v < 0 or not np.isfinite(v) for v in values.values()):
            raise ConfigurationError('Los pesos de pago deben ser finitos y >= 0')
        if self.epsilon <= 0:
            raise ConfigurationError('epsilon debe ser positivo', epsilon=self.epsilon)

    @property
    def neutral_longitudinal(self):
        return self.kv_log + self.ks_log * self.d_far ** 2

    @property
    def neutral_lateral(self):
        return self.kv_lat + self.ks_lat * self.d_far ** 2


@dataclass(frozen=True)
class Behavior(SerializableMixin):
    """Comportamientos discretos: alpha (incorporación), beta (cambio de carril)"""
    alpha: int = 0
    beta: int = 0

    def __post_init__(self):
        if self.alpha not in (-1, 0, 1) or self.beta not in (-1, 0, 1):
            raise InvalidInputError('alpha y beta deben estar en {-1, 0, 1}',
                                    alpha=self.alpha, beta=self.beta)

    def validate_for(self, stage):
        from app.models.roundabout import Stage
        if stage == Stage.ENTERING and self.beta != 0:
            raise InvalidInputError('En la etapa de entrada beta debe ser 0', beta=self.beta)
        if stage != Stage.ENTERING and self.alpha != 0:
            raise InvalidInputError('Fuera de la entrada alpha debe ser 0', alpha=self.alpha)
        return self

    @property
    def is_keep(self):
        return self.alpha == 0 and self.beta == 0


@dataclass(frozen=True)
class PayoffBreakdown(SerializableMixin):
    """Desglose de pago en un paso de predicción"""
    p_s_log: float
    p_s_lat: float
    p_s_lk: float
    p_s: float
    p_c: float
    p_e: float
    total: float
