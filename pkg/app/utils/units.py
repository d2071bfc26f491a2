# ============================================
# UNIDADES Y ÁNGULOS
# ============================================
# Conversión de valores con sufijo (deg/rad, s/ms) y normalización de ángulos

import math
import re

import numpy as np

_QUANTITY = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Z°]*)\s*$')

ANGLE_UNITS = {'': 1.0, 'rad': 1.0, 'deg': math.pi / 180.0, '°': math.pi / 180.0}
TIME_UNITS = {'': 1.0, 's': 1.0, 'ms': 1e-3}


def wrap_angle(angle):
    """
    Normaliza un ángulo (o arreglo) al intervalo (−π, π]

    Args:
        angle: float o np.ndarray en radianes

    Returns:
        Mismo tipo, normalizado
    """
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _parse_quantity(value, units, kind):
    if isinstance(value, bool):
        raise ValueError(f'{kind} inválido: {value!r}')
    if isinstance(value, (int, float)):
        return float(value)
    match = _QUANTITY.match(str(value))
    if not match:
        raise ValueError(f'{kind} inválido: {value!r}')
    number, unit = match.groups()
    unit = unit.lower() if unit != '°' else unit
    if unit not in units:
        raise ValueError(f'Unidad desconocida para {kind}: {unit!r}')
    return float(number) * units[unit]


def parse_angle(value):
    """Convierte '2deg', '0.5rad', '30°' o un número (radianes) a radianes"""
    return _parse_quantity(value, ANGLE_UNITS, 'ángulo')


def parse_seconds(value):
    """Convierte '0.1', '0.1s' o '100ms' a segundos"""
    return _parse_quantity(value, TIME_UNITS, 'tiempo')
