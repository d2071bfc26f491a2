# ============================================
# MIXINS - Funcionalidad Reutilizable
# ============================================
# Estos mixins se pueden usar en cualquier dataclass del dominio

import dataclasses
import enum

import numpy as np


def _plain(value):
    """Convierte un valor del dominio a tipos JSON/YAML simples"""
    if isinstance(value, SerializableMixin):
        return value.to_dict()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(_plain(k)): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class SerializableMixin:
    """
    Serialización a diccionario para dataclasses
    Uso: @dataclass class MyModel(SerializableMixin)
    """

    # Campos omitidos en to_dict (p. ej. matrices grandes)
    __serialize_exclude__ = ()

    def to_dict(self):
        """Serializa a diccionario (para JSON/YAML)"""
        return {
            f.name: _plain(getattr(self, f.name))
            for f in dataclasses.fields(self)
            if f.name not in self.__serialize_exclude__
        }


class LabeledMixin:
    """
    __repr__ corto con el identificador del objeto
    Requiere atributo `label` o `id`
    """

    def __repr__(self):
        label = getattr(self, 'label', None) or getattr(self, 'id', '')
        return f'<{self.__class__.__name__} {label}>'
