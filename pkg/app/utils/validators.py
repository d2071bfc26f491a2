# ============================================
# VALIDADORES PERSONALIZADOS
# ============================================
# Validadores reutilizables para documentos de escenario

import math

from app.utils.exceptions import ScenarioError


class FiniteNumber:
    """
    Valida que un valor sea un número finito y lo retorna como float

    Uso:
        vx = FiniteNumber()(raw['vx'], 'agents[0].vx')
    """

    def __init__(self, message=None):
        if not message:
            message = 'El valor debe ser un número finito'
        self.message = message

    def __call__(self, value, field=None):
        if isinstance(value, bool):
            raise ScenarioError(self.message, field=field)
        try:
            number = float(value)
        except (ValueError, TypeError):
            raise ScenarioError('Valor numérico inválido', field=field)
        if not math.isfinite(number):
            raise ScenarioError(self.message, field=field)
        return number


class PositiveNumber(FiniteNumber):
    """Valida que un número sea positivo (mayor a 0)"""

    def __init__(self, message=None):
        super().__init__(message or 'El valor debe ser mayor a 0')

    def __call__(self, value, field=None):
        number = super().__call__(value, field)
        if number <= 0:
            raise ScenarioError(self.message, field=field)
        return number


class PositiveOrZero(FiniteNumber):
    """
    Valida que un número sea positivo o cero (>= 0)

    Útil para pesos de pago, velocidades iniciales, etc.
    """

    def __init__(self, message=None):
        super().__init__(message or 'El valor debe ser mayor o igual a 0')

    def __call__(self, value, field=None):
        number = super().__call__(value, field)
        if number < 0:
            raise ScenarioError(self.message, field=field)
        return number


class PositiveInteger:
    """Valida un entero mayor o igual a `minimum`"""

    def __init__(self, minimum=1, message=None):
        self.minimum = minimum
        self.message = message or f'El valor debe ser un entero >= {minimum}'

    def __call__(self, value, field=None):
        if isinstance(value, bool) or not isinstance(value, int) or value < self.minimum:
            raise ScenarioError(self.message, field=field)
        return value


class OneOf:
    """
    Valida que el valor pertenezca a un conjunto de opciones

    Uso:
        OneOf(['sg', 'gc'])(raw['solver'], 'solver')
    """

    def __init__(self, choices, message=None):
        self.choices = tuple(choices)
        self.message = message or f'Valor no permitido. Opciones: {", ".join(map(str, self.choices))}'

    def __call__(self, value, field=None):
        if value not in self.choices:
            raise ScenarioError(f'{self.message} (recibido: {value!r})', field=field)
        return value
