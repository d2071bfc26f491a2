# ============================================
# EXCEPCIONES DEL SIMULADOR
# ============================================
# Jerarquía única de errores. La CLI traduce cada tipo a un código de salida.


class RoundaboutError(Exception):
    """Error base del simulador"""

    exit_code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def __str__(self):
        if not self.context:
            return self.message
        extra = ', '.join(f'{k}={v}' for k, v in self.context.items())
        return f'{self.message} ({extra})'


class InvalidInputError(RoundaboutError, ValueError):
    """Entrada no finita o con forma incorrecta"""


class SteeringDomainError(InvalidInputError):
    """Ángulo de dirección demasiado cercano a ±π/2"""


class ConfigurationError(RoundaboutError):
    """Horizonte, rejilla u overrides inválidos"""

    exit_code = 4


class ScenarioError(ConfigurationError):
    """
    Error al cargar o validar un escenario

    Lleva contexto opcional: line, field, agent_id, path
    """

    def __init__(self, message, line=None, field=None, agent_id=None, path=None):
        super().__init__(message, line=line, field=field, agent_id=agent_id, path=path)
        self.line = line
        self.field = field
        self.agent_id = agent_id
        self.path = path


class ProjectionError(RoundaboutError):
    """Posición fuera del rango de captura del carril"""


class LocalizationError(RoundaboutError):
    """El vehículo no está sobre ningún carril del mapa"""

    exit_code = 5


class ExportError(RoundaboutError):
    """Fallo de E/S al exportar o reimportar resultados"""

    exit_code = 6
