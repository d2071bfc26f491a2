# ============================================
# DECORADORES PERSONALIZADOS
# ============================================
# Decoradores reutilizables para comandos CLI

import logging
import sys
from functools import wraps

import click

from app.utils.exceptions import RoundaboutError

logger = logging.getLogger(__name__)


def handle_exceptions(f):
    """
    Decorador que captura excepciones del simulador y termina el comando
    con el código de salida documentado

    Uso:
        @app.cli.command('run')
        @handle_exceptions
        def run_command():
            ...
    """

    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except RoundaboutError as e:
            logger.error(f"❌ {e.__class__.__name__}: {e}")
            click.echo(f"❌ Error: {e}", err=True)
            sys.exit(e.exit_code)

    return decorated_function
