# ============================================
# INICIALIZACIÓN DE LA APLICACIÓN FLASK
# ============================================

import logging
import os
from logging.handlers import RotatingFileHandler

from flask import Flask


def create_app(config_name='development'):
    """
    Factory pattern para crear la aplicación

    La aplicación solo expone comandos CLI (simulación, comparación y
    validación de escenarios); no registra rutas web.
    """
    from config import config

    app = Flask(__name__)
    app.config.from_object(config[config_name])

    # Configurar logging (solo en producción)
    if not app.debug and not app.testing:
        log_dir = app.config['LOG_DIR']
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)

        file_handler = RotatingFileHandler(
            os.path.join(log_dir, app.config['LOG_FILE']),
            maxBytes=app.config['LOG_MAX_BYTES'],
            backupCount=app.config['LOG_BACKUP_COUNT']
        )

        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'
        ))

        file_handler.setLevel(app.config['LOG_LEVEL'])
        app.logger.addHandler(file_handler)
        app.logger.setLevel(app.config['LOG_LEVEL'])
        app.logger.info('Roundabout startup')

    # Registrar comandos CLI
    from app.cli import register_cli_commands
    register_cli_commands(app)

    return app
