# ============================================
# PUNTO DE ENTRADA DEL SIMULADOR
# ============================================
# Comando: python run.py <comando> [opciones]
#   python run.py run case1_A --solver sg
#   python run.py compare case3
#   python run.py validate case2_B
#   python run.py scenarios

import os

from flask.cli import FlaskGroup

from app import create_app

config_name = os.environ.get('ROUNDABOUT_ENV', 'default')


def _factory():
    return create_app(config_name)


cli = FlaskGroup(create_app=_factory, add_default_commands=False, load_dotenv=False,
                 help='Simulador de decisiones CAV en rotonda de dos carriles')


# Ejecutar
if __name__ == '__main__':
    cli()
