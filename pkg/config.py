import os

from dotenv import load_dotenv

basedir = os.path.abspath(os.path.dirname(__file__))

# Variables locales (.env en la raíz del repositorio)
load_dotenv(os.path.join(basedir, '.env'))


class Config:
    # SALIDAS
    OUTPUT_DIR = os.environ.get('ROUNDABOUT_OUTPUT_DIR') or os.path.join(basedir, 'output')

    # ESCENARIOS
    SCENARIO_DIR = os.path.join(basedir, 'app', 'scenarios')
    SCENARIO_SCHEMA_VERSION = 1
    DEFAULT_SOLVER = 'sg'

    # EXPORTACIÓN
    EXPORT_SIGNIFICANT_DIGITS = 9

    # LOGGING
    LOG_DIR = os.environ.get('ROUNDABOUT_LOG_DIR') or os.path.join(basedir, 'logs')
    LOG_FILE = 'roundabout.log'
    LOG_MAX_BYTES = 10240000
    LOG_BACKUP_COUNT = 10
    LOG_LEVEL = os.environ.get('ROUNDABOUT_LOG_LEVEL', 'INFO')


class DevelopmentConfig(Config):
    DEBUG = True
    TESTING = False


class ProductionConfig(Config):
    DEBUG = False
    TESTING = False


class TestingConfig(Config):
    TESTING = True
    # En testing las salidas van a un tmp_path de pytest
    OUTPUT_DIR = None


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
