# ============================================
# FIXTURES COMPARTIDAS DE PRUEBAS
# ============================================

import textwrap

import pytest

from app import create_app
from app.services.geometry_service import build_map
from app.services.scenario_service import ScenarioService


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='Corre también las simulaciones completas del corpus')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='usar --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def app():
    return create_app('testing')


@pytest.fixture
def cli_runner(app):
    return app.test_cli_runner()


@pytest.fixture
def scenario_dir(app):
    return app.config['SCENARIO_DIR']


@pytest.fixture
def load_bundled(scenario_dir):
    """Carga un escenario del corpus por nombre"""
    def _load(name):
        path = ScenarioService.resolve_path(name, scenario_dir)
        return ScenarioService.load_file(path, scenario_dir=scenario_dir)
    return _load


@pytest.fixture
def load_text(scenario_dir):
    """Carga un documento YAML escrito en la prueba (puede extender baseline)"""
    def _load(document, name='inline'):
        return ScenarioService.load_scenario(textwrap.dedent(document), default_name=name,
                                             scenario_dir=scenario_dir)
    return _load


@pytest.fixture
def single_agent_yaml():
    return textwrap.dedent("""\
        schema_version: 1
        extends: baseline
        name: solo
        duration: 1s
        agents:
          - {id: EV, position: [-80.0, -6.08], vx: 5.0, style: normal,
             route: {entry: A, exit: C}}
        """)


@pytest.fixture
def default_map():
    from app.models.roundabout import RoundaboutGeometry
    return build_map(RoundaboutGeometry())
