# ============================================
# PRUEBAS - Escenarios, geometría, localización y roles
# ============================================

from dataclasses import replace

import numpy as np
import pytest
import yaml

from app.models.lane import LaneKind
from app.models.payoff import DrivingStyle
from app.models.roundabout import PORTS, Role, Stage
from app.models.vehicle import VehicleState
from app.services.geometry_service import build_map
from app.services.role_service import RoleService
from app.services.scenario_service import ScenarioService
from app.services.simulation_service import SimulationService
from app.utils.exceptions import (
    ConfigurationError, LocalizationError, ProjectionError, ScenarioError
)
from app.utils.units import parse_angle, parse_seconds, wrap_angle

BUNDLED = ['case1_A', 'case1_B', 'case1_C', 'case2_A', 'case2_B', 'case2_C', 'case3']


def _contexts(config):
    rmap = build_map(config.geometry)
    agents = ScenarioService.initial_agents(config)
    return SimulationService.build_contexts(agents, config, rmap), rmap


# ===== Unidades =====

def test_unit_suffixes():
    assert parse_angle('2deg') == pytest.approx(np.radians(2))
    assert parse_angle('0.5rad') == 0.5
    assert parse_angle(1.25) == 1.25
    assert parse_seconds('100ms') == pytest.approx(0.1)
    assert parse_seconds('0.1s') == pytest.approx(0.1)
    with pytest.raises(ValueError):
        parse_seconds('3 furlongs')


def test_wrap_angle_half_open_interval():
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(np.pi) == pytest.approx(np.pi)


# ===== Carga =====

@pytest.mark.parametrize('name', BUNDLED)
def test_bundled_scenarios_load(load_bundled, name):
    config = load_bundled(name)
    assert config.name == name
    assert config.horizon.Np == 10 and config.horizon.Nc == 2
    assert config.bounds.ddelta_max == pytest.approx(np.radians(3))


def test_case1_initial_layout(load_bundled):
    config = load_bundled('case1_A')
    assert [a.id for a in config.agents] == ['HV', 'NV1', 'NV2', 'NV3', 'LV1', 'LV2']
    assert [a.vx for a in config.agents] == [5.5, 4.0, 5.0, 4.0, 8.0, 8.0]
    assert config.agent('NV1').style == DrivingStyle.CONSERVATIVE


def test_case2_loads_five_agents(load_bundled):
    config = load_bundled('case2_A')
    assert len(config.agents) == 5
    assert (config.agent('HV').X, config.agent('HV').Y) == (15.0, -11.66)


def test_published_style_rows_are_loaded(load_bundled):
    weights = load_bundled('case1_A').style_weights
    assert weights[DrivingStyle.AGGRESSIVE].to_dict() == {'ks': 0.4, 'kc': 0.5, 'ke': 0.1}
    assert weights[DrivingStyle.NORMAL].to_dict() == {'ks': 0.3, 'kc': 0.3, 'ke': 0.4}
    assert weights[DrivingStyle.CONSERVATIVE].to_dict() == {'ks': 0.1, 'kc': 0.4, 'ke': 0.5}


def test_resolved_document_reloads_identically(load_bundled):
    config = load_bundled('case3')
    text = yaml.safe_dump(ScenarioService.to_document(config), sort_keys=False)
    assert ScenarioService.load_scenario(text) == config


def test_rejects_unknown_schema_version(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 2
            agents: []
        """)
    assert excinfo.value.field == 'schema_version'


def test_reports_yaml_syntax_line(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("schema_version: 1\nagents:\n  - {id: HV, position: [1, 2\n")
    assert excinfo.value.line is not None


def test_requires_agents(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
        """)
    assert excinfo.value.field == 'agents'


def test_rejects_invalid_field_with_path(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
            bounds:
              dax_max: -1
            agents:
              - {id: HV, position: [-25.0, -2.45], vx: 5.5, route: {entry: A, exit: B}}
        """)
    assert excinfo.value.field == 'bounds.dax_max'
    assert excinfo.value.line == 5


def test_rejects_duplicate_ids(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
            agents:
              - {id: HV, position: [-25.0, -2.45], vx: 5.5, route: {entry: A, exit: B}}
              - {id: HV, position: [-40.0, -2.45], vx: 5.5, route: {entry: A, exit: B}}
        """)
    assert excinfo.value.agent_id == 'HV'


def test_rejects_colliding_initial_positions(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
            agents:
              - {id: A1, position: [-25.0, -2.45], vx: 5.5, route: {entry: A, exit: B}}
              - {id: A2, position: [-25.0, -2.45], vx: 4.0, route: {entry: A, exit: B}}
        """)
    assert excinfo.value.agent_id == 'A2'


def test_rejects_agent_off_network(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
            agents:
              - {id: LOST, position: [0.0, 0.0], vx: 5.0, route: {exit: B}}
        """)
    assert excinfo.value.agent_id == 'LOST'


def test_missing_scenario_names_path(scenario_dir):
    with pytest.raises(ScenarioError) as excinfo:
        ScenarioService.resolve_path('does_not_exist', scenario_dir)
    assert 'does_not_exist' in str(excinfo.value)


def test_overrides(load_bundled):
    config = load_bundled('case1_A')
    changed = ScenarioService.with_overrides(config, solver='gc', Np=6, Nc=1, dt='50ms', grid=3,
                                             duration='2s', seed=7)
    assert changed.solver == 'gc'
    assert (changed.horizon.Np, changed.horizon.Nc) == (6, 1)
    assert changed.horizon.dt == pytest.approx(0.05)
    assert (changed.grid.levels_ax, changed.grid.levels_delta) == (3, 3)
    assert changed.duration == pytest.approx(2.0)
    assert changed.seed == 7
    assert changed.agents == config.agents


def test_overrides_reject_invalid_horizon(load_bundled):
    with pytest.raises(ConfigurationError):
        ScenarioService.with_overrides(load_bundled('case1_A'), Np=2, Nc=2)
    with pytest.raises(ConfigurationError):
        ScenarioService.with_overrides(load_bundled('case1_A'), grid=1)


# ===== Geometría y proyección =====

def test_entry_connector_ends_on_its_ring(default_map):
    for ring, radius in (('inner', 15.0), ('outer', 19.0)):
        lane = default_map.lane(f'A_in_0_{ring}')
        X, Y, _ = lane.pose_at(lane.length)
        assert np.hypot(X, Y) == pytest.approx(radius, abs=1e-9)


def test_exit_lane_leaves_from_outer_ring(default_map):
    lane = default_map.lane('B_out_1')
    X, Y, _ = lane.pose_at(0.0)
    assert np.hypot(X, Y) == pytest.approx(19.0, abs=1e-9)
    assert lane.kind == LaneKind.EXIT


def test_projection_on_centerline(default_map):
    lane = default_map.lane('A_in_0')
    dy, dphi, s = lane.project(-50.0, -2.45, 0.0)
    assert dy == pytest.approx(0.0, abs=1e-12)
    assert dphi == pytest.approx(0.0, abs=1e-12)
    assert s == pytest.approx(50.0)


def test_projection_left_positive(default_map):
    dy, dphi, _ = default_map.lane('A_in_0').project(-50.0, -1.45, 0.0)
    assert dy == pytest.approx(1.0)
    assert dphi == pytest.approx(0.0, abs=1e-12)


def test_projection_on_ring_matches_circle(default_map):
    ring = default_map.ring('inner')
    for theta in np.linspace(-3.0, 3.0, 13):
        X, Y = 15.0 * np.cos(theta), 15.0 * np.sin(theta)
        dy, dphi, s = ring.project(X, Y, theta + np.pi / 2)
        assert dy == pytest.approx(0.0, abs=1e-9)
        assert dphi == pytest.approx(0.0, abs=1e-9)
        assert s == pytest.approx(15.0 * np.mod(theta, 2 * np.pi))


def test_projection_round_trip_on_every_lane(default_map):
    """Punto desplazado d a la izquierda de la estación s se proyecta en (s, d)"""
    for lane_id in sorted(default_map.lanes):
        lane = default_map.lane(lane_id)
        for fraction in (0.15, 0.5, 0.85):
            s = fraction * lane.length
            X, Y, heading = lane.pose_at(s)
            for offset in (-1.0, 0.0, 1.0):
                point = [X - offset * np.sin(heading), Y + offset * np.cos(heading)]
                s_back, dy, _ = lane.project_many([point])
                assert s_back[0] == pytest.approx(s, abs=1e-8), lane_id
                assert dy[0] == pytest.approx(offset, abs=1e-8), lane_id


SYMMETRIC_LANES = ('{}_in_0', '{}_in_1', '{}_in_0_inner', '{}_in_1_outer', '{}_out_0', '{}_out_1')


@pytest.mark.parametrize('port', PORTS[1:])
def test_ports_are_rotated_copies(default_map, port):
    g = default_map.geometry
    angle = g.port_angle(port) - g.port_angle('A')
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    for template in SYMMETRIC_LANES:
        reference = default_map.lane(template.format('A'))
        lane = default_map.lane(template.format(port))
        assert lane.length == pytest.approx(reference.length, abs=1e-9)
        s = np.linspace(0.0, lane.length, 25)
        assert np.allclose(lane.point_at(s), reference.point_at(s) @ rotation.T, atol=1e-9)
        for key, value in reference.stations.items():
            if 'angle' in key or key.startswith('zone') or key == 'ring_s':
                continue
            assert lane.stations[key] == pytest.approx(value, abs=0.05), (lane.id, key)


def test_reference_pose_outside_capture(default_map):
    with pytest.raises(ProjectionError):
        ScenarioService.reference_pose((-50.0, 20.0, 0.0), default_map.lane('A_in_0'))


def test_localize_prefers_inbound_lane(default_map):
    found = ScenarioService.localize(VehicleState(5, 0, -25.0, -2.45), default_map,
                                     ['A_in_0', 'A_in_0_inner', 'A_in_0_outer'])
    assert found.lane.id == 'A_in_0'


def test_localize_off_network(default_map):
    with pytest.raises(LocalizationError):
        ScenarioService.localize(VehicleState(5, 0, 0.0, 0.0), default_map, ['A_in_0'])


def test_localize_rejects_straight_extension(default_map):
    lane = default_map.lane('A_in_0')
    _, _, s = lane.project(-130.0, -2.45, 0.0)
    assert s == pytest.approx(-30.0)
    assert not lane.covers(s, margin=7.26)
    with pytest.raises(LocalizationError):
        ScenarioService.localize(VehicleState(5, 0, -130.0, -2.45), default_map, ['A_in_0'])


def test_localize_accepts_small_overshoot(default_map):
    lane = default_map.lane('A_in_0')
    X_end, Y_end, _ = lane.pose_at(lane.length)
    found = ScenarioService.localize(VehicleState(5, 0, X_end + 0.5, Y_end), default_map,
                                     ['A_in_0'])
    assert found.dy == pytest.approx(0.0, abs=1e-9)
    assert default_map.ring('inner').covers(1e6)


def test_classify_stage_rejects_agent_past_lane_end(load_text, single_agent_yaml):
    from dataclasses import replace
    config = load_text(single_agent_yaml)
    rmap = build_map(config.geometry)
    agent = ScenarioService.initial_agents(config)['EV']
    lost = replace(agent, state=VehicleState(5.0, 0.0, -130.0, agent.state.Y))
    with pytest.raises(LocalizationError):
        ScenarioService.classify_stage(lost, rmap, config.stages)


# ===== Etapas y roles =====

def test_case1_stages(load_bundled):
    contexts, _ = _contexts(load_bundled('case1_A'))
    assert contexts['HV'].stage == Stage.ENTERING
    assert contexts['NV1'].stage == Stage.ENTERING
    assert contexts['NV3'].stage != Stage.ENTERING


def test_ring_vehicle_near_exit_is_exiting(load_text):
    config = load_text("""
        schema_version: 1
        extends: baseline
        agents:
          - {id: EV, position: [-15.0, 0.0], vx: 5.0, route: {exit: B}}
          - {id: PV, position: [15.0, 0.0], vx: 5.0, route: {exit: B}}
    """)
    contexts, _ = _contexts(config)
    # B (sur) está a 90° antihorarios de A (oeste) sobre el anillo
    assert contexts['EV'].stage == Stage.EXITING
    assert contexts['PV'].stage == Stage.PASSING


STAGE_ORDER = [Stage.ENTERING, Stage.PASSING, Stage.EXITING]


def test_stages_advance_monotonically_along_route(load_text, single_agent_yaml):
    """A → C por el anillo exterior: la etapa nunca retrocede"""
    config = load_text(single_agent_yaml)
    rmap = build_map(config.geometry)
    agent = ScenarioService.initial_agents(config)['EV']
    connector = rmap.lane('A_in_1_outer')
    ring = rmap.ring('outer')
    start = connector.stations['merge_angle']
    sweep = rmap.ccw_arc(start, rmap.branch_angle('C', 1))
    path = [('A_in_1', s) for s in np.linspace(0.0, rmap.lane('A_in_1').length - 0.5, 10)]
    path += [('A_in_1_outer', s) for s in np.linspace(connector.stations['yield'],
                                                        connector.length, 5)]
    path += [('RR_outer', ring.segments[0].radius * np.mod(start + a, 2 * np.pi))
             for a in np.linspace(0.05, sweep - 0.05, 12)]
    path += [('C_out_1', s) for s in np.linspace(0.0, rmap.lane('C_out_1').length, 6)]

    stages = []
    for lane_id, s in path:
        X, Y, heading = rmap.lane(lane_id).pose_at(s)
        placed = replace(agent, state=VehicleState(5.0, heading, X, Y), lane=lane_id,
                         target_lane=lane_id)
        stages.append(ScenarioService.classify_stage(placed, rmap, config.stages))
    order = [STAGE_ORDER.index(stage) for stage in stages]
    assert order == sorted(order)
    assert set(stages) == set(STAGE_ORDER)


def test_case1_roles(load_bundled):
    contexts, rmap = _contexts(load_bundled('case1_A'))
    roles = RoleService.assign_roles(contexts, 'HV', rmap, load_bundled('case1_A').roles)
    assert roles.leader == 'LV1'
    assert roles.slots == {1: 'NV1', 2: 'NV2', 3: 'NV3'}


def test_single_vehicle_has_no_roles(load_text, single_agent_yaml):
    contexts, rmap = _contexts(load_text(single_agent_yaml))
    roles = RoleService.assign_roles(contexts, 'EV', rmap)
    assert roles.leader is None
    assert roles.slots == {}


def test_same_lane_vehicle_ahead_is_leader(load_text):
    config = load_text("""
        schema_version: 1
        extends: baseline
        agents:
          - {id: EGO, position: [-60.0, -2.45], vx: 5.0, route: {entry: A, exit: C}}
          - {id: AHEAD, position: [-50.0, -2.45], vx: 5.0, route: {entry: A, exit: C}}
    """)
    contexts, rmap = _contexts(config)
    roles = RoleService.assign_roles(contexts, 'EGO', rmap, config.roles)
    assert roles.leader == 'AHEAD'
    assert roles.slots == {}


@pytest.mark.parametrize('name', BUNDLED)
def test_roles_partition_the_other_agents(load_bundled, name):
    config = load_bundled(name)
    contexts, rmap = _contexts(config)
    for ego_id in contexts:
        roles = RoleService.assign_roles(contexts, ego_id, rmap, config.roles)
        assert set(roles.roles) == set(contexts)
        by_role = {role: sorted(i for i, r in roles.roles.items() if r == role.value)
                   for role in Role}
        assert by_role[Role.HV] == [ego_id]
        assert by_role[Role.LV] == ([roles.leader] if roles.leader else [])
        assert by_role[Role.NV] == sorted(roles.slots.values())
        assert len(set(roles.slots.values())) == len(roles.slots)
        assert set(roles.slots) <= set(range(1, config.roles.max_nv + 1))
