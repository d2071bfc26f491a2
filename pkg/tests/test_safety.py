# ============================================
# PRUEBAS - Compuertas de cesión y seguridad entre vehículos
# ============================================

from dataclasses import replace

import numpy as np
import pytest

from app.models.constraint import ConstraintBounds, LaneContext, SafetyConfig, SafetyContext
from app.models.payoff import Behavior
from app.models.roundabout import Stage
from app.models.vehicle import VehicleParameters
from app.services.constraint_service import ConstraintService, RELAXATION_LEVELS
from app.services.epoch_service import EpochService
from app.services.geometry_service import build_map
from app.services.kinematics_service import KinematicsService
from app.services.safety_service import SafetyService
from app.services.scenario_service import ScenarioService
from app.services.simulation_service import SimulationService
from app.utils.exceptions import ConfigurationError, ScenarioError

BOUNDS = ConstraintBounds()
PARAMS = VehicleParameters()
DT = 0.1
# Δax_max / dt con las cotas por defecto
JERK = 1.0
DECEL = 4.0


def _contexts(config):
    rmap = build_map(config.geometry)
    agents = ScenarioService.initial_agents(config)
    return SimulationService.build_contexts(agents, config, rmap), rmap


def _ring_point(radius, angle):
    return [round(radius * np.cos(angle), 4), round(radius * np.sin(angle), 4)]


def _scenario(load_text, *agents):
    rows = '\n'.join(f'          - {row}' for row in agents)
    return load_text(f"""
        schema_version: 1
        extends: baseline
        agents:
{rows}
    """)


def _entering(position=(-40.0, -2.45)):
    return (f'{{id: EV, position: [{position[0]}, {position[1]}], vx: 5.0, '
            f'route: {{entry: A, exit: C}}}}')


def _ring_agent(agent_id, ring_radius, angle, vx=5.0, exit='C'):
    X, Y = _ring_point(ring_radius, angle)
    return f'{{id: {agent_id}, position: [{X}, {Y}], vx: {vx}, route: {{exit: {exit}}}}}'


# ===== Distancia de detención y headway =====

def test_stopping_distance_within_jerk_ramp():
    """A 5 m/s se detiene antes de llegar a la deceleración sostenida"""
    distance = ConstraintService.stopping_distance(5.0, 0.0, JERK, DECEL)
    assert distance == pytest.approx(np.sqrt(10.0) * 10.0 / 3.0)


def test_stopping_distance_with_sustained_deceleration():
    """Rampa de 4 s hasta −4 m/s² y después v²/(2·decel)"""
    distance = ConstraintService.stopping_distance(20.0, 0.0, JERK, DECEL)
    assert distance == pytest.approx(80.0 - 64.0 / 6.0 + 144.0 / 8.0)


def test_stopping_distance_keeps_harder_braking():
    distance = ConstraintService.stopping_distance(10.0, -6.0, JERK, DECEL)
    assert distance == pytest.approx(100.0 / 12.0)


def test_stopping_distance_at_standstill():
    assert ConstraintService.stopping_distance(0.0, 0.0, JERK, DECEL) == 0.0
    distances = ConstraintService.stopping_distance(np.array([0.0, 5.0]), 0.0, JERK, DECEL)
    assert distances.shape == (2,)


def test_headway_shortfall():
    safety = SafetyContext(jerk=JERK, decel=DECEL, dt=DT, headway_base=5.0)
    moving = ConstraintService.headway_shortfall(5.0, 0.0, (0.0, 0.0), 5.0, 0.0, (20.0, 0.0),
                                                 safety)
    stopped = ConstraintService.headway_shortfall(5.0, 0.0, (0.0, 0.0), 0.0, 0.0, (12.0, 0.0),
                                                  safety)
    assert moving == pytest.approx(-14.5)
    assert stopped == pytest.approx(5.5 + np.sqrt(10.0) * 10.0 / 3.0 - 12.0)


# ===== Restricciones de seguridad =====

def _two_candidates(Np=3):
    """Candidato 0 detenido en el origen; candidato 1 a 5 m/s sobre +X"""
    outputs = np.zeros((2, Np, 4))
    outputs[1, :, 0] = 5.0
    outputs[1, :, 2] = 5.0 * DT * np.arange(1, Np + 1)
    return outputs, np.zeros((2, Np, 2))


def _stopped_leader(X, Np=3):
    leader = np.zeros((Np, 4))
    leader[:, 2] = X
    return leader


def test_headway_rejects_candidate_closing_on_stopped_leader():
    outputs, controls = _two_candidates()
    safety = SafetyContext(jerk=JERK, decel=DECEL, dt=DT, headway_base=5.0,
                           leader=_stopped_leader(12.0), headway_now=-1.0)
    checks = ConstraintService.safety_checks(outputs, controls, safety)
    assert [name for name, _, _ in checks] == ['headway']
    assert ConstraintService.feasible_mask(checks).tolist() == [True, False]


def test_headway_measured_against_current_shortfall():
    """Un candidato que no empeora la holgura faltante actual sigue siendo factible"""
    outputs, controls = _two_candidates()
    safety = SafetyContext(jerk=JERK, decel=DECEL, dt=DT, headway_base=5.0,
                           leader=_stopped_leader(12.0), headway_now=6.0)
    checks = ConstraintService.safety_checks(outputs, controls, safety)
    assert ConstraintService.feasible_mask(checks).tolist() == [True, True]


def test_separation_against_vehicle_ahead():
    outputs, controls = _two_candidates()
    safety = SafetyContext(jerk=JERK, decel=DECEL, dt=DT, others=(_stopped_leader(3.0),),
                           separation_base=(2.75,), separation_now=(-0.25,))
    checks = ConstraintService.safety_checks(outputs, controls, safety)
    assert [name for name, _, _ in checks] == ['separation']
    assert ConstraintService.feasible_mask(checks).tolist() == [True, False]
    assert checks[0][1][1, -1] == pytest.approx(1.25)


def test_no_safety_checks_without_other_vehicles():
    outputs, controls = _two_candidates()
    assert ConstraintService.safety_checks(outputs, controls,
                                           SafetyContext(jerk=JERK, decel=DECEL, dt=DT)) == []


# ===== Fin de carril con detención y compuerta =====

@pytest.fixture
def lane(default_map):
    return default_map.lane('A_in_0')


def _straight(Np=10, vx=5.0):
    outputs = np.zeros((Np, 4))
    outputs[:, 0] = vx
    outputs[:, 2] = -80.0 + vx * DT * np.arange(1, Np + 1)
    outputs[:, 3] = -2.45
    return outputs


def _check(lane, **kwargs):
    context = LaneContext(source=lane, target=lane, nominal_speed=5.0,
                          start_position=(-80.0, -2.45), **kwargs)
    return ConstraintService.check(_straight(), np.zeros((10, 2)), np.zeros((2, 2)), BOUNDS,
                                   context, PARAMS, DT)


def test_lane_end_requires_room_to_stop(lane):
    """A 11 m de la estación no la alcanza en el horizonte pero no puede detenerse antes"""
    assert _check(lane, stop_station=31.0).feasible
    report = _check(lane, stop_station=31.0, braking=(JERK, DECEL))
    lane_end = [v for v in report.violations if v.name == 'lane_end']
    assert lane_end[0].step == 1


def test_blocked_target_fails_gate(lane):
    report = _check(lane, blocked=True)
    assert [(v.name, v.value, v.step) for v in report.violations] == [('gate', 1.0, 1)]


def test_skipped_constraints_are_not_reported(lane):
    outputs = _straight()
    outputs[:, 3] += 0.5
    context = LaneContext(source=lane, target=lane, nominal_speed=5.0,
                          start_position=(-80.0, -2.45))
    report = ConstraintService.check(outputs, np.zeros((10, 2)), np.zeros((2, 2)), BOUNDS,
                                     context, PARAMS, DT, skip=('dy', 'dphi'))
    assert report.feasible


def test_relaxation_masks_drop_tracking_terms(lane):
    offset = _straight()
    offset[:, 3] += 0.5
    context = LaneContext(source=lane, target=lane, nominal_speed=5.0,
                          start_position=(-80.0, -2.45))
    checks = ConstraintService.evaluate(np.stack([_straight(), offset]), np.zeros((2, 10, 2)),
                                        np.zeros((2, 2, 2)), BOUNDS, context, PARAMS, DT)
    masks = ConstraintService.relaxation_masks(checks)
    assert masks.shape == (len(RELAXATION_LEVELS), 2)
    assert masks.tolist() == [[True, False], [True, True], [True, True]]


# ===== Predicción detenida =====

def test_hold_at_standstill_freezes_pose():
    outputs = np.array([[[1.0, 0.1, 1.0, 0.0],
                         [0.5, 0.2, 2.0, 0.0],
                         [-0.2, 0.3, 3.0, 0.0],
                         [0.4, 0.4, 4.0, 0.0]]])
    held = KinematicsService.hold_at_standstill(outputs, np.zeros(6))
    assert held[0, :, 0].tolist() == [1.0, 0.5, 0.0, 0.0]
    assert held[0, 2, 1:].tolist() == [0.2, 2.0, 0.0]
    assert held[0, 3, 1:].tolist() == [0.2, 2.0, 0.0]
    assert outputs[0, 2, 0] == -0.2


def test_hold_at_standstill_on_first_step_uses_current_pose():
    outputs = np.array([[[-0.1, 0.5, 9.0, 9.0], [-0.3, 0.5, 8.0, 8.0]]])
    xi0 = np.array([0.0, 0.7, 1.0, 2.0, 0.0, 0.0])
    held = KinematicsService.hold_at_standstill(outputs, xi0)
    assert held[0].tolist() == [[0.0, 0.7, 1.0, 2.0], [0.0, 0.7, 1.0, 2.0]]


# ===== Red: estaciones de cesión =====

@pytest.mark.parametrize('ring', ['inner', 'outer'])
def test_yield_station_before_merge(default_map, ring):
    connector = default_map.entry('A', 0, ring)
    station = connector.stations['yield']
    assert 0.0 < station < connector.stations['merge']
    X, Y, _ = connector.pose_at(station)
    assert np.hypot(X, Y) == pytest.approx(default_map.geometry.yield_radius, abs=0.05)


def test_conflict_zones_per_crossed_ring(default_map):
    outer = default_map.entry('A', 0, 'outer')
    inner = default_map.entry('A', 0, 'inner')
    assert 'zone_outer' in outer.stations and 'zone_inner' not in outer.stations
    assert {'zone_outer', 'zone_inner'} <= set(inner.stations)
    # el conector interior cruza la banda exterior antes que la suya
    assert default_map.ccw_arc(inner.stations['zone_outer'], inner.stations['zone_inner']) < np.pi


def test_behavior_target_keeps_committed_merge(default_map):
    merge = Behavior(1, 0)
    assert default_map.behavior_target('A_in_0', 10.0, 'A_in_0', True, merge) == 'A_in_0_outer'
    assert default_map.behavior_target('A_in_0', 70.0, 'A_in_0_outer', True, merge) is None
    assert default_map.behavior_target('A_in_0', 70.0, 'A_in_0_outer', True,
                                       Behavior(-1, 0)) is None


def test_behavior_target_waits_for_ring_change(default_map):
    change = Behavior(0, 1)
    assert default_map.behavior_target('RR_inner', 5.0, 'RR_inner', False, change) == 'RR_outer'
    assert default_map.behavior_target('RR_inner', 5.0, 'RR_outer', False, change, dy=1.5) is None


# ===== Compuerta de incorporación =====

def test_ring_vehicle_upstream_closes_yield(load_text):
    config = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 2.9))
    contexts, rmap = _contexts(config)
    assert contexts['EV'].stage == Stage.ENTERING
    gates = SafetyService.gates(contexts['EV'], contexts, rmap, config)
    assert gates.closed
    assert set(gates.stops) == {'A_in_0_inner', 'A_in_0_outer'}
    for connector_id, station in gates.stops.items():
        assert station == pytest.approx(rmap.lane(connector_id).stations['yield'])


def test_clear_ring_leaves_yield_open(load_text):
    config = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 0.5))
    contexts, rmap = _contexts(config)
    assert SafetyService.gates(contexts['EV'], contexts, rmap, config).stops == {}


def test_vehicle_leaving_before_conflict_zone_does_not_block(load_text):
    """Un vehículo que sale por A antes de la zona de conflicto no cierra la compuerta"""
    through = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 2.3, exit='C'))
    leaving = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 2.3, exit='A'))
    contexts, rmap = _contexts(through)
    assert SafetyService.gates(contexts['EV'], contexts, rmap, through).stops
    contexts, rmap = _contexts(leaving)
    assert SafetyService.gates(contexts['EV'], contexts, rmap, leaving).stops == {}


def test_vehicle_unable_to_stop_before_yield_keeps_going(load_text):
    config = _scenario(load_text, _entering((-26.0, -2.45)), _ring_agent('RV', 19.0, 2.9))
    contexts, rmap = _contexts(config)
    assert SafetyService.gates(contexts['EV'], contexts, rmap, config).stops == {}


def test_disabled_safety_opens_every_gate(load_text):
    config = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 2.9))
    config = replace(config, safety=SafetyConfig(enabled=False))
    contexts, rmap = _contexts(config)
    assert not SafetyService.gates(contexts['EV'], contexts, rmap, config).closed


def test_closed_yield_reaches_candidate_model(load_text):
    config = _scenario(load_text, _entering(), _ring_agent('RV', 19.0, 2.9))
    contexts, rmap = _contexts(config)
    models = EpochService.prepare_step(contexts, config, rmap)
    model = models['EV']
    assert model.gates.closed
    assert model.feasible.any()


# ===== Compuerta de cambio de carril =====

def test_vehicle_alongside_blocks_ring_change(load_text):
    config = _scenario(load_text, _ring_agent('EV', 15.0, np.pi / 4, exit='B'),
                       _ring_agent('RV', 19.0, np.pi / 4 + 0.3, exit='B'))
    contexts, rmap = _contexts(config)
    assert contexts['EV'].stage == Stage.PASSING
    assert SafetyService.lane_change_blocked(contexts['EV'], rmap.ring('outer'), contexts, rmap,
                                             config.safety)
    gates = SafetyService.gates(contexts['EV'], contexts, rmap, config)
    assert gates.blocked == frozenset({'RR_outer'})


@pytest.mark.parametrize('vx,blocked', [(5.0, False), (10.0, True)])
def test_faster_vehicle_behind_blocks_ring_change(load_text, vx, blocked):
    """17.1 m detrás: libre a igual velocidad, bloqueado si se acerca a 5 m/s"""
    config = _scenario(load_text, _ring_agent('EV', 15.0, np.pi / 4, exit='B'),
                       _ring_agent('RV', 19.0, np.pi / 4 - 0.9, vx=vx, exit='B'))
    contexts, rmap = _contexts(config)
    assert SafetyService.lane_change_blocked(contexts['EV'], rmap.ring('outer'), contexts, rmap,
                                             config.safety) is blocked


# ===== Contexto de seguridad y relajación =====

def test_safety_context_uses_leader_prediction(load_text):
    config = _scenario(load_text,
                       '{id: EGO, position: [-60.0, -2.45], vx: 5.0, route: {entry: A, exit: C}}',
                       '{id: AHEAD, position: [-50.0, -2.45], vx: 5.0, route: {entry: A, exit: C}}')
    contexts, rmap = _contexts(config)
    models = EpochService.prepare_step(contexts, config, rmap)
    safety = models['EGO'].safety
    assert safety.leader is models['AHEAD'].constant_outputs
    assert safety.headway_base == pytest.approx(3.5)
    # 3.5 + vx·dt − 10 m, misma distancia de detención
    assert safety.headway_now == pytest.approx(-6.0)
    assert safety.others == ()
    # el vehículo de atrás no cuenta para quien va delante
    assert models['AHEAD'].safety.others == ()


@pytest.fixture
def case1(load_bundled):
    config = load_bundled('case1_A')
    contexts, rmap = _contexts(config)
    return config, EpochService.prepare_step(contexts, config, rmap)


def test_relaxation_uses_first_level_with_candidates(case1):
    config, models = case1
    config = replace(config, safety=SafetyConfig(enabled=False))
    model = models['HV']
    K = len(model.candidates)
    partial = np.arange(K) % 2 == 0
    model.tiers = np.stack([np.zeros(K, dtype=bool), partial, np.ones(K, dtype=bool)])
    EpochService.attach_safety(models, config)
    assert model.feasible.tolist() == partial.tolist()
    assert model.relaxed == ('dy', 'dphi')
    assert model.extra['infeasible'] == K - int(partial.sum())


def test_safety_is_never_relaxed(case1, monkeypatch):
    config, models = case1
    model = models['HV']
    K = len(model.candidates)
    model.tiers = np.ones((len(RELAXATION_LEVELS), K), dtype=bool)
    monkeypatch.setattr(ConstraintService, 'safety_checks',
                        lambda outputs, controls, safety: [
                            ('headway', np.ones((outputs.shape[0], 1)), 0.0)])
    EpochService.attach_safety(models, config)
    assert not model.feasible.any()
    assert model.relaxed == RELAXATION_LEVELS[-1]


# ===== Configuración =====

def test_safety_config_validation():
    with pytest.raises(ConfigurationError):
        SafetyConfig(brake_decel=0.0)
    with pytest.raises(ConfigurationError):
        SafetyConfig(gap_time=-1.0)
    assert SafetyConfig(brake_decel=12.0).braking(BOUNDS, DT) == (pytest.approx(1.0), 8.0)


def test_safety_section_is_loaded(load_text):
    config = load_text("""
        schema_version: 1
        extends: baseline
        safety:
          gap_time: 2s
          clear_distance: 8.0
        agents:
          - {id: EV, position: [-80.0, -6.08], vx: 5.0, route: {entry: A, exit: C}}
    """)
    assert config.safety.gap_time == 2.0
    assert config.safety.clear_distance == 8.0
    assert config.safety.headway_margin == 1.0
    assert ScenarioService.to_document(config)['safety']['gap_time'] == 2.0


def test_safety_section_rejects_negative_margin(load_text):
    with pytest.raises(ScenarioError) as excinfo:
        load_text("""
            schema_version: 1
            extends: baseline
            safety:
              headway_margin: -1
            agents:
              - {id: EV, position: [-80.0, -6.08], vx: 5.0, route: {entry: A, exit: C}}
        """)
    assert excinfo.value.field == 'safety.headway_margin'
