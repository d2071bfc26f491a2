# ============================================
# PRUEBAS - Bucle de simulación, métricas y exportación
# ============================================

import json
from dataclasses import replace

import numpy as np
import pytest

from app.cli import exit_code_for
from app.models.game import DecisionVector
from app.models.simulation import SimulationLog, StepRecord
from app.models.vehicle import ControlInput, VehicleState
from app.services.export_service import ExportService
from app.services.metrics_service import MetricsService
from app.services.scenario_service import ScenarioService
from app.services.simulation_service import SimulationService
from app.utils.exceptions import ExportError, InvalidInputError

PAIR_YAML = """
    schema_version: 1
    extends: baseline
    name: pair
    duration: 1s
    agents:
      - {id: A1, position: [-80.0, -6.08], vx: 5.0, route: {entry: A, exit: C}}
      - {id: A2, position: [-60.0, -6.08], vx: 5.0, route: {entry: A, exit: C}}
"""


def _record(agent, time, vx, ax=0.0, gaps=None, fallback=False):
    return StepRecord(
        time=time, agent=agent, stage='Passing', lane='RR_outer', committed_lane='RR_outer',
        target_lane='RR_outer', state=VehicleState(vx, 0.0, vx * time, 0.0),
        control=ControlInput(ax, 0.0), decision=DecisionVector(), ay=0.0,
        nv_gaps=gaps or {}, fallback=fallback,
    )


def _without_timing(records):
    return [replace(r, solve_time=0.0) for r in records]


@pytest.fixture
def solo(load_text, single_agent_yaml):
    config = load_text(single_agent_yaml)
    return config, SimulationService.run(config)


# ===== Métricas =====

def test_constant_velocity_metrics():
    log = SimulationLog(scenario='synthetic', solver='sg', dt=0.1)
    for k in range(20):
        log.append(_record('A', k * 0.1, 5.0))
    report = MetricsService.metrics(log)
    assert report.velocity_rms('A') == pytest.approx(5.0)
    assert report.agents['A'].max_velocity == 5.0
    assert report.agents['A'].ax_quartiles == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert report.agents['A'].travel_time == pytest.approx(2.0)


def test_system_rms_pools_samples():
    log = SimulationLog(scenario='synthetic', solver='sg', dt=0.1)
    for k in range(10):
        log.append(_record('A', k * 0.1, 3.0))
        log.append(_record('B', k * 0.1, 4.0))
    report = MetricsService.metrics(log)
    assert report.system_velocity_rms == pytest.approx(np.sqrt(12.5))
    assert report.system_velocity_rms == pytest.approx(3.5355, abs=1e-4)


def test_quartiles_and_gaps():
    log = SimulationLog(scenario='synthetic', solver='sg', dt=0.1)
    for k, ax in enumerate([-1.0, 0.0, 1.0, 2.0, 3.0]):
        log.append(_record('A', k * 0.1, 5.0, ax=ax, gaps={'B': 10.0 - k}, fallback=k == 2))
    log.completed['A'] = 0.4
    metrics = MetricsService.metrics(log).agents['A']
    assert metrics.ax_quartiles == (-1.0, 0.0, 1.0, 2.0, 3.0)
    assert metrics.min_nv_gap == {'B': 6.0}
    assert metrics.travel_time == 0.4
    assert metrics.completed
    assert metrics.fallback_count == 1


def test_empty_agent_metrics_are_nan():
    assert all(np.isnan(v) for v in MetricsService.quartiles([]))
    assert np.isnan(MetricsService.rms([]))


# ===== Piezas del bucle =====

def test_apply_decision_clips_to_actuator_limits(load_text, single_agent_yaml):
    config = load_text(single_agent_yaml)
    agent = ScenarioService.initial_agents(config)['EV']
    agent = replace(agent, prev_control=ControlInput(7.95, 0.0))
    control, applied = SimulationService.apply_decision(agent, DecisionVector(0.1, 0.0, 0, 0),
                                                        config.bounds)
    assert control.ax == config.bounds.ax_max
    assert applied.d_ax == pytest.approx(0.05)


def test_apply_decision_rejects_increment_out_of_bounds(load_text, single_agent_yaml):
    config = load_text(single_agent_yaml)
    agent = ScenarioService.initial_agents(config)['EV']
    with pytest.raises(InvalidInputError):
        SimulationService.apply_decision(agent, DecisionVector(0.5, 0.0, 0, 0), config.bounds)
    with pytest.raises(InvalidInputError):
        SimulationService.apply_decision(agent, DecisionVector(0.0, 0.01, 0, 0), config.bounds)


def test_find_collision_uses_collision_diameter(load_text):
    agents = ScenarioService.initial_agents(load_text(PAIR_YAML))
    assert SimulationService.find_collision(agents, 0.0) is None
    moved = dict(agents)
    moved['A2'] = replace(agents['A2'], state=VehicleState(5.0, 0.0, -78.0, -6.08))
    record = SimulationService.find_collision(moved, 0.1)
    assert record.agents == ('A1', 'A2')
    assert record.distance == pytest.approx(2.0)


def test_decision_events_from_committed_lane_changes():
    log = SimulationLog(scenario='synthetic', solver='sg', dt=0.1)
    log.append(replace(_record('HV', 0.0, 5.0), stage='Entering', lane='A_in_0',
                       committed_lane='A_in_0', target_lane='A_in_0_outer',
                       decision=DecisionVector(0.0, 0.0, 1, 0)))
    log.append(replace(_record('HV', 0.1, 5.0), stage='Entering', lane='A_in_0',
                       committed_lane='A_in_0_outer', target_lane='A_in_0_outer',
                       decision=DecisionVector(0.0, 0.0, 1, 0)))
    log.append(replace(_record('HV', 2.0, 5.0), committed_lane='RR_outer',
                       target_lane='RR_inner', decision=DecisionVector(0.0, 0.0, 0, -1)))
    events = SimulationService.decision_events(log)
    assert [(e['event'], e['from_lane'], e['to_lane']) for e in events] == [
        ('merge_outer', 'A_in_0', 'A_in_0_outer'),
        ('lane_change_left', 'RR_outer', 'RR_inner'),
    ]


# ===== Corridas =====

def test_single_agent_run(solo):
    config, log = solo
    assert len(log.records) == 10
    assert log.termination == 'duration'
    assert log.collision is None
    assert not log.fallback_used
    assert exit_code_for(log) == 0


def test_recorded_solve_time_covers_model_construction(solo):
    _, log = solo
    assert all(record.solve_time > 0.0 for record in log.records)


def test_control_continuity(solo):
    """u(k) = u(k−1) + Δu aplicado, sin saltos"""
    config, log = solo
    previous = ScenarioService.initial_agents(config)['EV'].prev_control
    for record in log.records:
        assert record.control.ax == pytest.approx(previous.ax + record.decision.d_ax, abs=1e-12)
        assert record.control.delta_f == pytest.approx(previous.delta_f + record.decision.d_delta_f,
                                                       abs=1e-12)
        assert abs(record.decision.d_ax) <= config.bounds.dax_max + 1e-12
        assert abs(record.decision.d_delta_f) <= config.bounds.ddelta_max + 1e-12
        previous = record.control


def test_no_teleportation(solo):
    config, log = solo
    dt = config.horizon.dt
    limit = config.bounds.vx_max * dt + 0.5 * config.bounds.ax_max * dt ** 2
    records = log.for_agent('EV')
    for before, after in zip(records, records[1:]):
        step = np.hypot(after.state.X - before.state.X, after.state.Y - before.state.Y)
        assert step <= limit


def test_runs_are_deterministic(load_text, single_agent_yaml):
    config = load_text(single_agent_yaml)
    first = SimulationService.run(config)
    second = SimulationService.run(config)
    assert _without_timing(first.records) == _without_timing(second.records)


def test_collision_terminates_run(load_text):
    config = load_text(PAIR_YAML)
    agents = ScenarioService.initial_agents(config)
    agents['A2'] = replace(agents['A2'], state=VehicleState(5.0, 0.0, -78.0, -6.08))
    log = SimulationService.run(config, agents=agents)
    assert log.termination == 'collision'
    assert log.collision.agents == ('A1', 'A2')
    assert exit_code_for(log) == 2


def test_lost_agent_terminates_with_localization(load_text, single_agent_yaml):
    config = load_text(single_agent_yaml)
    agents = ScenarioService.initial_agents(config)
    agents['EV'] = replace(agents['EV'], state=VehicleState(5.0, 0.0, 0.0, 0.0))
    log = SimulationService.run(config, agents=agents)
    assert log.termination == 'localization'
    assert log.records == []
    assert exit_code_for(log) == 5


# ===== Exportación =====

def test_export_writes_all_files(solo, tmp_path):
    _, log = solo
    paths = ExportService.export(log, tmp_path)
    assert paths['agents']['EV'].name == 'solo_sg_EV.csv'
    for key in ('metrics_csv', 'metrics_json', 'events', 'timing'):
        assert paths[key].exists()
    summary = json.loads(paths['metrics_json'].read_text())
    assert 'mean_solve_time' not in summary
    assert summary['run']['termination'] == 'duration'
    header = paths['agents']['EV'].read_text().splitlines()[0]
    assert header.startswith('time,agent,stage,lane,committed_lane,target_lane,vx,phi,X,Y')


def test_export_is_byte_identical(load_text, single_agent_yaml, tmp_path):
    config = load_text(single_agent_yaml)
    first = ExportService.export(SimulationService.run(config), tmp_path / 'a')
    second = ExportService.export(SimulationService.run(config), tmp_path / 'b')
    for key in ('metrics_csv', 'metrics_json', 'events'):
        assert first[key].read_bytes() == second[key].read_bytes()
    assert first['agents']['EV'].read_bytes() == second['agents']['EV'].read_bytes()


def test_reimported_metrics_match(solo, tmp_path):
    _, log = solo
    report = MetricsService.metrics(log)
    ExportService.export(log, tmp_path, report)
    restored = ExportService.reimport(tmp_path, 'solo', 'sg')
    again = MetricsService.metrics(restored)
    assert len(restored.records) == len(log.records)
    assert restored.termination == log.termination
    original, reloaded = report.agents['EV'], again.agents['EV']
    assert reloaded.velocity_rms == pytest.approx(original.velocity_rms, rel=1e-6)
    assert reloaded.max_velocity == pytest.approx(original.max_velocity, rel=1e-6)
    assert np.allclose(reloaded.ax_quartiles, original.ax_quartiles, rtol=1e-6, atol=1e-9)
    assert reloaded.travel_time == pytest.approx(original.travel_time, rel=1e-6)
    assert again.mean_solve_time == pytest.approx(report.mean_solve_time)


def test_reimport_missing_files(tmp_path):
    with pytest.raises(ExportError):
        ExportService.reimport(tmp_path, 'nothing', 'sg')


def test_export_to_unwritable_path(solo, tmp_path):
    _, log = solo
    blocker = tmp_path / 'file'
    blocker.write_text('x')
    with pytest.raises(ExportError) as excinfo:
        ExportService.export(log, blocker / 'out')
    assert 'file' in str(excinfo.value)
