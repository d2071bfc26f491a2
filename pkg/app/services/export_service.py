# ============================================
# EXPORT SERVICE - Exportación y reimportación de corridas
# ============================================
# Responsabilidad: escribir trayectorias por agente, métricas y eventos con
# 9 cifras significativas, y reconstruir un SimulationLog desde esos archivos

import json
import logging
import math
from pathlib import Path

import pandas as pd

from app.models.game import DecisionVector
from app.models.payoff import PayoffBreakdown
from app.models.simulation import CollisionRecord, SimulationLog, StepRecord
from app.models.vehicle import ControlInput, VehicleState
from app.services.metrics_service import MetricsService
from app.services.simulation_service import SimulationService
from app.utils.exceptions import ExportError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.9g'
MAX_SLOTS = 3

PAYOFF_FIELDS = ('p_s_log', 'p_s_lat', 'p_s_lk', 'p_s', 'p_c', 'p_e', 'total')

# Orden de columnas de la trayectoria por agente
TRAJECTORY_COLUMNS = (
    ['time', 'agent', 'stage', 'lane', 'committed_lane', 'target_lane',
     'vx', 'phi', 'X', 'Y', 'ax', 'delta_f', 'd_ax', 'd_delta_f', 'alpha', 'beta', 'ay',
     'leader']
    + [f'nv{slot}{suffix}' for slot in range(1, MAX_SLOTS + 1) for suffix in ('', '_gap')]
    + ['feasible', 'fallback']
    + list(PAYOFF_FIELDS)
)

METRICS_COLUMNS = [
    'agent', 'samples', 'max_velocity', 'velocity_rms',
    'ax_min', 'ax_q1', 'ax_median', 'ax_q3', 'ax_max',
    'ay_min', 'ay_q1', 'ay_median', 'ay_q3', 'ay_max',
    'min_nv_gap', 'travel_time', 'completed', 'fallback_count',
]

QUARTILE_NAMES = ('min', 'q1', 'median', 'q3', 'max')

TEXT_COLUMNS = ['agent', 'stage', 'lane', 'committed_lane', 'target_lane', 'leader'] + \
    [f'nv{slot}' for slot in range(1, MAX_SLOTS + 1)]


def _significant(value):
    """Redondea a 9 cifras significativas (None para NaN/inf)"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(FLOAT_FORMAT % value)
    if isinstance(value, dict):
        return {k: _significant(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_significant(v) for v in value]
    return value


def _text(value):
    if value is None or (isinstance(value, float) and math.isnan(value)) or value == '':
        return None
    return str(value)


class ExportService:
    """Servicio de exportación"""

    # --------------------------------------------
    # Rutas
    # --------------------------------------------

    @staticmethod
    def stem(scenario, solver):
        return f'{scenario}_{solver}'

    @classmethod
    def paths(cls, out_dir, scenario, solver, agents=()):
        """Rutas de todos los archivos de una corrida"""
        out_dir = Path(out_dir)
        stem = cls.stem(scenario, solver)
        return {
            'agents': {a: out_dir / f'{stem}_{a}.csv' for a in agents},
            'metrics_csv': out_dir / f'{stem}_metrics.csv',
            'metrics_json': out_dir / f'{stem}_metrics.json',
            'events': out_dir / f'{stem}_events.json',
            'timing': out_dir / f'{stem}_timing.json',
            'resolved': out_dir / f'{stem}_resolved.yaml',
        }

    # --------------------------------------------
    # Filas
    # --------------------------------------------

    @staticmethod
    def trajectory_row(record):
        row = {
            'time': record.time, 'agent': record.agent, 'stage': record.stage,
            'lane': record.lane, 'committed_lane': record.committed_lane,
            'target_lane': record.target_lane,
            'vx': record.state.vx, 'phi': record.state.phi, 'X': record.state.X,
            'Y': record.state.Y,
            'ax': record.control.ax, 'delta_f': record.control.delta_f,
            'd_ax': record.decision.d_ax, 'd_delta_f': record.decision.d_delta_f,
            'alpha': record.decision.alpha, 'beta': record.decision.beta,
            'ay': record.ay, 'leader': record.leader or '',
            'feasible': record.feasible, 'fallback': record.fallback,
        }
        for slot in range(1, MAX_SLOTS + 1):
            other = record.neighbors.get(slot)
            row[f'nv{slot}'] = other or ''
            row[f'nv{slot}_gap'] = record.nv_gaps.get(other) if other else None
        payoff = record.payoff
        for name in PAYOFF_FIELDS:
            row[name] = getattr(payoff, name) if payoff is not None else None
        return row

    @staticmethod
    def metrics_rows(report):
        rows = []
        for agent_id, m in report.agents.items():
            row = {
                'agent': agent_id, 'samples': m.samples, 'max_velocity': m.max_velocity,
                'velocity_rms': m.velocity_rms,
                'min_nv_gap': min(m.min_nv_gap.values()) if m.min_nv_gap else None,
                'travel_time': m.travel_time, 'completed': m.completed,
                'fallback_count': m.fallback_count,
            }
            for prefix, values in (('ax', m.ax_quartiles), ('ay', m.ay_quartiles)):
                for name, value in zip(QUARTILE_NAMES, values):
                    row[f'{prefix}_{name}'] = value
            rows.append(row)
        rows.append({'agent': 'system', 'velocity_rms': report.system_velocity_rms,
                     'samples': sum(m.samples for m in report.agents.values())})
        return rows

    # --------------------------------------------
    # Exportación
    # --------------------------------------------

    @staticmethod
    def _write_json(path, payload):
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
            handle.write('\n')

    @staticmethod
    def _write_csv(path, rows, columns):
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT,
                                                   lineterminator='\n')

    @classmethod
    def export(cls, log, out_dir, report=None):
        """
        Escribe todos los archivos de una corrida

        Args:
            log: SimulationLog
            out_dir: directorio de salida (se crea si no existe)
            report: MetricsReport (se calcula si no se pasa)

        Returns:
            dict: rutas escritas

        Raises:
            ExportError: fallo de E/S, con la ruta afectada
        """
        report = report or MetricsService.metrics(log)
        paths = cls.paths(out_dir, log.scenario, log.solver, log.agents)
        current = Path(out_dir)
        try:
            current.mkdir(parents=True, exist_ok=True)
            for agent_id, path in paths['agents'].items():
                current = path
                rows = [cls.trajectory_row(r) for r in log.for_agent(agent_id)]
                cls._write_csv(path, rows, TRAJECTORY_COLUMNS)

            current = paths['metrics_csv']
            cls._write_csv(current, cls.metrics_rows(report), METRICS_COLUMNS)

            current = paths['metrics_json']
            summary = report.to_dict()
            summary.pop('mean_solve_time')
            summary['run'] = {
                'dt': log.dt,
                'termination': log.termination,
                'error': log.error,
                'completed': log.completed,
                'collision': log.collision.to_dict() if log.collision else None,
            }
            cls._write_json(current, _significant(summary))

            current = paths['events']
            cls._write_json(current, _significant(SimulationService.decision_events(log)))

            current = paths['timing']
            cls._write_json(current, {
                'mean_solve_time': report.mean_solve_time,
                'solve_times': {a: [r.solve_time for r in log.for_agent(a)] for a in log.agents},
            })
        except OSError as e:
            raise ExportError('No se pudo escribir el archivo de salida', path=str(current),
                              reason=e.strerror or str(e)) from e

        logger.info(f"💾 Exportados {len(paths['agents'])} archivos de trayectoria en {out_dir}")
        return paths

    # --------------------------------------------
    # Reimportación
    # --------------------------------------------

    @staticmethod
    def _record_from_row(row, solve_time):
        neighbors, gaps = {}, {}
        for slot in range(1, MAX_SLOTS + 1):
            other = _text(row[f'nv{slot}'])
            if other is None:
                continue
            neighbors[slot] = other
            gap = row[f'nv{slot}_gap']
            if not pd.isna(gap):
                gaps[other] = float(gap)
        payoff = None
        if not pd.isna(row['total']):
            payoff = PayoffBreakdown(*(float(row[name]) for name in PAYOFF_FIELDS))
        return StepRecord(
            time=float(row['time']), agent=str(row['agent']), stage=str(row['stage']),
            lane=str(row['lane']), committed_lane=str(row['committed_lane']),
            target_lane=str(row['target_lane']),
            state=VehicleState(float(row['vx']), float(row['phi']), float(row['X']),
                               float(row['Y'])),
            control=ControlInput(float(row['ax']), float(row['delta_f'])),
            decision=DecisionVector(float(row['d_ax']), float(row['d_delta_f']),
                                    int(row['alpha']), int(row['beta'])),
            ay=float(row['ay']),
            leader=_text(row['leader']),
            neighbors=neighbors,
            nv_gaps=gaps,
            feasible=bool(row['feasible']),
            fallback=bool(row['fallback']),
            payoff=payoff,
            solve_time=solve_time,
        )

    @classmethod
    def reimport(cls, out_dir, scenario, solver):
        """
        Reconstruye un SimulationLog desde los archivos exportados

        Los tiempos de solución se leen del archivo de tiempos si existe.

        Raises:
            ExportError: archivo faltante o ilegible
        """
        paths = cls.paths(out_dir, scenario, solver)
        current = paths['metrics_json']
        try:
            with open(current, encoding='utf-8') as handle:
                summary = json.load(handle)
            timing = {}
            if paths['timing'].exists():
                current = paths['timing']
                with open(current, encoding='utf-8') as handle:
                    timing = json.load(handle).get('solve_times', {})

            run = summary['run']
            collision = run.get('collision')
            log = SimulationLog(
                scenario=scenario, solver=solver, dt=float(run['dt']),
                collision=CollisionRecord(collision['time'], tuple(collision['agents']),
                                          collision['distance']) if collision else None,
                completed={k: float(v) for k, v in run.get('completed', {}).items()},
                termination=run['termination'], error=run.get('error'),
            )

            agents = list(summary['agents'])
            frames = {}
            for agent_id in agents:
                current = cls.paths(out_dir, scenario, solver, [agent_id])['agents'][agent_id]
                frames[agent_id] = pd.read_csv(current, dtype={c: str for c in TEXT_COLUMNS},
                                               keep_default_na=False, na_values=[''])
        except (OSError, KeyError, ValueError, pd.errors.ParserError) as e:
            raise ExportError('No se pudo leer el archivo exportado', path=str(current),
                              reason=str(e)) from e

        records = []
        for agent_id, frame in frames.items():
            times = timing.get(agent_id, [])
            for index, row in enumerate(frame.to_dict('records')):
                solve_time = float(times[index]) if index < len(times) else 0.0
                records.append(cls._record_from_row(row, solve_time))
        records.sort(key=lambda r: (round(r.time / log.dt), r.agent))
        log.records = records
        logger.info(f"📂 Reimportados {len(records)} registros de {cls.stem(scenario, solver)}")
        return log
