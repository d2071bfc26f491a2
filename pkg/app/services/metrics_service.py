# ============================================
# METRICS SERVICE - Métricas de una corrida
# ============================================
# Responsabilidad: resumir un SimulationLog por agente y para el sistema

import logging

import numpy as np

from app.models.simulation import AgentMetrics, MetricsReport

logger = logging.getLogger(__name__)


class MetricsService:
    """Servicio de métricas"""

    @staticmethod
    def quartiles(values):
        """(mín, Q1, mediana, Q3, máx); NaN si no hay muestras"""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return (float('nan'),) * 5
        return tuple(float(v) for v in np.percentile(values, [0, 25, 50, 75, 100]))

    @staticmethod
    def rms(values):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return float('nan')
        return float(np.sqrt(np.mean(np.square(values))))

    @classmethod
    def agent_metrics(cls, log, agent_id):
        records = log.for_agent(agent_id)
        vx = [r.state.vx for r in records]
        min_gap = {}
        for record in records:
            for other_id, gap in record.nv_gaps.items():
                min_gap[other_id] = min(gap, min_gap.get(other_id, np.inf))

        completed = agent_id in log.completed
        if completed:
            travel_time = log.completed[agent_id]
        elif records:
            travel_time = records[-1].time + log.dt
        else:
            travel_time = 0.0

        return AgentMetrics(
            agent=agent_id,
            samples=len(records),
            max_velocity=float(np.max(vx)) if vx else float('nan'),
            velocity_rms=cls.rms(vx),
            ax_quartiles=cls.quartiles([r.control.ax for r in records]),
            ay_quartiles=cls.quartiles([r.ay for r in records]),
            min_nv_gap={k: float(v) for k, v in sorted(min_gap.items())},
            travel_time=float(travel_time),
            completed=completed,
            fallback_count=sum(1 for r in records if r.fallback),
        )

    @classmethod
    def metrics(cls, log):
        """
        Métricas de una corrida

        Args:
            log: SimulationLog

        Returns:
            MetricsReport
        """
        agents = {agent_id: cls.agent_metrics(log, agent_id) for agent_id in log.agents}
        solve_times = log.solve_times
        report = MetricsReport(
            scenario=log.scenario,
            solver=log.solver,
            agents=agents,
            system_velocity_rms=cls.rms([r.state.vx for r in log.records]),
            mean_solve_time=float(np.mean(solve_times)) if solve_times else 0.0,
            collision=log.collision is not None,
        )
        logger.debug(f"📊 Métricas de {log.scenario}/{log.solver}: "
                     f"v_rms={report.system_velocity_rms:.3f} m/s")
        return report
