# ============================================
# COMANDOS CLI DEL SIMULADOR
# ============================================
# Comandos: run, compare, validate, scenarios
# Códigos de salida: 0 ok · 2 colisión · 3 respaldo usado ·
# 4 configuración/escenario · 5 localización · 6 exportación

import json
import logging
import os
import sys

import click
import yaml
from flask import current_app

from app.models.game import SOLVERS
from app.services.export_service import ExportService
from app.services.metrics_service import MetricsService
from app.services.scenario_service import ScenarioService
from app.services.simulation_service import SimulationService
from app.utils.decorators import handle_exceptions
from app.utils.exceptions import ConfigurationError, ExportError, LocalizationError

EXIT_OK = 0
EXIT_COLLISION = 2
EXIT_FALLBACK = 3


def exit_code_for(log):
    """Código de salida de una corrida terminada"""
    if log.collision is not None:
        return EXIT_COLLISION
    if log.termination == 'localization':
        return LocalizationError.exit_code
    if log.fallback_used:
        return EXIT_FALLBACK
    return EXIT_OK


def _fmt(value, digits=3):
    if value is None or value != value:
        return '-'
    return f'{value:.{digits}f}'


def register_cli_commands(app):
    """
    Registra todos los comandos CLI del simulador
    """
    logger = app.logger

    def _verbose(enabled):
        if enabled:
            logging.getLogger('app').setLevel(logging.DEBUG)
            app.logger.setLevel(logging.DEBUG)

    def _load(scenario, **overrides):
        scenario_dir = current_app.config['SCENARIO_DIR']
        path = ScenarioService.resolve_path(scenario, scenario_dir)
        config = ScenarioService.load_file(path, scenario_dir=scenario_dir)
        return ScenarioService.with_overrides(config, **overrides)

    def _out_dir(out_dir):
        out_dir = out_dir or current_app.config.get('OUTPUT_DIR')
        if not out_dir:
            raise ConfigurationError('Falta el directorio de salida (--out o ROUNDABOUT_OUTPUT_DIR)')
        return out_dir

    def _write_resolved(config, path):
        try:
            os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
            with open(path, 'w', encoding='utf-8') as handle:
                yaml.safe_dump(ScenarioService.to_document(config), handle, sort_keys=False,
                               allow_unicode=True)
        except OSError as e:
            raise ExportError('No se pudo escribir la configuración resuelta', path=str(path),
                              reason=e.strerror)

    def _simulate(config, out_dir):
        log = SimulationService.run(config)
        report = MetricsService.metrics(log)
        paths = ExportService.export(log, out_dir, report)
        _write_resolved(config, paths['resolved'])
        logger.info(f"💾 Resultados de {config.name}/{config.solver} en {out_dir}")
        return log, report

    def _print_report(log, report):
        click.echo("\n" + "=" * 86)
        click.echo(f"🚗 {report.scenario} | solver={report.solver.upper()} | "
                   f"fin={log.termination}")
        click.echo("=" * 86)
        click.echo(f"{'Agente':<8} {'v_max':>8} {'v_rms':>8} {'ax_med':>8} {'ay_med':>8} "
                   f"{'gap_min':>8} {'t_viaje':>8} {'Completó':>9} {'Respaldo':>9}")
        click.echo("-" * 86)
        for agent_id, m in report.agents.items():
            gap = min(m.min_nv_gap.values()) if m.min_nv_gap else None
            click.echo(f"{agent_id:<8} {_fmt(m.max_velocity):>8} {_fmt(m.velocity_rms):>8} "
                       f"{_fmt(m.ax_quartiles[2]):>8} {_fmt(m.ay_quartiles[2]):>8} "
                       f"{_fmt(gap):>8} {_fmt(m.travel_time, 1):>8} "
                       f"{'Sí' if m.completed else 'No':>9} {m.fallback_count:>9}")
        click.echo("-" * 86)
        click.echo(f"📊 v_rms del sistema: {_fmt(report.system_velocity_rms)} m/s")
        click.echo(f"⏱️  Tiempo medio por época: {report.mean_solve_time * 1000:.1f} ms")
        if log.collision is not None:
            c = log.collision
            click.echo(f"💥 Colisión: {c.agents[0]} / {c.agents[1]} en t={c.time:.2f}s")
        if log.error:
            click.echo(f"❌ {log.error}")
        if log.fallback_used:
            click.echo("⚠️  Se usaron decisiones de respaldo")
        click.echo("=" * 86 + "\n")

    def _report_json(log, report):
        payload = report.to_dict()
        payload['termination'] = log.termination
        payload['exit_code'] = exit_code_for(log)
        return payload

    # ===== COMANDO: run =====
    @app.cli.command('run')
    @click.argument('scenario')
    @click.option('--solver', type=click.Choice(SOLVERS), help='Solver del juego (sg o gc)')
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Directorio de salida')
    @click.option('--seed', type=int, help='Semilla registrada en la configuración')
    @click.option('--np', 'Np', type=int, help='Horizonte de predicción')
    @click.option('--nc', 'Nc', type=int, help='Horizonte de control')
    @click.option('--dt', help='Periodo de muestreo (0.1, 0.1s, 100ms)')
    @click.option('--grid', type=int, help='Niveles por eje continuo de la rejilla')
    @click.option('--duration', help='Duración de la simulación (s)')
    @click.option('--json', 'as_json', is_flag=True, help='Métricas en JSON')
    @click.option('-v', '--verbose', is_flag=True, help='Logging DEBUG')
    @handle_exceptions
    def run_command(scenario, solver, out_dir, seed, Np, Nc, dt, grid, duration, as_json, verbose):
        """Simula un escenario con un solver y exporta trayectorias y métricas"""
        _verbose(verbose)
        config = _load(scenario, solver=solver, Np=Np, Nc=Nc, dt=dt, grid=grid,
                       duration=duration, seed=seed)
        log, report = _simulate(config, _out_dir(out_dir))
        if as_json:
            click.echo(json.dumps(_report_json(log, report), indent=2, sort_keys=True))
        else:
            _print_report(log, report)
        sys.exit(exit_code_for(log))

    # ===== COMANDO: compare =====
    @app.cli.command('compare')
    @click.argument('scenario')
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Directorio de salida')
    @click.option('--seed', type=int)
    @click.option('--np', 'Np', type=int)
    @click.option('--nc', 'Nc', type=int)
    @click.option('--dt')
    @click.option('--grid', type=int)
    @click.option('--sg-grid', type=int, help='Rejilla para SG (debe coincidir con GC)')
    @click.option('--gc-grid', type=int, help='Rejilla para GC (debe coincidir con SG)')
    @click.option('--duration')
    @click.option('--json', 'as_json', is_flag=True)
    @click.option('-v', '--verbose', is_flag=True)
    @handle_exceptions
    def compare_command(scenario, out_dir, seed, Np, Nc, dt, grid, sg_grid, gc_grid, duration,
                        as_json, verbose):
        """Corre SG y GC sobre el mismo escenario y compara velocidades"""
        _verbose(verbose)
        grids = {g for g in (grid, sg_grid, gc_grid) if g is not None}
        if len(grids) > 1:
            raise ConfigurationError('Las rejillas por solver deben coincidir para comparar',
                                     sg_grid=sg_grid, gc_grid=gc_grid, grid=grid)
        grid = grids.pop() if grids else None
        out_dir = _out_dir(out_dir)

        results = {}
        for solver in SOLVERS:
            config = _load(scenario, solver=solver, Np=Np, Nc=Nc, dt=dt, grid=grid,
                           duration=duration, seed=seed)
            results[solver] = _simulate(config, out_dir)

        (sg_log, sg), (gc_log, gc) = results['sg'], results['gc']
        rows = []
        for agent_id in sorted(set(sg.agents) | set(gc.agents)):
            a = sg.agents.get(agent_id)
            b = gc.agents.get(agent_id)
            v_sg = a.velocity_rms if a else float('nan')
            v_gc = b.velocity_rms if b else float('nan')
            rows.append({'agent': agent_id, 'sg': v_sg, 'gc': v_gc, 'delta': v_gc - v_sg})
        system_delta = gc.system_velocity_rms - sg.system_velocity_rms

        if as_json:
            click.echo(json.dumps({
                'scenario': sg.scenario,
                'agents': rows,
                'system': {'sg': sg.system_velocity_rms, 'gc': gc.system_velocity_rms,
                           'delta': system_delta},
                'mean_solve_time': {'sg': sg.mean_solve_time, 'gc': gc.mean_solve_time},
                'termination': {'sg': sg_log.termination, 'gc': gc_log.termination},
            }, indent=2, sort_keys=True))
        else:
            click.echo("\n" + "=" * 50)
            click.echo(f"⚖️  COMPARACIÓN SG vs GC | {sg.scenario}")
            click.echo("=" * 50)
            click.echo(f"{'Agente':<10} {'v_rms SG':>10} {'v_rms GC':>10} {'Δ':>10}")
            click.echo("-" * 50)
            for row in rows:
                click.echo(f"{row['agent']:<10} {_fmt(row['sg']):>10} {_fmt(row['gc']):>10} "
                           f"{row['delta']:>+10.3f}")
            click.echo("-" * 50)
            click.echo(f"{'Sistema':<10} {_fmt(sg.system_velocity_rms):>10} "
                       f"{_fmt(gc.system_velocity_rms):>10} {system_delta:>+10.3f}")
            sign = 'GC > SG' if system_delta > 0 else ('GC < SG' if system_delta < 0 else 'GC = SG')
            click.echo(f"📊 Velocidad del sistema: {sign}")
            click.echo(f"⏱️  Época media: SG {sg.mean_solve_time * 1000:.1f} ms | "
                       f"GC {gc.mean_solve_time * 1000:.1f} ms")
            click.echo("=" * 50 + "\n")

        codes = [exit_code_for(sg_log), exit_code_for(gc_log)]
        for code in (EXIT_COLLISION, LocalizationError.exit_code, EXIT_FALLBACK):
            if code in codes:
                sys.exit(code)
        sys.exit(EXIT_OK)

    # ===== COMANDO: validate =====
    @app.cli.command('validate')
    @click.argument('scenario')
    @handle_exceptions
    def validate_command(scenario):
        """Valida un escenario e imprime todos los valores resueltos"""
        config = _load(scenario)
        click.echo(f"✅ Escenario '{config.name}' válido ({len(config.agents)} agentes)\n")
        click.echo(yaml.safe_dump(ScenarioService.to_document(config), sort_keys=False,
                                  allow_unicode=True))

    # ===== COMANDO: scenarios =====
    @app.cli.command('scenarios')
    @handle_exceptions
    def list_scenarios():
        """Lista los escenarios incluidos"""
        scenario_dir = current_app.config['SCENARIO_DIR']
        names = sorted(os.path.splitext(f)[0] for f in os.listdir(scenario_dir)
                       if f.endswith('.yaml') and f != f'{ScenarioService.BASELINE}.yaml')

        if not names:
            click.echo("🔭 No hay escenarios incluidos")
            return

        click.echo(f"\n📋 Total de escenarios: {len(names)}")
        click.echo("\n" + "=" * 60)
        click.echo(f"{'Nombre':<14} {'Agentes':>8} {'Solver':>8} {'Duración':>10}")
        click.echo("=" * 60)
        for name in names:
            config = _load(name)
            click.echo(f"{name:<14} {len(config.agents):>8} {config.solver:>8} "
                       f"{config.duration:>9.1f}s")
        click.echo("=" * 60 + "\n")
