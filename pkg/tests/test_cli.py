# ============================================
# PRUEBAS - Comandos CLI
# ============================================

BUNDLED = ['case1_A', 'case1_B', 'case1_C', 'case2_A', 'case2_B', 'case2_C', 'case3']


def _scenario_file(tmp_path, document):
    path = tmp_path / 'solo.yaml'
    path.write_text(document, encoding='utf-8')
    return str(path)


def test_validate_prints_resolved_values(cli_runner):
    result = cli_runner.invoke(args=['validate', 'case1_A'])
    assert result.exit_code == 0
    assert 'conflict_headway' in result.output
    assert 'case1_A' in result.output


def test_validate_missing_scenario(cli_runner, tmp_path):
    missing = str(tmp_path / 'nope.yaml')
    result = cli_runner.invoke(args=['validate', missing])
    assert result.exit_code == 4
    assert 'nope.yaml' in result.output


def test_validate_invalid_document(cli_runner, tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text('schema_version: 1\nextends: baseline\nagents: []\n', encoding='utf-8')
    result = cli_runner.invoke(args=['validate', str(path)])
    assert result.exit_code == 4
    assert 'agents' in result.output


def test_scenarios_lists_corpus(cli_runner):
    result = cli_runner.invoke(args=['scenarios'])
    assert result.exit_code == 0
    assert 'Total de escenarios: 7' in result.output
    for name in BUNDLED:
        assert name in result.output


def test_run_writes_outputs(cli_runner, tmp_path, single_agent_yaml):
    scenario = _scenario_file(tmp_path, single_agent_yaml)
    out = tmp_path / 'out'
    result = cli_runner.invoke(args=['run', scenario, '--out', str(out)])
    assert result.exit_code == 0, result.output
    for name in ('solo_sg_EV.csv', 'solo_sg_metrics.csv', 'solo_sg_metrics.json',
                 'solo_sg_events.json', 'solo_sg_resolved.yaml'):
        assert (out / name).exists()
    assert 'v_rms del sistema' in result.output


def test_run_is_reproducible(cli_runner, tmp_path, single_agent_yaml):
    scenario = _scenario_file(tmp_path, single_agent_yaml)
    for folder in ('a', 'b'):
        result = cli_runner.invoke(args=['run', scenario, '--solver', 'gc',
                                         '--out', str(tmp_path / folder)])
        assert result.exit_code == 0, result.output
    for name in ('solo_gc_EV.csv', 'solo_gc_metrics.csv', 'solo_gc_resolved.yaml'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_resolved_config_records_overrides(cli_runner, tmp_path, single_agent_yaml):
    scenario = _scenario_file(tmp_path, single_agent_yaml)
    out = tmp_path / 'out'
    result = cli_runner.invoke(args=['run', scenario, '--out', str(out), '--np', '5',
                                     '--seed', '7'])
    assert result.exit_code == 0, result.output
    resolved = (out / 'solo_sg_resolved.yaml').read_text(encoding='utf-8')
    assert 'np: 5' in resolved
    assert 'seed: 7' in resolved


def test_run_rejects_invalid_horizon(cli_runner, tmp_path):
    result = cli_runner.invoke(args=['run', 'case1_A', '--np', '2', '--nc', '2',
                                     '--out', str(tmp_path)])
    assert result.exit_code == 4


def test_run_requires_output_dir(cli_runner):
    result = cli_runner.invoke(args=['run', 'case1_A'])
    assert result.exit_code == 4
    assert '--out' in result.output


def test_run_rejects_unknown_solver(cli_runner, tmp_path):
    result = cli_runner.invoke(args=['run', 'case1_A', '--solver', 'nash',
                                     '--out', str(tmp_path)])
    assert result.exit_code == 2
    assert not any(tmp_path.iterdir())


def test_compare_rejects_mismatched_grids(cli_runner, tmp_path):
    result = cli_runner.invoke(args=['compare', 'case1_A', '--sg-grid', '3', '--gc-grid', '5',
                                     '--out', str(tmp_path)])
    assert result.exit_code == 4
    assert not any(tmp_path.iterdir())


def test_compare_single_agent(cli_runner, tmp_path, single_agent_yaml):
    scenario = _scenario_file(tmp_path, single_agent_yaml)
    out = tmp_path / 'out'
    result = cli_runner.invoke(args=['compare', scenario, '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'COMPARACIÓN SG vs GC' in result.output
    assert (out / 'solo_sg_EV.csv').exists()
    assert (out / 'solo_gc_EV.csv').exists()
