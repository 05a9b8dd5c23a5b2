# tests/test_cli.py

"""Integration and unit tests for the CLI entrypoint."""

import io
import json
from pathlib import Path
from unittest.mock import ANY, MagicMock, Mock, call, patch

import numpy as np
import pytest

# Import rich modules up front so @patch targets don't leak mocks into modules
# first imported while a patch is active.
import rich.console  # noqa: F401
import rich.markdown  # noqa: F401
import rich.panel  # noqa: F401
import rich.table  # noqa: F401
import rich.text  # noqa: F401

from kglp.cli import build_parser, main, resolve_config, train_config_from_args, translate_command
from kglp.config import PipelineConfig
from kglp.constants import COMMAND_NAMES
from kglp.formats import CandidateSet, save_candidates, save_triples
from kglp.help_renderer import render_rich_help
from kglp.inference import ScoreMatrix, load_scores, save_scores
from kglp.rules import HornRule, RuleSet, save_rules
from kglp.store import TripleStore


def _last_json(text: str):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture
def perfect_predictor(tmp_path):
    cands = CandidateSet([0, 1, 2], [0, 0, 1], [[3, 4, 5], [0, 2], [1, 3, 4, 5]], [2, 0, 1])
    rows = [np.where(np.arange(len(c.candidates)) == c.truth_index, 1.0, 0.0) for c in cands]
    save_candidates(tmp_path / "q.cand", cands)
    save_scores(tmp_path / "s.f32", ScoreMatrix.from_rows(rows))
    return tmp_path / "q.cand", tmp_path / "s.f32"


# --- help and parsing ----------------------------------------------------------------

@patch('rich.console.Console')
@patch('rich.markdown.Markdown')
@patch('rich.panel.Panel')
@patch('rich.table.Table')
@patch('rich.text.Text')
def test_render_rich_help(mock_text, mock_table, mock_panel, mock_markdown, mock_console):
    mock_parser = Mock()
    mock_parser.format_usage.return_value = 'usage: kglp [options]'
    mock_parser.description = 'Test description'
    mock_parser.epilog = 'Examples:\nkglp eval --scores s.f32\ncmd2'
    mock_parser._actions = [
        Mock(option_strings=['-c', '--config'], help='Config file', default=Path('/default.toml')),
        Mock(option_strings=['--deterministic'], help='Single writer', default=True),
    ]
    options_table = MagicMock(name='options_table')
    commands_table = MagicMock(name='commands_table')
    mock_table.side_effect = [options_table, commands_table]

    console = MagicMock()
    render_rich_help(console, mock_parser)

    mock_panel.assert_has_calls([
        call(mock_text.return_value, title='Usage', border_style='yellow'),
        call(mock_markdown.return_value, title='[bold green]Quick Starts[/bold green]', border_style='green', expand=False)
    ])
    options_table.add_row.assert_has_calls([
        call('-c --config', 'Config file [dim](default: /default.toml)[/dim]'),
        call('--deterministic', 'Single writer'),
    ])
    commands_table.add_column.assert_has_calls([
        call("Command", style="cyan", no_wrap=True),
        call("Aliases", style="dim", no_wrap=True),
        call("Description", style="white"),
    ])
    commands_table.add_row.assert_any_call("pipeline", "run", ANY)
    commands_table.add_row.assert_any_call("prepare", "generate, synthetic", ANY)
    assert commands_table.add_row.call_count == len(COMMAND_NAMES)
    mock_markdown.assert_called_once_with("# Usage Examples\n- ```bash\nkglp eval --scores s.f32\n```\ncmd2\n")


def test_render_rich_help_real_parser():
    from rich.console import Console

    buffer = io.StringIO()
    render_rich_help(Console(file=buffer, width=140), build_parser())
    text = buffer.getvalue()
    assert "Global Options" in text
    assert "Quick Starts" in text
    for name in COMMAND_NAMES:
        assert name in text


@patch('kglp.cli._has_rich', return_value=True)
@patch('rich.console.Console')
def test_main_help_rich(mock_console, mock_has_rich):
    mock_render = Mock()
    with patch('kglp.help_renderer.render_rich_help', mock_render):
        result = main(['-h'])

    assert result == 0
    mock_console.assert_called_once()
    mock_render.assert_called_once_with(mock_console.return_value, ANY)


@patch('kglp.cli._has_rich', return_value=False)
def test_main_help_fallback(mock_has_rich):
    mock_parser = Mock()
    with patch('kglp.cli.build_parser', return_value=mock_parser):
        result = main(['--help'])

    assert result == 0
    mock_parser.print_help.assert_called_once()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(['--version'])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("kglp ")


def test_missing_command_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_every_command_has_help():
    parser = build_parser()
    subparsers = next(a for a in parser._actions if a.dest == "command")
    assert sorted(subparsers.choices) == sorted(COMMAND_NAMES)
    for action in parser._actions:
        if action.option_strings and action.dest != "help":
            assert action.help, action.dest
    for name, sub in subparsers.choices.items():
        for action in sub._actions:
            if action.option_strings and action.dest != "help":
                assert action.help, f"{name} {action.dest}"


@pytest.mark.parametrize('argv, expected', [
    (['run', '--stages', '2'], ['pipeline', '--stages', '2']),
    (['-c', 'run.toml', 'bag', '--scores', 'a'], ['-c', 'run.toml', 'ensemble', '--scores', 'a']),
    (['--deterministic', '-w', '2', 'evaluate'], ['--deterministic', '-w', '2', 'eval']),
    (['train', '--out', 'run'], ['train', '--out', 'run']),
])
def test_translate_command(argv, expected):
    assert translate_command(argv) == expected


def test_parser_defaults_follow_config():
    cfg = PipelineConfig.from_dict({"logging": {"level": "DEBUG"}, "workers": 7})
    args = build_parser(cfg).parse_args(['eval', '--scores', 's', '--candidates', 'c'])
    assert args.log_level == "DEBUG"
    assert args.workers is None
    assert args.tie_break is None


def test_resolve_config_global_flags(monkeypatch):
    monkeypatch.delenv("KGLP_THREADS", raising=False)
    args = build_parser().parse_args(['-w', '3', '--no-deterministic', '--log-format', 'json', 'eval',
                                      '--scores', 's', '--candidates', 'c'])
    cfg = resolve_config(args)
    assert cfg.workers == 3
    assert cfg.deterministic is False
    assert cfg.train.workers == 3
    assert cfg.train.deterministic is False
    assert cfg.logging.format == "json"


def test_resolve_config_thread_env(monkeypatch):
    monkeypatch.setenv("KGLP_THREADS", "2")
    args = build_parser().parse_args(['eval', '--scores', 's', '--candidates', 'c'])
    assert resolve_config(args).train.workers == 2


def test_train_config_overrides():
    args = build_parser().parse_args(['train', '--dim', '8', '--hidden', '16', '--no-inverse', '--variant', 'concat'])
    config = train_config_from_args(args, PipelineConfig())
    assert (config.dim, config.mlp_hidden, config.inverse_relations, config.variant) == (8, 16, False, "concat")
    assert config.epochs == PipelineConfig().train.epochs


# --- commands ------------------------------------------------------------------------

def test_eval_perfect_predictor(perfect_predictor, capsys):
    cands, scores = perfect_predictor
    assert main(['eval', '--scores', str(scores), '--candidates', str(cands)]) == 0
    assert _last_json(capsys.readouterr().out) == {"mrr": 1.0}


def test_ensemble_command(tmp_path, capsys):
    save_scores(tmp_path / "a.f32", ScoreMatrix.from_rows([[1, 3]]))
    save_scores(tmp_path / "b.f32", ScoreMatrix.from_rows([[3, 1]]))
    out = tmp_path / "avg.f32"
    assert main(['bag', '--scores', f"{tmp_path / 'a.f32'},{tmp_path / 'b.f32'}", '--out', str(out)]) == 0
    assert load_scores(out).data.tolist() == [2.0, 2.0]
    assert _last_json(capsys.readouterr().out)["models"] == 2


def test_mine_and_apply_rules(tmp_path, chain_store, capsys):
    save_triples(tmp_path / "train.tsv", chain_store)
    rules = tmp_path / "rules.json"
    assert main(['mine', '--train', str(tmp_path / "train.tsv"), '--min-support', '2',
                 '--report', '0.95,0.99', '--out', str(rules)]) == 0
    payload = _last_json(capsys.readouterr().out)
    assert payload["rules"] > 0
    assert set(payload["report"]) == {"0.95", "0.99"}
    assert rules.exists()

    partial = TripleStore(chain_store.triples[chain_store.rels != 2], 6, 3)
    save_triples(tmp_path / "partial.tsv", partial)
    save_rules(tmp_path / "planted.json", RuleSet([HornRule(2, (0, 1), 3, 3, 1.0)]))
    out = tmp_path / "augmented.tsv"
    assert main(['apply-rules', '--train', str(tmp_path / "partial.tsv"), '--rules',
                 str(tmp_path / "planted.json"), '--out', str(out)]) == 0
    payload = _last_json(capsys.readouterr().out)
    assert payload["added"] == 3
    assert payload["triples"] == len(chain_store)


@patch('kglp.ablation.run_ablation')
def test_ablate_command(mock_ablation, synthetic_dir, tmp_path, capsys):
    mock_ablation.return_value = {"rows": [], "encoder_ordering_holds": True, "inverse_gain_holds": True}
    assert main(['ablate', '--data', str(synthetic_dir), '--seeds', '0,1', '--dim', '8', '--hidden', '4',
                 '--out', str(tmp_path / "abl")]) == 0
    store, features, valid, config, seeds, tie_break = mock_ablation.call_args.args
    assert seeds == [0, 1]
    assert (config.dim, config.mlp_hidden) == (8, 4)
    assert tie_break == "optimistic"
    assert json.loads((tmp_path / "abl" / "report.json").read_text()) == mock_ablation.return_value
    assert _last_json(capsys.readouterr().out)["encoder_ordering_holds"] is True


def test_prepare_train_pipeline_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(['prepare', '--out', str(data), '--entities', '40', '--relations', '4', '--candidates', '10',
                 '--feature-dim', '8', '--latent-dim', '4', '--seed', '3']) == 0
    prepared = _last_json(capsys.readouterr().out)
    assert prepared["valid"] > 0

    feats = ['--entity-feat', str(data / "entity_feat.f32"), '--rel-feat', str(data / "relation_feat.f32")]
    small = ['--dim', '8', '--hidden', '16', '--epochs', '1', '--batch-size', '32', '--neg-samples', '5']
    trained = []
    for seed in (0, 1):
        out = tmp_path / f"m{seed}"
        assert main(['train', '--train', str(data / "train.tsv"), '--valid', str(data / "valid.cand"),
                     '--out', str(out), '--seed', str(seed), *feats, *small]) == 0
        trained.append(_last_json(capsys.readouterr().out))
    assert (tmp_path / "m0" / "model.json").exists()

    scores = tmp_path / "m0_valid.f32"
    assert main(['eval', '--model', str(tmp_path / "m0"), '--candidates', str(data / "valid.cand"),
                 '--out', str(scores), *feats]) == 0
    assert _last_json(capsys.readouterr().out)["mrr"] == pytest.approx(trained[0]["best_valid_mrr"], abs=1e-6)

    assert main(['distill', '--model', str(tmp_path / "m1"), '--teacher', str(scores), '--candidates',
                 str(data / "valid.cand"), '--steps', '3', '--out', str(tmp_path / "student"), *feats]) == 0
    assert _last_json(capsys.readouterr().out)["steps"] == 3
    assert (tmp_path / "student" / "model.json").exists()

    config = tmp_path / "run.json"
    config.write_text(json.dumps({"distill": {"steps": 5, "batch-size": 8}, "workers": 1}))
    run = tmp_path / "run"
    assert main(['-c', str(config), 'run', '--models', f"{tmp_path / 'm0'},{tmp_path / 'm1'}",
                 '--train', str(data / "train.tsv"), '--valid', str(data / "valid.cand"),
                 '--test', str(data / "test.cand"), '--stages', '1', '--out', str(run), '--save-models',
                 *feats]) == 0
    report = _last_json(capsys.readouterr().out)
    assert [s["stage"] for s in report["stages"]] == [0, 1]
    assert json.loads((run / "report.json").read_text()) == report
    assert len(load_scores(run / "scores.f32")) == prepared["test"]
    assert (run / "students" / "model_1" / "model.json").exists()


# --- failures ------------------------------------------------------------------------

def test_missing_input_file_exits_with_runtime_code(tmp_path, capsys):
    result = main(['eval', '--scores', str(tmp_path / "none.f32"), '--candidates', str(tmp_path / "none.cand")])
    assert result == 4
    record = _last_json(capsys.readouterr().err)
    assert record["error"] == "FileNotFoundError"
    assert record["exit_code"] == 4


def test_malformed_input_exits_with_validation_code(tmp_path, perfect_predictor, capsys):
    _, scores = perfect_predictor
    bad = tmp_path / "bad.cand"
    bad.write_text("0\t0\t1,2\n")
    assert main(['eval', '--scores', str(scores), '--candidates', str(bad)]) == 3
    record = _last_json(capsys.readouterr().err)
    assert record["error"] == "FormatError"
    assert "bad.cand:1" in record["message"]


def test_misaligned_scores_exit_with_validation_code(tmp_path, perfect_predictor, capsys):
    cands, _ = perfect_predictor
    save_scores(tmp_path / "short.f32", ScoreMatrix.from_rows([[1.0, 2.0]]))
    assert main(['eval', '--scores', str(tmp_path / "short.f32"), '--candidates', str(cands)]) == 3
    assert _last_json(capsys.readouterr().err)["error"] == "ValidationError"


def test_missing_required_path(capsys):
    assert main(['train']) == 3
    record = _last_json(capsys.readouterr().err)
    assert record["error"] == "ConfigurationError"
    assert "--train is required" in record["message"]
    assert "paths.train" in record["suggestion"]


def test_bad_config_file(tmp_path, capsys):
    assert main(['-c', str(tmp_path / "missing.toml"), 'eval', '--scores', 's', '--candidates', 'c']) == 3
    assert _last_json(capsys.readouterr().err)["error"] == "ConfigurationError"


def test_config_paths_fill_missing_flags(tmp_path, synthetic_dir, capsys):
    config = tmp_path / "kglp.toml"
    config.write_text(
        "[tool.kglp.paths]\n"
        f'train = "{synthetic_dir / "train.tsv"}"\n'
        f'entity-feat = "{synthetic_dir / "entity_feat.f32"}"\n'
        f'rel-feat = "{synthetic_dir / "relation_feat.f32"}"\n'
        f'out = "{tmp_path / "model"}"\n'
        "[tool.kglp.train]\n"
        "dim = 4\nmlp-hidden = 4\nepochs = 0\n"
    )
    assert main(['--config', str(config), 'fit']) == 0
    assert _last_json(capsys.readouterr().out)["best_step"] == 0
    assert (tmp_path / "model" / "model.json").exists()


# --- global options after the subcommand ---------------------------------------------

def test_global_options_after_subcommand():
    args = build_parser().parse_args(['eval', '--scores', 's', '--candidates', 'c', '-w', '3',
                                      '--log-format', 'json', '--deterministic', '--config', 'run.toml'])
    assert (args.workers, args.log_format, args.deterministic) == (3, "json", True)
    assert args.config == Path("run.toml")


def test_subcommand_leaves_top_level_options_alone():
    cfg = PipelineConfig.from_dict({"logging": {"level": "WARNING"}})
    args = build_parser(cfg).parse_args(['-w', '2', '--no-deterministic', 'eval', '--scores', 's',
                                         '--candidates', 'c'])
    assert (args.workers, args.deterministic, args.log_level) == (2, False, "WARNING")
    assert args.config is None


def test_config_after_subcommand(tmp_path, synthetic_dir, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"train": {"dim": 4, "mlp-hidden": 4, "epochs": 0}}))
    out = tmp_path / "model"
    assert main(['train', '--train', str(synthetic_dir / "train.tsv"),
                 '--entity-feat', str(synthetic_dir / "entity_feat.f32"),
                 '--rel-feat', str(synthetic_dir / "relation_feat.f32"),
                 '--config', str(config), '--out', str(out)]) == 0
    assert _last_json(capsys.readouterr().out)["best_step"] == 0
    assert json.loads((out / "model.json").read_text())["dim"] == 4


# --- reproducible pipeline -----------------------------------------------------------

@pytest.fixture
def trained_pair(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(['prepare', '--out', str(data), '--entities', '40', '--relations', '4', '--candidates', '10',
                 '--feature-dim', '8', '--latent-dim', '4', '--seed', '3']) == 0
    feats = ['--entity-feat', str(data / "entity_feat.f32"), '--rel-feat', str(data / "relation_feat.f32")]
    small = ['--dim', '8', '--hidden', '8', '--epochs', '1', '--batch-size', '32', '--neg-samples', '4']
    models = []
    for seed in (0, 1):
        out = tmp_path / f"m{seed}"
        assert main(['train', '--train', str(data / "train.tsv"), '--valid', str(data / "valid.cand"),
                     '--out', str(out), '--seed', str(seed), *feats, *small]) == 0
        models.append(out)
    capsys.readouterr()
    return data, feats, models


def _run_pipeline(trained_pair, out: Path) -> dict:
    data, feats, models = trained_pair
    assert main(['pipeline', '--models', ",".join(str(m) for m in models),
                 '--train', str(data / "train.tsv"), '--valid', str(data / "valid.cand"),
                 '--test', str(data / "test.cand"), '--stages', '3', '--out', str(out), '--save-models',
                 '--deterministic', *feats]) == 0
    return json.loads((out / "report.json").read_text())


def test_pipeline_three_stages_reports_four_entries(trained_pair, tmp_path):
    report = _run_pipeline(trained_pair, tmp_path / "run")
    assert [s["stage"] for s in report["stages"]] == [0, 1, 2, 3]


def test_deterministic_pipeline_is_byte_identical(trained_pair, tmp_path):
    _run_pipeline(trained_pair, tmp_path / "a")
    _run_pipeline(trained_pair, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert Path("scores.f32") in files
    assert Path("students/model_0/model.json") in files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_oversized_id_exits_with_validation_code(tmp_path, capsys):
    graph = tmp_path / "g.tsv"
    graph.write_text("0\t0\t1\n1\t0\t3000000000\n", encoding="utf-8")
    assert main(['mine', '--train', str(graph), '--out', str(tmp_path / "rules.json")]) == 3
    record = _last_json(capsys.readouterr().err)
    assert record["error"] == "FormatError"
    assert "g.tsv:2" in record["message"]


@pytest.mark.parametrize("payload", ['{"train": {"dim": "eight"}}', '{"workers": "4"}', '{"train": {"epochs": 1.5}}'])
def test_wrong_config_type_exits_with_validation_code(tmp_path, perfect_predictor, payload, capsys):
    cands, scores = perfect_predictor
    config = tmp_path / "kglp.json"
    config.write_text(payload, encoding="utf-8")
    assert main(['-c', str(config), 'eval', '--scores', str(scores), '--candidates', str(cands)]) == 3
    record = _last_json(capsys.readouterr().err)
    assert record["error"] == "ConfigurationError"
    assert record["exit_code"] == 3
