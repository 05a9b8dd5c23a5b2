"""CLI argument parsing and main entrypoint for `kglp`.

This module provides an argparse parser with one subcommand per pipeline
step and an optional rich-powered --help renderer (when rich is installed).
Every subcommand reports failures as one JSON line on stderr.
"""

import argparse
import json
import logging
import sys
import textwrap
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from .config import LoggingConfig, PipelineConfig, TrainConfig, resolve_workers
from .constants import (
    COMMAND_ALIASES,
    COMMAND_DESCRIPTIONS,
    ENTITY_FEAT_FILE,
    RELATION_FEAT_FILE,
    REPORT_FILE,
    TRAIN_FILE,
    VALID_FILE,
)
from .errors import EXIT_OK, EXIT_RUNTIME, ConfigurationError, error_record, exit_code_for, format_error
from .utils import _has_rich, setup_logging

logger = logging.getLogger("kglp.cli")


def _version() -> str:
    try:
        from importlib.metadata import PackageNotFoundError, version
    except ImportError:  # pragma: no cover
        return "dev"
    try:
        return version("kglp")
    except PackageNotFoundError:
        return "dev"


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _path_list(text: str) -> List[Path]:
    return [Path(x) for x in text.split(",") if x.strip()]


def _add_feature_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--entity-feat", type=Path, default=None, help="Entity feature matrix (f32le + sidecar)")
    p.add_argument("--rel-feat", type=Path, default=None, help="Relation feature matrix (f32le + sidecar)")


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=None, help="Training epochs")
    p.add_argument("--dim", type=int, default=None, help="Embedding dimension (even)")
    p.add_argument("--hidden", type=int, default=None, help="MLP hidden width")
    p.add_argument("--batch-size", type=int, default=None, help="Positives per batch")
    p.add_argument("--neg-samples", type=int, default=None, help="Negatives per positive")
    p.add_argument("--lr-shallow", type=float, default=None, help="Adagrad rate for shallow embeddings")
    p.add_argument("--lr-dense", type=float, default=None, help="Adam rate for encoder weights")
    p.add_argument("--variant", default=None,
                   choices=["concat", "concat-mlp", "concat-mlp-residual-unweighted", "concat-mlp-residual"],
                   help="Encoder variant")
    p.add_argument("--decoder", default=None, choices=["complex", "distmult"], help="Decoder")
    p.add_argument("--eval-every", type=int, default=None, help="Evaluate every N steps (0 = once per epoch)")
    p.add_argument("--seed", type=int, default=None, help="Random seed")
    p.add_argument("--inverse", dest="inverse_relations", action=argparse.BooleanOptionalAction, default=None,
                   help="Train with inverse relations")


def _add_global_options(p: argparse.ArgumentParser, defaults: PipelineConfig, suppress: bool = False) -> None:
    """Options accepted before or after the subcommand.

    Subcommand copies use SUPPRESS defaults so an unset flag never clobbers
    the value parsed at the top level.
    """
    def default(value: Any) -> Any:
        return argparse.SUPPRESS if suppress else value

    p.add_argument("-c", "--config", type=Path, default=default(None), help="JSON or TOML pipeline configuration")
    p.add_argument("--log-level", type=str, choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                   default=default(defaults.logging.level), help="Logging verbosity level")
    p.add_argument("--log-format", type=str, choices=["text", "json"],
                   default=default(defaults.logging.format), help="Log file format (text or json)")
    p.add_argument("--log-file", type=Path, default=default(defaults.logging.file), help="Optional rotating log file")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=default(None),
                   help="Force single-writer updates everywhere")
    p.add_argument("-w", "--workers", type=int, default=default(None),
                   help=f"Worker threads (default: {defaults.workers}; KGLP_THREADS overrides)")


def build_parser(defaults: Optional[PipelineConfig] = None) -> argparse.ArgumentParser:
    """Build and return the argument parser for the CLI.

    This function is separated so tests can import and exercise the
    parser without invoking side effects.
    """
    defaults = defaults or PipelineConfig()

    epilog = textwrap.dedent("""\
        Examples:
          kglp prepare --out data/                              # Seeded synthetic benchmark
          kglp train --train data/train.tsv --out models/m0     # Train one model
          kglp mine --train data/train.tsv --subgraphs 5 --out rules.json
          kglp eval --scores scores.f32 --candidates data/valid.cand
          kglp pipeline --models models/m0,models/m1 --rules rules.json --stages 3 --out run/
          kglp ablate --data data/ --seeds 0,1,2 --out ablation.json""")

    parser = argparse.ArgumentParser(
        prog="kglp",
        description="Knowledge-graph link prediction: feature-fusion embeddings, Horn rules, ensembles and distillation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=epilog,
    )
    _add_global_options(parser, defaults)
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}",
                        help="Show program's version number and exit")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    shared = argparse.ArgumentParser(add_help=False)
    _add_global_options(shared, defaults, suppress=True)

    p = sub.add_parser("prepare", parents=[shared], help=COMMAND_DESCRIPTIONS["prepare"])
    p.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    p.add_argument("--spec", type=Path, default=None, help="JSON synthetic spec (flags override it)")
    p.add_argument("--entities", type=int, default=None, help="Number of entities")
    p.add_argument("--relations", type=int, default=None, help="Number of relations, rule relations included")
    p.add_argument("--rule-relations", type=int, default=None, help="Relations planted as compositions")
    p.add_argument("--noise", type=float, default=None, help="Noise edges as a fraction of clean edges")
    p.add_argument("--feature-dim", type=int, default=None, help="Feature dimension")
    p.add_argument("--latent-dim", type=int, default=None, help="Latent dimension (even)")
    p.add_argument("--candidates", type=int, default=None, help="Candidates per query, truth included")
    p.add_argument("--splits", type=_float_list, default=None, help="train,valid,test fractions")
    p.add_argument("--seed", type=int, default=None, help="Random seed")

    p = sub.add_parser("train", parents=[shared], help=COMMAND_DESCRIPTIONS["train"])
    p.add_argument("--train", type=Path, default=None, help="Training triples TSV")
    _add_feature_args(p)
    p.add_argument("--valid", type=Path, default=None, help="Validation candidate file")
    p.add_argument("--out", type=Path, default=None, help="Checkpoint directory")
    _add_train_overrides(p)

    p = sub.add_parser("mine", parents=[shared], help=COMMAND_DESCRIPTIONS["mine"])
    p.add_argument("--train", type=Path, default=None, help="Training triples TSV")
    p.add_argument("--subgraphs", type=int, default=None, help="Number of sampled subgraphs")
    p.add_argument("--slice-len", type=int, default=None, help="Triples per subgraph (default: all)")
    p.add_argument("--min-support", type=int, default=None, help="Minimum rule support")
    p.add_argument("--min-conf", type=float, default=None, help="Minimum confidence kept after merging")
    p.add_argument("--report", type=_float_list, default=None, help="Also count rules at these thresholds")
    p.add_argument("--no-inverse", action="store_true", help="Mine the graph as given, without inverse relations")
    p.add_argument("--out", type=Path, default=None, help="Rules JSON file")

    p = sub.add_parser("apply-rules", parents=[shared], help=COMMAND_DESCRIPTIONS["apply-rules"])
    p.add_argument("--train", type=Path, default=None, help="Training triples TSV")
    p.add_argument("--rules", type=Path, default=None, help="Rules JSON file")
    p.add_argument("--threshold", type=float, default=None, help="Confidence threshold")
    p.add_argument("--out", type=Path, required=True, help="Augmented triples TSV")

    p = sub.add_parser("eval", parents=[shared], help=COMMAND_DESCRIPTIONS["eval"])
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=Path, help="Checkpoint directory to score with")
    src.add_argument("--scores", type=Path, help="Precomputed score file")
    p.add_argument("--candidates", type=Path, required=True, help="Labelled candidate file")
    _add_feature_args(p)
    p.add_argument("--tie-break", choices=["optimistic", "average"], default=None, help="MRR tie rule")
    p.add_argument("--out", type=Path, default=None, help="Write the model's scores here")

    p = sub.add_parser("ensemble", parents=[shared], help=COMMAND_DESCRIPTIONS["ensemble"])
    p.add_argument("--scores", type=_path_list, required=True, help="Comma-separated score files")
    p.add_argument("--out", type=Path, required=True, help="Averaged score file")
    p.add_argument("--candidates", type=Path, default=None, help="Labelled candidates to report MRR on")

    p = sub.add_parser("distill", parents=[shared], help=COMMAND_DESCRIPTIONS["distill"])
    p.add_argument("--model", type=Path, required=True, help="Student checkpoint directory")
    p.add_argument("--teacher", type=Path, required=True, help="Teacher (ensemble) score file")
    p.add_argument("--candidates", type=Path, required=True, help="Candidates aligned with the teacher scores")
    _add_feature_args(p)
    p.add_argument("--temperature", type=float, default=None, help="Softmax temperature")
    p.add_argument("--steps", type=int, default=None, help="Optimizer steps")
    p.add_argument("--out", type=Path, required=True, help="Distilled checkpoint directory")

    p = sub.add_parser("pipeline", parents=[shared], help=COMMAND_DESCRIPTIONS["pipeline"])
    p.add_argument("--models", type=_path_list, required=True, help="Comma-separated checkpoint directories")
    p.add_argument("--rules", type=Path, default=None, help="Rules JSON file (default: no rules)")
    p.add_argument("--train", type=Path, default=None, help="Training triples TSV")
    _add_feature_args(p)
    p.add_argument("--valid", type=Path, default=None, help="Labelled evaluation candidates")
    p.add_argument("--test", type=Path, default=None, help="Test candidates (labels optional)")
    p.add_argument("--stages", type=int, default=None, help="Distillation stages after stage 0")
    p.add_argument("--out", type=Path, default=None, help="Output directory for report and scores")
    p.add_argument("--save-models", action="store_true", help="Also write the final students")
    p.add_argument("--profile", action="store_true", help="Print a per-stage duration table")

    p = sub.add_parser("ablate", parents=[shared], help=COMMAND_DESCRIPTIONS["ablate"])
    p.add_argument("--data", type=Path, default=None, help="Dataset directory written by `prepare`")
    p.add_argument("--train", type=Path, default=None, help="Training triples TSV")
    _add_feature_args(p)
    p.add_argument("--valid", type=Path, default=None, help="Validation candidate file")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4], help="Comma-separated seeds")
    p.add_argument("--out", type=Path, default=None, help="Write the ablation report here")
    _add_train_overrides(p)

    return parser


def translate_command(argv: List[str]) -> List[str]:
    """Replace a command alias (e.g. `run`) with its canonical name."""
    argv = list(argv)
    takes_value = {"-c", "--config", "--log-level", "--log-format", "--log-file", "-w", "--workers"}
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in takes_value:
            i += 2
            continue
        if token.startswith("-"):
            i += 1
            continue
        argv[i] = COMMAND_ALIASES.get(token, token)
        break
    return argv


# --- configuration -----------------------------------------------------------------

def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file first, then global flags on top."""
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    logging_cfg = LoggingConfig(
        level=args.log_level,
        format=args.log_format,
        file=args.log_file,
        rotation_max_bytes=cfg.logging.rotation_max_bytes,
        rotation_backup_count=cfg.logging.rotation_backup_count,
    )
    updates: Dict[str, Any] = {"logging": logging_cfg}
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.deterministic is not None:
        updates["deterministic"] = args.deterministic
    cfg = replace(cfg, **updates)
    train = replace(cfg.train, workers=resolve_workers(args.workers or cfg.train.workers))
    if args.deterministic is not None:
        train = replace(train, deterministic=args.deterministic)
    return replace(cfg, train=train)


_TRAIN_FLAGS = {
    "epochs": "epochs",
    "dim": "dim",
    "hidden": "mlp_hidden",
    "batch_size": "batch_size",
    "neg_samples": "neg_samples",
    "lr_shallow": "lr_shallow",
    "lr_dense": "lr_dense",
    "variant": "variant",
    "decoder": "decoder",
    "eval_every": "eval_every",
    "seed": "seed",
    "inverse_relations": "inverse_relations",
}


def train_config_from_args(args: argparse.Namespace, cfg: PipelineConfig) -> TrainConfig:
    overrides = {
        field: getattr(args, flag) for flag, field in _TRAIN_FLAGS.items() if getattr(args, flag, None) is not None
    }
    return replace(cfg.train, **overrides)


def _require(value: Optional[Path], cfg: PipelineConfig, key: str, flag: str) -> Path:
    path = value or cfg.path(key)
    if path is None:
        raise ConfigurationError(f"{flag} is required", f"Pass {flag} or set paths.{key} in the config file.")
    return path


def _emit(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True))


# --- commands -----------------------------------------------------------------------

def _load_features(args: argparse.Namespace, cfg: PipelineConfig, num_entities: int, num_relations: int):
    from .formats import load_features
    from .model import Features

    return Features(
        entity=load_features(_require(args.entity_feat, cfg, "entity_feat", "--entity-feat"), num_entities),
        relation=load_features(_require(args.rel_feat, cfg, "rel_feat", "--rel-feat"), num_relations),
    )


def cmd_prepare(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .synthetic import SyntheticSpec, generate_synthetic

    base: Dict[str, Any] = json.loads(args.spec.read_text(encoding="utf-8")) if args.spec else {}
    flags = {
        "num_entities": args.entities,
        "num_relations": args.relations,
        "num_rule_relations": args.rule_relations,
        "noise_fraction": args.noise,
        "feature_dim": args.feature_dim,
        "latent_dim": args.latent_dim,
        "num_candidates": args.candidates,
        "splits": args.splits,
        "seed": args.seed,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    dataset = generate_synthetic(SyntheticSpec.from_dict(base), args.out)
    _emit({"out": str(args.out), "train": len(dataset.train), "valid": len(dataset.valid), "test": len(dataset.test)})
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .formats import load_candidates, load_triples
    from .training import train

    store = load_triples(_require(args.train, cfg, "train", "--train"))
    features = _load_features(args, cfg, store.num_entities, store.num_relations)
    valid_path = args.valid or cfg.path("valid")
    valid = load_candidates(valid_path) if valid_path else None
    out = _require(args.out, cfg, "out", "--out")
    result = train(store, features, train_config_from_args(args, cfg), valid, out, cfg.tie_break)
    _emit({"out": str(out), "best_step": result.best_step, "best_valid_mrr": result.best_valid_mrr})
    return EXIT_OK


def cmd_mine(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .formats import load_triples
    from .rules import confidence_report, mine_subgraph_rules, save_rules
    from .store import add_inverse_relations

    store = load_triples(_require(args.train, cfg, "train", "--train"))
    if not args.no_inverse:
        store = add_inverse_relations(store)
    rules_cfg = cfg.rules
    slice_len = args.slice_len or rules_cfg.slice_len
    ruleset, counts = mine_subgraph_rules(
        store,
        args.subgraphs or rules_cfg.subgraphs,
        slice_len,
        rules_cfg.min_support if args.min_support is None else args.min_support,
        rules_cfg.min_conf if args.min_conf is None else args.min_conf,
        1 if cfg.deterministic else cfg.effective_workers(),
    )
    out = _require(args.out, cfg, "rules", "--out")
    save_rules(out, ruleset)
    payload: Dict[str, Any] = {"out": str(out), "rules": len(ruleset), "per_subgraph": counts}
    if args.report:
        payload["report"] = confidence_report(ruleset, args.report)
    _emit(payload)
    return EXIT_OK


def cmd_apply_rules(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .formats import load_triples, save_triples
    from .rules import augment_base, load_rules

    store = load_triples(_require(args.train, cfg, "train", "--train"))
    ruleset = load_rules(_require(args.rules, cfg, "rules", "--rules"))
    threshold = cfg.rules.augment_threshold if args.threshold is None else args.threshold
    augmented, added = augment_base(store, ruleset, threshold, 1 if cfg.deterministic else cfg.effective_workers())
    save_triples(args.out, augmented)
    _emit({"out": str(args.out), "added": int(len(added)), "triples": len(augmented)})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .checkpoint import load_checkpoint
    from .formats import load_candidates
    from .inference import load_scores, mrr, predict, save_scores

    candidates = load_candidates(args.candidates)
    if args.model:
        model = load_checkpoint(args.model)
        features = _load_features(args, cfg, model.num_entities, model.num_base_relations)
        scores = predict(model, features, candidates)
        if args.out:
            save_scores(args.out, scores)
    else:
        scores = load_scores(args.scores)
    _emit({"mrr": mrr(scores, candidates, args.tie_break or cfg.tie_break)})
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .formats import load_candidates
    from .inference import ensemble_average, load_scores, mrr, save_scores

    averaged = ensemble_average([load_scores(p) for p in args.scores])
    save_scores(args.out, averaged)
    payload: Dict[str, Any] = {"out": str(args.out), "models": len(args.scores)}
    if args.candidates:
        payload["mrr"] = mrr(averaged, load_candidates(args.candidates), cfg.tie_break)
    _emit(payload)
    return EXIT_OK


def cmd_distill(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .checkpoint import load_checkpoint, read_model_json, save_checkpoint
    from .formats import load_candidates
    from .inference import distill, load_scores

    model = load_checkpoint(args.model)
    features = _load_features(args, cfg, model.num_entities, model.num_base_relations)
    overrides = {k: v for k, v in (("temperature", args.temperature), ("steps", args.steps)) if v is not None}
    config = replace(cfg.distill, **overrides).resolved(cfg.train)
    model, losses = distill(model, load_scores(args.teacher), load_candidates(args.candidates), features, config)
    save_checkpoint(args.out, model, train_config=read_model_json(args.model).get("train_config"))
    _emit({"out": str(args.out), "steps": len(losses), "final_loss": losses[-1] if losses else None})
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .checkpoint import load_checkpoint
    from .formats import load_candidates, load_triples
    from .rules import RuleSet, load_rules
    from .runner import run_pipeline, write_report

    store = load_triples(_require(args.train, cfg, "train", "--train"))
    features = _load_features(args, cfg, store.num_entities, store.num_relations)
    models = [load_checkpoint(p) for p in args.models]
    rules_path = args.rules or cfg.path("rules")
    ruleset = load_rules(rules_path) if rules_path else RuleSet()
    eval_set = load_candidates(_require(args.valid, cfg, "valid", "--valid"))
    test_path = args.test or cfg.path("test")
    test_set = load_candidates(test_path) if test_path else None
    report = run_pipeline(cfg, models, ruleset, store, features, eval_set, test_set, args.stages, args.profile)
    out = args.out or cfg.path("out")
    if out:
        write_report(out, report, save_models=args.save_models)
    _emit(report.to_dict())
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .ablation import run_ablation
    from .formats import load_candidates, load_triples
    from .utils import write_json

    if args.data:
        args.train = args.train or args.data / TRAIN_FILE
        args.entity_feat = args.entity_feat or args.data / ENTITY_FEAT_FILE
        args.rel_feat = args.rel_feat or args.data / RELATION_FEAT_FILE
        args.valid = args.valid or args.data / VALID_FILE
    store = load_triples(_require(args.train, cfg, "train", "--train"))
    features = _load_features(args, cfg, store.num_entities, store.num_relations)
    valid = load_candidates(_require(args.valid, cfg, "valid", "--valid"))
    report = run_ablation(store, features, valid, train_config_from_args(args, cfg), args.seeds, cfg.tie_break)
    if args.out:
        out = args.out if args.out.suffix else args.out / REPORT_FILE
        write_json(out, report)
    _emit(report)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, PipelineConfig], int]] = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "mine": cmd_mine,
    "apply-rules": cmd_apply_rules,
    "eval": cmd_eval,
    "ensemble": cmd_ensemble,
    "distill": cmd_distill,
    "pipeline": cmd_pipeline,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    cli_args = list(sys.argv[1:] if argv is None else argv)

    # Config-file defaults shape the help text, so locate --config first.
    pre_parser = argparse.ArgumentParser(add_help=False)
    pre_parser.add_argument("-c", "--config", type=Path, default=None)
    known_args, _ = pre_parser.parse_known_args(cli_args)
    try:
        file_config = PipelineConfig.from_file(known_args.config) if known_args.config else PipelineConfig()
    except Exception as e:
        print(error_record(e), file=sys.stderr)
        return exit_code_for(e)

    parser = build_parser(defaults=file_config)

    # Early --help interception so rich can render a prettier help screen
    if len(cli_args) > 0 and cli_args[0] in ("-h", "--help"):
        if _has_rich():
            from rich.console import Console

            from .help_renderer import render_rich_help

            render_rich_help(Console(), parser)
        else:
            parser.print_help()
        return EXIT_OK

    args = parser.parse_args(translate_command(cli_args))

    try:
        cfg = resolve_config(args)
        setup_logging(cfg.logging)
        return COMMANDS[args.command](args, cfg)
    except Exception as e:
        logger.error(format_error(e))
        logger.debug("Traceback", exc_info=True)
        print(error_record(e), file=sys.stderr)
        return exit_code_for(e) if not isinstance(e, OSError) else EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
