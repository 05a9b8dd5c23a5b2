"""Constants for the kglp package."""

from typing import Dict, Tuple

# Environment override for the worker count; the only variable kglp reads.
THREADS_ENV = "KGLP_THREADS"

META_SUFFIX = ".meta.json"
F32_DTYPE = "f32le"

# Largest entity or relation id; ids index int32 sparse matrices
MAX_ID = 2 ** 31 - 1

# Canonical subcommands, in pipeline order
COMMAND_NAMES: Tuple[str, ...] = (
    "prepare",
    "train",
    "mine",
    "apply-rules",
    "eval",
    "ensemble",
    "distill",
    "pipeline",
    "ablate",
)

# Maps accepted aliases to their canonical subcommand
COMMAND_ALIASES: Dict[str, str] = {
    "generate": "prepare",
    "synthetic": "prepare",
    "fit": "train",
    "rules": "mine",
    "apply_rules": "apply-rules",
    "augment": "apply-rules",
    "evaluate": "eval",
    "bag": "ensemble",
    "run": "pipeline",
}

COMMAND_DESCRIPTIONS: Dict[str, str] = {
    "prepare": "Generate a seeded synthetic rule-governed benchmark",
    "train": "Train a ComplEx-CMRC model with negative sampling",
    "mine": "Mine closed Horn rules over sampled subgraphs",
    "apply-rules": "Augment a training graph with high-confidence rule predictions",
    "eval": "Score candidates and report MRR",
    "ensemble": "Average-bag several score files",
    "distill": "Distill ensemble scores into a single model",
    "pipeline": "Rule augmentation, ensemble and staged distillation",
    "ablate": "Encoder/decoder/inverse-relation ablation grid",
}

# Standard file names inside dataset / output directories
TRAIN_FILE = "train.tsv"
VALID_FILE = "valid.cand"
TEST_FILE = "test.cand"
ENTITY_FEAT_FILE = "entity_feat.f32"
RELATION_FEAT_FILE = "relation_feat.f32"
PLANTED_RULES_FILE = "planted_rules.json"
SPEC_FILE = "spec.json"
MODEL_JSON = "model.json"
METRICS_FILE = "metrics.jsonl"
REPORT_FILE = "report.json"
SCORES_FILE = "scores.f32"
