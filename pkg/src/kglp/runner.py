"""Staged inference pipeline: rule augmentation, ensembling and repeated distillation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import save_checkpoint
from .config import PipelineConfig
from .constants import REPORT_FILE, SCORES_FILE
from .errors import ValidationError
from .formats import CandidateSet
from .inference import ScoreMatrix, ensemble_average, mrr, predict, save_scores
from .model import Features, ModelParams
from .rules import RuleSet
from .stages import distillation_stage, rule_augmentation_stage
from .store import TripleStore
from .utils import write_json


@dataclass
class StageResult:
    stage: int
    models: List[ModelParams]
    eval_scores: List[ScoreMatrix]
    eval_ensemble: ScoreMatrix
    test_ensemble: Optional[ScoreMatrix]
    single_mrr: List[float]
    ensemble_mrr: float
    extra: Dict[str, Any] = field(default_factory=dict)

    def report(self) -> Dict[str, Any]:
        entry = {
            "stage": self.stage,
            "single_mrr": self.single_mrr,
            "single_mrr_mean": float(np.mean(self.single_mrr)),
            "single_mrr_best": float(np.max(self.single_mrr)),
            "ensemble_mrr": self.ensemble_mrr,
        }
        entry.update(self.extra)
        return entry


@dataclass
class PipelineReport:
    stages: List[Dict[str, Any]]
    final_scores: ScoreMatrix
    models: List[ModelParams]
    durations: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"stages": self.stages}


class PipelineRunner:
    """Runs stage 0 (rules + ensemble) and stages 1..K (distill + ensemble).

    Single-model and ensemble MRR are measured on the labelled evaluation
    set; the final ScoreMatrix scores the test candidates (or the evaluation
    candidates when no test set is given).
    """

    def __init__(
        self,
        config: PipelineConfig,
        models: Sequence[ModelParams],
        rules: RuleSet,
        store: TripleStore,
        features: Features,
        eval_set: CandidateSet,
        test_set: Optional[CandidateSet] = None,
        stages: Optional[int] = None,
        profile: bool = False,
    ):
        if not models:
            raise ValidationError("the pipeline needs at least one trained model", "Pass --models m1,m2,...")
        for i, model in enumerate(models):
            if model.num_entities != store.num_entities or model.num_base_relations != store.num_relations:
                raise ValidationError(
                    f"model {i} was trained on {model.num_entities} entities / {model.num_base_relations} relations, "
                    f"but the graph has {store.num_entities} / {store.num_relations}"
                )
            model.check_features(features)
        if not eval_set.has_truth or len(eval_set) == 0:
            raise ValidationError("the evaluation candidate set must be non-empty and labelled")
        self.config = config
        self.models = list(models)
        self.rules = rules
        self.store = store
        self.features = features
        self.eval_set = eval_set
        self.test_set = test_set
        self.num_stages = config.distill.stages if stages is None else stages
        if self.num_stages < 0:
            raise ValidationError(f"stages must be >= 0, got {self.num_stages}")
        self.profile = profile
        self.workers = 1 if config.deterministic else config.effective_workers()
        self.logger = logging.getLogger(__name__)

    def score_stage(self, stage: int, models: List[ModelParams]) -> StageResult:
        """Predict with every model, ensemble, and measure MRR on the evaluation set."""
        eval_scores = [predict(m, self.features, self.eval_set) for m in models]
        eval_ensemble = ensemble_average(eval_scores)
        test_ensemble = None
        if self.test_set is not None:
            test_ensemble = ensemble_average([predict(m, self.features, self.test_set) for m in models])
        tie_break = self.config.tie_break
        single = [mrr(s, self.eval_set, tie_break) for s in eval_scores]
        return StageResult(
            stage=stage,
            models=models,
            eval_scores=eval_scores,
            eval_ensemble=eval_ensemble,
            test_ensemble=test_ensemble,
            single_mrr=single,
            ensemble_mrr=mrr(eval_ensemble, self.eval_set, tie_break),
        )

    def distill_pool(self, previous: StageResult) -> Tuple[CandidateSet, ScoreMatrix]:
        """Candidates the students learn from and the previous ensemble's scores on them."""
        parts: List[Tuple[CandidateSet, ScoreMatrix]] = []
        if self.config.distill_on in ("eval", "both"):
            parts.append((self.eval_set, previous.eval_ensemble))
        if self.config.distill_on in ("test", "both") and self.test_set is not None:
            parts.append((self.test_set, previous.test_ensemble))
        if not parts:
            parts.append((self.eval_set, previous.eval_ensemble))
        pool = CandidateSet.concat([c for c, _ in parts])
        teacher = ScoreMatrix(
            np.concatenate([s.data for _, s in parts]),
            np.concatenate([s.row_lengths for _, s in parts]),
        )
        return pool, teacher

    def _banner(self, title: str) -> None:
        self.logger.info("=" * 60)
        self.logger.info(title)
        self.logger.info("=" * 60)

    def run(self) -> PipelineReport:
        self._banner("KGLP PIPELINE START")
        self.logger.info(
            f"Models: {len(self.models)} | Rules: {len(self.rules)} | Stages: {self.num_stages} | Workers: {self.workers}"
        )
        durations: Dict[str, float] = {}
        pipeline_start = time.time()

        self._banner("STAGE 0: rule augmentation + ensemble")
        start = time.time()
        result = rule_augmentation_stage(self)
        durations["stage 0"] = time.time() - start
        self._log_stage(result)
        stages = [result.report()]

        for stage in range(1, self.num_stages + 1):
            self._banner(f"STAGE {stage}: distillation + ensemble")
            start = time.time()
            result = distillation_stage(self, stage, result)
            durations[f"stage {stage}"] = time.time() - start
            self._log_stage(result)
            stages.append(result.report())

        total = time.time() - pipeline_start
        final = result.test_ensemble if result.test_ensemble is not None else result.eval_ensemble
        if self.profile:
            print("\n" + "=" * 40)
            print("📊 Performance Report")
            print("=" * 40)
            print(f"{'Stage':<20} | {'Duration (s)':<15}")
            print("-" * 40)
            for name, duration in durations.items():
                print(f"{name:<20} | {duration:.4f}s")
            print("-" * 40)
            print(f"{'Total Pipeline':<20} | {total:.4f}s")
            print("=" * 40 + "\n")

        self.logger.info("PIPELINE SUCCESS")
        return PipelineReport(stages=stages, final_scores=final, models=result.models, durations=durations)

    def _log_stage(self, result: StageResult) -> None:
        entry = result.report()
        self.logger.info(
            f"stage {result.stage}: single MRR mean={entry['single_mrr_mean']:.4f} "
            f"best={entry['single_mrr_best']:.4f} | ensemble MRR={result.ensemble_mrr:.4f}",
            extra={"stage": result.stage, "ensemble_mrr": result.ensemble_mrr},
        )


def write_report(out_dir: Path, report: PipelineReport, save_models: bool = False) -> Path:
    """Write report.json, the final scores and optionally the final students."""
    out_dir = Path(out_dir)
    write_json(out_dir / REPORT_FILE, report.to_dict())
    save_scores(out_dir / SCORES_FILE, report.final_scores)
    if save_models:
        for i, model in enumerate(report.models):
            save_checkpoint(out_dir / "students" / f"model_{i}", model)
    return out_dir


def run_pipeline(
    config: PipelineConfig,
    models: Sequence[ModelParams],
    rules: RuleSet,
    store: TripleStore,
    features: Features,
    eval_set: CandidateSet,
    test_set: Optional[CandidateSet] = None,
    stages: Optional[int] = None,
    profile: bool = False,
) -> PipelineReport:
    return PipelineRunner(config, models, rules, store, features, eval_set, test_set, stages, profile).run()
