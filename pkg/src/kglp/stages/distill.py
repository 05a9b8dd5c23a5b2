"""Stages 1..K: distill the previous ensemble into every single model."""

from __future__ import annotations

from typing import TYPE_CHECKING, List

import numpy as np

if TYPE_CHECKING:
    from ..runner import PipelineRunner, StageResult

from ..inference import distill
from ..model import ModelParams
from ..utils import parallel_map


def distillation_stage(runner: PipelineRunner, stage: int, previous: StageResult) -> StageResult:
    pool, teacher = runner.distill_pool(previous)
    config = runner.config.distill.resolved(runner.config.train)
    runner.logger.info(
        f"Distilling {len(pool)} queries into {len(previous.models)} students "
        f"(T={config.temperature}, {config.steps} steps)"
    )

    def student(item) -> ModelParams:
        index, model = item
        rng = np.random.default_rng([config.seed, stage, index])
        distilled, losses = distill(model.copy(), teacher, pool, runner.features, config, rng)
        if losses:
            runner.logger.debug(f"stage {stage} student {index}: final distillation loss {losses[-1]:.6f}")
        return distilled

    models: List[ModelParams] = parallel_map(student, list(enumerate(previous.models)), runner.workers)
    return runner.score_stage(stage, models)
