"""Stage 0: rule augmentation, brief finetuning, then the first ensemble."""

from __future__ import annotations

from typing import TYPE_CHECKING, List

import numpy as np

if TYPE_CHECKING:
    from ..runner import PipelineRunner, StageResult

from ..model import ModelParams
from ..rules import augment_base
from ..training import finetune
from ..utils import parallel_map


def _model_space(triples: np.ndarray, model: ModelParams) -> np.ndarray:
    """Base triples plus their inverse copies when the model was trained with inverses."""
    if not model.inverse_relations or len(triples) == 0:
        return triples
    inverse = np.stack([triples[:, 2], triples[:, 1] + model.num_base_relations, triples[:, 0]], axis=1)
    return np.concatenate([triples, inverse])


def rule_augmentation_stage(runner: PipelineRunner) -> StageResult:
    _, new_triples = augment_base(
        runner.store, runner.rules, runner.config.rules.augment_threshold, runner.workers
    )
    runner.logger.info(f"Rule augmentation produced {len(new_triples)} new training triples")
    epochs = runner.config.rules.finetune_epochs
    train_config = runner.config.train

    def tune(item) -> ModelParams:
        index, model = item
        model = model.copy()
        rng = np.random.default_rng([train_config.seed, index])
        finetune(model, runner.features, _model_space(new_triples, model), train_config, epochs, rng)
        return model

    models: List[ModelParams] = parallel_map(tune, list(enumerate(runner.models)), runner.workers)
    result = runner.score_stage(0, models)
    result.extra["added_triples"] = int(len(new_triples))
    return result
