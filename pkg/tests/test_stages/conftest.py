# tests/test_stages/conftest.py

from unittest.mock import Mock

import pytest

from kglp.config import DistillConfig, PipelineConfig, RuleConfig, TrainConfig


@pytest.fixture
def mock_runner(make_model, tiny_features, chain_store) -> Mock:
    runner = Mock()
    runner.config = PipelineConfig(
        train=TrainConfig(dim=4, mlp_hidden=5, lr_shallow=0.2, lr_dense=0.002, seed=3),
        distill=DistillConfig(steps=2, batch_size=2, temperature=2.0),
        rules=RuleConfig(augment_threshold=0.9, finetune_epochs=2),
    )
    runner.models = [make_model(seed=0), make_model(seed=1)]
    runner.features = tiny_features
    runner.store = chain_store
    runner.rules = Mock()
    runner.workers = 1
    runner.score_stage.side_effect = lambda stage, models: Mock(stage=stage, models=models, extra={})
    return runner
