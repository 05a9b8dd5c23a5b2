# tests/conftest.py

"""Pytest fixtures for kglp."""

import logging
import sys
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

# Fix for src layout: Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from kglp.config import TrainConfig
from kglp.decoder import Decoder
from kglp.encoder import EncoderVariant
from kglp.formats import CandidateSet, FeatureMatrix
from kglp.model import Features, init_model
from kglp.store import TripleStore
from kglp.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(autouse=True)
def disable_rich_in_tests():
    """Force plain logging in tests to avoid Rich/pytest caplog conflicts."""
    with patch("kglp.utils._has_rich", return_value=False):
        yield


@pytest.fixture(autouse=True)
def reset_kglp_logger():
    """setup_logging reuses existing handlers, so every test starts clean."""
    yield
    logger = logging.getLogger("kglp")
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def chain_store() -> TripleStore:
    """r2 is exactly r0 followed by r1 on six entities."""
    return TripleStore(
        [
            (0, 0, 1), (2, 0, 3), (4, 0, 5),
            (1, 1, 2), (3, 1, 4), (5, 1, 0),
            (0, 2, 2), (2, 2, 4), (4, 2, 0),
        ],
        6,
        3,
    )


@pytest.fixture
def tiny_features() -> Features:
    rng = np.random.default_rng(7)
    return Features(
        entity=FeatureMatrix(rng.standard_normal((6, 3))),
        relation=FeatureMatrix(rng.standard_normal((3, 3))),
    )


@pytest.fixture
def make_model(tiny_features):
    """Factory for small models over the six-entity, three-relation fixtures."""

    def _make(variant=EncoderVariant.CONCAT_MLP_RESIDUAL, decoder=Decoder.COMPLEX, inverse=True, seed=0, dim=4, hidden=5):
        return init_model(
            np.random.default_rng(seed),
            6,
            3,
            tiny_features,
            dim,
            hidden,
            variant,
            decoder,
            inverse_relations=inverse,
        )

    return _make


@pytest.fixture
def labelled_candidates() -> CandidateSet:
    return CandidateSet([0, 2, 4], [0, 1, 2], [[1, 3, 5], [4, 0, 1, 2], [0, 1]], [0, 0, 0])


@pytest.fixture
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_entities=40,
        num_relations=4,
        num_rule_relations=1,
        feature_dim=8,
        latent_dim=4,
        num_candidates=10,
        seed=3,
    )


@pytest.fixture
def small_dataset(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture
def dataset_features(small_dataset) -> Features:
    return Features(small_dataset.entity_features, small_dataset.relation_features)


@pytest.fixture
def synthetic_dir(tmp_path: Path, small_spec) -> Path:
    out = tmp_path / "data"
    generate_synthetic(small_spec, out)
    return out


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(
        dim=8,
        mlp_hidden=16,
        lr_shallow=0.1,
        lr_dense=1e-3,
        batch_size=32,
        neg_samples=5,
        workers=1,
        epochs=2,
        seed=0,
    )
