# tests/test_init.py

"""Tests for __init__.py (version fetching and exports)."""

import importlib
from importlib.metadata import PackageNotFoundError
from unittest.mock import patch

import kglp


def test_version_installed():
    with patch('importlib.metadata.version') as mock_version:
        mock_version.return_value = "0.1.0"
        importlib.reload(kglp)
        assert kglp.__version__ == "0.1.0"
        mock_version.assert_called_with("kglp")


def test_version_dev_fallback():
    with patch('importlib.metadata.version', side_effect=PackageNotFoundError("kglp")):
        importlib.reload(kglp)
    assert kglp.__version__ == "dev"


def test_exports():
    assert kglp.__all__ == ["main"]
    assert callable(kglp.main)
