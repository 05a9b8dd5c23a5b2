# tests/test_errors.py

import json

import pytest

from kglp.errors import (
    ConfigurationError,
    DivergenceError,
    FormatError,
    KglpError,
    ValidationError,
    error_record,
    exit_code_for,
    format_error,
)


def test_kglp_error_structure():
    error = KglpError("Something went wrong", suggestion="Try doing this instead")
    assert str(error) == "Something went wrong"
    assert error.suggestion == "Try doing this instead"
    assert error.exit_code == 4


def test_validation_errors_share_exit_code():
    assert ValidationError("bad id").exit_code == 3
    assert FormatError("x.tsv", "oops").exit_code == 3
    assert ConfigurationError("bad key").exit_code == 3


def test_format_error_with_line():
    error = FormatError("data/train.tsv", "expected 3 fields", line=7)
    assert str(error) == "Malformed file data/train.tsv:7: expected 3 fields"
    assert error.line == 7
    assert error.reason == "expected 3 fields"
    assert str(FormatError("m.json", "truncated")) == "Malformed file m.json: truncated"


def test_configuration_error():
    error = ConfigurationError("Invalid key", suggestion="Check config file")
    assert "Configuration Error: Invalid key" in str(error)
    assert error.suggestion == "Check config file"


def test_divergence_error_default_suggestion():
    error = DivergenceError("train", "loss became nan at step 3")
    assert str(error) == "Divergence in train: loss became nan at step 3"
    assert "learning rates" in error.suggestion
    assert DivergenceError("distill", "x", suggestion="Lower T").suggestion == "Lower T"


@pytest.mark.parametrize("error,expected", [
    (KglpError("Boom", suggestion="Fix it"), "Error: Boom\nSuggestion: Fix it"),
    (ValidationError("Boom"), "Error: Boom"),
    (ValueError("Generic error"), "Unexpected Error: Generic error"),
])
def test_format_error(error, expected):
    assert format_error(error) == expected


def test_exit_code_for_foreign_errors():
    assert exit_code_for(RuntimeError("x")) == 4


def test_error_record():
    record = json.loads(error_record(ConfigurationError("bad", "fix")))
    assert record == {
        "error": "ConfigurationError",
        "message": "Configuration Error: bad",
        "suggestion": "fix",
        "exit_code": 3,
    }
    plain = json.loads(error_record(KeyError("k")))
    assert plain["suggestion"] is None
    assert plain["exit_code"] == 4
