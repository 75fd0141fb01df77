import json
import logging
import sys

import numpy as np
import pytest

from core import config as runtime_config_module
from core.scenario_config import parse_config
from utils.logger_config import LOGGER_NAME, RestenosisStructuredFormatter, setup_logging


@pytest.fixture
def load(tmp_path, monkeypatch):
    """Load the runtime config from a scratch file holding `text` (None: no file)."""
    path = tmp_path / "runtime_config.json"
    monkeypatch.setattr(runtime_config_module, "_CONFIG_PATH", path)
    for name in ("RESTENOSIS_OUTPUT_ROOT", "RESTENOSIS_LINEAR_SOLVER", "RESTENOSIS_ASSEMBLY_CHUNK"):
        monkeypatch.delenv(name, raising=False)

    def _load(text):
        if text is not None:
            path.write_text(text)
        runtime_config_module.load_runtime_config.cache_clear()
        return runtime_config_module.load_runtime_config()

    yield _load
    runtime_config_module.load_runtime_config.cache_clear()


def test_partial_file_overrides_only_its_keys(load):
    config = load(json.dumps({"sweep_workers": 4, "unknown_key": 1}))
    assert config.sweep_workers == 4
    assert config.assembly_chunk == 2048
    assert config.default_linear_solver == "direct"
    assert not hasattr(config, "unknown_key")


def test_missing_file_uses_environment(load, monkeypatch):
    monkeypatch.setenv("RESTENOSIS_OUTPUT_ROOT", "/tmp/elsewhere")
    config = load(None)
    assert config.output_root == "/tmp/elsewhere"


@pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
def test_invalid_file_falls_back_to_defaults(load, text):
    config = load(text)
    assert config.output_root == "results"
    assert config.results_db == "results/runs.duckdb"


def test_values_are_sanitized(load):
    config = load(json.dumps({"default_linear_solver": "magic", "assembly_chunk": 0, "sweep_workers": -3}))
    assert config.default_linear_solver == "direct"
    assert config.assembly_chunk == 1
    assert config.sweep_workers == 1


def test_config_is_frozen(load):
    config = load(None)
    with pytest.raises(AttributeError):
        config.log_level = "DEBUG"


def test_default_solver_reaches_scenario_configs(load):
    load(json.dumps({"default_linear_solver": "iterative"}))
    assert parse_config("scenario = block\n").time.linear_solver == "iterative"
    assert parse_config("scenario = block\n[time]\nlinear_solver = direct\n").time.linear_solver == "direct"


# ── Structured logging ──
def test_formatter_renders_one_json_object():
    record = logging.LogRecord("restenosis_core", logging.INFO, __file__, 12, "step accepted", None, None)
    record.extra_fields = {"t": 3.0, "residual_history": np.array([1.0, 1e-6]), "flags": ("retried",)}
    payload = json.loads(RestenosisStructuredFormatter().format(record))
    assert payload["message"] == "step accepted"
    assert payload["level"] == "INFO"
    assert payload["t"] == 3.0
    assert payload["residual_history"] == [1.0, 1e-6]
    assert payload["flags"] == ["retried"]
    assert "timestamp" in payload


def test_formatter_includes_exceptions():
    try:
        raise RuntimeError("boom")
    except RuntimeError:
        record = logging.LogRecord("restenosis_core", logging.ERROR, __file__, 1, "failed", None, sys.exc_info())
    payload = json.loads(RestenosisStructuredFormatter().format(record))
    assert "RuntimeError: boom" in payload["exception"]


def test_log_file_receives_json_lines(tmp_path):
    logger = logging.getLogger(LOGGER_NAME)
    saved = (list(logger.handlers), logger.level, logger.propagate)
    log_file = tmp_path / "logs" / "run.jsonl"
    try:
        setup_logging("INFO", log_file=str(log_file))
        logger.info("step accepted", extra={"extra_fields": {"dt": np.float64(0.5)}})
        logger.debug("below the level")
        for handler in logger.handlers:
            handler.flush()
        lines = log_file.read_text(encoding="utf-8").splitlines()
    finally:
        for handler in logger.handlers:
            handler.close()
        logger.handlers[:] = saved[0]
        logger.setLevel(saved[1])
        logger.propagate = saved[2]
    assert len(lines) == 1
    payload = json.loads(lines[0])
    assert payload["message"] == "step accepted"
    assert payload["dt"] == 0.5
    assert payload["module"] == "test_runtime_config"
