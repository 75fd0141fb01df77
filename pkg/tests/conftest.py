import json

import numpy as np
import pytest

from core import config as runtime_config_module
from core.scenarios import build_scenario
from tests.builders import C_E_TH, block_config


@pytest.fixture
def equilibrium_block():
    """One-element block at rest: no influx, ECM at its threshold."""
    return build_scenario(block_config(peak_P=0, extra=f"[initial]\nc_E = {C_E_TH}\n"))


@pytest.fixture
def runtime_config(tmp_path, monkeypatch):
    """Point the runtime config at a scratch directory for the duration of a test."""
    path = tmp_path / "runtime_config.json"
    path.write_text(json.dumps({
        "output_root": str(tmp_path / "results"),
        "results_db": str(tmp_path / "results" / "runs.duckdb"),
        "log_level": "WARNING",
    }))
    monkeypatch.setattr(runtime_config_module, "_CONFIG_PATH", path)
    runtime_config_module.load_runtime_config.cache_clear()
    yield runtime_config_module.load_runtime_config()
    runtime_config_module.load_runtime_config.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
