"""
Restenosis Core - Runtime config loader.

Machine-level knobs (where results go, logging, assembly chunking, sweep
parallelism). Reads runtime_config.json, with fallback to RESTENOSIS_* env
vars. Returns an immutable (frozen) dataclass. Physics and time stepping are
NOT here: they come from the scenario configuration text.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from utils.logger_config import get_logger

logger = get_logger()

_CONFIG_PATH = Path(
    os.getenv("RESTENOSIS_RUNTIME_CONFIG", str(Path(__file__).resolve().parent.parent / "runtime_config.json"))
)

_LINEAR_SOLVERS = ("direct", "iterative")


@dataclass(frozen=True)
class RuntimeConfig:
    """Runtime knobs. Immutable.

    `assembly_chunk` bounds how many elements go through one vectorized
    kernel call; memory grows linearly with it (56x56 doubles per element).
    """
    output_root: str
    results_db: str
    log_level: str
    log_file: str
    assembly_chunk: int
    sweep_workers: int
    default_linear_solver: str


def _from_env() -> dict:
    """Defaults derived from the environment; never fails."""
    return {
        "output_root": os.getenv("RESTENOSIS_OUTPUT_ROOT", "results"),
        "results_db": os.getenv("RESTENOSIS_RESULTS_DB", "results/runs.duckdb"),
        "log_level": os.getenv("RESTENOSIS_LOG_LEVEL", "INFO"),
        "log_file": os.getenv("RESTENOSIS_LOG_FILE", ""),
        "assembly_chunk": int(os.getenv("RESTENOSIS_ASSEMBLY_CHUNK", "2048")),
        "sweep_workers": int(os.getenv("RESTENOSIS_SWEEP_WORKERS", "1")),
        "default_linear_solver": os.getenv("RESTENOSIS_LINEAR_SOLVER", "direct"),
    }


def _sanitize(data: dict) -> dict:
    clean = dict(data)
    if clean["default_linear_solver"] not in _LINEAR_SOLVERS:
        logger.warning("Unknown linear solver %r, using 'direct'", clean["default_linear_solver"])
        clean["default_linear_solver"] = "direct"
    clean["assembly_chunk"] = max(1, int(clean["assembly_chunk"]))
    clean["sweep_workers"] = max(1, int(clean["sweep_workers"]))
    return clean


@lru_cache(maxsize=1)
def load_runtime_config() -> RuntimeConfig:
    """
    Load runtime_config.json over the env defaults.
    The JSON may be partial: only the keys present override.
    Any read/parse error falls back to the env defaults (fail-safe).
    """
    data = _from_env()

    if _CONFIG_PATH.exists():
        try:
            raw = json.loads(_CONFIG_PATH.read_text(encoding="utf-8"))
            if not isinstance(raw, dict):
                raise ValueError("runtime_config.json is not a JSON object")
            data = {**data, **{k: v for k, v in raw.items() if k in data and v is not None}}
            logger.info("runtime_config.json loaded: %s", _CONFIG_PATH)
        except Exception as e:
            logger.warning("runtime_config.json invalid (%s), using env defaults: %s", _CONFIG_PATH, e)
    else:
        logger.info("runtime_config.json absent (%s), using env defaults", _CONFIG_PATH)

    return RuntimeConfig(**_sanitize(data))
