"""
Restenosis Core - Parameter sweeps.

Runs one scenario per value of a dotted parameter (everything else fixed),
stores every run and writes the Jg trajectories side by side.
"""
from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from core.output import OutputRecord, write_timeseries
from core.scenario_config import SimulationConfig
from core.scenarios import build_scenario
from core.solver import run
from core.store import ResultStore
from utils.logger_config import get_logger

logger = get_logger()


@dataclass
class SweepResult:
    param: str
    labels: list[str]
    run_ids: list[str]
    records: dict[str, list[OutputRecord]]
    combined_csv: Path


def _run_one(config: SimulationConfig) -> list[OutputRecord]:
    return run(build_scenario(config))


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in text)


def sweep(
    base: SimulationConfig,
    param: str,
    values: list[Any],
    output_dir: str | Path,
    store: ResultStore,
    workers: int = 1,
    value_key: str = "Jg",
) -> SweepResult:
    if not values:
        raise ValueError("sweep needs at least one value")
    configs = [base.with_override(param, v) for v in values]
    labels = [f"{param}={v}" for v in values]
    output_dir = Path(output_dir)

    logger.info("sweep started", extra={"extra_fields": {"param": param, "values": [str(v) for v in values], "workers": workers}})
    if workers > 1 and len(configs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(workers, len(configs)), mp_context=ctx) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]

    run_ids = []
    for label, records in zip(labels, results):
        write_timeseries(records, output_dir / f"{_slug(label)}.csv")
        run_ids.append(store.save_run(label, str(base.scenario), records))
    combined = store.pivot_csv(dict(zip(run_ids, labels)), output_dir / f"sweep_{_slug(param)}_{value_key}.csv", value_key)
    logger.info("sweep finished", extra={"extra_fields": {"param": param, "runs": len(run_ids), "combined": str(combined)}})
    return SweepResult(param, labels, run_ids, dict(zip(labels, results)), combined)
