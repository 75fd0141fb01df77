"""
Restenosis Core - FastAPI wrapper
Runs scenarios submitted as configuration text; results persist in DuckDB.
"""
import asyncio
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from core.config import load_runtime_config
from core.errors import RestenosisError
from core.scenario_config import parse_config
from core.scenarios import build_scenario
from core.solver import run
from core.store import ResultStore
from utils.logger_config import get_logger, setup_logging

logger = get_logger()
_store: ResultStore | None = None
_pool: ThreadPoolExecutor | None = None


@asynccontextmanager
async def lifespan(app: FastAPI):
    global _store, _pool
    runtime = load_runtime_config()
    setup_logging(runtime.log_level, log_file=runtime.log_file or None)
    logger.info(f"Starting Restenosis API, results store: {runtime.results_db}")
    _store = ResultStore(runtime.results_db)
    # one simulation at a time per worker; jax kernels already use every core
    _pool = ThreadPoolExecutor(max_workers=max(1, runtime.sweep_workers))
    yield
    _pool.shutdown(wait=False, cancel_futures=True)
    _pool = None
    _store = None


app = FastAPI(title="Restenosis Core API", lifespan=lifespan)


class RunRequest(BaseModel):
    config: str = Field(description="scenario configuration text")
    overrides: dict[str, str | float | int] = Field(default_factory=dict, description="dotted name -> value")
    label: str | None = None


class RunSummary(BaseModel):
    run_id: str
    scenario: str
    steps: int
    t_end: float
    Jg: float
    u_Z: float
    wall_time: float


def _simulate(request: RunRequest) -> RunSummary:
    config = parse_config(request.config)
    for name, value in request.overrides.items():
        config = config.with_override(name, value)
    records = run(build_scenario(config))
    run_id = _store.save_run(request.label or config.label or str(config.scenario), str(config.scenario), records)  # type: ignore[union-attr]
    return RunSummary(
        run_id=run_id,
        scenario=str(config.scenario),
        steps=len(records) - 1,
        t_end=records[-1].t,
        Jg=records[-1].monitor["Jg"],
        u_Z=records[-1].monitor["u_Z"],
        wall_time=sum(r.diagnostics["wall_time"] for r in records),
    )


@app.post("/runs", response_model=RunSummary)
async def create_run(request: RunRequest) -> RunSummary:
    loop = asyncio.get_running_loop()
    try:
        return await loop.run_in_executor(_pool, _simulate, request)
    except RestenosisError as e:
        logger.warning(f"{e.category}: {e}")
        raise HTTPException(status_code=422, detail={"category": e.category, "message": str(e)})
    except Exception as e:
        logger.error(f"Run failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/runs/{run_id}")
async def get_run(run_id: str) -> dict:
    loop = asyncio.get_running_loop()
    try:
        return await loop.run_in_executor(None, _store.get_run, run_id)  # type: ignore[union-attr]
    except KeyError:
        raise HTTPException(status_code=404, detail=f"unknown run {run_id}")


@app.get("/health")
def health() -> dict:
    return {
        "status": "ok",
        "results_db": load_runtime_config().results_db,
    }
