import csv

import pytest

from core.errors import OutputError
from core.output import MONITOR_KEYS, OutputRecord
from core.scenarios import build_scenario
from core.solver import run
from core.store import ResultStore
from core.sweep import sweep
from tests.builders import block_config


def records_with(values, times=(0.0, 1.0, 2.0)):
    return [
        OutputRecord(
            t=t,
            monitor={k: (v if k == "Jg" else 0.0) for k in MONITOR_KEYS},
            diagnostics={"iterations": 2, "wall_time": 0.01},
        )
        for t, v in zip(times, values)
    ]


@pytest.fixture
def store(tmp_path):
    return ResultStore(tmp_path / "db" / "runs.duckdb")


# ── Store ──
def test_saved_run_reads_back(store):
    run_id = store.save_run("first", "block", records_with([1.0, 1.1, 1.2]))
    stored = store.get_run(run_id)
    assert stored["label"] == "first"
    assert stored["scenario"] == "block"
    assert [r["t"] for r in stored["records"]] == [0.0, 1.0, 2.0]
    assert [r["Jg"] for r in stored["records"]] == [1.0, 1.1, 1.2]
    assert stored["records"][0]["iterations"] == 2


def test_list_runs(store):
    first = store.save_run("a", "block", records_with([1.0]))
    second = store.save_run("b", "stent", [])
    assert {r["run_id"] for r in store.list_runs()} == {first, second}
    assert store.get_run(second)["records"] == []


def test_unknown_run(store):
    with pytest.raises(KeyError):
        store.get_run("does-not-exist")


def test_store_path_must_be_writable(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("")
    with pytest.raises(OutputError):
        ResultStore(blocker / "runs.duckdb")


def test_pivot_puts_runs_side_by_side(store, tmp_path):
    a = store.save_run("a", "block", records_with([1.0, 1.1, 1.2]))
    b = store.save_run("b", "block", records_with([1.0, 1.3], times=(0.0, 2.0)))
    path = store.pivot_csv({a: "kappa=0", b: "kappa=0.3"}, tmp_path / "pivot.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "kappa=0", "kappa=0.3"]
    values = [[float(v) if v else None for v in row] for row in rows[1:]]
    assert values == [[0.0, 1.0, 1.0], [1.0, 1.1, None], [2.0, 1.2, 1.3]]


def test_pivot_rejects(store, tmp_path):
    with pytest.raises(ValueError):
        store.pivot_csv({}, tmp_path / "p.csv")
    run_id = store.save_run("a", "block", records_with([1.0]))
    with pytest.raises(ValueError):
        store.pivot_csv({run_id: "a"}, tmp_path / "p.csv", value="bogus")


# ── Sweep ──
def test_single_value_sweep_matches_a_plain_run(store, tmp_path):
    base = block_config(t_end=2.0)
    result = sweep(base, "structural.kappa", [0.1], tmp_path / "sweep", store)
    plain = run(build_scenario(base))
    swept = result.records["structural.kappa=0.1"]
    assert [r.monitor["Jg"] for r in swept] == [r.monitor["Jg"] for r in plain]
    assert (tmp_path / "sweep" / "structural.kappa=0.1.csv").exists()
    assert store.get_run(result.run_ids[0])["label"] == "structural.kappa=0.1"


def test_two_value_sweep_writes_a_combined_table(store, tmp_path):
    result = sweep(block_config(t_end=2.0), "structural.kappa", ["0", "0.3"], tmp_path / "sweep", store)
    assert result.labels == ["structural.kappa=0", "structural.kappa=0.3"]
    assert len(result.run_ids) == 2
    rows = list(csv.reader(result.combined_csv.open()))
    assert rows[0] == ["t", *result.labels]
    assert len(rows) == 4
    assert result.combined_csv.name == "sweep_structural.kappa_Jg.csv"


def test_sweep_needs_values(store, tmp_path):
    with pytest.raises(ValueError):
        sweep(block_config(), "structural.kappa", [], tmp_path, store)
