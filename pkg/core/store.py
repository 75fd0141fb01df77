"""
Restenosis Core - Results store (DuckDB).

One row per run in `runs`, one row per output record in `records`. Sweeps
read their side-by-side trajectories back with a PIVOT.
"""
from __future__ import annotations

import csv
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import duckdb

from core.errors import OutputError
from core.output import MONITOR_KEYS, OutputRecord
from utils.logger_config import get_logger

logger = get_logger()

_SCHEMA = f"""
CREATE TABLE IF NOT EXISTS runs (
    run_id VARCHAR PRIMARY KEY,
    label VARCHAR,
    scenario VARCHAR,
    created_at TIMESTAMP
);
CREATE TABLE IF NOT EXISTS records (
    run_id VARCHAR,
    t DOUBLE,
    {", ".join(f"{k} DOUBLE" for k in MONITOR_KEYS)},
    iterations INTEGER,
    wall_time DOUBLE
);
"""


def _quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


class ResultStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            con = duckdb.connect(str(self.path))
            try:
                con.execute(_SCHEMA)
            finally:
                con.close()
        except (OSError, duckdb.Error) as e:
            raise OutputError(f"cannot open results store {self.path}: {e}") from e

    def _connect(self, read_only: bool = False) -> duckdb.DuckDBPyConnection:
        return duckdb.connect(str(self.path), read_only=read_only)

    def save_run(self, label: str, scenario: str, records: list[OutputRecord]) -> str:
        run_id = uuid.uuid4().hex[:12]
        rows = [
            (run_id, r.t, *(r.monitor[k] for k in MONITOR_KEYS),
             int(r.diagnostics.get("iterations", 0)), float(r.diagnostics.get("wall_time", 0.0)))
            for r in records
        ]
        placeholders = ", ".join(["?"] * (4 + len(MONITOR_KEYS)))
        con = self._connect()
        try:
            con.execute(
                "INSERT INTO runs VALUES (?, ?, ?, ?)",
                [run_id, label, scenario, datetime.now(timezone.utc).replace(tzinfo=None)],
            )
            if rows:
                con.executemany(f"INSERT INTO records VALUES ({placeholders})", rows)
        finally:
            con.close()
        logger.info("run stored", extra={"extra_fields": {"run_id": run_id, "label": label, "records": len(rows)}})
        return run_id

    def get_run(self, run_id: str) -> dict[str, Any]:
        """Run metadata plus its records ordered by time; KeyError if unknown."""
        con = self._connect(read_only=True)
        try:
            meta = con.execute(
                "SELECT run_id, label, scenario, created_at FROM runs WHERE run_id = ?", [run_id]
            ).fetchone()
            if meta is None:
                raise KeyError(run_id)
            rows = con.execute(
                f"SELECT t, {', '.join(MONITOR_KEYS)}, iterations, wall_time "
                "FROM records WHERE run_id = ? ORDER BY t",
                [run_id],
            ).fetchall()
        finally:
            con.close()
        columns = ("t", *MONITOR_KEYS, "iterations", "wall_time")
        return {
            "run_id": meta[0],
            "label": meta[1],
            "scenario": meta[2],
            "created_at": meta[3].isoformat(),
            "records": [dict(zip(columns, row)) for row in rows],
        }

    def list_runs(self) -> list[dict[str, Any]]:
        con = self._connect(read_only=True)
        try:
            rows = con.execute("SELECT run_id, label, scenario FROM runs ORDER BY created_at").fetchall()
        finally:
            con.close()
        return [{"run_id": r[0], "label": r[1], "scenario": r[2]} for r in rows]

    def pivot_csv(self, series: dict[str, str], path: str | Path, value: str = "Jg") -> Path:
        """Write one `value` column per run (columns named by `series`, run_id -> name), keyed by t."""
        if value not in MONITOR_KEYS:
            raise ValueError(f"unknown monitor value {value!r}")
        if not series:
            raise ValueError("pivot needs at least one run")
        path = Path(path)
        names = list(series.values())
        con = self._connect()
        try:
            con.execute("CREATE TEMP TABLE series_names (run_id VARCHAR, series VARCHAR)")
            con.executemany("INSERT INTO series_names VALUES (?, ?)", list(series.items()))
            cursor = con.execute(
                f"""
                PIVOT (
                    SELECT r.t, s.series, r.{value} AS v
                    FROM records r JOIN series_names s USING (run_id)
                )
                ON series IN ({", ".join(_quote(n) for n in names)})
                USING first(v)
                GROUP BY t
                ORDER BY t
                """
            )
            header = [d[0] for d in cursor.description]
            rows = cursor.fetchall()
        finally:
            con.close()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow(["" if v is None else f"{v:.17g}" for v in row])
        except OSError as e:
            raise OutputError(f"cannot write combined CSV {path}: {e}") from e
        return path
