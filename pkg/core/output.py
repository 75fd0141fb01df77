"""
Restenosis Core - Output records and writers.

Monitor-point time series (CSV, 17 significant digits), VTK legacy ASCII
field dumps and the neointimal thickness profile along a lumen line.
Every concentration written here is spatial (c0 / J).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from core.constitutive import growth_stretch
from core.elements import Field
from core.errors import OutputError
from core.mesh import Mesh
from utils.logger_config import get_logger

if TYPE_CHECKING:
    from core.scenarios import Scenario
    from core.solver import State, StepReport

logger = get_logger()

MONITOR_KEYS = ("u_Z", "Jg", "theta", "c_P", "c_T", "c_E", "rho_S")
DIAGNOSTIC_KEYS = ("iterations", "linear_solves", "wall_time", "substeps", "flags")
TIMESERIES_COLUMNS = ("t", *MONITOR_KEYS, *DIAGNOSTIC_KEYS)
VTK_HEXAHEDRON = 12


@dataclass(eq=False)
class OutputRecord:
    t: float
    monitor: dict[str, float]
    diagnostics: dict[str, Any] = field(default_factory=dict)
    line_displacement: np.ndarray | None = None   # (k, 3) u at the profile-line lumen nodes
    fields: State | None = None


class DerivedFields(NamedTuple):
    J_nodal: np.ndarray   # (n_nodes,)
    Jg: np.ndarray        # (n_elements,) quadrature-weighted average
    theta: np.ndarray     # (n_elements,)


class ThicknessProfile(NamedTuple):
    times: np.ndarray       # (T,)
    angles: np.ndarray      # (k,) circumferential position, degrees
    thickness: np.ndarray   # (T, k) mm


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


# ── Monitor values ──
def monitor_values(scenario: Scenario, state: State, report: StepReport | None) -> OutputRecord:
    m = scenario.monitor_node
    J_nodal, _ = scenario.assembler.nodal_J(state.u)
    J = float(J_nodal[m])
    theta, Jg = growth_stretch(state.rho0_S[m], scenario.rho_S_eq, scenario.anisotropic)
    monitor = {
        "u_Z": float(state.u[m, 2]),
        "Jg": float(Jg),
        "theta": float(theta),
        "c_P": float(state.c0_P[m]) / J,
        "c_T": float(state.c0_T[m]) / J,
        "c_E": float(state.c0_E[m]) / J,
        "rho_S": float(state.rho0_S[m]) / J,
    }
    diagnostics: dict[str, Any] = {"iterations": 0, "linear_solves": 0, "wall_time": 0.0, "substeps": 0, "flags": ()}
    if report is not None:
        diagnostics = {
            "iterations": report.iterations,
            "linear_solves": report.linear_solves,
            "wall_time": report.wall_time,
            "substeps": report.substeps,
            "flags": tuple(sorted(report.flags)),
        }
        if report.coupling_defect is not None:
            diagnostics["coupling_defect"] = report.coupling_defect
    line = None
    if len(scenario.profile_nodes):
        line = np.array(state.u[scenario.profile_nodes])
    return OutputRecord(t=float(state.t), monitor=monitor, diagnostics=diagnostics, line_displacement=line)


def derive_fields(scenario: Scenario, state: State) -> DerivedFields:
    J_nodal, _ = scenario.assembler.nodal_J(state.u)
    geo = scenario.assembler.geometry
    rho_qp = np.einsum("qa,ea->eq", geo.N, state.rho0_S[scenario.mesh.elements])
    theta_qp, Jg_qp = growth_stretch(rho_qp, scenario.rho_S_eq, scenario.anisotropic)
    volume = geo.wdV.sum(axis=1)
    return DerivedFields(
        J_nodal=J_nodal,
        Jg=np.sum(geo.wdV * Jg_qp, axis=1) / volume,
        theta=np.sum(geo.wdV * theta_qp, axis=1) / volume,
    )


# ── Time series ──
def write_timeseries(records: list[OutputRecord], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TIMESERIES_COLUMNS)
            for rec in records:
                d = rec.diagnostics
                writer.writerow([
                    _fmt(rec.t),
                    *(_fmt(rec.monitor[k]) for k in MONITOR_KEYS),
                    int(d.get("iterations", 0)),
                    int(d.get("linear_solves", 0)),
                    _fmt(d.get("wall_time", 0.0)),
                    int(d.get("substeps", 0)),
                    "|".join(d.get("flags", ())),
                ])
    except OSError as e:
        raise OutputError(f"cannot write time series to {path}: {e}") from e
    logger.debug("time series written", extra={"extra_fields": {"path": str(path), "records": len(records)}})
    return path


def read_timeseries(path: str | Path) -> list[OutputRecord]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise OutputError(f"cannot read time series {path}: {e}") from e
    records = []
    for row in rows:
        records.append(OutputRecord(
            t=float(row["t"]),
            monitor={k: float(row[k]) for k in MONITOR_KEYS},
            diagnostics={
                "iterations": int(row["iterations"]),
                "linear_solves": int(row["linear_solves"]),
                "wall_time": float(row["wall_time"]),
                "substeps": int(row["substeps"]),
                "flags": tuple(f for f in row["flags"].split("|") if f),
            },
        ))
    return records


# ── VTK legacy ──
def _vtk_geometry(mesh: Mesh, title: str) -> list[str]:
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [" ".join(_fmt(v) for v in p) for p in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {9 * mesh.n_elements}")
    lines += ["8 " + " ".join(str(int(a)) for a in cell) for cell in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_HEXAHEDRON)] * mesh.n_elements
    return lines


def _vtk_scalars(name: str, values: np.ndarray, dtype: str = "double") -> list[str]:
    return [f"SCALARS {name} {dtype} 1", "LOOKUP_TABLE default", *(_fmt(v) if dtype == "double" else str(int(v)) for v in values)]


def _write_lines(path: Path, lines: list[str]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def write_fields(mesh: Mesh, state: State, derived: DerivedFields, path: str | Path) -> Path:
    """Reference mesh with u, spatial concentrations and cell-averaged growth."""
    J = derived.J_nodal
    lines = _vtk_geometry(mesh, f"restenosis fields t={_fmt(state.t)}")
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS u double")
    lines += [" ".join(_fmt(v) for v in row) for row in state.u]
    for f in (Field.P, Field.T, Field.E):
        lines += _vtk_scalars(f"c_{f.label}", state.values[:, f] / J)
    lines += _vtk_scalars("rho_S", state.rho0_S / J)
    lines.append(f"CELL_DATA {mesh.n_elements}")
    lines += _vtk_scalars("Jg", derived.Jg)
    lines += _vtk_scalars("theta", derived.theta)
    return _write_lines(Path(path), lines)


def write_mesh_vtk(mesh: Mesh, path: str | Path) -> Path:
    layer_ids = {name: i for i, name in enumerate(sorted(set(mesh.layers)))}
    lines = _vtk_geometry(mesh, f"restenosis mesh ({mesh.kind})")
    lines.append(f"CELL_DATA {mesh.n_elements}")
    lines += _vtk_scalars("layer", [layer_ids[name] for name in mesh.layers], dtype="int")
    return _write_lines(Path(path), lines)


# ── Neointima ──
def neointimal_thickness(records: list[OutputRecord], mesh: Mesh, line_nodes: np.ndarray) -> ThicknessProfile:
    """Inward radial displacement of the lumen nodes on a profile line."""
    line_nodes = np.asarray(line_nodes)
    if len(line_nodes) == 0:
        raise ValueError("profile line has no lumen nodes")
    X = mesh.nodes[line_nodes]
    radius = np.linalg.norm(X[:, :2], axis=1)
    e_r = np.column_stack([X[:, 0] / radius, X[:, 1] / radius, np.zeros(len(X))])
    kept = [r for r in records if r.line_displacement is not None]
    if not kept:
        raise ValueError("records carry no profile-line displacements")
    u = np.stack([r.line_displacement for r in kept])
    return ThicknessProfile(
        times=np.array([r.t for r in kept]),
        angles=np.degrees(np.arctan2(X[:, 1], X[:, 0])),
        thickness=-np.einsum("tki,ki->tk", u, e_r),
    )


def write_thickness_profile(profile: ThicknessProfile, path: str | Path) -> Path:
    """One row per output time, one column per lumen node (by angle)."""
    header = ["t", *(f"theta_{a:.2f}" for a in profile.angles)]
    lines = [",".join(header)]
    lines += [
        ",".join([_fmt(t), *(_fmt(v) for v in row)]) for t, row in zip(profile.times, profile.thickness)
    ]
    return _write_lines(Path(path), lines)
