"""
Restenosis Core - Time marching.

Backward Euler with two coupling strategies:
  - monolithic: Newton-Raphson on the full unsymmetric five-field system;
  - staggered: four linear symmetric species solves with every other field
    frozen at t_n (geometry included), then Newton on the displacements.

Unknowns and species residual rows are nondimensionalized by per-field
scales (growth-factor thresholds, ECM equilibrium, SMC equilibrium, 1 mm)
before the linear solve; inputs and outputs stay in physical units.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.constitutive import THETA_FLOOR, raw_growth_stretch
from core.elements import DOFS_PER_NODE, N_SPECIES, Field
from core.errors import ConfigError, ConvergenceError, InvertedElementError
from core.output import OutputRecord, monitor_values
from core.params import SpeciesParams
from utils.logger_config import get_logger

if TYPE_CHECKING:
    from core.scenarios import Scenario

logger = get_logger()

NEGATIVITY_TOLERANCE = 1e-3


class SchemeKind(StrEnum):
    MONOLITHIC = "monolithic"
    STAGGERED = "staggered"


class LinearSolver(StrEnum):
    DIRECT = "direct"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class TimeSteppingConfig:
    dt: float = 1.0
    t_end: float = 370.0
    scheme: SchemeKind = SchemeKind.MONOLITHIC
    newton_tol_abs: float = 1e-9
    newton_tol_rel: float = 1e-8
    newton_tol_inc: float = 1e-10
    max_newton_iters: int = 25
    linear_solver: LinearSolver = LinearSolver.DIRECT
    max_dt_halvings: int = 3
    coupling_tol: float = 0.0   # staggered only; 0 disables the coupled-defect check

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))
        object.__setattr__(self, "linear_solver", LinearSolver(self.linear_solver))
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ConfigError(f"t_end must be >= 0, got {self.t_end}")
        if min(self.newton_tol_abs, self.newton_tol_rel, self.newton_tol_inc) <= 0:
            raise ConfigError("Newton tolerances must be > 0")
        if self.max_newton_iters < 1 or self.max_dt_halvings < 0:
            raise ConfigError("max_newton_iters must be >= 1 and max_dt_halvings >= 0")
        if self.coupling_tol < 0:
            raise ConfigError(f"coupling_tol must be >= 0, got {self.coupling_tol}")


# ── State ──
@dataclass(frozen=True, eq=False)
class State:
    """Nodal unknowns (n_nodes, 7) in the interleaved dof layout, at time t (days)."""
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != DOFS_PER_NODE:
            raise ValueError(f"state values must be (n_nodes, {DOFS_PER_NODE}), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def initial(cls, n_nodes: int, species: SpeciesParams, overrides: dict[str, float] | None = None) -> State:
        """Healthy wall: no growth factors, ECM and SMCs at equilibrium, undeformed."""
        start = {"c_P": 0.0, "c_T": 0.0, "c_E": species.c_E_eq, "rho_S": species.rho_S_eq, **(overrides or {})}
        values = np.zeros((n_nodes, DOFS_PER_NODE))
        values[:, Field.P] = start["c_P"]
        values[:, Field.T] = start["c_T"]
        values[:, Field.E] = start["c_E"]
        values[:, Field.S] = start["rho_S"]
        return cls(values, 0.0)

    @property
    def n_nodes(self) -> int:
        return len(self.values)

    @property
    def c0_P(self) -> np.ndarray:
        return self.values[:, Field.P]

    @property
    def c0_T(self) -> np.ndarray:
        return self.values[:, Field.T]

    @property
    def c0_E(self) -> np.ndarray:
        return self.values[:, Field.E]

    @property
    def rho0_S(self) -> np.ndarray:
        return self.values[:, Field.S]

    @property
    def u(self) -> np.ndarray:
        return self.values[:, Field.U:]

    def with_values(self, values: np.ndarray, t: float) -> State:
        return State(values, t)


@dataclass
class StepReport:
    t: float
    dt: float
    iterations: int = 0
    linear_solves: int = 0
    residual_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    substeps: int = 1
    flags: set[str] = field(default_factory=set)
    coupling_defect: float | None = None

    def merge(self, other: StepReport) -> StepReport:
        return StepReport(
            t=other.t,
            dt=self.dt + other.dt,
            iterations=self.iterations + other.iterations,
            linear_solves=self.linear_solves + other.linear_solves,
            residual_history=self.residual_history + other.residual_history,
            wall_time=self.wall_time + other.wall_time,
            substeps=self.substeps + other.substeps,
            flags=self.flags | other.flags,
            coupling_defect=_worst(self.coupling_defect, other.coupling_defect),
        )


def _worst(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return b if a is None else a
    return max(a, b)


# ── Sparse linear algebra ──
@dataclass(eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray | None = None   # indices of the unknowns kept after elimination
    symmetric: bool = False


def apply_dirichlet(system: SparseSystem, constrained: np.ndarray, values: np.ndarray) -> SparseSystem:
    """Eliminate prescribed unknowns: K_ff x_f = b_f - K_fc x_c.

    Row and column elimination, so a symmetric matrix stays symmetric.
    """
    n = system.matrix.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[np.asarray(constrained, dtype=np.int64)] = False
    free = np.flatnonzero(mask)
    K = system.matrix.tocsr()
    K_ff = K[free][:, free]
    rhs = np.asarray(system.rhs, dtype=float)[free]
    if len(constrained):
        rhs = rhs - K[free][:, np.asarray(constrained, dtype=np.int64)] @ np.asarray(values, dtype=float)
    return SparseSystem(K_ff.tocsr(), rhs, free, system.symmetric)


def expand_solution(reduced: SparseSystem, solution: np.ndarray, n: int, constrained, values) -> np.ndarray:
    full = np.zeros(n)
    full[reduced.free] = solution
    full[np.asarray(constrained, dtype=np.int64)] = values
    return full


def solve_linear(system: SparseSystem, method: LinearSolver = LinearSolver.DIRECT) -> np.ndarray:
    K = system.matrix
    if K.shape[0] == 0:
        return np.zeros(0)
    if method is LinearSolver.DIRECT:
        solution = spla.splu(K.tocsc()).solve(system.rhs)
    elif system.symmetric:
        diag = K.diagonal()
        jacobi = spla.LinearOperator(K.shape, matvec=lambda v: v / diag)
        solution, info = spla.cg(K, system.rhs, rtol=1e-12, maxiter=10 * K.shape[0], M=jacobi)
        if info != 0:
            raise ConvergenceError(f"conjugate gradients did not converge (info={info})")
    else:
        ilu = spla.spilu(K.tocsc(), drop_tol=1e-6, fill_factor=20)
        precond = spla.LinearOperator(K.shape, matvec=ilu.solve)
        solution, info = spla.gmres(K, system.rhs, rtol=1e-12, restart=200, maxiter=50, M=precond)
        if info != 0:
            raise ConvergenceError(f"GMRES did not converge (info={info})")
    if not np.all(np.isfinite(solution)):
        raise ConvergenceError("linear solve produced non-finite values")
    return solution


# ── Coupled solver ──
class CoupledSolver:
    """Advances a scenario State by one time step at a time."""

    def __init__(self, scenario: Scenario, config: TimeSteppingConfig):
        self.scenario = scenario
        self.config = config
        self.assembler = scenario.assembler
        self.dof_map = scenario.dof_map
        self.scales = scenario.field_scales
        self._dof_scale = np.tile(self.scales, scenario.mesh.n_nodes)
        self._u_constrained, self._u_values = self.dof_map.displacement_constraints()

    # ── monolithic ──
    def step_monolithic(self, state: State, dt: float) -> tuple[State, StepReport]:
        cfg = self.config
        t_new = state.t + dt
        x_old = state.values
        x = np.array(x_old, dtype=float)
        flat = x.reshape(-1)
        flat[self.dof_map.constrained] = self.dof_map.values
        free = self.dof_map.free
        scale = self._dof_scale
        report = StepReport(t=t_new, dt=dt)
        r0 = None

        for k in range(cfg.max_newton_iters):
            self.assembler.check_orientation(x[:, Field.U:])
            R_hat, reduced = self._coupled_system(x, x_old, t_new, dt)
            norm = float(np.linalg.norm(R_hat[free]))
            report.iterations = k + 1
            report.residual_history.append(norm)
            if not np.isfinite(norm):
                raise ConvergenceError("non-finite residual", t_new, report.residual_history)
            r0 = norm if r0 is None else r0
            if norm <= cfg.newton_tol_abs or norm <= cfg.newton_tol_rel * r0:
                break

            dx_hat = solve_linear(reduced, cfg.linear_solver)
            report.linear_solves += 1
            flat[reduced.free] += dx_hat * scale[reduced.free]
            if float(np.max(np.abs(dx_hat), initial=0.0)) <= cfg.newton_tol_inc:
                break
        else:
            raise ConvergenceError(
                f"monolithic Newton did not converge in {cfg.max_newton_iters} iterations", t_new, report.residual_history
            )
        return self._accept(x, t_new, report)

    def _coupled_system(self, x, x_old, t_new, dt) -> tuple[np.ndarray, SparseSystem]:
        """Scaled fully implicit residual and its reduced Newton system at x."""
        scale = self._dof_scale
        R, K = self.assembler.monolithic(x, x_old, t_new, dt)
        R_hat = R / scale
        K_hat = (sp.diags(1.0 / scale) @ K @ sp.diags(scale)).tocsr()
        reduced = apply_dirichlet(
            SparseSystem(K_hat, -R_hat), self.dof_map.constrained, np.zeros(len(self.dof_map.constrained))
        )
        return R_hat, reduced

    def coupling_defect(self, x: np.ndarray, x_old: np.ndarray, t_new: float, dt: float) -> float:
        """Largest scaled Newton correction of the fully implicit system at x.

        Measures how far a staggered result sits from the coupled
        backward-Euler solution, in units of the field scales.
        """
        self.assembler.check_orientation(x[:, Field.U:])
        _, reduced = self._coupled_system(x, x_old, t_new, dt)
        correction = solve_linear(reduced, self.config.linear_solver)
        return float(np.max(np.abs(correction), initial=0.0))

    # ── staggered ──
    def step_staggered(self, state: State, dt: float) -> tuple[State, StepReport]:
        cfg = self.config
        t_new = state.t + dt
        x_old = state.values
        x = np.array(x_old, dtype=float)
        report = StepReport(t=t_new, dt=dt)

        for f in (Field.P, Field.T, Field.E, Field.S):
            R, K = self.assembler.species(f, x_old, t_new, dt)
            if np.any(K.diagonal() <= 0):
                report.flags.add("species_matrix_indefinite")
            delta = solve_linear(SparseSystem(K, -R, symmetric=True), cfg.linear_solver)
            report.linear_solves += 1
            x[:, f] = x_old[:, f] + delta

        u = np.array(x_old[:, Field.U:], dtype=float)
        u_flat = u.reshape(-1)
        u_flat[self._u_constrained] = self._u_values
        free = np.ones(u_flat.size, dtype=bool)
        free[self._u_constrained] = False
        r0 = None
        for k in range(cfg.max_newton_iters):
            self.assembler.check_orientation(u)
            R, K = self.assembler.mechanics(u, x[:, :N_SPECIES])
            norm = float(np.linalg.norm(R[free]))
            report.iterations = k + 1
            report.residual_history.append(norm)
            if not np.isfinite(norm):
                raise ConvergenceError("non-finite displacement residual", t_new, report.residual_history)
            r0 = norm if r0 is None else r0
            if norm <= cfg.newton_tol_abs or norm <= cfg.newton_tol_rel * r0:
                break
            reduced = apply_dirichlet(
                SparseSystem(K, -R), self._u_constrained, np.zeros(len(self._u_constrained))
            )
            du = solve_linear(reduced, cfg.linear_solver)
            report.linear_solves += 1
            u_flat[reduced.free] += du
            if float(np.max(np.abs(du), initial=0.0)) <= cfg.newton_tol_inc:
                break
        else:
            raise ConvergenceError(
                f"displacement Newton did not converge in {cfg.max_newton_iters} iterations", t_new, report.residual_history
            )
        x[:, Field.U:] = u
        if cfg.coupling_tol > 0:
            report.coupling_defect = self.coupling_defect(x, x_old, t_new, dt)
            if report.coupling_defect > cfg.coupling_tol:
                report.flags.add("coupling_defect")
                logger.warning(
                    "staggered step far from the coupled solution",
                    extra={"extra_fields": {"t": t_new, "dt": dt, "defect": report.coupling_defect, "tol": cfg.coupling_tol}},
                )
        return self._accept(x, t_new, report)

    def _accept(self, x: np.ndarray, t_new: float, report: StepReport) -> tuple[State, StepReport]:
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("non-finite state after step", t_new, report.residual_history)
        floor = -NEGATIVITY_TOLERANCE * self.scales[:N_SPECIES]
        if np.any(x[:, :N_SPECIES] < floor):
            report.flags.add("negative_species")
            worst = np.min(x[:, :N_SPECIES] / self.scales[:N_SPECIES], axis=0)
            logger.warning(
                "negative species values after step",
                extra={"extra_fields": {"t": t_new, "min_scaled": worst}},
            )
        if np.any(raw_growth_stretch(x[:, Field.S], self.scenario.rho_S_eq, self.scenario.anisotropic) < THETA_FLOOR):
            report.flags.add("growth_floor")
        return State(x, t_new), report

    # ── stepping with retries ──
    def step(self, state: State, dt: float) -> tuple[State, StepReport]:
        if self.config.scheme is SchemeKind.MONOLITHIC:
            return self.step_monolithic(state, dt)
        return self.step_staggered(state, dt)

    def advance(self, state: State, dt: float, depth: int = 0) -> tuple[State, StepReport]:
        """One step of size dt, halving dt on failure up to max_dt_halvings times."""
        started = time.perf_counter()
        try:
            new_state, report = self.step(state, dt)
            report.wall_time = time.perf_counter() - started
            return new_state, report
        except (ConvergenceError, InvertedElementError) as e:
            if depth >= self.config.max_dt_halvings:
                raise ConvergenceError(
                    f"step failed after {depth} dt halvings: {e}", state.t + dt, getattr(e, "residual_history", ())
                ) from e
            logger.warning(
                "step rejected, halving dt",
                extra={"extra_fields": {"t": state.t, "dt": dt, "depth": depth + 1, "reason": str(e)}},
            )
        half = 0.5 * dt
        mid_state, first = self.advance(state, half, depth + 1)
        end_state, second = self.advance(mid_state, half, depth + 1)
        merged = first.merge(second)
        merged.flags.add("retried")
        return end_state, merged


def step_monolithic(state_n: State, solver: CoupledSolver, dt: float | None = None) -> State:
    return solver.step_monolithic(state_n, dt or solver.config.dt)[0]


def step_staggered(state_n: State, solver: CoupledSolver, dt: float | None = None) -> State:
    return solver.step_staggered(state_n, dt or solver.config.dt)[0]


def run(
    scenario: Scenario,
    config: TimeSteppingConfig | None = None,
    initial: State | None = None,
    on_fields: Callable[[State, OutputRecord], None] | None = None,
) -> list[OutputRecord]:
    """March from t=0 to t_end; one OutputRecord per accepted step plus t=0."""
    config = config or scenario.time
    solver = CoupledSolver(scenario, config)
    state = initial or scenario.initial_state
    interval = scenario.output.field_interval

    def record(s: State, report: StepReport | None) -> OutputRecord:
        rec = monitor_values(scenario, s, report)
        if interval > 0 and _on_interval(s.t, interval):
            rec.fields = s
            if on_fields is not None:
                on_fields(s, rec)
        return rec

    records = [record(state, None)]
    step = 0
    eps = 1e-9 * max(config.dt, 1.0)
    while state.t < config.t_end - eps:
        dt = min(config.dt, config.t_end - state.t)
        try:
            state, report = solver.advance(state, dt)
        except ConvergenceError as e:
            logger.error("run aborted", extra={"extra_fields": {"t": state.t, "error": str(e)}})
            raise
        step += 1
        logger.info(
            "step accepted",
            extra={"extra_fields": {
                "step": step, "t": report.t, "dt": report.dt, "scheme": str(config.scheme),
                "iterations": report.iterations, "linear_solves": report.linear_solves,
                "residual_history": report.residual_history, "wall_time": report.wall_time,
                "flags": sorted(report.flags), "coupling_defect": report.coupling_defect,
            }},
        )
        records.append(record(state, report))
    return records


def _on_interval(t: float, interval: float) -> bool:
    ratio = t / interval
    return abs(ratio - round(ratio)) < 1e-9


def trajectory_deviation(records: list[OutputRecord], reference: list[OutputRecord], key: str = "Jg") -> float:
    """Max |a - b| over common output times, relative to the reference's peak |b|."""
    ref = {round(r.t, 9): r.monitor[key] for r in reference}
    pairs = [(r.monitor[key], ref[round(r.t, 9)]) for r in records if round(r.t, 9) in ref]
    if not pairs:
        raise ValueError("trajectories share no output times")
    a, b = np.array(pairs).T
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), np.finfo(float).tiny))
