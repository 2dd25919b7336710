"""Convergence studies: the experiment grid behind the CLI and the
acceptance checks.

Each study builds meshes, runs trajectories or single solves, and
returns tabulated errors with experimental orders.  Cells of a study
are independent; with jobs > 1 they are dispatched to a process pool
and merged in a deterministic order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import fem, meshing, nfunc, reporting, solver
from .manufactured import manufactured
from .nfunc import PStructure
from .reporting import ErrorRow, ErrorTable

__all__ = [
    "spatial_study",
    "temporal_study",
    "initval_study",
    "interp_study",
    "infsup_study",
    "delta_probe",
    "coupled_dt",
]


def mesh_size(n: int) -> float:
    return math.sqrt(2.0) / n


def coupled_dt(p: float, n: int, c: float, exponent: float = None) -> float:
    """Time step coupled to the spatial rate: dt = c * h^min(1, 2/p)."""
    if exponent is None:
        exponent = min(1.0, 2.0 / p)
    return c * mesh_size(n) ** exponent


def _steps_for(dt_target: float, t_end: float) -> int:
    """Smallest step count whose dt does not exceed the target."""
    return max(1, math.ceil(t_end / dt_target - 1e-12))


def _spatial_cell(args):
    p, delta, n, dt_target, t_end, sol_id, tol = args
    ps = PStructure(p, delta)
    sol = manufactured(sol_id, ps)
    sys = fem.FeSystem(meshing.build_structured(n))
    grid = solver.TimeGrid(t_end, _steps_for(dt_target, t_end))
    opts = solver.SolverOptions(tol=tol)
    t0 = time.perf_counter()
    traj = solver.run(sys, ps, grid, sol.initial_velocity(), sol.forcing, opts)
    row = reporting.error_report(traj, sol, sys, ps,
                                 runtime=time.perf_counter() - t0)
    return n, row


def spatial_study(ps: PStructure, levels: Sequence[int], t_end: float = 0.25,
                  dt_couple: float = 0.125, sol_id: str = "stream1",
                  tol: float = 1e-10, jobs: int = 1,
                  dt_exponent: float = None) -> ErrorTable:
    """Mesh refinement with the time step coupled to the expected spatial
    rate, so the h-term dominates the error at every level."""
    cells = [
        (ps.p, ps.delta, n, coupled_dt(ps.p, n, dt_couple, dt_exponent),
         t_end, sol_id, tol)
        for n in levels
    ]
    results = _map_cells(_spatial_cell, cells, jobs)
    rows = [row for _, row in sorted(results, key=lambda r: r[0])]
    return ErrorTable(rows)


def _temporal_cell(args):
    p, delta, n, m, t_end, sol_id, tol = args
    ps = PStructure(p, delta)
    sol = manufactured(sol_id, ps)
    sys = fem.FeSystem(meshing.build_structured(n))
    grid = solver.TimeGrid(t_end, m)
    opts = solver.SolverOptions(tol=tol)
    traj = solver.run(sys, ps, grid, sol.initial_velocity(), sol.forcing, opts)
    return m, np.stack([U.coeffs for U in traj.states])


@dataclass
class TemporalStudy:
    dts: List[float]
    sup_errors: List[float]  # sup_n |U^n_dt - U^n_ref|_{L2} over shared nodes
    eocs: List[float]

    def to_csv(self) -> str:
        lines = ["dt,sup_err,eoc"]
        eocs = [math.nan] + self.eocs
        for dt, e, r in zip(self.dts, self.sup_errors, eocs):
            s = "" if math.isnan(r) else f"{r:.6f}"
            lines.append(f"{dt:.10e},{e:.10e},{s}")
        return "\n".join(lines) + "\n"

    def to_dat(self) -> str:
        lines = ["# dt sup_err eoc"]
        eocs = [math.nan] + self.eocs
        for dt, e, r in zip(self.dts, self.sup_errors, eocs):
            lines.append(f"{dt:.10e} {e:.10e} {r:.6f}")
        return "\n".join(lines) + "\n"


def temporal_study(ps: PStructure, n: int, step_counts: Sequence[int],
                   ref_steps: int, t_end: float = 1.0,
                   sol_id: str = "stream1", tol: float = 1e-10,
                   jobs: int = 1) -> TemporalStudy:
    """Time-step refinement on a fixed mesh against a fine-dt reference
    run, compared at shared time nodes."""
    for m in step_counts:
        if ref_steps % m != 0:
            raise ValueError(f"reference step count {ref_steps} must nest {m}")
    cells = [
        (ps.p, ps.delta, n, m, t_end, sol_id, tol)
        for m in list(step_counts) + [ref_steps]
    ]
    results = dict(_map_cells(_temporal_cell, cells, jobs))
    ref = results[ref_steps]
    sys = fem.FeSystem(meshing.build_structured(n))
    errors = []
    for m in step_counts:
        states = results[m]
        stride = ref_steps // m
        diffs = states - ref[::stride]
        sup = max(sys.velocity_l2(d) for d in diffs)
        errors.append(sup)
    dts = [t_end / m for m in step_counts]
    return TemporalStudy(dts, errors, reporting.eoc(errors, dts))


@dataclass
class RateStudy:
    hs: List[float]
    errors: dict         # name -> list of errors
    eocs: dict           # name -> list of eocs

    def to_csv(self) -> str:
        names = sorted(self.errors)
        header = "h," + ",".join(
            f"{name},eoc_{name}" for name in names
        )
        lines = [header]
        for i, h in enumerate(self.hs):
            cols = []
            for name in names:
                cols.append(f"{self.errors[name][i]:.10e}")
                r = math.nan if i == 0 else self.eocs[name][i - 1]
                cols.append("" if math.isnan(r) else f"{r:.6f}")
            lines.append(f"{h:.10e}," + ",".join(cols))
        return "\n".join(lines) + "\n"

    def to_dat(self) -> str:
        names = sorted(self.errors)
        lines = ["# h " + " ".join(f"{n} eoc_{n}" for n in names)]
        for i, h in enumerate(self.hs):
            cols = []
            for name in names:
                cols.append(f"{self.errors[name][i]:.10e}")
                r = math.nan if i == 0 else self.eocs[name][i - 1]
                cols.append(f"{r:.6f}")
            lines.append(f"{h:.10e} " + " ".join(cols))
        return "\n".join(lines) + "\n"


def _rate_study(hs, errors) -> RateStudy:
    eocs = {name: reporting.eoc(vals, hs) for name, vals in errors.items()}
    return RateStudy(list(hs), errors, eocs)


def initval_study(ps: PStructure, levels: Sequence[int] = (4, 8, 16, 32),
                  sol_id: str = "stream1", tol: float = 1e-10) -> RateStudy:
    """L2 distance between the continuous initial velocity and its
    stress-matching projection, across mesh levels."""
    sol = manufactured(sol_id, ps)
    u0 = sol.initial_velocity()
    errs = []
    for n in levels:
        sys = fem.FeSystem(meshing.build_structured(n))
        U0, _, _ = solver.project_initial(sys, ps, u0, tol=tol)
        errs.append(reporting.velocity_l2_error(sys, U0.coeffs, u0.value))
    return _rate_study([mesh_size(n) for n in levels], {"u0": errs})


def interp_study(ps: PStructure, levels: Sequence[int] = (4, 8, 16, 32),
                 sol_id: str = "stream1") -> RateStudy:
    """Interpolation rates of the divergence-preserving operator: the L2
    distance (expected order 2) and the F-distance (expected order 1)."""
    sol = manufactured(sol_id, ps)
    u0 = sol.initial_velocity()
    l2_errs, f_errs = [], []
    for n in levels:
        sys = fem.FeSystem(meshing.build_structured(n))
        field = fem.interp_div(sys, u0)
        l2_errs.append(reporting.velocity_l2_error(sys, field.coeffs, u0.value))
        f_errs.append(reporting.fmap_l2_error(sys, ps, field.coeffs, u0.sym_grad))
    return _rate_study([mesh_size(n) for n in levels],
                       {"l2": l2_errs, "fmap": f_errs})


def infsup_study(levels: Sequence[int] = (2, 4, 8, 16)):
    """Discrete LBB constants across mesh levels."""
    betas = []
    for n in levels:
        sys = fem.FeSystem(meshing.build_structured(n))
        betas.append(fem.inf_sup_constant(sys))
    return list(levels), betas


def delta_probe(p: float = 1.5, n: int = 16, dt: float = 1.0 / 32.0,
                deltas: Sequence[float] = (0.0, 1e-3, 1e-1),
                t_end: float = 0.25, sol_id: str = "stream1",
                tol: float = 1e-10):
    """Total error across the degeneracy parameter at a fixed resolution;
    the estimates behind the scheme are uniform in delta."""
    totals = []
    m = int(round(t_end / dt))
    sys = fem.FeSystem(meshing.build_structured(n))
    for delta in deltas:
        ps = PStructure(p, delta)
        sol = manufactured(sol_id, ps)
        grid = solver.TimeGrid(t_end, m)
        traj = solver.run(sys, ps, grid, sol.initial_velocity(), sol.forcing,
                          solver.SolverOptions(tol=tol))
        row = reporting.error_report(traj, sol, sys, ps)
        totals.append(row.err_u + row.err_F)
    return list(deltas), totals


def _map_cells(worker, cells, jobs):
    if jobs <= 1:
        return [worker(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, cells))
