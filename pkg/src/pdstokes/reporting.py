"""Error norms against manufactured solutions and EOC bookkeeping.

The piecewise-constant-in-time reconstruction of a trajectory is
compared in the two norms the convergence theory controls: the sampled
L-infinity(L2) velocity distance and the L2(L2) distance of the
natural nonlinear quantity F(Du).  Spatial integrals use the degree-6
rule with one uniform cell subdivision (the exact solution is not a
polynomial); time integrals use 3-point Gauss per interval.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import nfunc
from .fem import FeSystem
from .manufactured import ManufacturedSolution
from .quadrature import quadrature, refine
from .solver import Trajectory, _TG_NODES, _TG_WEIGHTS

__all__ = ["ErrorRow", "ErrorTable", "eoc", "error_report"]

#: spatial rule for integrals against non-polynomial exact data
ERROR_RULE = refine(quadrature(6), levels=1)

#: number of equispaced sample times per interval for the sup-norm
N_TIME_SAMPLES = 5


@dataclass(frozen=True)
class ErrorRow:
    h: float
    dt: float
    err_u: float   # sampled L-inf(L2) velocity error
    err_F: float   # L2(L2) error of F(Du)
    runtime: float = 0.0


@dataclass
class ErrorTable:
    """Rows plus EOC columns; EOC is defined only between consecutive rows
    whose mesh sizes halve exactly."""

    rows: List[ErrorRow]

    def eoc_columns(self):
        eoc_u = [math.nan]
        eoc_F = [math.nan]
        for prev, cur in zip(self.rows, self.rows[1:]):
            ratio = prev.h / cur.h
            if abs(ratio - 2.0) < 1e-9 and prev.err_u > 0 and cur.err_u > 0:
                eoc_u.append(math.log(prev.err_u / cur.err_u) / math.log(2.0))
                eoc_F.append(math.log(prev.err_F / cur.err_F) / math.log(2.0))
            else:
                eoc_u.append(math.nan)
                eoc_F.append(math.nan)
        return eoc_u, eoc_F

    def to_csv(self) -> str:
        eoc_u, eoc_F = self.eoc_columns()
        out = io.StringIO()
        out.write("h,dt,err_u,err_F,eoc_u,eoc_F,runtime_s\n")
        for row, cu, cF in zip(self.rows, eoc_u, eoc_F):
            su = "" if math.isnan(cu) else f"{cu:.6f}"
            sF = "" if math.isnan(cF) else f"{cF:.6f}"
            out.write(
                f"{row.h:.10e},{row.dt:.10e},{row.err_u:.10e},"
                f"{row.err_F:.10e},{su},{sF},{row.runtime:.3f}\n"
            )
        return out.getvalue()

    def to_dat(self) -> str:
        """Gnuplot-style mirror: space separated, nan for undefined EOC."""
        eoc_u, eoc_F = self.eoc_columns()
        lines = ["# h dt err_u err_F eoc_u eoc_F runtime_s"]
        for row, cu, cF in zip(self.rows, eoc_u, eoc_F):
            lines.append(
                f"{row.h:.10e} {row.dt:.10e} {row.err_u:.10e} "
                f"{row.err_F:.10e} {cu:.6f} {cF:.6f} {row.runtime:.3f}"
            )
        return "\n".join(lines) + "\n"


def eoc(errors: Sequence[float], hs: Sequence[float]) -> List[float]:
    """Experimental orders: log(e_k/e_{k+1}) / log(h_k/h_{k+1})."""
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need equally many errors and mesh sizes, at least two")
    if any(e <= 0.0 for e in errors):
        raise ValueError("EOC needs strictly positive errors")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must decrease strictly")
    return [
        math.log(e1 / e2) / math.log(h1 / h2)
        for (e1, e2), (h1, h2) in zip(zip(errors, errors[1:]), zip(hs, hs[1:]))
    ]


def error_report(traj: Trajectory, exact: ManufacturedSolution,
                 sys: FeSystem, ps: nfunc.PStructure,
                 runtime: float = 0.0) -> ErrorRow:
    """Error row of a completed trajectory against its exact solution.

    The sup norm samples N_TIME_SAMPLES equispaced times per interval
    (right-endpoint convention: t_n belongs to I_n) plus t = 0 against
    the initial state; the F-error integrates Gauss-3 in time.
    """
    cache = sys.rule_cache(ERROR_RULE)
    w = exact.w(cache.pts)
    Dw = nfunc.sym(exact.grad_w(cache.pts))
    m0 = nfunc.frob(Dw)
    # |g(t) w - U|^2 expands in g: cache the three spatial integrals
    int_ww = float(np.sum(cache.wxa * np.sum(w * w, axis=-1)))

    grid = traj.grid
    dt = grid.dt
    half_exp = 0.5 * (ps.p - 2.0)
    err_u_sq = 0.0
    err_F_sq = 0.0

    for n, state in enumerate(traj.states):
        U = sys.velocity_values(state.coeffs, cache)
        int_wU = float(np.sum(cache.wxa * np.sum(w * U, axis=-1)))
        int_UU = float(np.sum(cache.wxa * np.sum(U * U, axis=-1)))

        if n == 0:
            g0 = exact.g(0.0)
            err_u_sq = max(err_u_sq, g0 * g0 * int_ww - 2.0 * g0 * int_wU + int_UU)
            continue

        t_left = grid.nodes[n - 1]
        for j in range(1, N_TIME_SAMPLES + 1):
            g = exact.g(t_left + dt * j / N_TIME_SAMPLES)
            err_u_sq = max(err_u_sq, g * g * int_ww - 2.0 * g * int_wU + int_UU)

        # F-distance via radial factors: F(Du_ex) = fE * g * Dw and
        # F(DU) = fU * DU, so only scalar fields vary with the time node.
        DU = sys.velocity_sym_gradients(state.coeffs, cache)
        mU = nfunc.frob(DU)
        fU = nfunc.radial_scale(ps, mU, half_exp)
        int_FUFU = float(np.sum(cache.wxa * (fU * mU) ** 2))
        dot_wU = np.einsum("cqij,cqij->cq", Dw, DU)
        cross_w = cache.wxa * fU * dot_wU
        for wk, tk in zip(_TG_WEIGHTS, t_left + dt * _TG_NODES):
            g = exact.g(tk)
            fE = nfunc.radial_scale(ps, g * m0, half_exp)
            int_FEFE = float(np.sum(cache.wxa * (fE * g * m0) ** 2))
            int_cross = g * float(np.sum(fE * cross_w))
            err_F_sq += dt * wk * (int_FEFE - 2.0 * int_cross + int_FUFU)

    return ErrorRow(
        h=float(np.sqrt(2.0)) / _mesh_n(sys),
        dt=dt,
        err_u=math.sqrt(max(err_u_sq, 0.0)),
        err_F=math.sqrt(max(err_F_sq, 0.0)),
        runtime=runtime,
    )


def velocity_l2_error(sys: FeSystem, coeffs, value) -> float:
    """L2 distance between a discrete velocity and a closed-form field."""
    cache = sys.rule_cache(ERROR_RULE)
    diff = sys.velocity_values(coeffs, cache) - value(cache.pts)
    return math.sqrt(float(np.sum(cache.wxa * np.sum(diff * diff, axis=-1))))


def fmap_l2_error(sys: FeSystem, ps, coeffs, sym_grad) -> float:
    """L2 distance of F(Du) between a discrete field and a closed form."""
    cache = sys.rule_cache(ERROR_RULE)
    diff = nfunc.fmap(ps, sys.velocity_sym_gradients(coeffs, cache)) \
        - nfunc.fmap(ps, sym_grad(cache.pts))
    return math.sqrt(float(np.sum(cache.wxa * np.sum(diff * diff, axis=(-1, -2)))))


def pressure_l2_error(sys: FeSystem, coeffs, value) -> float:
    cache = sys.rule_cache(ERROR_RULE)
    diff = sys.pressure_values(coeffs, cache) - value(cache.pts)
    return math.sqrt(float(np.sum(cache.wxa * diff * diff)))


def _mesh_n(sys: FeSystem) -> int:
    return int(round(math.sqrt(sys.mesh.n_cells / 2)))
