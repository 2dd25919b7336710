"""Fully discrete scheme: implicit Euler in time, MINI elements in space.

Each time step solves the saddle system

    M (U - U_prev)/dt + R(U) + B^T q = load,   B U = 0,   mean(q) = 0,

which is the first-order condition of minimizing the convex energy
J(v) = |v - U_prev|_M^2 / (2 dt) + int phi(|Dv|) dx - load . v over the
discretely divergence-free space.  Newton directions come from a sparse
direct factorization of the bordered symmetric indefinite block system;
globalization is Armijo backtracking on J.  The Hessian evaluations use
a regularization floor for delta so the method stays well-posed in the
degenerate regime; the residual always uses the true delta, so the floor
does not move the solution.

The initial value is the nonlinear projection matching the stress
response of the continuous initial velocity on the discrete space.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, nfunc
from .fem import AnalyticVector, FeSystem, Field

__all__ = [
    "SolverError",
    "SolverOptions",
    "TimeGrid",
    "StepMonitor",
    "Trajectory",
    "average_rhs",
    "project_initial",
    "step",
    "run",
    "newton_solve",
]

#: ceiling on dt implementing the scheme's "dt <= alpha < 1" requirement
DT_CEILING = 0.5

# 3-point Gauss nodes/weights on [0, 1], weights summing to 1 (averages)
_TG_NODES = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_TG_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


class SolverError(RuntimeError):
    """Nonlinear solve failure; carries whatever partial data exists."""

    def __init__(self, message, step_index=None, trajectory=None, residual=None):
        super().__init__(message)
        self.step_index = step_index
        self.trajectory = trajectory
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10          # relative residual tolerance
    max_iter: int = 50
    max_backtracks: int = 30
    armijo: float = 1e-4
    backtrack_factor: float = 0.5
    jac_floor: float = 1e-7     # delta floor inside Hessian evaluations


DEFAULT_OPTS = SolverOptions()


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid: M intervals on (0, T], dt = T/M < 1."""

    t_end: float
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one time step")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if not self.dt < 1.0:
            raise ValueError(f"dt = {self.dt} must be below 1")

    @property
    def dt(self) -> float:
        return self.t_end / self.m

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.m + 1)


@dataclass(frozen=True)
class StepMonitor:
    l2_norm: float        # |U^n|_{L2}
    f_energy: float       # |F(DU^n)|_{L2}^2
    newton_iters: int
    residual: float       # algebraic residual after the accepted solve
    fbar_l2_sq: float = 0.0  # |time-averaged forcing|_{L2}^2 on the interval


@dataclass
class Trajectory:
    grid: TimeGrid
    states: List[Field]
    pressures: List[Field]
    monitors: List[StepMonitor]

    def checkpoint_csv(self) -> str:
        """One row per state: n, t_n, l2_norm, f_energy, newton_iters, residual."""
        out = io.StringIO()
        out.write("n,t_n,l2_norm,f_energy,newton_iters,residual\n")
        for n, (t, mon) in enumerate(zip(self.grid.nodes, self.monitors)):
            out.write(
                f"{n},{t:.12g},{mon.l2_norm:.12e},{mon.f_energy:.12e},"
                f"{mon.newton_iters},{mon.residual:.3e}\n"
            )
        return out.getvalue()


# ---------------------------------------------------------------------------
# Newton core
# ---------------------------------------------------------------------------

def newton_solve(grad_and_energy, jacobian, constraints, init, tol,
                 opts: SolverOptions = DEFAULT_OPTS, tol_scale: float = 1.0,
                 constant_jacobian: bool = False, lin_cache: dict = None):
    """Damped Newton on a convex energy restricted to {B u = 0}.

    grad_and_energy(u) -> (gradient, energy) and jacobian(u) -> sparse
    Hessian, all on the reduced (unconstrained) dofs.  constraints is the
    pair (B, mean_vec): the divergence matrix on reduced columns and the
    pressure-mean vector, appended as a single bordered row/column.
    init = (u, q).  Terminates when the residual gradient + B^T q drops
    below tol * tol_scale and |B u|_inf below tol.

    Returns (u, q, info).  Each accepted iterate strictly decreases the
    energy unless the iterate is already converged.
    """
    B, mean_vec = constraints
    u = np.array(init[0], dtype=float)
    q = np.array(init[1], dtype=float)
    nu, nq = u.size, q.size
    # The constant pressure mode spans the kernel of B^T, so the linear
    # solves pin dof 0 (drop its column and the redundant row 0 of B) and
    # the iterate is shifted to exact zero mean afterwards.
    Bp = B[1:, :]
    mean_total = float(mean_vec.sum())
    info = {"iterations": 0, "residual": math.inf, "converged": False,
            "backtracks": 0, "energies": []}

    grad, energy = grad_and_energy(u)
    for it in range(opts.max_iter):
        res = grad + B.T @ q
        res_norm = float(np.linalg.norm(res))
        con_norm = float(np.abs(B @ u).max()) if nu else 0.0
        info["iterations"] = it
        info["residual"] = res_norm
        info["energies"].append(energy)
        if res_norm <= tol * tol_scale and con_norm <= tol:
            info["converged"] = True
            return u, q, info

        if constant_jacobian and lin_cache is not None and "lu" in lin_cache:
            lu = lin_cache["lu"]
        else:
            H = jacobian(u)
            K = sp.bmat([[H, Bp.T], [Bp, None]], format="csc")
            try:
                lu = spla.splu(K)
            except RuntimeError as exc:
                raise SolverError(f"singular linear solve in Newton: {exc}",
                                  residual=res_norm) from exc
            if constant_jacobian and lin_cache is not None:
                lin_cache["lu"] = lu
        rhs = np.concatenate([-res, -(Bp @ u)])
        delta = lu.solve(rhs)
        if not np.all(np.isfinite(delta)):
            raise SolverError("linear solve returned non-finite Newton direction",
                              residual=res_norm)
        du = delta[:nu]
        dq = np.concatenate([[0.0], delta[nu:]])
        dq -= (mean_vec @ dq) / mean_total  # keep the iterate at zero mean

        slope = float(grad @ du)
        # below this, Armijo decrease is unresolvable in floating point
        rounding = 4.0 * np.finfo(float).eps * (1.0 + abs(energy))
        alpha = 1.0
        accepted = False
        for _ in range(opts.max_backtracks + 1):
            grad_new, energy_new = grad_and_energy(u + alpha * du)
            decrease_ok = energy_new <= energy + opts.armijo * alpha * slope + rounding
            if slope >= 0.0 or decrease_ok:
                accepted = True
                break
            alpha *= opts.backtrack_factor
            info["backtracks"] += 1
        if not accepted:
            raise SolverError(
                f"line search stalled after {opts.max_backtracks} backtracks "
                f"(residual {res_norm:.3e})",
                residual=res_norm,
            )
        u = u + alpha * du
        q = q + alpha * dq
        grad, energy = grad_new, energy_new

    raise SolverError(
        f"Newton did not converge within {opts.max_iter} iterations; "
        f"last residual {info['residual']:.3e}",
        residual=info["residual"],
    )


def _reduced_ops(sys: FeSystem):
    free = sys.free_velocity
    B = sys.divergence_matrix[:, free].tocsr()
    return free, B, sys.pressure_mean


def _expand(sys: FeSystem, u_red):
    full = np.zeros(sys.n_velocity)
    full[sys.free_velocity] = u_red
    return full


# ---------------------------------------------------------------------------
# scheme operations
# ---------------------------------------------------------------------------

def averaged_load(sys: FeSystem, f, interval) -> Tuple[np.ndarray, float]:
    """Load vector of the interval mean of f and |f_bar|_{L2}^2.

    The time average uses 3-point Gauss (exact for cubics in t), composed
    with the default spatial rule.
    """
    ta, tb = interval
    if not ta < tb:
        raise ValueError("empty time interval")
    cache = sys.cache
    fbar = np.zeros(cache.pts.shape[:2] + (2,))
    for wk, tk in zip(_TG_WEIGHTS, ta + (tb - ta) * _TG_NODES):
        fbar += wk * np.asarray(f(tk, cache.pts))
    load = fem.assemble_load(sys, fbar, cache)
    norm_sq = float(np.sum(cache.wxa * np.sum(fbar * fbar, axis=-1)))
    return load, norm_sq


def average_rhs(sys: FeSystem, f, interval) -> np.ndarray:
    """Load vector with entries (f_bar, xi_i) on the given interval."""
    return averaged_load(sys, f, interval)[0]


def _stress_problem(sys, ps, free, load, mass_over_dt=None, u_prev=None,
                    jac_floor=0.0):
    """Closures for newton_solve: gradient/energy and Hessian of the step
    energy (or of the projection energy when mass_over_dt is None)."""

    def grad_and_energy(u_red):
        full = _expand(sys, u_red)
        res, phi_int = fem.stress_residual_and_energy(sys, ps, full)
        grad = res - load
        energy = phi_int - float(load @ full)
        if mass_over_dt is not None:
            dv = full - u_prev
            mdv = mass_over_dt @ dv
            grad = grad + mdv
            energy += 0.5 * float(dv @ mdv)
        return grad[free], energy

    def jacobian(u_red):
        full = _expand(sys, u_red)
        H = fem.assemble_stress_jacobian(sys, ps, full, jac_floor)
        if mass_over_dt is not None:
            H = H + mass_over_dt
        return H[free][:, free].tocsc()

    return grad_and_energy, jacobian


def project_initial(sys: FeSystem, ps: nfunc.PStructure, u0: AnalyticVector,
                    tol: float = DEFAULT_OPTS.tol,
                    opts: SolverOptions = DEFAULT_OPTS):
    """Discrete initial value: the divergence-free field whose stress
    response matches that of u0 in every discrete test direction.

    Returns (velocity, multiplier); the multiplier is the zero-mean
    pressure-like field of the constrained projection.
    """
    if u0.grad is None:
        raise ValueError("initial velocity needs a gradient callable")
    load = fem.assemble_stress_load(sys, ps, u0.sym_grad)
    free, B, mvec = _reduced_ops(sys)
    floor = max(ps.delta, opts.jac_floor)
    grad_and_energy, jacobian = _stress_problem(sys, ps, free, load,
                                                jac_floor=floor)
    init_field = fem.interp_div(sys, u0)
    u_red0 = init_field.coeffs[free]
    scale = 1.0 + float(np.linalg.norm(load[free]))
    u_red, q, info = newton_solve(
        grad_and_energy, jacobian, (B, mvec), (u_red0, np.zeros(sys.n_pressure)),
        tol, opts=opts, tol_scale=scale,
        constant_jacobian=(ps.p == 2.0), lin_cache={},
    )
    return sys.velocity_field(_expand(sys, u_red)), sys.pressure_field(q), info


def step(sys: FeSystem, ps: nfunc.PStructure, U_prev: Field, load, dt: float,
         opts: SolverOptions = DEFAULT_OPTS, lin_cache: dict = None):
    """One implicit Euler step.  Returns (U, q, monitor)."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    load = np.asarray(load, dtype=float)
    u_prev = _as_velocity_coeffs(sys, U_prev)
    free, B, mvec = _reduced_ops(sys)
    mass_over_dt = (sys.mass_matrix / dt).tocsr()
    floor = max(ps.delta, opts.jac_floor)
    grad_and_energy, jacobian = _stress_problem(
        sys, ps, free, load, mass_over_dt=mass_over_dt, u_prev=u_prev,
        jac_floor=floor,
    )
    scale = 1.0 + float(np.linalg.norm(load[free]))
    u_red, q, info = newton_solve(
        grad_and_energy, jacobian, (B, mvec), (u_prev[free], np.zeros(sys.n_pressure)),
        opts.tol, opts=opts, tol_scale=scale,
        constant_jacobian=(ps.p == 2.0), lin_cache=lin_cache,
    )
    full = _expand(sys, u_red)
    monitor = StepMonitor(
        l2_norm=sys.velocity_l2(full),
        f_energy=sys.f_energy(ps, full),
        newton_iters=info["iterations"],
        residual=info["residual"],
    )
    return sys.velocity_field(full), sys.pressure_field(q), monitor


def _as_velocity_coeffs(sys, U):
    if isinstance(U, Field):
        if U.space != "velocity":
            raise ValueError("expected a velocity field")
        return np.asarray(U.coeffs, dtype=float)
    return np.asarray(U, dtype=float)


def run(sys: FeSystem, ps: nfunc.PStructure, grid: TimeGrid, u0: AnalyticVector,
        f, opts: SolverOptions = DEFAULT_OPTS) -> Trajectory:
    """March the scheme over the whole grid with interval-averaged loads.

    The discrete Gronwall energy bound is asserted online after every
    step; a violation, like any solver failure, aborts with the partial
    trajectory attached to the raised SolverError.
    """
    dt = grid.dt
    if dt > DT_CEILING:
        raise ValueError(f"dt = {dt} exceeds the ceiling {DT_CEILING}")
    U0, _, info0 = project_initial(sys, ps, u0, tol=opts.tol, opts=opts)
    traj = Trajectory(
        grid=grid,
        states=[U0],
        pressures=[],
        monitors=[StepMonitor(sys.velocity_l2(U0.coeffs),
                              sys.f_energy(ps, U0.coeffs),
                              info0["iterations"], info0["residual"])],
    )
    u0_sq = traj.monitors[0].l2_norm ** 2
    gronwall = math.exp(grid.t_end / (1.0 - dt))
    f_sum = 0.0
    fbar_sum = 0.0
    lin_cache: dict = {}
    times = grid.nodes
    for n in range(1, grid.m + 1):
        load, fbar_sq = averaged_load(sys, f, (times[n - 1], times[n]))
        try:
            U, q, mon = step(sys, ps, traj.states[-1], load, dt, opts,
                             lin_cache=lin_cache)
        except SolverError as exc:
            exc.step_index = n
            exc.trajectory = traj
            raise
        mon = replace(mon, fbar_l2_sq=fbar_sq)
        traj.states.append(U)
        traj.pressures.append(q)
        traj.monitors.append(mon)

        div_defect = float(np.abs(sys.divergence_matrix @ U.coeffs).max())
        if div_defect > 10.0 * opts.tol:
            raise SolverError(
                f"divergence defect {div_defect:.3e} exceeds 10*tol at step {n}",
                step_index=n, trajectory=traj,
            )
        f_sum += mon.f_energy
        fbar_sum += fbar_sq
        # Gronwall bound of the testing-with-U^n argument, per step
        lhs = mon.l2_norm ** 2 + 2.0 * dt * f_sum
        rhs = gronwall * (dt * fbar_sum + u0_sq) + 1e-6
        if lhs > rhs:
            raise SolverError(
                f"discrete energy bound violated at step {n}: "
                f"{lhs:.6e} > {rhs:.6e}",
                step_index=n, trajectory=traj,
            )
    return traj
