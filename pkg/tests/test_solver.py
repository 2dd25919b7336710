import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from pdstokes import fem, meshing, solver
from pdstokes.nfunc import PStructure
from pdstokes.solver import SolverError, SolverOptions, TimeGrid


def zero_forcing(t, pts):
    return np.zeros(pts.shape[:-1] + (2,))


def test_time_grid_invariants():
    g = TimeGrid(1.0, 4)
    assert g.dt == 0.25
    assert np.allclose(g.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(4.0, 3)   # dt >= 1
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 4)


def test_run_rejects_large_dt(sys4, stream_field):
    ps = PStructure(2.0, 0.0)
    with pytest.raises(ValueError):
        solver.run(sys4, ps, TimeGrid(1.8, 3), stream_field, zero_forcing)


# -- average_rhs -------------------------------------------------------------

def test_average_rhs_constant_and_linear(sys4):
    const = lambda t, pts: np.stack(
        [np.ones(pts.shape[:-1]), 2.0 * np.ones(pts.shape[:-1])], axis=-1)
    load = solver.average_rhs(sys4, const, (0.2, 0.7))
    inst = fem.assemble_load(sys4, lambda pts: const(0.0, pts), sys4.cache)
    assert np.abs(load - inst).max() <= 1e-14

    def linear(t, pts):
        return t * const(0.0, pts)

    load = solver.average_rhs(sys4, linear, (0.0, 1.0))
    mid = fem.assemble_load(sys4, lambda pts: linear(0.5, pts), sys4.cache)
    assert np.abs(load - mid).max() <= 1e-14


def test_average_rhs_cubic_exact(sys4):
    # int_0^1 t^3 dt = 1/4: Gauss-3 integrates cubics exactly
    def cubic(t, pts):
        return t**3 * np.stack(
            [np.ones(pts.shape[:-1]), np.zeros(pts.shape[:-1])], axis=-1)

    load = solver.average_rhs(sys4, cubic, (0.0, 1.0))
    ref = 0.25 * fem.assemble_load(
        sys4, lambda pts: cubic(1.0, pts), sys4.cache)
    assert np.abs(load - ref).max() <= 1e-13 * max(1.0, np.abs(ref).max())
    with pytest.raises(ValueError):
        solver.average_rhs(sys4, cubic, (0.5, 0.5))


# -- project_initial ----------------------------------------------------------

def test_project_initial_zero(sys4):
    zero = fem.AnalyticVector(lambda p: np.zeros(p.shape[:-1] + (2,)),
                              lambda p: np.zeros(p.shape[:-1] + (2, 2)))
    U0, mult, info = solver.project_initial(sys4, PStructure(1.5, 0.1), zero)
    assert np.abs(U0.coeffs).max() <= 1e-12
    assert np.abs(mult.coeffs).max() <= 1e-10


def test_project_initial_p2_single_newton_step(sys8, stream_field):
    ps = PStructure(2.0, 0.0)
    U0, mult, info = solver.project_initial(sys8, ps, stream_field)
    assert info["iterations"] == 1
    assert np.abs(sys8.divergence_matrix @ U0.coeffs).max() <= 1e-10
    assert abs(mult.coeffs @ sys8.pressure_mean) <= 1e-12


@pytest.mark.parametrize("p,delta", [(1.5, 0.0), (3.0, 0.01)])
def test_project_initial_nonlinear(sys8, stream_field, p, delta):
    ps = PStructure(p, delta)
    U0, _, info = solver.project_initial(sys8, ps, stream_field)
    assert info["converged"]
    assert np.abs(sys8.divergence_matrix @ U0.coeffs).max() <= 1e-10
    # the defining property: stress response matches in free directions,
    # orthogonally to the pressure gradient
    res = fem.assemble_stress_residual(sys8, ps, U0.coeffs) \
        - fem.assemble_stress_load(sys8, ps, stream_field.sym_grad)
    free = sys8.free_velocity
    Bf = sys8.divergence_free
    # project the residual onto the kernel of B: solve least squares
    q, *_ = np.linalg.lstsq(Bf.toarray().T, res[free], rcond=None)
    tangential = res[free] - Bf.T @ q
    assert np.linalg.norm(tangential) <= 1e-8


def test_project_initial_requires_gradient(sys4):
    bare = fem.AnalyticVector(lambda p: np.zeros(p.shape[:-1] + (2,)))
    with pytest.raises(ValueError):
        solver.project_initial(sys4, PStructure(2.0, 0.0), bare)


# -- step ---------------------------------------------------------------------

def test_step_zero_data(sys4):
    ps = PStructure(1.5, 0.01)
    U, q, mon = solver.step(sys4, ps, sys4.zero_velocity(),
                            np.zeros(sys4.n_velocity), 0.1)
    assert np.abs(U.coeffs).max() == 0.0
    assert np.abs(q.coeffs).max() <= 1e-14
    assert mon.newton_iters == 0


def test_step_dissipation(sys8, stream_field):
    ps = PStructure(3.0, 0.01)
    U0, _, _ = solver.project_initial(sys8, ps, stream_field)
    U1, _, mon1 = solver.step(sys8, ps, U0, np.zeros(sys8.n_velocity), 0.05)
    assert mon1.l2_norm <= sys8.velocity_l2(U0.coeffs)
    U2, _, _ = solver.step(sys8, ps, U1, np.zeros(sys8.n_velocity), 0.05)
    assert sys8.velocity_l2(U2.coeffs) <= mon1.l2_norm


def test_step_p2_matches_direct_saddle_solve(sys4):
    """One linear step equals an independently assembled one-shot solve."""
    ps = PStructure(2.0, 0.0)
    rng = np.random.default_rng(9)
    u_prev = rng.normal(size=sys4.n_velocity) * 0.1
    u_prev[sys4.constrained_velocity] = 0.0
    load = rng.normal(size=sys4.n_velocity)
    load[sys4.constrained_velocity] = 0.0
    dt = 0.05
    U, q, mon = solver.step(sys4, ps, sys4.velocity_field(u_prev), load, dt)

    free = sys4.free_velocity
    nq = sys4.n_pressure
    H = (sys4.mass_matrix / dt + sys4.stiffness_p2)[np.ix_(free, free)]
    B = sys4.divergence_free
    mvec = sys4.pressure_mean
    mcol = sp.csr_matrix((mvec, (np.arange(nq), np.zeros(nq, dtype=int))),
                         shape=(nq, 1))
    K = sp.bmat([[H, B.T, None], [B, None, mcol], [None, mcol.T, None]],
                format="csc")
    rhs = np.concatenate([
        load[free] + (sys4.mass_matrix @ u_prev)[free] / dt,
        np.zeros(nq), [0.0],
    ])
    sol = spla.spsolve(K, rhs)
    assert np.abs(U.coeffs[free] - sol[:free.size]).max() <= 1e-12
    assert np.abs(q.coeffs - sol[free.size:free.size + nq]).max() <= 1e-10


def test_newton_quadratic_single_iteration(sys4):
    ps = PStructure(2.0, 0.3)
    rng = np.random.default_rng(10)
    u_prev = rng.normal(size=sys4.n_velocity) * 0.1
    u_prev[sys4.constrained_velocity] = 0.0
    load = rng.normal(size=sys4.n_velocity) * 0.1
    U, q, mon = solver.step(sys4, ps, sys4.velocity_field(u_prev), load, 0.1)
    assert mon.newton_iters == 1


def test_newton_energy_monotone(sys8, stream_field):
    """Line-search contract: accepted iterates do not increase the energy."""
    ps = PStructure(3.0, 0.01)
    U0, _, _ = solver.project_initial(sys8, ps, stream_field)
    free = sys8.free_velocity
    B = sys8.divergence_free
    mvec = sys8.pressure_mean
    dt = 0.05
    Mdt = (sys8.mass_matrix / dt).tocsr()
    from pdstokes.solver import _stress_problem, newton_solve
    scale = 10.0 * sys8.velocity_l2(U0.coeffs)
    load = np.zeros(sys8.n_velocity)
    ge, jac = _stress_problem(sys8, ps, free, load, mass_over_dt=Mdt,
                              u_prev=U0.coeffs, jac_floor=1e-7)
    u, q, info = newton_solve(ge, jac, (B, mvec),
                              (U0.coeffs[free], np.zeros(sys8.n_pressure)),
                              1e-10, tol_scale=1.0 + scale)
    energies = info["energies"]
    assert all(b <= a + 1e-12 * (1 + abs(a))
               for a, b in zip(energies, energies[1:]))


def test_newton_p15_delta0_generic_step(sys8, stream_field):
    """Degenerate exponent with the Jacobian floor: converges on a
    generic forced step; the iteration count is a regression anchor."""
    ps = PStructure(1.5, 0.0)
    U0, _, _ = solver.project_initial(sys8, ps, stream_field)
    rng = np.random.default_rng(11)
    load = rng.normal(size=sys8.n_velocity) * 0.05
    load[sys8.constrained_velocity] = 0.0
    U, q, mon = solver.step(sys8, ps, U0, load, 0.05,
                            SolverOptions(jac_floor=1e-7))
    assert mon.newton_iters <= 30
    assert mon.residual <= 1e-10 * (1.0 + np.linalg.norm(load[sys8.free_velocity]))


def test_step_rejects_bad_dt(sys4):
    with pytest.raises(ValueError):
        solver.step(sys4, PStructure(2.0, 0.0), sys4.zero_velocity(),
                    np.zeros(sys4.n_velocity), 0.0)


# -- run ----------------------------------------------------------------------

def test_run_zero_data(sys4):
    zero = fem.AnalyticVector(lambda p: np.zeros(p.shape[:-1] + (2,)),
                              lambda p: np.zeros(p.shape[:-1] + (2, 2)))
    traj = solver.run(sys4, PStructure(1.5, 0.5), TimeGrid(0.2, 4), zero,
                      zero_forcing)
    assert all(np.abs(U.coeffs).max() <= 1e-12 for U in traj.states)
    assert all(np.abs(q.coeffs).max() <= 1e-10 for q in traj.pressures)


def test_run_dissipation_and_monitors(sys8, stream_field):
    ps = PStructure(3.0, 0.01)
    traj = solver.run(sys8, ps, TimeGrid(0.2, 8), stream_field, zero_forcing)
    norms = [m.l2_norm for m in traj.monitors]
    assert norms[0] == max(norms)
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    assert len(traj.states) == 9
    assert len(traj.pressures) == 8
    # divergence-free invariance and pressure means
    for U in traj.states:
        assert np.abs(sys8.divergence_matrix @ U.coeffs).max() <= 1e-9
    for q in traj.pressures:
        assert abs(q.coeffs @ sys8.pressure_mean) <= 1e-12


def test_run_energy_bound_holds(sys8, stream_field):
    """Recompute the per-step Gronwall bound from the recorded monitors."""
    ps = PStructure(1.5, 0.01)

    def forcing(t, pts):
        shape = pts.shape[:-1]
        return 0.3 * np.stack([np.sin(t) * np.ones(shape),
                               np.cos(2 * t) * np.ones(shape)], axis=-1)

    grid = TimeGrid(0.5, 10)
    traj = solver.run(sys8, ps, grid, stream_field, forcing)
    dt = grid.dt
    gronwall = math.exp(grid.t_end / (1.0 - dt))
    u0_sq = traj.monitors[0].l2_norm ** 2
    f_sum = 0.0
    fbar_sum = 0.0
    for mon in traj.monitors[1:]:
        f_sum += mon.f_energy
        fbar_sum += mon.fbar_l2_sq
        lhs = mon.l2_norm ** 2 + 2.0 * dt * f_sum
        rhs = gronwall * (dt * fbar_sum + u0_sq) + 1e-6
        assert lhs <= rhs


def test_run_scheme_residual_audit(sys4, stream_field):
    """Accepted states plugged back into the assembled scheme equations."""
    ps = PStructure(1.5, 0.01)
    grid = TimeGrid(0.2, 4)
    traj = solver.run(sys4, ps, grid, stream_field, zero_forcing)
    free = sys4.free_velocity
    for n in range(1, grid.m + 1):
        U, Uprev = traj.states[n], traj.states[n - 1]
        q = traj.pressures[n - 1]
        res = (sys4.mass_matrix @ (U.coeffs - Uprev.coeffs)) / grid.dt \
            + fem.assemble_stress_residual(sys4, ps, U.coeffs) \
            + sys4.divergence_matrix.T @ q.coeffs
        assert np.linalg.norm(res[free]) <= 1e-10 * 1.0 + 1e-9


def test_checkpoint_csv(sys4, stream_field):
    ps = PStructure(2.0, 0.0)
    traj = solver.run(sys4, ps, TimeGrid(0.2, 2), stream_field, zero_forcing)
    text = traj.checkpoint_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "n,t_n,l2_norm,f_energy,newton_iters,residual"
    assert len(lines) == 4
    row = lines[1].split(",")
    assert int(row[0]) == 0 and float(row[1]) == 0.0


def test_solver_error_carries_partial_trajectory(sys4, stream_field):
    """An unreachable tolerance aborts with the partial data attached."""
    ps = PStructure(1.5, 0.0)
    opts = SolverOptions(tol=1e-300, max_iter=3)
    with pytest.raises(SolverError) as err:
        solver.run(sys4, ps, TimeGrid(0.2, 4), stream_field, zero_forcing,
                   opts)
    assert err.value.step_index is not None or err.value.residual is not None
