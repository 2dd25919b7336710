import math

import numpy as np
import pytest

from pdstokes import fem, meshing, reporting, solver
from pdstokes.manufactured import manufactured
from pdstokes.nfunc import PStructure
from pdstokes.reporting import ErrorRow, ErrorTable, eoc


def test_eoc_examples():
    assert eoc([0.1, 0.05], [1.0, 0.5]) == [pytest.approx(1.0)]
    assert eoc([0.09, 0.0225], [1.0, 0.5]) == [pytest.approx(2.0)]
    assert eoc([3.0, 3.0], [1.0, 0.25]) == [pytest.approx(0.0)]


def test_eoc_validation():
    with pytest.raises(ValueError):
        eoc([1.0], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 0.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [0.5, 1.0])


def test_error_table_eoc_and_serialization():
    rows = [
        ErrorRow(h=0.4, dt=0.1, err_u=0.1, err_F=0.2, runtime=1.0),
        ErrorRow(h=0.2, dt=0.05, err_u=0.025, err_F=0.1, runtime=2.0),
        ErrorRow(h=0.05, dt=0.01, err_u=0.01, err_F=0.04, runtime=3.0),
    ]
    table = ErrorTable(rows)
    eoc_u, eoc_F = table.eoc_columns()
    assert math.isnan(eoc_u[0])
    assert eoc_u[1] == pytest.approx(2.0)
    assert eoc_F[1] == pytest.approx(1.0)
    # 0.2 -> 0.05 is not an exact halving: EOC undefined
    assert math.isnan(eoc_u[2]) and math.isnan(eoc_F[2])
    csv = table.to_csv()
    assert csv.splitlines()[0] == "h,dt,err_u,err_F,eoc_u,eoc_F,runtime_s"
    assert csv.splitlines()[1].split(",")[4] == ""   # undefined EOC is empty
    dat = table.to_dat()
    assert dat.splitlines()[0].startswith("#")
    assert "nan" in dat.splitlines()[1]


@pytest.fixture(scope="module")
def short_run():
    ps = PStructure(2.0, 0.0)
    sol = manufactured("stream1", ps)
    sys = fem.FeSystem(meshing.build_structured(8))
    grid = solver.TimeGrid(0.25, 5)
    traj = solver.run(sys, ps, grid, sol.initial_velocity(), sol.forcing)
    return ps, sol, sys, traj


def test_error_report_self_comparison(short_run):
    """Interpolating the exact solution at the nodes leaves only
    interpolation plus time-sampling error: small but strictly positive."""
    ps, sol, sys, traj = short_run
    from pdstokes.solver import Trajectory
    states = []
    for t in traj.grid.nodes:
        g = sol.g(t)
        field = fem.interp_div(sys, fem.AnalyticVector(
            lambda p, g=g: g * sol.w(p), lambda p, g=g: g * sol.grad_w(p)))
        states.append(field)
    fake = Trajectory(traj.grid, states, [], list(traj.monitors))
    row = reporting.error_report(fake, sol, sys, ps)
    assert 0.0 < row.err_u < 0.05
    assert 0.0 < row.err_F < 0.2


def test_error_report_monotone_in_perturbation(short_run):
    ps, sol, sys, traj = short_run
    row = reporting.error_report(traj, sol, sys, ps)
    from pdstokes.solver import Trajectory
    doubled = Trajectory(
        traj.grid,
        [fem.Field("velocity", 2.0 * U.coeffs) for U in traj.states],
        traj.pressures, traj.monitors,
    )
    row2 = reporting.error_report(doubled, sol, sys, ps)
    assert row2.err_u > row.err_u


def test_error_report_perturbation_scale(short_run):
    """A coefficient perturbation of known mass norm moves the sup error
    to that norm when it dominates."""
    ps, sol, sys, traj = short_run
    from pdstokes.solver import Trajectory
    rng = np.random.default_rng(16)
    pert = rng.normal(size=sys.n_velocity)
    pert[sys.constrained_velocity] = 0.0
    # normalize to L2 norm 1.0, far above the discretization error
    pert /= sys.velocity_l2(pert)
    states = list(traj.states)
    states[3] = fem.Field("velocity", states[3].coeffs + pert)
    bumped = Trajectory(traj.grid, states, traj.pressures, traj.monitors)
    row = reporting.error_report(bumped, sol, sys, ps)
    assert row.err_u == pytest.approx(1.0, rel=1e-2)


def test_discrete_norm_consistency():
    """Mass-matrix norm of the interpolant converges to the analytic L2
    norm at second order."""
    ps = PStructure(2.0, 0.0)
    sol = manufactured("stream1", ps)
    exact_sq = None
    diffs, hs = [], []
    for n in (4, 8, 16, 32):
        sys = fem.FeSystem(meshing.build_structured(n))
        cache = sys.rule_cache(reporting.ERROR_RULE)
        w = sol.w(cache.pts)
        exact = math.sqrt(float(np.sum(cache.wxa * np.sum(w * w, axis=-1))))
        field = fem.interp_div(sys, sol.initial_velocity())
        discrete = sys.velocity_l2(field.coeffs)
        diffs.append(abs(discrete - exact))
        hs.append(math.sqrt(2.0) / n)
    rates = reporting.eoc(diffs, hs)
    assert rates[-1] >= 1.7


def test_mesh_n_roundtrip(short_run):
    ps, sol, sys, traj = short_run
    row = reporting.error_report(traj, sol, sys, ps)
    assert row.h == pytest.approx(math.sqrt(2.0) / 8)
    assert row.dt == pytest.approx(0.05)
