import numpy as np
import pytest

from pdstokes import nfunc
from pdstokes.manufactured import laplacian_w, manufactured
from pdstokes.nfunc import PStructure


@pytest.fixture(scope="module")
def sol():
    return manufactured("stream1", PStructure(2.0, 0.3))


def test_unknown_id():
    with pytest.raises(ValueError):
        manufactured("vortex9", PStructure(2.0, 0.0))


def test_divergence_free_pointwise(sol):
    rng = np.random.default_rng(13)
    pts = rng.uniform(0.0, 1.0, size=(100, 2))
    G = sol.grad_w(pts)
    assert np.abs(G[..., 0, 0] + G[..., 1, 1]).max() <= 1e-10


def test_zero_trace_and_zero_normal_derivative(sol):
    s = np.linspace(0.0, 1.0, 41)
    z, o = np.zeros_like(s), np.ones_like(s)
    edges = np.concatenate([
        np.stack([s, z], axis=-1), np.stack([s, o], axis=-1),
        np.stack([z, s], axis=-1), np.stack([o, s], axis=-1),
    ])
    # w = rotated grad(psi), so w = 0 on the boundary captures both the
    # zero trace of u and the vanishing normal derivative of psi
    assert np.abs(sol.w(edges)).max() <= 1e-12


def test_pressure_zero_mean(sol):
    from pdstokes.quadrature import edge_rule
    xs, ws = edge_rule(32)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    wgt = np.outer(ws, ws).ravel()
    assert abs(float(np.sum(wgt * sol.q_spatial(grid)))) <= 1e-10


def test_time_factor(sol):
    pts = np.array([[0.3, 0.4]])
    assert np.allclose(sol.velocity(2.0, pts), 2.0 * sol.w(pts))
    assert np.allclose(sol.sym_grad(2.0, pts),
                       2.0 * nfunc.sym(sol.grad_w(pts)))
    assert sol.g_prime(1.23) == 0.5


@pytest.mark.parametrize("delta", [0.0, 0.3, 1.0])
def test_forcing_p2_closed_form(delta):
    """At p = 2 the stress divergence is half the vector Laplacian of the
    divergence-free profile; the stencil must match it pointwise."""
    ps = PStructure(2.0, delta)
    sol = manufactured("stream1", ps)
    rng = np.random.default_rng(14)
    pts = rng.uniform(0.02, 0.98, size=(300, 2))
    for t in (0.0, 0.6):
        fd = sol.forcing(t, pts)
        closed = (sol.g_prime(t) * sol.w(pts)
                  - 0.5 * sol.g(t) * laplacian_w(pts)
                  + sol.g(t) * sol.grad_q_spatial(pts))
        assert np.abs(fd - closed).max() <= 1e-7


def test_forcing_one_sided_near_boundary():
    ps = PStructure(2.0, 0.1)
    sol = manufactured("stream1", ps)
    pts = np.array([
        [5e-5, 0.5], [1.0 - 5e-5, 0.3], [0.4, 1e-6], [0.7, 1.0 - 1e-6],
        [1e-5, 1e-5],
    ])
    fd = sol.forcing(0.2, pts)
    closed = (sol.g_prime(0.2) * sol.w(pts)
              - 0.5 * sol.g(0.2) * laplacian_w(pts)
              + sol.g(0.2) * sol.grad_q_spatial(pts))
    assert np.abs(fd - closed).max() <= 1e-7


def test_forcing_cache_reuses_points():
    ps = PStructure(1.5, 0.01)
    sol = manufactured("stream1", ps)
    rng = np.random.default_rng(15)
    pts = rng.uniform(0.1, 0.9, size=(50, 2))
    a = sol.forcing(0.1, pts)
    b = sol.forcing(0.1, pts)      # second call hits the stencil cache
    assert np.array_equal(a, b)
    # different point array gives independent values
    pts2 = pts + 1e-3
    c = sol.forcing(0.1, pts2)
    assert not np.array_equal(a, c)


def test_initial_velocity_field(sol):
    u0 = sol.initial_velocity()
    pts = np.array([[0.25, 0.5], [0.5, 0.75]])
    assert np.allclose(u0.value(pts), sol.w(pts))
    assert np.allclose(u0.grad(pts), sol.grad_w(pts))
    assert np.allclose(u0.sym_grad(pts), nfunc.sym(sol.grad_w(pts)))
