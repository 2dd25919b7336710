"""MINI finite element spaces on a triangulated unit square.

Velocity: continuous P1 plus one cubic cell bubble (27 l1 l2 l3) per
component, zero trace enforced by eliminating boundary-vertex dofs.
Pressure: continuous P1 with the zero mean handled as a single scalar
constraint.  The module assembles the constant matrices (mass,
divergence, p=2 stiffness), the nonlinear stress residual/Jacobian, the
divergence-preserving interpolation built from a cell-based Scott-Zhang
average plus bubble correction, a Clement mean interpolation for the
pressure, and an inf-sup estimator based on the pressure Schur
complement.

Velocity dof layout: component c at scalar dof s is 2*s + c, where the
scalar dofs are the V vertices followed by the C cell bubbles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg

from . import nfunc
from .meshing import Mesh
from .quadrature import QuadRule, quadrature, refine

__all__ = [
    "Field",
    "AnalyticVector",
    "FeSystem",
    "assemble_mass",
    "assemble_divergence",
    "assemble_stress_residual",
    "assemble_stress_jacobian",
    "assemble_stress_load",
    "assemble_load",
    "scott_zhang",
    "interp_div",
    "interp_pressure",
    "inf_sup_constant",
    "export_coo",
]

#: mean of the cell bubble over its cell, integral of 27 l1 l2 l3 / |T|
BUBBLE_MEAN = 27.0 / 60.0


@dataclass(frozen=True)
class Field:
    """Coefficient vector tagged with its space ("velocity" or "pressure")."""

    space: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.space not in ("velocity", "pressure"):
            raise ValueError(f"unknown space tag {self.space!r}")
        self.coeffs.setflags(write=False)


@dataclass(frozen=True)
class AnalyticVector:
    """A closed-form vector field: value(x) -> (..., 2); optionally its
    Jacobian grad(x) -> (..., 2, 2) with [i, j] = d_j w_i, and div(x)."""

    value: Callable
    grad: Optional[Callable] = None
    div: Optional[Callable] = None

    def sym_grad(self, x):
        return nfunc.sym(self.grad(x))


class _RuleCache:
    """Per-rule geometric data: physical points, weighted areas, scalar
    basis values, and the bubble gradient."""

    def __init__(self, mesh: Mesh, rule: QuadRule, grad_lambda):
        lam = rule.points
        xy = mesh.cell_coords()
        self.rule = rule
        self.pts = np.einsum("qk,ckd->cqd", lam, xy)
        self.wxa = rule.weights[None, :] * mesh.areas()[:, None]
        bubble = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        self.vals = np.column_stack([lam, bubble])
        # pair products: coefficient of grad(lambda_i) in grad(bubble)/27
        self.pairs = np.column_stack([
            lam[:, 1] * lam[:, 2],
            lam[:, 0] * lam[:, 2],
            lam[:, 0] * lam[:, 1],
        ])
        #: (C, Q, 2) gradient of the cell bubble at the rule points
        self.grad_bubble = 27.0 * np.einsum("qk,ckd->cqd", self.pairs, grad_lambda)


class FeSystem:
    """Dof maps, quadrature caches and assembled constant matrices."""

    def __init__(self, mesh: Mesh, quad_degree: int = 6):
        self.mesh = mesh
        self.quad = quadrature(quad_degree)
        #: rule for integrals of closed-form (non-FE) data
        self.analytic_rule = refine(quadrature(10), levels=1)

        V, C = mesh.n_vertices, mesh.n_cells
        self.n_scalar = V + C
        self.n_velocity = 2 * self.n_scalar
        self.n_pressure = V

        # per-cell scalar dofs: three vertices then the bubble
        self.cell_scalar = np.column_stack([mesh.cells, V + np.arange(C)])
        self.vel_dofs = 2 * self.cell_scalar[:, :, None] + np.arange(2)

        constrained = np.zeros(self.n_velocity, dtype=bool)
        constrained[2 * mesh.boundary_vertices] = True
        constrained[2 * mesh.boundary_vertices + 1] = True
        self.constrained_velocity = np.flatnonzero(constrained)
        self.free_velocity = np.flatnonzero(~constrained)

        # affine geometry
        xy = mesh.cell_coords()
        J = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=-1)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(detJ <= 0):
            raise ValueError("mesh cells must be positively oriented")
        JinvT = np.empty_like(J)
        JinvT[:, 0, 0] = J[:, 1, 1] / detJ
        JinvT[:, 0, 1] = -J[:, 1, 0] / detJ
        JinvT[:, 1, 0] = -J[:, 0, 1] / detJ
        JinvT[:, 1, 1] = J[:, 0, 0] / detJ
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        #: (C, 3, 2) constant gradients of the barycentric coordinates
        self.grad_lambda = np.einsum("cdr,ar->cad", JinvT, ref)

        self._caches: dict = {}
        self.cache = self.rule_cache(self.quad)
        cache = self.cache
        # gradients of all four scalar basis functions at the default rule
        gl = np.broadcast_to(
            self.grad_lambda[:, None, :, :],
            (mesh.n_cells, cache.rule.npoints, 3, 2),
        )
        self.grads6 = np.concatenate(
            [gl, cache.grad_bubble[:, :, None, :]], axis=2
        )

        self.mass_matrix = assemble_mass(self)
        self.divergence_matrix = assemble_divergence(self)
        self.divergence_free = self.divergence_matrix[:, self.free_velocity].tocsr()
        self.pressure_mass = self._assemble_pressure_mass()
        self.stiffness_p2 = assemble_stress_jacobian(
            self, nfunc.PStructure(2.0, 0.0), self.zero_velocity()
        )
        #: integrals of the pressure basis functions (the mean constraint)
        self.pressure_mean = np.zeros(V)
        np.add.at(
            self.pressure_mean,
            mesh.cells.ravel(),
            np.repeat(mesh.areas() / 3.0, 3),
        )

    # -- caches -------------------------------------------------------

    def rule_cache(self, rule: QuadRule) -> _RuleCache:
        key = id(rule)
        if key not in self._caches:
            self._caches[key] = (rule, _RuleCache(self.mesh, rule, self.grad_lambda))
        return self._caches[key][1]

    @property
    def analytic_cache(self) -> _RuleCache:
        return self.rule_cache(self.analytic_rule)

    # -- fields -------------------------------------------------------

    def zero_velocity(self) -> Field:
        return Field("velocity", np.zeros(self.n_velocity))

    def zero_pressure(self) -> Field:
        return Field("pressure", np.zeros(self.n_pressure))

    def velocity_field(self, coeffs) -> Field:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_velocity,):
            raise ValueError("velocity coefficient vector has wrong length")
        return Field("velocity", coeffs)

    def pressure_field(self, coeffs) -> Field:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_pressure,):
            raise ValueError("pressure coefficient vector has wrong length")
        return Field("pressure", coeffs)

    def local_velocity(self, coeffs):
        """(C, 4, 2) per-cell coefficients of a velocity vector."""
        return coeffs[self.vel_dofs]

    def velocity_values(self, coeffs, cache: _RuleCache = None):
        """u at the cache points, (C, Q, 2)."""
        cache = cache or self.cache
        loc = self.local_velocity(np.asarray(coeffs))
        return np.matmul(cache.vals, loc)

    def velocity_gradients(self, coeffs, cache: _RuleCache = None):
        """Full gradient of u at the cache points, (C, Q, 2, 2)."""
        cache = cache or self.cache
        loc = self.local_velocity(np.asarray(coeffs))
        nodal = np.einsum("cai,cad->cid", loc[:, :3], self.grad_lambda)
        # outer product of the bubble coefficient with the bubble gradient
        bub = loc[:, 3][:, None, :, None] * cache.grad_bubble[:, :, None, :]
        return nodal[:, None, :, :] + bub

    def velocity_sym_gradients(self, coeffs, cache: _RuleCache = None):
        return nfunc.sym(self.velocity_gradients(coeffs, cache))

    def pressure_values(self, coeffs, cache: _RuleCache = None):
        cache = cache or self.cache
        loc = np.asarray(coeffs)[self.mesh.cells]
        return np.einsum("qa,ca->cq", cache.vals[:, :3], loc)

    # -- norms --------------------------------------------------------

    def velocity_l2(self, coeffs) -> float:
        c = np.asarray(coeffs)
        return float(math.sqrt(max(c @ (self.mass_matrix @ c), 0.0)))

    def f_energy(self, ps: nfunc.PStructure, coeffs) -> float:
        """|F(Du)|_{L2}^2 of the discrete field, by the default rule."""
        Du = self.velocity_sym_gradients(coeffs)
        F = nfunc.fmap(ps, Du)
        return float(np.sum(self.cache.wxa * np.sum(F * F, axis=(-1, -2))))

    def _assemble_pressure_mass(self):
        cache = self.cache
        v3 = cache.vals[:, :3]
        loc = np.einsum("q,qa,qb->ab", self.quad.weights, v3, v3)
        C = self.mesh.n_cells
        local = self.mesh.areas()[:, None, None] * loc[None, :, :]
        rows = np.repeat(self.mesh.cells, 3, axis=1).ravel()
        cols = np.tile(self.mesh.cells, (1, 3)).ravel()
        return sp.coo_matrix(
            (local.ravel(), (rows, cols)),
            shape=(self.n_pressure, self.n_pressure),
        ).tocsr()


# ---------------------------------------------------------------------------
# constant matrices
# ---------------------------------------------------------------------------

def assemble_mass(sys: FeSystem):
    """Velocity mass matrix, entry (i, j) = int xi_i . xi_j dx."""
    cache = sys.cache
    loc = np.einsum("q,qa,qb->ab", sys.quad.weights, cache.vals, cache.vals)
    local = sys.mesh.areas()[:, None, None] * loc[None, :, :]
    rows, cols, vals = [], [], []
    for comp in range(2):
        dof = 2 * sys.cell_scalar + comp
        rows.append(np.repeat(dof, 4, axis=1).ravel())
        cols.append(np.tile(dof, (1, 4)).ravel())
        vals.append(local.ravel())
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sys.n_velocity, sys.n_velocity),
    ).tocsr()
    # duplicate summation order is row-dependent; make symmetry exact
    return (M + M.T) * 0.5


def assemble_divergence(sys: FeSystem):
    """B[i, j] = int eta_i div xi_j dx (pressure rows, velocity columns).

    The integrands are polynomials of degree <= 3, so the default rule
    integrates them exactly.
    """
    cache = sys.cache
    # local[c, a, b, d] = int_T eta_a d_d(phi_b)
    local = np.einsum("cq,qa,cqbd->cabd", cache.wxa, cache.vals[:, :3], sys.grads6)
    rows = np.broadcast_to(
        sys.mesh.cells[:, :, None, None], local.shape
    ).ravel()
    cols = np.broadcast_to(
        sys.vel_dofs[:, None, :, :], local.shape
    ).ravel()
    return sp.coo_matrix(
        (local.ravel(), (rows, cols)),
        shape=(sys.n_pressure, sys.n_velocity),
    ).tocsr()


# ---------------------------------------------------------------------------
# nonlinear stress terms
# ---------------------------------------------------------------------------

def _as_coeffs(U):
    return U.coeffs if isinstance(U, Field) else np.asarray(U, dtype=float)


def stress_residual_and_energy(sys: FeSystem, ps: nfunc.PStructure, U):
    """(residual vector, int phi(|Du_U|) dx), sharing one gradient sweep."""
    cache = sys.cache
    Du = sys.velocity_sym_gradients(_as_coeffs(U))
    m = nfunc.frob(Du)
    S = nfunc.stress_sym(ps, Du, m)
    # S : sym(e_c x g) = (S g)_c for symmetric S
    contrib = np.einsum("cq,cqai->cai", cache.wxa, np.matmul(sys.grads6, S))
    out = np.bincount(sys.vel_dofs.ravel(), weights=contrib.ravel(),
                      minlength=sys.n_velocity)
    energy = float(np.sum(cache.wxa * nfunc.phi(ps, m)))
    return out, energy


def assemble_stress_residual(sys: FeSystem, ps: nfunc.PStructure, U):
    """Vector with entries int S(Du_U) : D xi_i dx."""
    return stress_residual_and_energy(sys, ps, U)[0]


def assemble_stress_jacobian(sys: FeSystem, ps: nfunc.PStructure, U,
                             jac_floor: float = 0.0):
    """Assembled directional stress derivative at U; symmetric and PSD on
    the unconstrained dofs.  jac_floor replaces delta inside the radial
    coefficient evaluations only."""
    cache = sys.cache
    C, Q = cache.wxa.shape
    Du = sys.velocity_sym_gradients(_as_coeffs(U))
    m = nfunc.frob(Du)
    c0, c1 = nfunc.stress_derivative_coeffs(ps, m, jac_floor)

    # rank-one radial part: alpha[(a,i)] = (Du grad_a)_i for symmetric Du
    alpha = np.matmul(sys.grads6, Du).reshape(C, Q, 8)
    local = np.matmul(
        alpha.transpose(0, 2, 1), alpha * (cache.wxa * c1)[:, :, None]
    ).reshape(C, 4, 2, 4, 2)

    # isotropic part c0 * sym(e_i x g_a) : sym(e_j x g_b)
    Gw = sys.grads6 * (cache.wxa * c0)[:, :, None, None]
    flatA = sys.grads6.transpose(0, 2, 3, 1).reshape(C, 8, Q)
    flatW = Gw.transpose(0, 2, 3, 1).reshape(C, 8, Q)
    # [(a,d),(b,d)] contraction over q and d gives grad_a . grad_b
    G = np.matmul(
        flatW.reshape(C, 4, 2 * Q), flatA.reshape(C, 4, 2 * Q).transpose(0, 2, 1)
    )
    eye = np.eye(2)
    local = local + 0.5 * G[:, :, None, :, None] * eye[None, None, :, None, :]
    # cross part 0.5 * g_a[j] g_b[i], index order fixed by transposition
    cross = np.matmul(flatW, flatA.transpose(0, 2, 1)).reshape(C, 4, 2, 4, 2)
    local = local + 0.5 * cross.transpose(0, 1, 4, 3, 2)

    rows = np.broadcast_to(sys.vel_dofs[:, :, :, None, None], local.shape).ravel()
    cols = np.broadcast_to(sys.vel_dofs[:, None, None, :, :], local.shape).ravel()
    return sp.coo_matrix(
        (local.ravel(), (rows, cols)),
        shape=(sys.n_velocity, sys.n_velocity),
    ).tocsr()


def assemble_stress_load(sys: FeSystem, ps: nfunc.PStructure, sym_grad,
                         cache: _RuleCache = None):
    """Vector with entries int S(G(x)) : D xi_i dx for a closed-form
    symmetric gradient G; used by the initial-value projection."""
    cache = cache or sys.analytic_cache
    S = nfunc.stress(ps, sym_grad(cache.pts))
    out = np.zeros(sys.n_velocity)
    # nodal part: constant gradients, so sum the weighted stress first
    Ssum = np.einsum("cq,cqij->cij", cache.wxa, S)
    nodal = np.einsum("cij,caj->cai", Ssum, sys.grad_lambda)
    np.add.at(out, sys.vel_dofs[:, :3].ravel(), nodal.ravel())
    # bubble part: grad b = 27 sum_k pairs_k grad lambda_k
    Sb = 27.0 * np.einsum("cq,qk,cqij,ckj->ci", cache.wxa, cache.pairs, S,
                          sys.grad_lambda)
    np.add.at(out, sys.vel_dofs[:, 3].ravel(), Sb.ravel())
    return out


def assemble_pressure_load(sys: FeSystem, values, cache: _RuleCache = None):
    """Vector with entries int s(x) eta_i dx over the pressure basis."""
    cache = cache or sys.analytic_cache
    sv = values(cache.pts) if callable(values) else values
    contrib = np.einsum("cq,qa->ca", cache.wxa * sv, cache.vals[:, :3])
    return np.bincount(sys.mesh.cells.ravel(), weights=contrib.ravel(),
                       minlength=sys.n_pressure)


def assemble_load(sys: FeSystem, values, cache: _RuleCache = None):
    """Vector with entries int f . xi_i dx.

    `values` is either a callable x -> (..., 2) or a precomputed (C, Q, 2)
    array at the cache points.
    """
    cache = cache or sys.cache
    f = values(cache.pts) if callable(values) else values
    contrib = np.einsum("cq,cqi,qa->cai", cache.wxa, f, cache.vals)
    out = np.zeros(sys.n_velocity)
    np.add.at(out, sys.vel_dofs.ravel(), contrib.ravel())
    return out


# ---------------------------------------------------------------------------
# interpolation operators
# ---------------------------------------------------------------------------

# inverse of the unit P1 mass [[2,1,1],[1,2,1],[1,1,2]]/12, times |T|
_P1_MASS_INV = 3.0 * np.array([
    [3.0, -1.0, -1.0],
    [-1.0, 3.0, -1.0],
    [-1.0, -1.0, 3.0],
])


def scott_zhang(sys: FeSystem, w) -> Field:
    """Nodal P1 quasi-interpolant of a zero-trace vector field.

    Each interior vertex takes the value at that vertex of the P1
    L2-projection of w over one fixed adjacent cell (the lowest-index
    one); boundary vertices are set to zero, bubbles to zero.
    """
    value = w.value if isinstance(w, AnalyticVector) else w
    cache = sys.analytic_cache
    wv = value(cache.pts)
    # moments int_T w phi_a and the per-cell projection coefficients
    mom = np.einsum("cq,cqi,qa->cai", cache.wxa, wv, cache.vals[:, :3])
    proj = np.einsum("ab,cbi->cai", _P1_MASS_INV, mom) / sys.mesh.areas()[:, None, None]

    coeffs = np.zeros(sys.n_velocity)
    boundary = set(int(v) for v in sys.mesh.boundary_vertices)
    vertex_cells = sys.mesh.vertex_cells()
    for v in range(sys.mesh.n_vertices):
        if v in boundary:
            continue
        c = int(vertex_cells[v][0])
        a = int(np.flatnonzero(sys.mesh.cells[c] == v)[0])
        coeffs[2 * v] = proj[c, a, 0]
        coeffs[2 * v + 1] = proj[c, a, 1]
    return Field("velocity", coeffs)


def interp_div(sys: FeSystem, w) -> Field:
    """Divergence-preserving interpolant: Scott-Zhang plus the bubble
    correction that matches every cell mean of w exactly."""
    value = w.value if isinstance(w, AnalyticVector) else w
    base = scott_zhang(sys, value)
    cache = sys.analytic_cache
    area = sys.mesh.areas()
    w_mean = np.einsum("cq,cqi->ci", cache.wxa, value(cache.pts)) / area[:, None]
    sz_mean = np.mean(base.coeffs[2 * sys.mesh.cells[:, :, None] + np.arange(2)], axis=1)
    c_T = (sz_mean - w_mean) / BUBBLE_MEAN
    coeffs = base.coeffs.copy()
    V = sys.mesh.n_vertices
    C = sys.mesh.n_cells
    bub = 2 * (V + np.arange(C))
    coeffs[bub] = -c_T[:, 0]
    coeffs[bub + 1] = -c_T[:, 1]
    return Field("velocity", coeffs)


def interp_pressure(sys: FeSystem, q) -> Field:
    """Clement-type interpolant: each nodal value is the mean of q over
    the cells touching the vertex."""
    cache = sys.analytic_cache
    qv = q(cache.pts)
    cell_int = np.einsum("cq,cq->c", cache.wxa, qv)
    num = np.zeros(sys.n_pressure)
    den = np.zeros(sys.n_pressure)
    cells = sys.mesh.cells
    np.add.at(num, cells.ravel(), np.repeat(cell_int, 3))
    np.add.at(den, cells.ravel(), np.repeat(sys.mesh.areas(), 3))
    return Field("pressure", num / den)


# ---------------------------------------------------------------------------
# inf-sup estimator (p = 2)
# ---------------------------------------------------------------------------

def inf_sup_constant(sys: FeSystem, dense: bool = False) -> float:
    """LBB constant: sqrt of the smallest nonzero eigenvalue of the
    pressure Schur complement B A^-1 B^T against the pressure mass, with
    A the p=2 symmetric-gradient stiffness and the constant pressure mode
    deflated."""
    if sys.mesh.n_cells < 8:
        raise ValueError("inf-sup estimate needs a mesh with n >= 2")
    free = sys.free_velocity
    A = sys.stiffness_p2[free][:, free].tocsc()
    Bf = sys.divergence_matrix[:, free]
    try:
        if dense:
            Ainv = np.linalg.inv(A.toarray())
            X = Ainv @ Bf.toarray().T
        else:
            lu = spla.splu(A)
            X = lu.solve(Bf.toarray().T)
    except (RuntimeError, np.linalg.LinAlgError) as exc:  # pragma: no cover
        raise RuntimeError("stiffness factorization failed; the constrained "
                           "system should be definite") from exc
    S = Bf @ X
    Mp = sys.pressure_mass.toarray()
    eigvals = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    # first eigenvalue is the deflated constant mode (zero up to roundoff)
    return float(math.sqrt(max(eigvals[1], 0.0)))


def export_coo(mat) -> str:
    """Debug dump of a sparse matrix, one `i j value` line per entry."""
    coo = sp.coo_matrix(mat)
    return "\n".join(
        f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)
    ) + "\n"
