"""Scalar and tensor calculus of the (p, delta)-structure dissipation potential.

The potential is phi(t) = int_0^t (delta + s)^(p-2) s ds.  Everything the
solver and the diagnostics need derives from it: the derivative family
(phi', phi'', shifted variants), the Legendre conjugate, the stress map
S(P) = phi'(|P^sym|) P^sym / |P^sym|, the natural-distance map
F(P) = (delta + |P^sym|)^((p-2)/2) P^sym, and the directional derivative
of S used by Newton.

All functions accept floats or numpy arrays and broadcast; tensor-valued
maps operate on arrays of shape (..., 2, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SingularEvaluation",
    "PStructure",
    "sym",
    "frob",
    "ddot",
    "phi",
    "phi_prime",
    "phi_second",
    "phi_shift",
    "phi_shift_prime",
    "phi_conjugate",
    "phi_shift_conjugate",
    "radial_scale",
    "stress",
    "stress_sym",
    "fmap",
    "fmap_sym",
    "stress_derivative",
    "stress_derivative_coeffs",
    "equivalence_ratios",
]


class SingularEvaluation(ArithmeticError):
    """Raised when phi'' (or the stress Jacobian) is evaluated at its
    degenerate point delta = 0, t = 0 with p < 2 and no regularization
    floor was supplied by the caller."""


@dataclass(frozen=True)
class PStructure:
    """Parameter pair (p, delta) of the constitutive law.

    p > 1 is the growth exponent, 0 <= delta <= 1 the degeneracy shift
    (delta = 0 gives the pure power law).
    """

    p: float
    delta: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"shift delta must lie in [0, 1], got {self.delta}")


# ---------------------------------------------------------------------------
# 2x2 tensor helpers (arrays of shape (..., 2, 2))
# ---------------------------------------------------------------------------

def sym(a):
    """Symmetric part (a + a^T)/2 along the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def frob(a):
    """Hilbert-Schmidt (Frobenius) norm along the last two axes."""
    a = np.asarray(a)
    if a.shape[-2:] == (2, 2):
        # unrolled: avoids a full-size squared temporary in hot loops
        return np.sqrt(
            a[..., 0, 0] ** 2 + a[..., 0, 1] ** 2
            + a[..., 1, 0] ** 2 + a[..., 1, 1] ** 2
        )
    return np.sqrt(np.sum(np.square(a), axis=(-1, -2)))


def ddot(a, b):
    """Component-wise inner product a : b along the last two axes."""
    return np.sum(a * b, axis=(-1, -2))


# ---------------------------------------------------------------------------
# The potential and its derivative family
# ---------------------------------------------------------------------------

def phi_prime(ps: PStructure, s):
    """phi'(s) = (delta + s)^(p-2) s, with the limit value 0 at s = 0."""
    s = np.asarray(s, dtype=float)
    base = ps.delta + s
    safe = np.where(base > 0.0, base, 1.0)
    out = np.where(base > 0.0, safe ** (ps.p - 2.0) * s, 0.0)
    return out if out.ndim else float(out)


def phi(ps: PStructure, t):
    """Closed form of int_0^t phi'(s) ds.

    Substituting u = delta + s gives
    [(d+t)^p - d^p]/p - d[(d+t)^(p-1) - d^(p-1)]/(p-1).  Evaluated via
    expm1/log1p, with a series branch for t << delta where the two terms
    cancel to O((t/delta)^2) and the direct form loses all digits.
    """
    t = np.asarray(t, dtype=float)
    p, d = ps.p, ps.delta
    if d == 0.0:
        out = t**p / p
        return out if out.ndim else float(out)
    r = t / d
    small = r < 0.01
    r_safe = np.where(small, 1.0, r)  # keep log1p happy, values unused
    lg = np.log1p(r_safe)
    dp = d**p
    out = dp * (np.expm1(p * lg) / p - np.expm1((p - 1.0) * lg) / (p - 1.0))
    if np.any(small):
        # phi(t) = d^p sum_k binom(p-2, k) r^(k+2)/(k+2), geometric for r < 1
        acc = np.zeros_like(r)
        coeff = 1.0
        rk = r * r
        for k in range(9):
            acc += coeff * rk / (k + 2.0)
            coeff *= (p - 2.0 - k) / (k + 1.0)
            rk = rk * r
        out = np.where(small, dp * acc, out)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def phi_second(ps: PStructure, t):
    """phi''(t) = (delta + t)^(p-3) (delta + (p-1) t).

    Unbounded at the origin when p < 2 and delta = 0; that combination
    raises SingularEvaluation instead of returning inf.
    """
    t = np.asarray(t, dtype=float)
    p, d = ps.p, ps.delta
    if p == 2.0:
        out = np.ones_like(t)
        return out if out.ndim else float(out)
    base = d + t
    if np.any(base == 0.0):
        if p < 2.0:
            raise SingularEvaluation(
                "phi'' is unbounded at t = 0 for p < 2, delta = 0; "
                "the caller must regularize"
            )
        # p > 2: limit value 0
        safe = np.where(base > 0.0, base, 1.0)
        out = np.where(base > 0.0, safe ** (p - 3.0) * (d + (p - 1.0) * t), 0.0)
    else:
        out = base ** (p - 3.0) * (d + (p - 1.0) * t)
    return out if out.ndim else float(out)


def phi_shift_prime(ps: PStructure, a, t):
    """Derivative of the shifted potential: phi'(a + t) t / (a + t)."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    at = a + t
    safe = np.where(at > 0.0, at, 1.0)
    out = np.where(at > 0.0, phi_prime(ps, at) * t / safe, 0.0)
    return out if out.ndim else float(out)


# Fixed Gauss-Legendre panels for the shifted modular: no closed form is
# needed off the hot path, so integrate phi_a'(s) on [0, t] directly.
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)
_N_PANELS = 32


def phi_shift(ps: PStructure, a, t):
    """Shifted modular phi_a(t) = int_0^t phi'(a+s) s/(a+s) ds.

    Composite 8-point Gauss on 32 panels; exact enough for the band
    diagnostics (the solver never calls this in a hot loop).
    """
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    a, t = np.broadcast_arrays(a, t)
    shape = t.shape
    af = a.reshape(-1, 1, 1)
    tf = t.reshape(-1, 1, 1)
    k = np.arange(_N_PANELS).reshape(1, -1, 1)
    # nodes of panel k mapped from [-1, 1]
    s = tf * (k + 0.5 * (_GAUSS_NODES + 1.0)) / _N_PANELS
    w = tf / (2.0 * _N_PANELS) * _GAUSS_WEIGHTS
    vals = phi_shift_prime(ps, af, s)
    out = np.sum(vals * w, axis=(1, 2)).reshape(shape)
    return out if out.ndim else float(out)


def _invert_increasing(fun, target, hi0):
    """Vectorized bisection for a strictly increasing fun with fun(0) = 0.

    Returns s with fun(s) = target to relative tolerance 1e-12.
    """
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = np.maximum(np.asarray(hi0, dtype=float), 1e-30)
    for _ in range(200):
        short = fun(hi) < target
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    else:
        raise RuntimeError("failed to bracket the conjugate supremum")
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        above = fun(mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(hi, 1e-300)):
            break
    return 0.5 * (lo + hi)


def phi_conjugate(ps: PStructure, t):
    """Exact Legendre transform sup_{s>=0} (s t - phi(s)).

    The supremum sits at phi'(s*) = t; s* is found by bisection since
    phi' is strictly increasing and unbounded.
    """
    t = np.asarray(t, dtype=float)
    p = ps.p
    # phi'(s) >= s^(p-1) / 2^max(0, 2-p) for s >= 1, so this brackets s*
    hi0 = np.maximum(1.0, (2.0 ** max(0.0, 2.0 - p) * t) ** (1.0 / (p - 1.0)))
    s = _invert_increasing(lambda x: phi_prime(ps, x), t, hi0)
    out = np.where(t > 0.0, s * t - phi(ps, s), 0.0)
    return out if out.ndim else float(out)


def phi_shift_conjugate(ps: PStructure, a, t):
    """Legendre transform of the shifted modular, (phi_a)*(t)."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    a, t = np.broadcast_arrays(a, t)
    p = ps.p
    hi0 = np.maximum(np.maximum(1.0, a),
                     (2.0 ** (1.0 + max(0.0, 2.0 - p)) * t) ** (1.0 / (p - 1.0)))
    s = _invert_increasing(lambda x: phi_shift_prime(ps, a, x), t, hi0)
    out = np.where(t > 0.0, s * t - phi_shift(ps, a, s), 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Constitutive maps
# ---------------------------------------------------------------------------

def radial_scale(ps: PStructure, m, exponent):
    """(delta + m)^exponent with the 0 * inf corner at m = delta = 0 removed."""
    base = ps.delta + m
    safe = np.where(base > 0.0, base, 1.0)
    return np.where(base > 0.0, safe**exponent, 0.0)


def stress_sym(ps: PStructure, Ps, m=None):
    """stress() for an already symmetric argument, reusing |Ps| if given."""
    if m is None:
        m = frob(Ps)
    return radial_scale(ps, m, ps.p - 2.0)[..., None, None] * Ps


def fmap_sym(ps: PStructure, Ps, m=None):
    """fmap() for an already symmetric argument, reusing |Ps| if given."""
    if m is None:
        m = frob(Ps)
    return radial_scale(ps, m, 0.5 * (ps.p - 2.0))[..., None, None] * Ps


def stress(ps: PStructure, P):
    """S(P) = (delta + |P^sym|)^(p-2) P^sym, with S(P) = 0 when P^sym = 0."""
    return stress_sym(ps, sym(np.asarray(P, dtype=float)))


def fmap(ps: PStructure, P):
    """F(P) = (delta + |P^sym|)^((p-2)/2) P^sym."""
    return fmap_sym(ps, sym(np.asarray(P, dtype=float)))


def stress_derivative_coeffs(ps: PStructure, m, jac_floor=0.0):
    """Radial coefficients (c0, c1) of the stress derivative at |P^sym| = m.

    dS(P)[Q] = c1 (P^sym : Q^sym) P^sym + c0 Q^sym with
    c0 = (d + m)^(p-2) and c1 = (p-2)(d + m)^(p-3) / m, where d is delta
    floored by jac_floor.  c1 is zeroed at m = 0 (the first term vanishes
    there anyway since P^sym = 0).
    """
    m = np.asarray(m, dtype=float)
    p = ps.p
    d = max(ps.delta, jac_floor)
    if p == 2.0:
        return np.ones_like(m), np.zeros_like(m)
    base = d + m
    if p < 2.0 and np.any(base == 0.0):
        raise SingularEvaluation(
            "stress derivative is unbounded at Du = 0 for p < 2, delta = 0; "
            "supply a jac_floor"
        )
    safe = np.where(base > 0.0, base, 1.0)
    c0 = np.where(base > 0.0, safe ** (p - 2.0), 0.0)
    msafe = np.where(m > 0.0, m, 1.0)
    c1 = np.where(m > 0.0, (p - 2.0) * np.where(base > 0.0, safe ** (p - 3.0), 0.0) / msafe, 0.0)
    return c0, c1


def stress_derivative(ps: PStructure, P, Q, jac_floor=0.0):
    """Directional derivative dS(P)[Q], a symmetric PSD form in Q^sym.

    Equals (phi''(m) - phi'(m)/m) (P^sym:Q^sym)/m^2 P^sym + phi'(m)/m Q^sym
    with m = |P^sym|, continued by phi''(0) Q^sym at m = 0.  jac_floor
    replaces delta inside the phi', phi'' evaluations only.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Ps = sym(P)
    Qs = sym(Q)
    m = frob(Ps)
    c0, c1 = stress_derivative_coeffs(ps, m, jac_floor)
    inner = ddot(Ps, Qs)
    return (c1 * inner)[..., None, None] * Ps + c0[..., None, None] * Qs


class EquivalenceRatios(NamedTuple):
    """The four mutually equivalent quantities of the quasi-norm calculus."""

    monotonicity_gap: float      # (S(P) - S(Q)) : (P - Q)
    f_gap_sq: float              # |F(P) - F(Q)|^2
    shifted_modular: float       # phi_{|P^sym|}(|P^sym - Q^sym|)
    second_derivative_form: float  # phi''(|P^sym| + |Q^sym|) |P^sym - Q^sym|^2


def equivalence_ratios(ps: PStructure, P, Q) -> EquivalenceRatios:
    """Evaluate the four equivalent distance measures for a tensor pair.

    Rejects P^sym = Q^sym, where all four vanish and ratios are undefined.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Ps, Qs = sym(P), sym(Q)
    gap_norm = float(frob(Ps - Qs))
    if gap_norm == 0.0:
        raise ValueError("equivalence ratios are undefined for P^sym = Q^sym")
    mono = float(ddot(stress(ps, P) - stress(ps, Q), P - Q))
    fgap = float(frob(fmap(ps, P) - fmap(ps, Q)) ** 2)
    shifted = float(phi_shift(ps, frob(Ps), gap_norm))
    second = float(phi_second(ps, frob(Ps) + frob(Qs)) * gap_norm**2)
    return EquivalenceRatios(mono, fgap, shifted, second)


# ---------------------------------------------------------------------------
# Sampling used by the property suites and the band calibration
# ---------------------------------------------------------------------------

def sample_tensor_pairs(rng: np.random.Generator, n: int):
    """Random 2x2 pairs: entries uniform in [-2, 2] plus near-degenerate
    pairs at symmetric-part distances 1e-1, 1e-4, 1e-8."""
    P = rng.uniform(-2.0, 2.0, size=(n, 2, 2))
    Q = rng.uniform(-2.0, 2.0, size=(n, 2, 2))
    k = max(1, n // 20)
    for eps in (1e-1, 1e-4, 1e-8):
        base = rng.uniform(-2.0, 2.0, size=(k, 2, 2))
        d = rng.uniform(-1.0, 1.0, size=(k, 2, 2))
        ds = sym(d)
        scale = frob(ds)
        ds = ds / np.where(scale > 0, scale, 1.0)[:, None, None] * eps
        P = np.concatenate([P, base])
        Q = np.concatenate([Q, base + ds])
    # drop accidental symmetric-part collisions
    keep = frob(sym(P) - sym(Q)) > 0
    return P[keep], Q[keep]


def sample_scalars(rng: np.random.Generator, n: int):
    """Nonnegative scalar samples mixing O(1) values with a log-uniform
    sweep down to 1e-8 so the degenerate regime is exercised."""
    flat = rng.uniform(0.0, 4.0, size=n // 2)
    logs = 10.0 ** rng.uniform(-8.0, 0.6, size=n - n // 2)
    return np.concatenate([flat, logs])
