"""Integration kernels for Abel-type integrals over the (E, L^2) triangle.

Every integral with an inverse-square-root endpoint is mapped through
``t = X sin^2(theta)`` so the singular weight is removed exactly.  What is
left is integrated with a fixed Gauss rule in the angle.  When the integrand
behaves like a non-integer power at an endpoint (``g(t) ~ t**p``), the power
is measured by probing ``g`` close to the endpoint and folded into a
Gauss-Jacobi weight, which keeps convergence spectral for the anisotropic
power-law models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureSpec",
    "DEFAULT_SPEC",
    "QuadratureError",
    "DivergentIntegral",
    "leading_exponent",
    "abel_integral",
    "abel_integral_inner_singular",
    "triangle_integral",
    "diagonal_line_integral",
    "beta_half",
    "central_difference",
    "five_point",
    "refinement_delta",
]

HALF_PI = 0.5 * math.pi
PROBE_FRACTIONS = (1e-6, 1e-8, 1e-10)
# a + p <= -1 + DIVERGENCE_GUARD is treated as non-integrable
DIVERGENCE_GUARD = 1e-3
LINE_MOMENTS = (-0.5, 0.0, 0.5, 1.0)
# node-count doublings allowed when the endpoint rule was fitted to a probed power
MAX_DOUBLINGS = 3


@dataclass(frozen=True)
class QuadratureSpec:
    node_count: int = 256
    relative_tolerance: float = 1e-8
    absolute_floor: float = 0.0

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise ValueError(f"node_count must be an integer >= 8, got {self.node_count}")
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")
        if self.absolute_floor < 0:
            raise ValueError("absolute_floor must be non-negative")

    def doubled(self) -> "QuadratureSpec":
        return replace(self, node_count=2 * self.node_count)


DEFAULT_SPEC = QuadratureSpec()


class QuadratureError(ArithmeticError):
    """An integrand produced a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DivergentIntegral(ArithmeticError):
    """The integrand is not integrable at an endpoint.

    ``exponent`` is the measured leading power ``p`` of the integrand
    (``g(t) ~ t**p``) at the offending endpoint, in the variable in which the
    integral was posed.
    """

    def __init__(self, message, exponent):
        super().__init__(message)
        self.exponent = exponent


# ---------------------------------------------------------------------------
# rules


@lru_cache(maxsize=512)
def _unit_rule(n: int, lo: float, hi: float):
    """Nodes and weights on [0, 1] for the weight t**lo * (1 - t)**hi."""
    if lo == 0.0 and hi == 0.0:
        x, w = roots_legendre(n)
    else:
        x, w = roots_jacobi(n, hi, lo)
    t = 0.5 * (x + 1.0)
    w = w / 2.0 ** (1.0 + lo + hi)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _snap(p: float) -> float:
    q = Fraction(p).limit_denominator(12)
    return float(q) if abs(p - float(q)) < 1e-7 else p


def _fractional_weight(k: float) -> float:
    """Part of an endpoint power theta**k that a smooth rule cannot absorb."""
    k = _snap(k)
    if k < 0:
        return k
    w = k - math.floor(k)
    return 0.0 if w < 1e-12 or w > 1 - 1e-12 else w


def _check_finite(values, nodes, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values.ravel()))[0]
        node = np.broadcast_to(np.asarray(nodes, dtype=float), values.shape).ravel()[bad]
        raise QuadratureError(f"non-finite {what} at node {node!r}", node=float(node))
    return values


def leading_exponent(g: Callable, X: float, at: str = "lower"):
    """Estimate p with g(t) ~ |t - t0|**p near the chosen endpoint of [0, X].

    Returns ``(p, clean)``.  ``clean`` is False when the probes do not agree
    on a single power (then ``p`` is the estimate from the two innermost
    probes and should only be used for divergence decisions).
    """
    fr = np.array(PROBE_FRACTIONS)
    t = X * fr if at == "lower" else X * (1.0 - fr)
    vals = np.abs(_check_finite(g(t), t, "integrand probe"))
    if np.any(vals == 0.0):
        return 0.0, False
    step = math.log(PROBE_FRACTIONS[1] / PROBE_FRACTIONS[0])
    p_outer = math.log(vals[1] / vals[0]) / step
    p_inner = math.log(vals[2] / vals[1]) / step
    return _snap(p_inner), abs(p_outer - p_inner) < 1e-4


# ---------------------------------------------------------------------------
# the sin^2 substituted kernel


def _sin2_integral(g, X, a, b, spec, probe_hi=True):
    """int_0^X t**a (X - t)**b g(t) dt via t = X sin^2(theta); X may be an array.

    ``a`` and ``b`` are half-integers >= -1/2.  Endpoint powers of ``g`` are
    probed once, at the largest ``X``.
    """
    X = np.asarray(X, dtype=float)
    scalar = X.ndim == 0
    X = np.atleast_1d(X)
    out = np.zeros_like(X)
    live = X > 0
    if not np.any(live):
        return float(out[0]) if scalar else out
    Xl = X[live]
    xref = float(Xl.max())

    p_lo, clean_lo = leading_exponent(g, xref, "lower")
    if a + p_lo <= -1.0 + DIVERGENCE_GUARD:
        raise DivergentIntegral(
            f"integrand ~ t**{p_lo:.4g} is not integrable against t**{a:g} at t = 0",
            exponent=p_lo,
        )
    w_lo = _fractional_weight(2 * a + 1 + 2 * p_lo) if clean_lo else 0.0
    w_hi, clean_hi = 0.0, True
    if probe_hi:
        p_hi, clean_hi = leading_exponent(g, xref, "upper")
        if b + p_hi <= -1.0 + DIVERGENCE_GUARD:
            raise DivergentIntegral(
                f"integrand ~ (X-t)**{p_hi:.4g} is not integrable against (X-t)**{b:g}",
                exponent=p_hi,
            )
        w_hi = _fractional_weight(2 * b + 1 + 2 * p_hi) if clean_hi else 0.0

    clean = clean_lo and (clean_hi if probe_hi else True)
    total = _sin2_sum(g, Xl, a, b, spec.node_count, w_lo, w_hi)
    if w_lo or w_hi or not clean:
        # a single Jacobi weight matches only the leading endpoint power; any
        # other fractional power converges algebraically, so double until stable
        n = spec.node_count
        for _ in range(MAX_DOUBLINGS):
            n *= 2
            finer = _sin2_sum(g, Xl, a, b, n, w_lo, w_hi)
            scale = np.maximum(np.abs(finer), spec.absolute_floor)
            with np.errstate(divide="ignore", invalid="ignore"):
                change = np.where(scale > 0, np.abs(finer - total) / scale, 0.0)
            total = finer
            if np.max(change) < spec.relative_tolerance:
                break
    out[live] = 2.0 * Xl ** (a + b + 1) * HALF_PI * total
    return float(out[0]) if scalar else out


def _sin2_sum(g, Xl, a, b, n, w_lo, w_hi):
    u, wu = _unit_rule(n, w_lo, w_hi)
    theta = HALF_PI * u
    s = np.sin(theta)
    c = np.cos(theta)
    # the rule carries the fractional endpoint powers; divide them back out
    jac = s ** (2 * a + 1) * c ** (2 * b + 1)
    if w_lo:
        jac = jac / u**w_lo
    if w_hi:
        jac = jac / (1.0 - u) ** w_hi
    t = Xl[:, None] * (s * s)[None, :]
    vals = _check_finite(g(t), t, "integrand")
    return np.sum(vals * (wu * jac)[None, :], axis=1)


def abel_integral(g: Callable, X, side: str = "upper-singular", spec: QuadratureSpec = DEFAULT_SPEC):
    """int_0^X g(t) / sqrt(X - t) dt.

    ``g`` must accept numpy arrays.  ``X`` may be a scalar or an array of
    upper limits (the integrand's endpoint powers are probed once).
    """
    if side != "upper-singular":
        raise ValueError(f"unsupported side {side!r}")
    return _sin2_integral(g, X, 0.0, -0.5, spec)


def abel_integral_inner_singular(g: Callable, X, spec: QuadratureSpec = DEFAULT_SPEC):
    """int_0^X g(t) / sqrt(t (X - t)) dt, i.e. int_0^pi g(X sin^2(phi/2)) dphi.

    Raises DivergentIntegral when g(t) ~ t**(-alpha) with alpha >= 1/2 - 1e-3.
    """
    return _sin2_integral(g, X, -0.5, -0.5, spec)


def beta_half(n: int) -> float:
    """B(n + 1/2, 1/2) = (1/2)_n pi / n! for integer n >= 0."""
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    poch = 1.0
    for i in range(int(n)):
        poch *= 0.5 + i
    return poch * math.pi / math.factorial(int(n))


# ---------------------------------------------------------------------------
# two-dimensional integrals over the accessible triangle


def _df_values(f, E, L2):
    """f on the broadcast of E and L2; isotropic DFs are sampled once per E."""
    E = np.asarray(E, dtype=float)
    if getattr(f, "isotropic", False):
        vals = np.asarray(f(E, np.zeros_like(E)), dtype=float)
    else:
        vals = np.asarray(f(E, L2), dtype=float)
    shape = np.broadcast(E, L2).shape
    return _check_finite(np.broadcast_to(vals, shape), np.broadcast_to(E, shape), "distribution function")


def _df_endpoint_powers(f, psi, r2):
    """Leading powers of f in L^2 (at L^2 -> 0) and in E (at E -> 0)."""
    E0 = 0.5 * psi
    p_s, clean_s = leading_exponent(lambda s: _df_values(f, np.full_like(s, E0), s), 2 * r2 * (psi - E0))
    s0 = r2 * psi * 0.5
    p_e, clean_e = leading_exponent(lambda e: _df_values(f, e, np.full_like(e, s0)), psi)
    return (p_s, clean_s), (p_e, clean_e)


def _triangle(f, psi, r2, a, c, d, spec, order="E"):
    """Iterated integral of L2**a K**c (psi - E)**d f over the triangle."""
    if psi <= 0:
        return 0.0
    if r2 <= 0:
        raise ValueError("r2 must be positive")
    (p_s, clean_s), (p_e, clean_e) = _df_endpoint_powers(f, psi, r2)
    if a + p_s <= -1.0 + DIVERGENCE_GUARD:
        raise DivergentIntegral(f"f L^{2 * a:g} ~ L^{2 * (a + p_s):.4g} is not integrable at L = 0", exponent=p_s)
    if p_e <= -1.0 + DIVERGENCE_GUARD:
        raise DivergentIntegral(f"f ~ E^{p_e:.4g} is not integrable at E = 0", exponent=p_e)
    w_s = _fractional_weight(2 * a + 1 + 2 * p_s) if clean_s else 0.0
    w_e = _fractional_weight(2 * p_e + 1) if clean_e else 0.0
    n = spec.node_count
    Y = 2.0 * r2 * psi

    if order == "E":
        # inner over L^2 = Y(u) sin^2(theta), outer over u = psi - E = psi sin^2(chi)
        ui, wi = _unit_rule(n, w_s, 0.0)
        uo, wo = _unit_rule(n, 0.0, w_e)
        th = HALF_PI * ui
        ch = HALF_PI * uo
        s_i, c_i = np.sin(th), np.cos(th)
        s_o, c_o = np.sin(ch), np.cos(ch)
        u = psi * s_o**2
        Yu = 2.0 * r2 * u
        E = psi * c_o**2
        L2 = Yu[:, None] * (s_i**2)[None, :]
        vals = _df_values(f, E[:, None], L2)
        jin = s_i ** (2 * a + 1) * c_i ** (2 * c + 1) / ui**w_s
        inner = np.sum(vals * (wi * jin)[None, :], axis=1) * HALF_PI
        inner = inner * 2.0 * r2 ** (-c) * Yu ** (a + c + 1)
        jout = 2.0 * psi * s_o * c_o * u**d / (1.0 - uo) ** w_e
        return float(np.sum(inner * wo * jout) * HALF_PI)

    if order == "L2":
        if d != 0:
            raise ValueError("the L2-outer order supports d = 0 only")
        # inner over E = Emax cos^2(theta), outer over L^2 = Y sin^2(chi)
        ui, wi = _unit_rule(n, 0.0, w_e)
        uo, wo = _unit_rule(n, w_s, 0.0)
        th = HALF_PI * ui
        ch = HALF_PI * uo
        s_i, c_i = np.sin(th), np.cos(th)
        s_o, c_o = np.sin(ch), np.cos(ch)
        L2 = Y * s_o**2
        Emax = Y * c_o**2 / (2.0 * r2)
        E = Emax[:, None] * (c_i**2)[None, :]
        vals = _df_values(f, E, L2[:, None])
        jin = s_i ** (2 * c + 1) * c_i / (1.0 - ui) ** w_e
        inner = np.sum(vals * (wi * jin)[None, :], axis=1) * HALF_PI
        inner = inner * 2.0 ** (c + 1) * Emax ** (c + 1)
        jout = 2.0 * Y * s_o * c_o * L2**a / uo**w_s
        return float(np.sum(inner * wo * jout) * HALF_PI)

    raise ValueError(f"unknown order {order!r}")


def triangle_integral(f, psi: float, r2: float, n: int, m: int, spec: QuadratureSpec = DEFAULT_SPEC, order: str = "E") -> float:
    """Double integral of K**(n - 1/2) L**(2m) f(E, L^2) dE dL^2 over the triangle.

    ``order`` selects the outer variable: ``"E"`` (default) or ``"L2"``.
    """
    if n < 0 or int(n) != n:
        raise ValueError("kernel power n must be a non-negative integer")
    return _triangle(f, psi, r2, float(m), n - 0.5, 0.0, spec, order)


def diagonal_line_integral(f, psi: float, r2: float, m: float, spec: QuadratureSpec = DEFAULT_SPEC, variable: str = "E") -> float:
    """int_0^{2 r2 psi} L**(2m) f(psi - L^2/(2 r2), L^2) dL^2.

    ``variable="E"`` integrates in the binding energy (the default route);
    ``variable="L2"`` integrates in L = sqrt(L^2) directly.
    """
    if m not in LINE_MOMENTS:
        raise ValueError(f"m must be one of {LINE_MOMENTS}, got {m}")
    if r2 <= 0:
        raise ValueError("r2 must be positive")
    if psi <= 0:
        return 0.0
    if variable == "E":
        g = lambda u: _df_values(f, psi - u, 2.0 * r2 * u)  # noqa: E731
        return (2.0 * r2) ** (m + 1) * _sin2_integral(g, psi, m, 0.0, spec)
    if variable == "L2":
        Y = 2.0 * r2 * psi
        h = lambda t: _df_values(f, psi * (1.0 - t * t), Y * t * t)  # noqa: E731
        p_lo, clean_lo = leading_exponent(h, 1.0, "lower")
        k_lo = 2 * m + 1 + p_lo
        if k_lo <= -1.0 + 2 * DIVERGENCE_GUARD:
            raise DivergentIntegral("line integrand is not integrable at L = 0", exponent=0.5 * p_lo)
        p_hi, clean_hi = leading_exponent(h, 1.0, "upper")
        if p_hi <= -1.0 + DIVERGENCE_GUARD:
            raise DivergentIntegral("line integrand is not integrable at E = 0", exponent=p_hi)
        w_lo = _fractional_weight(k_lo) if clean_lo else 0.0
        w_hi = _fractional_weight(p_hi) if clean_hi else 0.0
        t, w = _unit_rule(spec.node_count, w_lo, w_hi)
        vals = h(t) * t ** (2 * m + 1) / (t**w_lo * (1.0 - t) ** w_hi)
        return float(2.0 * Y ** (m + 1) * np.sum(w * vals))
    raise ValueError(f"unknown variable {variable!r}")


# ---------------------------------------------------------------------------
# numerical differentiation


def central_difference(fn: Callable, x, rel_step: float = 1e-5):
    """Second-order derivative estimate with a step proportional to |x|.

    At x == 0 a one-sided second-order formula with step 1e-8 is used so
    the function is never sampled at negative arguments.
    """
    x = np.asarray(x, dtype=float)
    pos = x > 0
    h = np.where(pos, rel_step * np.abs(x), 1e-8)
    central = (fn(x + h) - fn(np.where(pos, x - h, x))) / (2.0 * h)
    if np.all(pos):
        return central
    one_sided = (-3.0 * fn(x) + 4.0 * fn(x + h) - fn(x + 2.0 * h)) / (2.0 * h)
    return np.where(pos, central, one_sided)


def five_point(fn: Callable, x: float, rel_step: float = 1e-3) -> float:
    """Fourth-order central difference of a scalar function; x must be > 0."""
    if x <= 0:
        raise ValueError("five_point needs x > 0")
    h = rel_step * x
    return (-fn(x + 2 * h) + 8 * fn(x + h) - 8 * fn(x - h) + fn(x - 2 * h)) / (12.0 * h)


def refinement_delta(fn: Callable[[QuadratureSpec], float], spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Relative change of ``fn(spec)`` when the node count is doubled."""
    a = fn(spec)
    b = fn(spec.doubled())
    scale = max(abs(a), abs(b), spec.absolute_floor)
    return 0.0 if scale == 0 else abs(a - b) / scale
