"""Abel transforms of the augmented density and their diagonal-line identities.

All three transforms carry the 1/pi normalisation::

    rho_hat(psi, r2)   = 1/pi int_0^psi p00(Q, r2) dQ / sqrt(psi - Q)
    rho_bar(psi, r2)   = 1/pi int_0^r2 p00(psi, R2) dR2 / (R sqrt(r2 - R2))
    rho_tilde(psi, r2) = 1/pi int_0^r2 R p00(psi, R2) dR2 / sqrt(r2 - R2)

With that normalisation the partial derivatives equal the diagonal-line
integrals of the DF with the prefactors below and no further constants::

    which  left-hand side            prefactor     line moment m
    1      d rho_hat / d psi         sqrt2 pi/r2         0
    2      d (r2 rho_hat) / d r2     pi/(sqrt2 r2^2)     1
    3      d rho_bar / d psi         2 pi/r             -1/2
    4      d rho_tilde / d r2        pi/r^3              1/2
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models import AugmentedDensityModel, EvaluationGrid, SeparablePart
from .quadrature import (
    DEFAULT_SPEC,
    DivergentIntegral,
    QuadratureError,
    QuadratureSpec,
    _triangle,
    _sin2_integral,
    abel_integral,
    abel_integral_inner_singular,
    beta_half,
    diagonal_line_integral,
    five_point,
)

__all__ = [
    "rho_hat",
    "rho_bar",
    "rho_tilde",
    "line_identity_lhs",
    "line_identity_rhs",
    "rhs_prefactor",
    "SeparableTransforms",
    "separable_transforms",
    "d_A_hat",
    "d_B_tilde",
    "d_B_tilde_from_r2B",
    "d_rB_bar",
    "moment_transform",
    "df_transform",
    "kernel_inner_integral",
    "kernel_inner_closed_form",
    "line_radial_sides",
    "bar_tilde_sides",
    "TransformField",
    "compute_transform_field",
    "grid_map",
]

INV_PI = 1.0 / math.pi
SQRT2 = math.sqrt(2.0)
LINE_M = {1: 0.0, 2: 1.0, 3: -0.5, 4: 0.5}


def rhs_prefactor(which: int, r2: float) -> float:
    r = math.sqrt(r2)
    return {
        1: SQRT2 * math.pi / r2,
        2: math.pi / (SQRT2 * r2 * r2),
        3: 2.0 * math.pi / r,
        4: math.pi / (r2 * r),
    }[which]


def _pos(psi, r2):
    if not (psi > 0 and r2 > 0):
        raise ValueError(f"need psi > 0 and r2 > 0, got psi={psi}, r2={r2}")


def rho_hat(model: AugmentedDensityModel, psi: float, r2: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    _pos(psi, r2)
    return INV_PI * abel_integral(lambda Q: model(Q, r2), psi, spec=spec)


def rho_bar(model: AugmentedDensityModel, psi: float, r2: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Raises DivergentIntegral when p00 ~ R^(-2 alpha) with alpha >= 1/2 at R -> 0."""
    _pos(psi, r2)
    return INV_PI * abel_integral_inner_singular(lambda t: model(psi, t), r2, spec=spec)


def rho_tilde(model: AugmentedDensityModel, psi: float, r2: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    _pos(psi, r2)
    return INV_PI * abel_integral(lambda t: np.sqrt(t) * model(psi, t), r2, spec=spec)


# inner-differentiated forms of the four left-hand sides


def _lhs1(model, psi, r2, spec):
    boundary = float(model(0.0, r2))
    inner = abel_integral(lambda Q: model.dpsi(Q, r2), psi, spec=spec)
    return INV_PI * (boundary / math.sqrt(psi) + inner)


def _lhs2(model, psi, r2, spec, rh=None):
    if rh is None:
        rh = rho_hat(model, psi, r2, spec)
    return rh + r2 * INV_PI * abel_integral(lambda Q: model.dr2(Q, r2), psi, spec=spec)


def _lhs3(model, psi, r2, spec):
    return INV_PI * abel_integral_inner_singular(lambda t: model.dpsi(psi, t), r2, spec=spec)


def _lhs4(model, psi, r2, spec, rt=None):
    # d/dX [X int_0^1 sqrt(s) p(Xs) ds / sqrt(1-s)] split into rho_tilde/X and a t^(3/2) p' term
    if rt is None:
        rt = rho_tilde(model, psi, r2, spec)
    inner = abel_integral(lambda t: t**1.5 * model.dr2(psi, t), r2, spec=spec)
    return rt / r2 + INV_PI * inner / r2


def line_identity_lhs(model: AugmentedDensityModel, psi: float, r2: float, which: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Partial derivative of a transform; raises DivergentIntegral for which=3 if rho_bar diverges."""
    _pos(psi, r2)
    if which == 1:
        return _lhs1(model, psi, r2, spec)
    if which == 2:
        return _lhs2(model, psi, r2, spec)
    if which == 3:
        rho_bar(model, psi, r2, spec)
        return _lhs3(model, psi, r2, spec)
    if which == 4:
        return _lhs4(model, psi, r2, spec)
    raise ValueError(f"which must be 1..4, got {which}")


def line_identity_rhs(f, psi: float, r2: float, which: int, spec: QuadratureSpec = DEFAULT_SPEC, variable: str = "E") -> float:
    """Prefactor times the diagonal-line integral of the DF."""
    _pos(psi, r2)
    if which not in LINE_M:
        raise ValueError(f"which must be 1..4, got {which}")
    return rhs_prefactor(which, r2) * diagonal_line_integral(f, psi, r2, LINE_M[which], spec, variable)


# ---------------------------------------------------------------------------
# separable densities


@dataclass(frozen=True)
class SeparableTransforms:
    A_hat: float
    B_tilde: float
    B_bar: float | None
    B_bar_status: str  # "converges" | "divergent"
    B_bar_exponent: float | None = None


def separable_transforms(A: SeparablePart, B: SeparablePart, psi: float, r2: float,
                         spec: QuadratureSpec = DEFAULT_SPEC) -> SeparableTransforms:
    """A_hat(psi), B_tilde(r2) and B_bar(r2) (unnormalised, as in the separable conditions)."""
    _pos(psi, r2)
    A_hat = abel_integral(A, psi, spec=spec)
    B_tilde = abel_integral(lambda t: np.sqrt(t) * B(t), r2, spec=spec)
    try:
        B_bar = abel_integral_inner_singular(B, r2, spec=spec)
    except DivergentIntegral as exc:
        return SeparableTransforms(A_hat, B_tilde, None, "divergent", exc.exponent)
    return SeparableTransforms(A_hat, B_tilde, B_bar, "converges")


def d_A_hat(A: SeparablePart, psi, spec: QuadratureSpec = DEFAULT_SPEC):
    """dA_hat/dpsi = A(0)/sqrt(psi) + int_0^psi A'(Q) dQ / sqrt(psi - Q)."""
    psi = np.asarray(psi, dtype=float)
    return float(A(0.0)) / np.sqrt(psi) + abel_integral(A.deriv, psi, spec=spec)


def d_B_tilde(B: SeparablePart, r2, spec: QuadratureSpec = DEFAULT_SPEC):
    """dB_tilde/dr2 by differentiating inside the integral."""
    r2 = np.asarray(r2, dtype=float)
    Bt = abel_integral(lambda t: np.sqrt(t) * B(t), r2, spec=spec)
    return (Bt + abel_integral(lambda t: t**1.5 * B.deriv(t), r2, spec=spec)) / r2


def d_B_tilde_from_r2B(B: SeparablePart, r2, spec: QuadratureSpec = DEFAULT_SPEC):
    """(1/r2) int_0^r2 d[R2 B]/dR2 R dR2 / sqrt(r2 - R2)."""
    r2 = np.asarray(r2, dtype=float)
    return abel_integral(lambda t: np.sqrt(t) * (B(t) + t * B.deriv(t)), r2, spec=spec) / r2


def d_rB_bar(B: SeparablePart, r2, spec: QuadratureSpec = DEFAULT_SPEC):
    """d[r B_bar]/dr2, evaluated as (1/r) dB_tilde/dr2."""
    r2 = np.asarray(r2, dtype=float)
    return d_B_tilde(B, r2, spec) / np.sqrt(r2)


# ---------------------------------------------------------------------------
# transforms of the DF itself


_KIND_WEIGHTS = {"hat": (0.0, 0.0), "bar": (-0.5, 0.0), "tilde": (0.0, -0.5)}


def moment_transform(f, psi: float, r2: float, n: int, kind: str, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """(1/2)_n/n! times the prefactored triangle integral of K^n f (weighted by kind).

    kind "hat": sqrt2 pi / r2;  "bar": 2 pi / r, weight 1/L;
    kind "tilde": sqrt2 pi r^(2n), weight 1/sqrt(psi - E).
    """
    if n not in (0, 1, 2):
        raise ValueError("n must be 0, 1 or 2")
    if kind not in _KIND_WEIGHTS:
        raise ValueError(f"kind must be one of {sorted(_KIND_WEIGHTS)}")
    _pos(psi, r2)
    a, d = _KIND_WEIGHTS[kind]
    coeff = beta_half(n) / math.pi
    integral = _triangle(f, psi, r2, a, float(n), d, spec)
    r = math.sqrt(r2)
    pref = {"hat": SQRT2 * math.pi / r2, "bar": 2.0 * math.pi / r, "tilde": SQRT2 * math.pi * r2**n}[kind]
    return coeff * pref * integral


def df_transform(f, psi: float, r2: float, kind: str, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """rho_hat / rho_bar / rho_tilde written directly as double integrals of the DF."""
    return moment_transform(f, psi, r2, 0, kind, spec)


def kernel_inner_integral(kind: str, n: int, E: float, L2: float, psi: float, r2: float,
                      spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """The innermost Q or R^2 integral that appears after swapping the integration order."""
    u = psi - E
    if kind == "hat":
        Q0 = E + L2 / (2.0 * r2)
        X = psi - Q0
        return 2.0 ** (n - 0.5) * _sin2_integral(lambda t: np.ones_like(t), X, n - 0.5, -0.5, spec)
    R02 = L2 / (2.0 * u)
    X = r2 - R02
    if kind == "bar":
        g = lambda t: (2.0 * u) ** (n - 0.5) * (R02 + t) ** (-(n + 1.0))  # noqa: E731
    elif kind == "tilde":
        g = lambda t: np.full_like(t, (2.0 * u) ** (n - 0.5))  # noqa: E731
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return _sin2_integral(g, X, n - 0.5, -0.5, spec)


def kernel_inner_closed_form(kind: str, n: int, E: float, L2: float, psi: float, r2: float) -> float:
    K = 2.0 * (psi - E) - L2 / r2
    B = beta_half(n)
    if kind == "hat":
        return K**n / SQRT2 * B
    if kind == "bar":
        return K**n / (math.sqrt(r2) * math.sqrt(L2)) * B
    if kind == "tilde":
        return r2**n * K**n / math.sqrt(2.0 * (psi - E)) * B
    raise ValueError(f"unknown kind {kind!r}")


def line_radial_sides(f, psi: float, R2: float, spec: QuadratureSpec = DEFAULT_SPEC):
    """Both sides of the radial identity between the sqrt(psi-E) and 1/sqrt(psi-E) line integrals.

    lhs = d/dpsi int_0^psi sqrt(psi - E) f[E, 2 R2 (psi - E)] dE
    rhs = (1/2 + R2 d/dR2) int_0^psi f[E, 2 R2 (psi - E)] dE / sqrt(psi - E)
    """
    def weighted(p, x, m):
        return diagonal_line_integral(f, p, x, m, spec) / (2.0 * x) ** (m + 1)

    lhs = five_point(lambda p: weighted(p, R2, 0.5), psi)
    inv = lambda x: weighted(psi, x, -0.5)  # noqa: E731
    rhs = 0.5 * inv(R2) + R2 * five_point(inv, R2)
    return lhs, rhs


def bar_tilde_sides(model: AugmentedDensityModel, psi: float, r2: float, spec: QuadratureSpec = DEFAULT_SPEC):
    """(d rho_tilde/d r2, (1/2 + r2 d/dr2) rho_bar); raises DivergentIntegral when rho_bar does."""
    lhs = line_identity_lhs(model, psi, r2, 4, spec)
    rb = lambda x: rho_bar(model, psi, x, spec)  # noqa: E731
    rhs = 0.5 * rb(r2) + r2 * five_point(rb, r2)
    return lhs, rhs


# ---------------------------------------------------------------------------
# grid tables


def grid_map(fn, items, threads: int = 1):
    """Map ``fn`` over ``items`` keeping input order; results do not depend on ``threads``."""
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


FIELD_COLUMNS = (
    "rho_hat",
    "rho_bar",
    "rho_tilde",
    "d_rho_hat_dPsi",
    "d_r2rho_hat_dr2",
    "d_rho_bar_dPsi",
    "d_rho_tilde_dr2",
)


@dataclass
class TransformField:
    """Transforms and derivatives on a grid.

    Tables have shape ``grid.shape``.  ``rho_bar`` and ``d_rho_bar_dPsi`` are
    masked arrays; the mask (``divergence_mask``) marks points where rho_bar
    is undefined.  ``tilde_divergence_mask`` marks points where rho_tilde
    diverges (p00 falling faster than 1/r^3 at the centre).  ``failures`` maps (i, j) to the message of a quadrature
    failure at that point; all values there are nan.
    """

    grid: EvaluationGrid
    rho_hat: np.ndarray
    rho_bar: np.ma.MaskedArray
    rho_tilde: np.ndarray
    d_rho_hat_dPsi: np.ndarray
    d_r2rho_hat_dr2: np.ndarray
    d_rho_bar_dPsi: np.ma.MaskedArray
    d_rho_tilde_dr2: np.ndarray
    divergence_mask: np.ndarray
    model_name: str = ""
    tilde_divergence_mask: np.ndarray | None = None
    failures: dict = field(default_factory=dict)

    def rows(self):
        """(psi, r2, values, rho_bar_divergent) per point; undefined values are None."""
        for i, psi in enumerate(self.grid.psi_nodes):
            for j, r2 in enumerate(self.grid.r2_nodes):
                masked = bool(self.divergence_mask[i, j])
                vals = []
                for col in FIELD_COLUMNS:
                    tab = getattr(self, col)
                    v = float(np.ma.getdata(tab)[i, j])
                    if (col in ("rho_bar", "d_rho_bar_dPsi") and masked) or not math.isfinite(v):
                        vals.append(None)
                    else:
                        vals.append(v)
                yield float(psi), float(r2), vals, masked

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("psi", "r2") + FIELD_COLUMNS + ("rho_bar_divergent",))
        for psi, r2, vals, masked in self.rows():
            w.writerow([repr(psi), repr(r2)] + ["divergent" if v is None else repr(v) for v in vals] + [int(masked)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "columns": ["psi", "r2", *FIELD_COLUMNS, "rho_bar_divergent"],
            "rows": [[psi, r2, *vals, masked] for psi, r2, vals, masked in self.rows()],
        }


def _field_point(model, psi, r2, spec):
    try:
        return _field_values(model, psi, r2, spec) + (None,)
    except QuadratureError as exc:
        nan = float("nan")
        return (nan,) * 7 + (False, False, str(exc))


def _field_values(model, psi, r2, spec):
    nan = float("nan")
    rh = rho_hat(model, psi, r2, spec)
    d1 = _lhs1(model, psi, r2, spec)
    d2 = _lhs2(model, psi, r2, spec, rh)
    try:
        rt = rho_tilde(model, psi, r2, spec)
        d4 = _lhs4(model, psi, r2, spec, rt)
        tilde_div = False
    except DivergentIntegral:
        rt = d4 = nan
        tilde_div = True
    try:
        rb = rho_bar(model, psi, r2, spec)
        d3 = _lhs3(model, psi, r2, spec)
        masked = False
    except DivergentIntegral:
        rb = d3 = nan
        masked = True
    return rh, rb, rt, d1, d2, d3, d4, masked, tilde_div


def compute_transform_field(model: AugmentedDensityModel, grid: EvaluationGrid,
                            spec: QuadratureSpec = DEFAULT_SPEC, threads: int = 1) -> TransformField:
    pts = list(grid.points())
    out = grid_map(lambda pt: _field_point(model, pt[0], pt[1], spec), pts, threads)
    arr = np.array([o[:7] for o in out], dtype=float).reshape(grid.shape + (7,))
    mask = np.array([o[7] for o in out], dtype=bool).reshape(grid.shape)
    tilde_mask = np.array([o[8] for o in out], dtype=bool).reshape(grid.shape)
    failures = {divmod(k, grid.shape[1]): o[9] for k, o in enumerate(out) if o[9] is not None}
    return TransformField(
        grid=grid,
        rho_hat=arr[..., 0],
        rho_bar=np.ma.MaskedArray(arr[..., 1], mask=mask),
        rho_tilde=arr[..., 2],
        d_rho_hat_dPsi=arr[..., 3],
        d_r2rho_hat_dr2=arr[..., 4],
        d_rho_bar_dPsi=np.ma.MaskedArray(arr[..., 5], mask=mask),
        d_rho_tilde_dr2=arr[..., 6],
        divergence_mask=mask,
        model_name=model.name,
        tilde_divergence_mask=tilde_mask,
        failures=failures,
    )
