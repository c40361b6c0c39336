"""Isotropic (Eddington) inversion and forward velocity moments of a DF."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .models import (
    AugmentedDensityModel,
    DistributionFunction,
    EvaluationGrid,
    PotentialModel,
    SeparablePart,
)
from .quadrature import DEFAULT_SPEC, QuadratureSpec, abel_integral, central_difference, triangle_integral

__all__ = [
    "RecoveredDF",
    "eddington_df",
    "eddington_invert",
    "forward_moment",
    "roundtrip_residual",
    "anisotropy_from_moments",
    "constant_beta_invert",
]

EDDINGTON_NORM = 1.0 / (math.sqrt(8.0) * math.pi**2)


def eddington_df(A_part: SeparablePart, E, spec: QuadratureSpec = DEFAULT_SPEC):
    """f(E) = 1/(sqrt8 pi^2) [A'(0)/sqrt(E) + int_0^E A''(psi) dpsi / sqrt(E - psi)].

    ``E`` may be an array; A'' is a central difference of A'.
    """
    E = np.asarray(E, dtype=float)
    second = lambda x: central_difference(A_part.deriv, x)  # noqa: E731
    slope0 = float(A_part.deriv(np.array(0.0)))
    out = np.zeros_like(E, dtype=float)
    live = E > 0
    if np.any(live):
        El = E[live]
        body = abel_integral(second, El, spec=spec)
        out[live] = EDDINGTON_NORM * (slope0 / np.sqrt(El) + body)
    return out if out.ndim else float(out)


@dataclass
class RecoveredDF:
    """Isotropic DF samples f(E_i) with a continuous evaluator for forward use."""

    e_nodes: np.ndarray
    f_values: np.ndarray
    negative_mass_fraction: float
    A_part: SeparablePart | None = field(default=None, repr=False)
    spec: QuadratureSpec = DEFAULT_SPEC

    def as_distribution_function(self, exact: bool = True) -> DistributionFunction:
        """``exact`` evaluates the inversion integral on demand; otherwise PCHIP between samples."""
        if exact and self.A_part is not None:
            A, spec = self.A_part, self.spec

            def f(E, L2):
                return eddington_df(A, np.where(E > 0, E, 0.0), spec)
        else:
            interp = PchipInterpolator(self.e_nodes, self.f_values, extrapolate=True)

            def f(E, L2):
                return np.where(E > 0, interp(np.where(E > 0, E, 0.0)), 0.0)

        return DistributionFunction(f, "eddington", isotropic=True)

    def log_slope(self, lo: float = 0.1, hi: float = 0.9) -> float:
        sel = (self.e_nodes >= lo) & (self.e_nodes <= hi) & (self.f_values > 0)
        if sel.sum() < 2:
            raise ValueError("not enough positive samples in the fit window")
        return float(np.polyfit(np.log(self.e_nodes[sel]), np.log(self.f_values[sel]), 1)[0])

    def to_csv(self) -> str:
        lines = [f"# negative_mass_fraction={self.negative_mass_fraction!r}", "E,f"]
        lines += [f"{e!r},{v!r}" for e, v in zip(self.e_nodes.tolist(), self.f_values.tolist())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "negative_mass_fraction": self.negative_mass_fraction,
            "e_nodes": self.e_nodes.tolist(),
            "f_values": self.f_values.tolist(),
        }


def _negative_mass_fraction(e, f):
    neg = np.trapezoid(np.maximum(-f, 0.0), e)
    tot = np.trapezoid(np.abs(f), e)
    return 0.0 if tot == 0 else float(neg / tot)


def eddington_invert(A_part: SeparablePart, e_nodes=None, psi_max: float = 1.0,
                     spec: QuadratureSpec = DEFAULT_SPEC) -> RecoveredDF:
    """Recover the isotropic DF whose augmented density is A(psi).

    Default nodes are 128 uniform energies on (0, psi_max].  A(0) must vanish.
    """
    if e_nodes is None:
        e_nodes = psi_max * np.arange(1, 129) / 128.0
    e_nodes = np.asarray(e_nodes, dtype=float)
    if np.any(e_nodes <= 0):
        raise ValueError("energy nodes must be positive")
    a0 = float(A_part(np.array(0.0)))
    if a0 != 0.0:
        raise ValueError(f"A(0) = {a0!r}; the boundary term for A(0) != 0 is not supported")
    f = eddington_df(A_part, e_nodes, spec)
    return RecoveredDF(e_nodes, f, _negative_mass_fraction(e_nodes, f), A_part, spec)


def constant_beta_invert(*args, **kwargs):
    """Extension point for the constant-anisotropy generalisation; not implemented."""
    raise NotImplementedError("only the isotropic inversion is implemented")


def forward_moment(f, n: int, m: int, psi: float, r2: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """p_{n,m}(psi, r2) = 2 pi / r^(2m+2) * triangle integral of K^(n-1/2) L^(2m) f."""
    if psi <= 0:
        return 0.0
    return 2.0 * math.pi / r2 ** (m + 1) * triangle_integral(f, psi, r2, n, m, spec)


def _isotropic_A(model: AugmentedDensityModel, grid: EvaluationGrid) -> SeparablePart:
    if not model.is_separable:
        raise ValueError("round trip needs a separable model")
    A, B = model.separable_parts
    b = np.asarray(B(grid.r2_nodes), dtype=float)
    if not np.allclose(b, b[0], rtol=1e-12, atol=0):
        raise ValueError("round trip needs an isotropic model (B constant)")
    b0 = float(b[0])
    if b0 == 1.0:
        return A
    return SeparablePart(lambda x: b0 * A(x), lambda x: b0 * A.deriv(x), f"{b0:g}*({A.name})")


def roundtrip_residual(model: AugmentedDensityModel, grid: EvaluationGrid,
                       spec: QuadratureSpec = DEFAULT_SPEC, threads: int = 1) -> float:
    """max over the grid of |p00[f] - p00| / |p00| with f the Eddington inverse of the model."""
    from .transforms import grid_map

    A = _isotropic_A(model, grid)
    if float(A(np.array(0.0))) != 0.0:
        raise ValueError("A(0) must vanish")
    df = RecoveredDF(np.array([]), np.array([]), 0.0, A, spec).as_distribution_function(exact=True)

    def point(pt):
        psi, r2 = pt
        target = float(A(psi))
        got = forward_moment(df, 0, 0, psi, r2, spec)
        if target == 0.0:
            return abs(got)
        return abs(got - target) / abs(target)

    res = grid_map(point, list(grid.points()), threads)
    return float(max(res)) if res else 0.0


def anisotropy_from_moments(f, potential: PotentialModel, r_nodes, spec: QuadratureSpec = DEFAULT_SPEC):
    """beta(r) = 1 - p01 / (2 p10) at [psi(r), r^2]; undefined (nan) where p10 vanishes."""
    from .diagnostics import AnisotropyProfile

    r_nodes = np.asarray(r_nodes, dtype=float)
    betas = []
    for r in r_nodes:
        psi, r2 = float(potential(r)), float(r * r)
        p10 = forward_moment(f, 1, 0, psi, r2, spec)
        p01 = forward_moment(f, 0, 1, psi, r2, spec)
        betas.append(float("nan") if p10 <= 0 else 1.0 - p01 / (2.0 * p10))
    betas = np.array(betas)
    return AnisotropyProfile(r_nodes, betas, _inner_mean(betas))


def _inner_mean(betas) -> float:
    ok = np.isfinite(betas)
    return float(np.mean(betas[ok][:3])) if np.any(ok) else float("nan")
