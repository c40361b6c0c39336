"""Domain types: augmented densities, distribution functions, potentials, grids.

Units are G = M = scale radius = 1 for every built-in model.  All evaluators
are vectorised numpy callables without hidden state, so they may be shared
between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import beta as beta_fn

from .quadrature import central_difference

__all__ = [
    "kernel_K",
    "SeparablePart",
    "AugmentedDensityModel",
    "DistributionFunction",
    "PotentialModel",
    "EvaluationGrid",
    "default_grid",
    "make_plummer_pair",
    "make_powerlaw_separable",
    "power_part",
    "constant_part",
    "power_df",
    "power_df_density",
    "check_model",
]

PLUMMER_NORM = 3.0 / (4.0 * math.pi)


def kernel_K(E, L2, psi, r2):
    """K = 2 (psi - E) - L^2 / r^2; positive inside the accessible triangle."""
    r2 = np.asarray(r2, dtype=float)
    if np.any(r2 <= 0):
        raise ValueError("kernel_K needs r2 > 0")
    out = 2.0 * (np.asarray(psi, dtype=float) - E) - np.asarray(L2, dtype=float) / r2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SeparablePart:
    """One factor A(psi) or B(r^2) of a separable augmented density."""

    value: Callable
    derivative: Optional[Callable] = None
    name: str = ""

    @property
    def analytic_derivative_flag(self) -> bool:
        return self.derivative is not None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.derivative is not None:
            return self.derivative(x)
        return central_difference(self.value, x)


def power_part(k: float, coeff: float = 1.0, name: str = "") -> SeparablePart:
    """coeff * x**k with its analytic derivative."""
    k = float(k)

    def value(x):
        return coeff * np.power(x, k)

    def derivative(x):
        if k == 0.0:
            return np.zeros_like(x)
        return coeff * k * np.power(x, k - 1.0)

    return SeparablePart(value, derivative, name or f"{coeff:g}*x^{k:g}")


def constant_part(c: float = 1.0) -> SeparablePart:
    return SeparablePart(lambda x: np.full(np.shape(x), float(c)),
                         lambda x: np.zeros(np.shape(x)), f"{c:g}")


@dataclass(frozen=True)
class AugmentedDensityModel:
    """p00(psi, r2), optionally with the factorisation A(psi) B(r2).

    ``d_psi`` and ``d_r2`` are optional analytic partial derivatives; without
    them the derivatives are taken by central differences (or from the
    separable factors when present).
    """

    density: Callable
    name: str = "model"
    params: dict = field(default_factory=dict)
    separable_parts: Optional[tuple] = None
    d_psi: Optional[Callable] = None
    d_r2: Optional[Callable] = None

    @classmethod
    def from_parts(cls, A: SeparablePart, B: SeparablePart, name: str = "separable", params=None):
        return cls(
            density=lambda psi, r2: A(psi) * B(r2),
            name=name,
            params=dict(params or {}),
            separable_parts=(A, B),
            d_psi=lambda psi, r2: A.deriv(psi) * B(r2),
            d_r2=lambda psi, r2: A(psi) * B.deriv(r2),
        )

    @property
    def is_separable(self) -> bool:
        return self.separable_parts is not None

    def evaluate(self, psi, r2):
        psi, r2 = np.broadcast_arrays(np.asarray(psi, dtype=float), np.asarray(r2, dtype=float))
        return np.asarray(self.density(psi, r2), dtype=float) * np.ones(psi.shape)

    __call__ = evaluate

    def dpsi(self, psi, r2):
        psi, r2 = np.broadcast_arrays(np.asarray(psi, dtype=float), np.asarray(r2, dtype=float))
        if self.d_psi is not None:
            return np.asarray(self.d_psi(psi, r2), dtype=float) * np.ones(psi.shape)
        return central_difference(lambda x: self.evaluate(x, r2), psi)

    def dr2(self, psi, r2):
        psi, r2 = np.broadcast_arrays(np.asarray(psi, dtype=float), np.asarray(r2, dtype=float))
        if self.d_r2 is not None:
            return np.asarray(self.d_r2(psi, r2), dtype=float) * np.ones(psi.shape)
        return central_difference(lambda x: self.evaluate(psi, x), r2)

    def scaled(self, c: float) -> "AugmentedDensityModel":
        """The same model multiplied by a constant c."""
        if self.is_separable:
            A, B = self.separable_parts
            cA = SeparablePart(lambda x: c * A(x), lambda x: c * A.deriv(x), f"{c:g}*({A.name})")
            return AugmentedDensityModel.from_parts(cA, B, f"{c:g}*{self.name}", self.params)
        return AugmentedDensityModel(
            lambda psi, r2: c * self.evaluate(psi, r2),
            f"{c:g}*{self.name}",
            dict(self.params),
            d_psi=lambda psi, r2: c * self.dpsi(psi, r2),
            d_r2=lambda psi, r2: c * self.dr2(psi, r2),
        )


@dataclass(frozen=True)
class DistributionFunction:
    """f(E, L^2).  ``isotropic`` marks DFs that ignore L^2."""

    evaluate: Callable
    name: str = "df"
    isotropic: bool = False

    def __call__(self, E, L2):
        E, L2 = np.broadcast_arrays(np.asarray(E, dtype=float), np.asarray(L2, dtype=float))
        return np.asarray(self.evaluate(E, L2), dtype=float) * np.ones(E.shape)


@dataclass(frozen=True)
class PotentialModel:
    psi: Callable
    name: str = "potential"

    def __call__(self, r):
        return self.psi(np.asarray(r, dtype=float))

    def is_monotone(self, r_nodes) -> bool:
        vals = self(np.sort(np.asarray(r_nodes, dtype=float)))
        return bool(np.all(np.diff(vals) <= 0))


@dataclass(frozen=True)
class EvaluationGrid:
    psi_nodes: np.ndarray
    r2_nodes: np.ndarray

    def __post_init__(self):
        for label in ("psi_nodes", "r2_nodes"):
            nodes = np.asarray(getattr(self, label), dtype=float)
            if nodes.ndim != 1 or nodes.size == 0:
                raise ValueError(f"{label} must be a non-empty 1-d sequence")
            if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
                raise ValueError(f"{label} must be strictly positive and strictly ascending")
            nodes.setflags(write=False)
            object.__setattr__(self, label, nodes)

    @property
    def shape(self):
        return (self.psi_nodes.size, self.r2_nodes.size)

    def points(self):
        """(psi, r2) pairs in deterministic row-major order."""
        for psi in self.psi_nodes:
            for r2 in self.r2_nodes:
                yield float(psi), float(r2)


def default_grid(psi_max: float = 1.0, n_psi: int = 64, n_r2: int = 64,
                 r2_range: tuple = (1e-3, 1e3)) -> EvaluationGrid:
    """n_psi uniform nodes on (0, psi_max] and n_r2 log-spaced r^2 nodes."""
    psi = psi_max * np.arange(1, n_psi + 1) / n_psi
    r2 = np.geomspace(r2_range[0], r2_range[1], n_r2)
    return EvaluationGrid(psi, r2)


# ---------------------------------------------------------------------------
# built-in families


def make_plummer_pair():
    """Unit Plummer sphere: psi(r) = (1 + r^2)^(-1/2), p00 = (3 / 4 pi) psi^5."""
    A = power_part(5, PLUMMER_NORM, "3/(4pi)*Psi^5")
    model = AugmentedDensityModel.from_parts(A, constant_part(1.0), "plummer")
    potential = PotentialModel(lambda r: 1.0 / np.sqrt(1.0 + r * r), "plummer")
    return model, potential


def make_powerlaw_separable(beta0: float, A_part: SeparablePart) -> AugmentedDensityModel:
    """A(psi) (r^2)^(-beta0); beta0 >= 1 is rejected."""
    if beta0 >= 1:
        raise ValueError(f"beta0 must be < 1 (got {beta0}); (1 - beta) B >= 0 fails everywhere otherwise")
    B = power_part(-beta0, 1.0, f"r2^{-beta0:g}")
    return AugmentedDensityModel.from_parts(A_part, B, f"powerlaw(beta0={beta0:g})", {"beta0": beta0})


def power_df(a: float, b: float, c: float = 1.0) -> DistributionFunction:
    """f = c E^a (L^2)^b on the bound region E > 0."""

    def f(E, L2):
        Ep = np.where(E > 0, E, 0.0)
        return c * np.power(Ep, a) * np.power(L2, b)

    return DistributionFunction(f, f"{c:g}*E^{a:g}*L^{2 * b:g}", isotropic=(b == 0))


def power_df_density(a: float, b: float, c: float = 1.0) -> AugmentedDensityModel:
    """Closed-form augmented density of ``power_df(a, b, c)``.

    p00 = c 2 pi 2^(b + 1/2) B(b+1, 1/2) B(a+1, b+3/2) r^(2b) psi^(a+b+3/2)
    """
    coeff = c * 2.0 * math.pi * 2.0 ** (b + 0.5) * beta_fn(b + 1, 0.5) * beta_fn(a + 1, b + 1.5)
    A = power_part(a + b + 1.5, coeff, f"{coeff:.6g}*Psi^{a + b + 1.5:g}")
    B = power_part(b, 1.0, f"r2^{b:g}")
    return AugmentedDensityModel.from_parts(A, B, f"density[{c:g}*E^{a:g}*L^{2 * b:g}]", {"a": a, "b": b, "c": c})


def check_model(model: AugmentedDensityModel, grid: EvaluationGrid, rtol: float = 1e-12) -> dict:
    """Sample the model's invariants on the grid and report what fails."""
    P, R = np.meshgrid(grid.psi_nodes, grid.r2_nodes, indexing="ij")
    vals = model.evaluate(P, R)
    issues = []
    if not np.all(np.isfinite(vals)):
        issues.append("non-finite density values on the grid")
    if np.any(vals < 0):
        issues.append("negative density values on the grid")
    at_zero = model.evaluate(np.zeros_like(grid.r2_nodes), grid.r2_nodes)
    escapable = bool(np.all(at_zero == 0))
    if not escapable:
        issues.append("p00(0, r2) != 0: the system is not escapable")
    if model.is_separable:
        A, B = model.separable_parts
        prod = A(P) * B(R)
        if not np.allclose(prod, vals, rtol=rtol, atol=0):
            issues.append("separable parts do not reproduce the density")
    return {"escapable": escapable, "issues": issues}
