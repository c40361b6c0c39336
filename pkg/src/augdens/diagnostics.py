"""Necessary conditions for a non-negative two-integral DF, and verdict reports.

Every check here is a *necessary* condition: a violation proves that no
non-negative f(E, L^2) reproduces the augmented density, while passing every
check certifies nothing.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .models import AugmentedDensityModel, EvaluationGrid, PotentialModel, SeparablePart
from .quadrature import DEFAULT_SPEC, DivergentIntegral, QuadratureError, QuadratureSpec, _sin2_integral, abel_integral
from .transforms import TransformField, compute_transform_field, d_A_hat, d_B_tilde, d_rB_bar

__all__ = [
    "SCHEMA_VERSION",
    "FLOOR_FACTOR",
    "ConditionEntry",
    "ConditionResult",
    "ConditionReport",
    "AnisotropyProfile",
    "SlopeProfile",
    "classify_beta0",
    "check_general_conditions",
    "check_separable_conditions",
    "anisotropy_from_B",
    "anisotropy_from_density",
    "B_from_anisotropy",
    "slope_profile",
    "slope_anisotropy_check",
]

SCHEMA_VERSION = 1
FLOOR_FACTOR = 1e-10
BOUNDARY_BAND = 1e-3
SLOPE_STEP = 1e-3  # half-width in ln r of the per-node slope stencil

SATISFIED, VIOLATED, UNDEFINED = "satisfied", "violated", "undefined"

NOT_SUFFICIENT = (
    "All checks are necessary conditions only: a violation rules out every "
    "non-negative DF, but passing every check does not establish that one exists."
)
RHO_BAR_CAVEAT = (
    "rho_bar and its psi-derivative exist only if f dL^2/L is integrable at L^2 = 0, "
    "which is stronger than integrability of f; 'undefined' entries mean the "
    "transform does not exist there, not that the condition fails."
)
IMPLICATIONS = (
    "dA/dpsi >= 0 together with d[r B_bar]/dr2 >= 0 implies dA_hat/dpsi >= 0 and dB_tilde/dr2 >= 0; "
    "(1 - beta) B >= 0 alone already implies dB_tilde/dr2 >= 0."
)
DIVERGENT_NOTE = (
    "beta0 > 1/2: B_bar diverges, so the conditions built on it (dA/dpsi and d[r B_bar]/dr2) "
    "cannot be formed and are reported as undefined; the remaining conditions still apply."
)
BOUNDARY_NOTE = (
    "beta0 = 1/2 sits exactly on the convergence boundary of B_bar; the argument that makes "
    "dA/dpsi >= 0 necessary does not cover this case, so those conditions are left indeterminate."
)


@dataclass(frozen=True)
class ConditionEntry:
    condition_id: str
    psi: Optional[float]
    r2: Optional[float]
    value: Optional[float]
    margin: Optional[float]
    floor: float
    verdict: str
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "psi": self.psi,
            "r2": self.r2,
            "value": self.value,
            "margin": self.margin,
            "floor": self.floor,
            "verdict": self.verdict,
            "reason": self.reason,
        }


def _entry(cid, psi, r2, value, scale, reason=""):
    floor = float(FLOOR_FACTOR * abs(scale)) if np.isfinite(scale) else 0.0
    if value is None or not np.isfinite(value):
        return ConditionEntry(cid, psi, r2, None, None, floor, UNDEFINED, reason or "value not finite")
    value = float(value)
    verdict = VIOLATED if value < -floor else SATISFIED
    return ConditionEntry(cid, psi, r2, value, value, floor, verdict, reason)


def _undefined(cid, psi, r2, reason):
    return ConditionEntry(cid, psi, r2, None, None, 0.0, UNDEFINED, reason)


@dataclass
class ConditionResult:
    condition_id: str
    description: str
    entries: list
    caveat: str = ""

    @property
    def summary(self) -> dict:
        counts = {SATISFIED: 0, VIOLATED: 0, UNDEFINED: 0}
        worst = None
        first = None
        for e in self.entries:
            counts[e.verdict] += 1
            if e.verdict != UNDEFINED and (worst is None or e.margin < worst.margin):
                worst = e
            if e.verdict == VIOLATED and first is None:
                first = e
        return {
            "counts": counts,
            "worst_margin": None if worst is None else worst.margin,
            "worst_location": None if worst is None else {"psi": worst.psi, "r2": worst.r2},
            "first_violation": None if first is None else {"psi": first.psi, "r2": first.r2},
        }

    @property
    def status(self) -> str:
        c = self.summary["counts"]
        if c[VIOLATED]:
            return VIOLATED
        if c[UNDEFINED]:
            return UNDEFINED
        return SATISFIED

    def to_dict(self) -> dict:
        return {
            "id": self.condition_id,
            "description": self.description,
            "caveat": self.caveat,
            "points": [e.to_dict() for e in self.entries],
            "summary": self.summary,
        }


@dataclass
class ConditionReport:
    model: dict
    conditions: list = field(default_factory=list)
    classifications: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __getitem__(self, cid) -> ConditionResult:
        for c in self.conditions:
            if c.condition_id == cid:
                return c
        raise KeyError(cid)

    @property
    def ids(self):
        return [c.condition_id for c in self.conditions]

    @property
    def entries(self):
        return [e for c in self.conditions for e in c.entries]

    def merge(self, other: "ConditionReport") -> "ConditionReport":
        notes = self.notes + [n for n in other.notes if n not in self.notes]
        return ConditionReport(
            dict(self.model), self.conditions + other.conditions,
            {**self.classifications, **other.classifications}, notes,
        )

    @property
    def has_violations(self) -> bool:
        return any(c.status == VIOLATED for c in self.conditions)

    @property
    def has_undefined(self) -> bool:
        return any(e.verdict == UNDEFINED for e in self.entries)

    def first_violation(self):
        """Violated entry with the smallest (psi, r2) over all conditions, or None."""
        bad = [e for e in self.entries if e.verdict == VIOLATED]
        if not bad:
            return None
        key = lambda e: (math.inf if e.psi is None else e.psi, math.inf if e.r2 is None else e.r2)  # noqa: E731
        return min(bad, key=key)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "conditions": [c.to_dict() for c in self.conditions],
            "classifications": self.classifications,
            "notes": self.notes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_text(self) -> str:
        lines = [f"model: {self.model.get('name', '?')}"]
        head = f"{'condition':<22} {'ok':>6} {'bad':>6} {'undef':>6} {'worst margin':>14}  first violation"
        lines += [head, "-" * len(head)]
        for c in self.conditions:
            s = c.summary
            n = s["counts"]
            worst = "-" if s["worst_margin"] is None else f"{s['worst_margin']:.4e}"
            fv = s["first_violation"]
            where = "-" if fv is None else ", ".join(
                f"{k}={v:.6g}" for k, v in fv.items() if v is not None)
            lines.append(f"{c.condition_id:<22} {n[SATISFIED]:>6} {n[VIOLATED]:>6} {n[UNDEFINED]:>6} {worst:>14}  {where}")
        for k, v in sorted(self.classifications.items()):
            lines.append(f"{k}: {v}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _model_meta(model: AugmentedDensityModel) -> dict:
    return {"name": model.name, "params": dict(model.params), "separable": model.is_separable}


# ---------------------------------------------------------------------------
# general (bivariate) conditions

GENERAL_CONDITIONS = (
    ("d_rho_hat_dpsi", "d rho_hat / d psi >= 0"),
    ("d_r2rho_hat_dr2", "d [r2 rho_hat] / d r2 >= 0"),
    ("d_rho_bar_dpsi", "d rho_bar / d psi >= 0"),
    ("d_rho_tilde_dr2", "d rho_tilde / d r2 >= 0"),
)


def check_general_conditions(model: AugmentedDensityModel, grid: EvaluationGrid,
                             spec: QuadratureSpec = DEFAULT_SPEC, threads: int = 1,
                             field: Optional[TransformField] = None) -> ConditionReport:
    """Sign of the four transform derivatives at every grid point."""
    if field is None:
        field = compute_transform_field(model, grid, spec, threads)
    results = {cid: [] for cid, _ in GENERAL_CONDITIONS}
    rh = field.rho_hat
    rb = np.ma.getdata(field.rho_bar)
    rt = field.rho_tilde
    for i, psi in enumerate(grid.psi_nodes.tolist()):
        for j, r2 in enumerate(grid.r2_nodes.tolist()):
            failed = field.failures.get((i, j))
            if failed:
                for cid, _ in GENERAL_CONDITIONS:
                    results[cid].append(_undefined(cid, psi, r2, failed))
                continue
            results["d_rho_hat_dpsi"].append(
                _entry("d_rho_hat_dpsi", psi, r2, field.d_rho_hat_dPsi[i, j], rh[i, j] / psi))
            results["d_r2rho_hat_dr2"].append(
                _entry("d_r2rho_hat_dr2", psi, r2, field.d_r2rho_hat_dr2[i, j], rh[i, j]))
            if field.divergence_mask[i, j]:
                results["d_rho_bar_dpsi"].append(
                    _undefined("d_rho_bar_dpsi", psi, r2, "rho_bar diverges: f/L not integrable at L = 0"))
            else:
                results["d_rho_bar_dpsi"].append(
                    _entry("d_rho_bar_dpsi", psi, r2, np.ma.getdata(field.d_rho_bar_dPsi)[i, j], rb[i, j] / psi))
            if field.tilde_divergence_mask is not None and field.tilde_divergence_mask[i, j]:
                results["d_rho_tilde_dr2"].append(
                    _undefined("d_rho_tilde_dr2", psi, r2, "rho_tilde diverges at r2 = 0"))
            else:
                results["d_rho_tilde_dr2"].append(
                    _entry("d_rho_tilde_dr2", psi, r2, field.d_rho_tilde_dr2[i, j], rt[i, j] / r2))
    conds = [
        ConditionResult(cid, desc, results[cid], RHO_BAR_CAVEAT if cid == "d_rho_bar_dpsi" else "")
        for cid, desc in GENERAL_CONDITIONS
    ]
    return ConditionReport(_model_meta(model), conds, {}, [NOT_SUFFICIENT])


# ---------------------------------------------------------------------------
# separable conditions


def classify_beta0(beta0: float) -> str:
    """Convergence of B_bar from the central anisotropy."""
    if beta0 < 0.5 - BOUNDARY_BAND:
        return "converges"
    if beta0 > 0.5 + BOUNDARY_BAND:
        return "divergent"
    return "boundary-indeterminate"


def _fit_beta0(B: SeparablePart, r2_nodes) -> float:
    x = np.unique(np.asarray(r2_nodes, dtype=float).ravel())[:3]
    y = np.asarray(B(x), dtype=float)
    if np.any(y <= 0) or x.size < 2:
        return float("nan")
    return float(-np.polyfit(np.log(x), np.log(y), 1)[0]) + 0.0


def check_separable_conditions(model: AugmentedDensityModel, grid: EvaluationGrid,
                               spec: QuadratureSpec = DEFAULT_SPEC) -> ConditionReport:
    """Conditions on the factors A(psi) and B(r2) of a separable density."""
    if not model.is_separable:
        raise ValueError(f"model {model.name!r} has no separable parts")
    A, B = model.separable_parts
    psi = grid.psi_nodes
    r2 = grid.r2_nodes
    psi_l, r2_l = psi.tolist(), r2.tolist()

    A_hat = abel_integral(A, psi, spec=spec)
    dAh = d_A_hat(A, psi, spec)
    Bt = abel_integral(lambda t: np.sqrt(t) * B(t), r2, spec=spec)
    dBt = d_B_tilde(B, r2, spec)
    Bv = np.asarray(B(r2), dtype=float)
    r2B = Bv + r2 * np.asarray(B.deriv(r2), dtype=float)
    Av = np.asarray(A(psi), dtype=float)
    dA = np.asarray(A.deriv(psi), dtype=float)

    beta0 = _fit_beta0(B, r2)
    status = classify_beta0(beta0) if np.isfinite(beta0) else "boundary-indeterminate"
    B_bar = None
    if status == "converges":
        try:
            B_bar = np.asarray(_sin2_integral(B, r2, -0.5, -0.5, spec))
        except DivergentIntegral:
            status = "divergent"
    reason = {
        "divergent": "B_bar diverges (beta0 > 1/2)",
        "boundary-indeterminate": "beta0 = 1/2: B_bar diverges and the argument does not apply",
    }.get(status, "")

    conds = [
        ConditionResult("d_A_hat_dpsi", "d A_hat / d psi >= 0",
                        [_entry("d_A_hat_dpsi", p, None, v, s / p) for p, v, s in zip(psi_l, dAh, A_hat)]),
        ConditionResult("d_B_tilde_dr2", "d B_tilde / d r2 >= 0",
                        [_entry("d_B_tilde_dr2", None, x, v, s / x) for x, v, s in zip(r2_l, dBt, Bt)]),
        ConditionResult("r2B_slope", "d [r2 B] / d r2 = (1 - beta) B >= 0",
                        [_entry("r2B_slope", None, x, v, s) for x, v, s in zip(r2_l, r2B, Bv)]),
    ]
    if status == "converges":
        drb = d_rB_bar(B, r2, spec)
        conds.append(ConditionResult("dA_dpsi", "d A / d psi >= 0",
                                     [_entry("dA_dpsi", p, None, v, a / p) for p, v, a in zip(psi_l, dA, Av)]))
        conds.append(ConditionResult("d_rB_bar_dr2", "d [r B_bar] / d r2 >= 0",
                                     [_entry("d_rB_bar_dr2", None, x, v, b / math.sqrt(x))
                                      for x, v, b in zip(r2_l, drb, B_bar)]))
    else:
        conds.append(ConditionResult("dA_dpsi", "d A / d psi >= 0",
                                     [_undefined("dA_dpsi", p, None, reason) for p in psi_l], RHO_BAR_CAVEAT))
        conds.append(ConditionResult("d_rB_bar_dr2", "d [r B_bar] / d r2 >= 0",
                                     [_undefined("d_rB_bar_dr2", None, x, reason) for x in r2_l], RHO_BAR_CAVEAT))

    notes = [NOT_SUFFICIENT, IMPLICATIONS]
    if status == "boundary-indeterminate":
        notes.append(BOUNDARY_NOTE)
    elif status == "divergent":
        notes.append(DIVERGENT_NOTE)
    return ConditionReport(
        _model_meta(model), conds,
        {"B_bar": status, "beta0_estimate": beta0},
        notes,
    )


# ---------------------------------------------------------------------------
# anisotropy and density slope


@dataclass
class AnisotropyProfile:
    r_nodes: np.ndarray
    beta_values: np.ndarray
    beta0_estimate: float


@dataclass
class SlopeProfile:
    r_nodes: np.ndarray
    gamma_values: np.ndarray
    rho_values: np.ndarray


def anisotropy_from_B(B: SeparablePart, r_nodes) -> AnisotropyProfile:
    """beta = -d log B / d log r2; nan where B <= 0."""
    r = np.asarray(r_nodes, dtype=float)
    x = r * r
    b = np.asarray(B(x), dtype=float)
    db = np.asarray(B.deriv(x), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(b > 0, -x * db / b, np.nan)
    return AnisotropyProfile(r, beta, _fit_beta0(B, x))


def anisotropy_from_density(model: AugmentedDensityModel, potential: PotentialModel, r_nodes,
                            spec: QuadratureSpec = DEFAULT_SPEC) -> AnisotropyProfile:
    """beta = -d log p10 / d log r2 at psi(r), with p10 = int_0^psi p00(Q, r2) dQ."""
    r = np.asarray(r_nodes, dtype=float)
    betas = []
    for ri in r.tolist():
        x = ri * ri
        p = float(potential(ri))
        p10 = _sin2_integral(lambda q: model(q, x), p, 0.0, 0.0, spec)
        dp10 = _sin2_integral(lambda q: model.dr2(q, x), p, 0.0, 0.0, spec)
        betas.append(-x * dp10 / p10 if p10 > 0 else float("nan"))
    betas = np.array(betas)
    ok = np.isfinite(betas)
    return AnisotropyProfile(r, betas, float(np.mean(betas[ok][:3])) if ok.any() else float("nan"))


def B_from_anisotropy(beta_fn: Callable, r_nodes, n: int = 64) -> SeparablePart:
    """B(r2) = exp(-int_1^r 2 beta(s) ds / s), normalised to B(1) = 1."""
    r = np.asarray(r_nodes, dtype=float)
    if not np.all(np.isfinite(beta_fn(r))):
        raise ValueError("beta is not finite on the requested nodes")
    from numpy.polynomial.legendre import leggauss

    t, w = leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w

    def value(x):
        x = np.asarray(x, dtype=float)
        U = 0.5 * np.log(x)
        u = U[..., None] * t
        return np.exp(-2.0 * U * np.sum(w * beta_fn(np.exp(u)), axis=-1))

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return -beta_fn(np.sqrt(x)) * value(x) / x

    return SeparablePart(value, derivative, "B[beta]")


def slope_profile(model: AugmentedDensityModel, potential: PotentialModel, r_nodes,
                  step: Optional[float] = None) -> SlopeProfile:
    """rho(r) = p00[psi(r), r^2] and gamma = -d ln rho / d ln r.

    Without ``step`` gamma is differenced between neighbouring nodes (one-sided
    at the ends).  With ``step`` each node gets its own five-point stencil of
    half-width ``step`` in ln r, which does not depend on the node spacing.
    """
    r = np.asarray(r_nodes, dtype=float)

    def rho_at(rr):
        return np.asarray(model(potential(rr), rr * rr), dtype=float)

    rho = rho_at(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        if step is None:
            gamma = -np.gradient(np.log(rho), np.log(r), edge_order=2)
        else:
            lr = lambda k: np.log(rho_at(r * np.exp(k * step)))  # noqa: E731
            gamma = -(-lr(2) + 8 * lr(1) - 8 * lr(-1) + lr(-2)) / (12.0 * step)
    gamma = np.where(rho > 0, gamma, np.nan)
    return SlopeProfile(r, gamma, rho)


def slope_anisotropy_check(model: AugmentedDensityModel, potential: PotentialModel, grid,
                           beta_fn: Optional[Callable] = None,
                           spec: QuadratureSpec = DEFAULT_SPEC) -> ConditionReport:
    """gamma(r) - 2 beta(r) >= 0 on the radii of the grid (or an array of radii).

    gamma uses a local stencil per radius so the verdicts do not depend on how
    finely the grid samples r.
    """
    r = np.sqrt(grid.r2_nodes) if isinstance(grid, EvaluationGrid) else np.asarray(grid, dtype=float)
    sp = slope_profile(model, potential, r, step=SLOPE_STEP)
    if beta_fn is not None:
        beta = np.asarray(beta_fn(r), dtype=float)
    elif model.is_separable:
        beta = anisotropy_from_B(model.separable_parts[1], r).beta_values
    else:
        beta = anisotropy_from_density(model, potential, r, spec).beta_values
    psi = np.asarray(potential(r), dtype=float)
    entries = []
    for ri, pi, g, b, rho in zip(r.tolist(), psi.tolist(), sp.gamma_values, beta, sp.rho_values):
        if not rho > 0:
            entries.append(_undefined("slope_anisotropy", pi, ri * ri, "density vanishes"))
            continue
        entries.append(_entry("slope_anisotropy", pi, ri * ri, g - 2.0 * b, abs(g) + 2.0 * abs(b)))
    cond = ConditionResult("slope_anisotropy", "gamma - 2 beta >= 0", entries)
    return ConditionReport(_model_meta(model), [cond], {"potential": potential.name}, [NOT_SUFFICIENT])
