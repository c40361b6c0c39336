"""JSON model configuration and its translation into model objects.

A config is a single JSON document, e.g.::

    {
      "kind": "separable-expr",
      "name": "quadratic",
      "A": "Psi*(1-Psi)",
      "B": "1",
      "grid": {"n_psi": 64, "n_r2": 64}
    }

``kind`` is one of ``builtin`` (``builtin`` names one of BUILTINS),
``separable-expr`` (expressions ``A`` in Psi and ``B`` in r2) or
``bivariate-expr`` (``density`` in Psi and r2).  ``potential`` is an optional
expression in ``r``.  Named parameters in ``params`` may appear in every
expression.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .expr import Expression, parse_expression
from .models import (
    AugmentedDensityModel,
    EvaluationGrid,
    PotentialModel,
    SeparablePart,
    default_grid,
    make_plummer_pair,
    make_powerlaw_separable,
    power_df_density,
)
from .quadrature import QuadratureSpec

__all__ = [
    "KINDS",
    "BUILTINS",
    "ConfigError",
    "GridConfig",
    "OutputConfig",
    "ModelConfig",
    "load_config",
    "build_model",
    "build_grid",
    "build_potential",
    "is_isotropic",
    "escapable",
]

KINDS = ("builtin", "separable-expr", "bivariate-expr")
BUILTINS = ("plummer", "powerlaw", "power-df")
FORMATS = ("json", "csv", "text")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    psi_max: float = 1.0
    n_psi: int = 64
    n_r2: int = 64
    r2_min: float = 1e-3
    r2_max: float = 1e3


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "."
    formats: tuple = ("json",)
    stem: str = ""

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown output format(s) {bad}; choose from {list(FORMATS)}")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    name: str = ""
    builtin: Optional[str] = None
    A: Optional[str] = None
    B: Optional[str] = None
    density: Optional[str] = None
    potential: Optional[str] = None
    params: dict = field(default_factory=dict)
    grid: GridConfig = field(default_factory=GridConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    output: OutputConfig = field(default_factory=OutputConfig)
    roundtrip: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {list(KINDS)}, got {self.kind!r}")
        if self.kind == "builtin" and self.builtin not in BUILTINS:
            raise ConfigError(f"builtin must be one of {list(BUILTINS)}, got {self.builtin!r}")
        if self.kind == "separable-expr" and (self.A is None or self.B is None):
            raise ConfigError("separable-expr needs both 'A' and 'B'")
        if self.kind == "bivariate-expr" and self.density is None:
            raise ConfigError("bivariate-expr needs 'density'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output"]["formats"] = list(self.output.formats)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        try:
            if "grid" in d:
                d["grid"] = GridConfig(**d["grid"])
            if "quadrature" in d:
                d["quadrature"] = QuadratureSpec(**d["quadrature"])
            if "output" in d:
                d["output"] = OutputConfig(**d["output"])
            if "params" in d:
                d["params"] = {str(k): float(v) for k, v in d["params"].items()}
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def load_config(path) -> ModelConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ModelConfig.from_json(text)


# ---------------------------------------------------------------------------
# building


def build_grid(cfg: ModelConfig) -> EvaluationGrid:
    g = cfg.grid
    return default_grid(g.psi_max, g.n_psi, g.n_r2, (g.r2_min, g.r2_max))


def _univariate(source: str, var: str, params: dict, label: str) -> SeparablePart:
    expr = parse_expression(source, (var,), params).bind(params)
    dexpr = expr.derivative(var)

    def value(x, e=expr):
        x = np.asarray(x, dtype=float)
        return e.evaluate({var: x}) * np.ones(x.shape)

    def derivative(x, e=dexpr):
        x = np.asarray(x, dtype=float)
        return e.evaluate({var: x}) * np.ones(x.shape)

    return SeparablePart(value, derivative, f"{label}={expr}")


def _bivariate(source: str, params: dict) -> tuple:
    expr = parse_expression(source, ("Psi", "r2"), params).bind(params)
    dpsi, dr2 = expr.derivative("Psi"), expr.derivative("r2")

    def wrap(e: Expression):
        return lambda psi, r2: e.evaluate({"Psi": psi, "r2": r2})

    return wrap(expr), wrap(dpsi), wrap(dr2), str(expr)


def build_potential(cfg: ModelConfig) -> Optional[PotentialModel]:
    if cfg.potential is not None:
        expr = parse_expression(cfg.potential, ("r",), cfg.params).bind(cfg.params)
        return PotentialModel(lambda r, e=expr: e.evaluate({"r": r}) * np.ones(np.shape(r)), f"psi(r)={expr}")
    if cfg.kind == "builtin" and cfg.builtin in ("plummer", "powerlaw"):
        return make_plummer_pair()[1]
    return None


def build_model(cfg: ModelConfig):
    """(model, potential or None) described by the config."""
    p = cfg.params
    if cfg.kind == "builtin":
        if cfg.builtin == "plummer":
            model = make_plummer_pair()[0]
        elif cfg.builtin == "powerlaw":
            plummer_A = make_plummer_pair()[0].separable_parts[0]
            model = make_powerlaw_separable(p.get("beta0", 0.0), plummer_A)
        else:
            model = power_df_density(p.get("a", 0.0), p.get("b", 0.0), p.get("c", 1.0))
    elif cfg.kind == "separable-expr":
        A = _univariate(cfg.A, "Psi", p, "A")
        B = _univariate(cfg.B, "r2", p, "B")
        model = AugmentedDensityModel.from_parts(A, B, cfg.name or "separable", p)
    else:
        dens, dpsi, dr2, text = _bivariate(cfg.density, p)
        model = AugmentedDensityModel(dens, cfg.name or text, dict(p), d_psi=dpsi, d_r2=dr2)
    if cfg.name and model.name != cfg.name:
        model = _renamed(model, cfg.name)
    return model, build_potential(cfg)


def _renamed(model: AugmentedDensityModel, name: str) -> AugmentedDensityModel:
    return replace(model, name=name)


def is_isotropic(model: AugmentedDensityModel, grid: EvaluationGrid) -> bool:
    if not model.is_separable:
        return False
    b = np.asarray(model.separable_parts[1](grid.r2_nodes), dtype=float)
    return bool(np.all(np.isfinite(b)) and np.allclose(b, b[0], rtol=1e-12, atol=0) and b[0] > 0)


def escapable(model: AugmentedDensityModel) -> bool:
    if not model.is_separable:
        return False
    return float(model.separable_parts[0](np.array(0.0))) == 0.0
