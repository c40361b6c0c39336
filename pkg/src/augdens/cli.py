"""Command-line driver: ``augdens {check,transform,invert,validate}``.

Exit status: 0 every defined condition holds, 2 a violation was found,
3 nothing is violated but some conditions are undefined, 1 execution error.
Data go to files in ``--out DIR`` (or stdout with ``--out -``); diagnostics go
to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from .config import (
    ConfigError,
    GridConfig,
    ModelConfig,
    build_grid,
    build_model,
    escapable,
    is_isotropic,
    load_config,
)
from .diagnostics import (
    SCHEMA_VERSION,
    ConditionReport,
    check_general_conditions,
    check_separable_conditions,
    slope_anisotropy_check,
)
from .expr import ExpressionError
from .inversion import eddington_invert, roundtrip_residual
from .models import SeparablePart, default_grid, power_df, power_df_density
from .quadrature import DEFAULT_SPEC, DivergentIntegral, QuadratureError
from .transforms import compute_transform_field, line_identity_lhs, line_identity_rhs, grid_map

__all__ = [
    "EXIT_OK",
    "EXIT_ERROR",
    "EXIT_VIOLATION",
    "EXIT_UNDEFINED",
    "PipelineResult",
    "run_pipeline",
    "run_validate",
    "canonical_json",
    "main",
]

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION, EXIT_UNDEFINED = 0, 1, 2, 3
TIMESTAMP_KEY = "generated_at"
VERBS = ("check", "transform", "invert", "validate")

# oracle DFs of the identity suite: (label, a, b) for f = E^a (L^2)^b
ORACLE_DFS = (("1", 0.0, 0.0), ("L^2", 0.0, 1.0), ("E^2", 2.0, 0.0), ("E*L^2", 1.0, 1.0))


@dataclass
class PipelineResult:
    status: int
    payload: dict
    text: str = ""
    rows: list = field(default_factory=list)
    header: tuple = ()


def canonical_json(data) -> str:
    """Sorted, indented JSON without the timestamp; the form compared for determinism."""
    if isinstance(data, str):
        data = json.loads(data)
    data = {k: v for k, v in data.items() if k != TIMESTAMP_KEY}
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _status_from_report(report: ConditionReport) -> int:
    if report.has_violations:
        return EXIT_VIOLATION
    if report.has_undefined:
        return EXIT_UNDEFINED
    return EXIT_OK


def _entry_rows(report: ConditionReport):
    return [
        (e.condition_id, e.psi, e.r2, e.value, e.margin, e.floor, e.verdict, e.reason)
        for e in report.entries
    ]


# ---------------------------------------------------------------------------
# verbs


def _run_check(cfg: ModelConfig, threads: int) -> PipelineResult:
    model, potential = build_model(cfg)
    grid = build_grid(cfg)
    spec = cfg.quadrature
    field_ = compute_transform_field(model, grid, spec, threads)
    report = check_general_conditions(model, grid, spec, field=field_)
    if model.is_separable:
        report = report.merge(check_separable_conditions(model, grid, spec))
    if potential is not None:
        report = report.merge(slope_anisotropy_check(model, potential, grid, spec=spec))
    payload = report.to_dict()
    if cfg.roundtrip and is_isotropic(model, grid) and escapable(model):
        payload["roundtrip_residual"] = roundtrip_residual(model, grid, spec, threads)
    header = ("condition_id", "psi", "r2", "value", "margin", "floor", "verdict", "reason")
    return PipelineResult(_status_from_report(report), payload, report.to_text(), _entry_rows(report), header)


def _run_transform(cfg: ModelConfig, threads: int) -> PipelineResult:
    model, _ = build_model(cfg)
    grid = build_grid(cfg)
    tf = compute_transform_field(model, grid, cfg.quadrature, threads)
    payload = {"schema_version": SCHEMA_VERSION, **tf.to_dict()}
    if tf.failures:
        payload["failures"] = [[int(i), int(j), msg] for (i, j), msg in sorted(tf.failures.items())]
    rows = [(psi, r2, *vals, int(m)) for psi, r2, vals, m in tf.rows()]
    text = tf.to_csv()
    status = EXIT_ERROR if tf.failures else EXIT_OK
    return PipelineResult(status, payload, text, rows, tuple(payload["columns"]))


def _run_invert(cfg: ModelConfig, threads: int, tol: float) -> PipelineResult:
    model, _ = build_model(cfg)
    grid = build_grid(cfg)
    if not (is_isotropic(model, grid) and escapable(model)):
        raise ValueError("invert needs an isotropic separable model with A(0) = 0")
    A0 = A = model.separable_parts[0]
    b0 = float(model.separable_parts[1](np.array(1.0)))
    if b0 != 1.0:
        A = SeparablePart(lambda x: b0 * A0(x), lambda x: b0 * A0.deriv(x), A0.name)
    rec = eddington_invert(A, psi_max=cfg.grid.psi_max, spec=cfg.quadrature)
    payload = {"schema_version": SCHEMA_VERSION, "model": model.name, **rec.to_dict()}
    try:
        payload["log_slope"] = rec.log_slope(0.1 * cfg.grid.psi_max, 0.9 * cfg.grid.psi_max)
    except ValueError:
        payload["log_slope"] = None
    status = EXIT_VIOLATION if rec.negative_mass_fraction > 0 else EXIT_OK
    if cfg.roundtrip:
        res = roundtrip_residual(model, grid, cfg.quadrature, threads)
        payload["roundtrip_residual"] = res
        payload["roundtrip_tolerance"] = tol
        if status == EXIT_OK and not res <= tol:
            status = EXIT_VIOLATION
    lines = [f"model: {model.name}", f"negative_mass_fraction: {rec.negative_mass_fraction!r}",
             f"log_slope: {payload['log_slope']!r}"]
    if "roundtrip_residual" in payload:
        lines.append(f"roundtrip_residual: {payload['roundtrip_residual']!r}")
    rows = list(zip(rec.e_nodes.tolist(), rec.f_values.tolist()))
    return PipelineResult(status, payload, "\n".join(lines) + "\n", rows, ("E", "f"))


def run_validate(grid=None, spec=None, threads: int = 1, tol: float = 1e-6) -> PipelineResult:
    """Identity suite: every transform derivative against its diagonal-line integral."""
    grid = grid if grid is not None else default_grid(n_psi=16, n_r2=16)
    spec = spec or DEFAULT_SPEC
    pts = list(grid.points())
    cases = []
    for label, a, b in ORACLE_DFS:
        f = power_df(a, b)
        model = power_df_density(a, b)
        for which in (1, 2, 3, 4):
            def point(pt, which=which, f=f, model=model):
                psi, r2 = pt
                try:
                    lhs = line_identity_lhs(model, psi, r2, which, spec)
                except DivergentIntegral:
                    return None
                rhs = line_identity_rhs(f, psi, r2, which, spec)
                return abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)

            errs = grid_map(point, pts, threads)
            defined = [e for e in errs if e is not None]
            worst = max(defined) if defined else None
            cases.append({
                "df": label,
                "line": which,
                "points": len(pts),
                "undefined": len(pts) - len(defined),
                "max_rel_error": worst,
                "pass": worst is not None and worst <= tol,
            })
    ok = all(c["pass"] for c in cases)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "identity-suite",
        "tolerance": tol,
        "node_count": spec.node_count,
        "grid": {"psi": grid.psi_nodes.tolist(), "r2": grid.r2_nodes.tolist()},
        "cases": cases,
        "passed": ok,
    }
    lines = [f"{'df':<8} {'line':>4} {'max rel error':>14}  result"]
    for c in cases:
        err = "-" if c["max_rel_error"] is None else f"{c['max_rel_error']:.3e}"
        lines.append(f"{c['df']:<8} {c['line']:>4} {err:>14}  {'pass' if c['pass'] else 'FAIL'}")
    rows = [(c["df"], c["line"], c["points"], c["undefined"], c["max_rel_error"], int(c["pass"])) for c in cases]
    return PipelineResult(EXIT_OK if ok else EXIT_VIOLATION, payload, "\n".join(lines) + "\n", rows,
                          ("df", "line", "points", "undefined", "max_rel_error", "pass"))


def run_pipeline(config: ModelConfig, verb: str = "check", threads: Optional[int] = None,
                 tol: float = 1e-6) -> PipelineResult:
    """Run one verb on a config; exceptions propagate (``main`` maps them to status 1)."""
    threads = threads or config.threads
    if verb == "check":
        return _run_check(config, threads)
    if verb == "transform":
        return _run_transform(config, threads)
    if verb == "invert":
        return _run_invert(config, threads, tol)
    if verb == "validate":
        return run_validate(build_grid(config), config.quadrature, threads, tol)
    raise ValueError(f"unknown verb {verb!r}")


# ---------------------------------------------------------------------------
# output


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(result: PipelineResult, fmt: str) -> str:
    if fmt == "json":
        data = {**result.payload, TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat()}
        return json.dumps(data, sort_keys=True, indent=2) + "\n"
    if fmt == "text":
        return result.text
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header)
    for row in result.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str, content: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_EXT = {"json": "json", "csv": "csv", "text": "txt"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are execution errors (status 1), not violations
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="augdens", description="Consistency checks for anisotropic augmented densities.")
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "check": "evaluate the necessary conditions on the model grid",
        "transform": "tabulate the Abel transforms and their derivatives",
        "invert": "Eddington inversion (isotropic models) with optional round trip",
        "validate": "identity suite against built-in oracle DFs",
    }
    for verb in VERBS:
        sp = sub.add_parser(verb, help=helps[verb])
        sp.add_argument("--config", metavar="PATH", required=(verb != "validate"), help="JSON model config")
        sp.add_argument("--out", metavar="DIR", help="output directory, or '-' for stdout")
        sp.add_argument("--format", choices=("json", "csv", "text"), help="output format (default: from config)")
        sp.add_argument("--nodes", type=int, metavar="N", help="quadrature node count")
        sp.add_argument("--tol", type=float, default=1e-6, metavar="X",
                        help="relative tolerance for identity and round-trip comparisons (default 1e-6)")
        sp.add_argument("--threads", type=int, metavar="T", help="worker threads for grid evaluation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = ModelConfig(kind="builtin", builtin="plummer", grid=GridConfig(n_psi=16, n_r2=16))
        if args.nodes is not None:
            cfg = replace(cfg, quadrature=replace(cfg.quadrature, node_count=args.nodes))
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        t0 = time.perf_counter()
        result = run_pipeline(cfg, args.verb, args.threads, args.tol)
        print(f"augdens {args.verb}: status {result.status} in {time.perf_counter() - t0:.2f} s", file=sys.stderr)

        formats = [args.format] if args.format else list(cfg.output.formats)
        out = args.out if args.out is not None else cfg.output.directory
        if out == "-":
            sys.stdout.write(render(result, formats[0]))
        else:
            stem = cfg.output.stem or args.verb
            for fmt in formats:
                path = os.path.join(out, f"{stem}.{_EXT[fmt]}")
                write_atomic(path, render(result, fmt))
                print(f"wrote {path}", file=sys.stderr)
        return result.status
    except (ConfigError, ExpressionError, QuadratureError, DivergentIntegral, ValueError, OSError) as exc:
        print(f"augdens: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # anything else is still an execution error, never a verdict
        print(f"augdens: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
