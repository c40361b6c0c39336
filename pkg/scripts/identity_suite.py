#!/usr/bin/env python3
"""Run the four diagonal-line identities for the oracle power-law DFs on a grid.

Usage: python scripts/identity_suite.py [--n-psi 16] [--n-r2 16] [--nodes 256]
"""
import argparse
import time

from augdens.models import default_grid, power_df, power_df_density
from augdens.quadrature import DivergentIntegral, QuadratureSpec
from augdens.transforms import line_identity_lhs, line_identity_rhs

ORACLES = {"1": (0.0, 0.0), "L^2": (0.0, 1.0), "E^2": (2.0, 0.0), "E*L^2": (1.0, 1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-psi", type=int, default=16)
    ap.add_argument("--n-r2", type=int, default=16)
    ap.add_argument("--nodes", type=int, default=256)
    args = ap.parse_args()
    grid = default_grid(n_psi=args.n_psi, n_r2=args.n_r2)
    spec = QuadratureSpec(node_count=args.nodes)
    t0 = time.perf_counter()
    print(f"{'DF':8s} {'line':>4s} {'max rel err':>12s}")
    for label, (a, b) in ORACLES.items():
        f, model = power_df(a, b), power_df_density(a, b)
        for line in (1, 2, 3, 4):
            worst = 0.0
            for psi, r2 in grid.points():
                try:
                    lhs = line_identity_lhs(model, psi, r2, line, spec)
                except DivergentIntegral:
                    continue
                rhs = line_identity_rhs(f, psi, r2, line, spec)
                worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
            print(f"{label:8s} {line:4d} {worst:12.3e}")
    print(f"elapsed {time.perf_counter() - t0:.2f} s")


if __name__ == "__main__":
    main()
