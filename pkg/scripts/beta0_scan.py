#!/usr/bin/env python3
"""Scan the central anisotropy beta0 of B = r2^-beta0 with a Plummer A(psi).

For each beta0 prints the rho_bar classification and the status of every condition.
Usage: python scripts/beta0_scan.py [--betas -1 0 0.25 0.5 0.75 1.5]
"""
import argparse

from augdens.diagnostics import check_general_conditions, check_separable_conditions
from augdens.models import default_grid, make_plummer_pair, make_powerlaw_separable


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", type=float, nargs="+", default=[-1.0, 0.0, 0.25, 0.5, 0.75, 1.5])
    ap.add_argument("--n", type=int, default=8, help="grid nodes per axis")
    args = ap.parse_args()
    A = make_plummer_pair()[0].separable_parts[0]
    grid = default_grid(n_psi=args.n, n_r2=args.n)
    for beta0 in args.betas:
        try:
            model = make_powerlaw_separable(beta0, A)
        except ValueError as exc:
            print(f"beta0={beta0:+.2f} rejected: {exc}")
            continue
        rep = check_general_conditions(model, grid).merge(check_separable_conditions(model, grid))
        statuses = " ".join(f"{cid}={rep[cid].status}" for cid in rep.ids)
        print(f"beta0={beta0:+.2f} B_bar={rep.classifications['B_bar']:<22s} {statuses}")


if __name__ == "__main__":
    main()
