"""Split the quantum-versus-MD correlation error into its sources.

Compares the default correlation window [-4.5, 4.5] against a wider [-6, 6]
one and two spatial resolutions, so the 1/M model error can be told apart
from the Dirichlet-wall and finite-difference contributions.

    python scripts/correlation_error_budget.py --tau 0.2 --ladder 25 50 100
"""

import argparse

from canonical_bomd.borndyn import PhaseSpaceGrid, md_correlation
from canonical_bomd.convergence import fit_loglog
from canonical_bomd.model import build_avoided_crossing
from canonical_bomd.quantum import SpatialGrid, quantum_correlation, solve


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tau", type=float, default=0.2)
    parser.add_argument("--T", type=float, default=1.9947)
    parser.add_argument("--ladder", type=float, nargs="+", default=[25.0, 50.0, 100.0])
    parser.add_argument("--phase-nodes", type=int, default=201)
    parser.add_argument("--threads", type=int, default=4)
    args = parser.parse_args()

    pot = build_avoided_crossing(0.1)
    md = md_correlation(pot, args.T, args.tau, PhaseSpaceGrid.square(4.5, args.phase_nodes),
                        threads=args.threads)
    print(f"MD reference at tau={args.tau}: {md:.10f}")
    for grid in (SpatialGrid(-4.5, 4.5, 1024), SpatialGrid(-4.5, 4.5, 2048), SpatialGrid(-6.0, 6.0, 2730)):
        errs = []
        for M in args.ladder:
            q = quantum_correlation(solve(pot, grid, M), args.T, args.tau)
            errs.append(abs(q - md))
            print(f"  [{grid.x_min}, {grid.x_max}] N={grid.n_intervals} M={M:g}: quantum={q:.10f} "
                  f"error={errs[-1]:.3e}", flush=True)
        fit = fit_loglog(args.ladder, errs)
        if fit is not None:
            print(f"  slope {fit.slope:+.3f}  R2 {fit.r2:.4f}")


if __name__ == "__main__":
    main()
