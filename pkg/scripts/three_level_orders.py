"""Orders of the frame recursion on a 3-level potential.

For two levels every real frame is a plane rotation and the correction term
is a multiple of the identity, so the recursion leaves the frame unchanged.
This script uses a frame twisting in two planes, where the corrections are
genuinely matrix valued, and prints the measured log-log slopes.

    python scripts/three_level_orders.py --out results/three_level_orders.csv
"""

import argparse
import hashlib

import numpy as np

from canonical_bomd.convergence import fit_loglog
from canonical_bomd.diag import psi_recursion, residual_r0
from canonical_bomd.model import from_matrix_function
from canonical_bomd.quantum import SpatialGrid
from canonical_bomd.results import write_csv


def plane_rotation(theta, i, j, d=3):
    R = np.broadcast_to(np.eye(d), theta.shape + (d, d)).copy()
    c, s = np.cos(theta), np.sin(theta)
    R[..., i, i] = R[..., j, j] = c
    R[..., i, j], R[..., j, i] = -s, s
    return R


def twisted_potential():
    def evaluate(x):
        R = plane_rotation(0.6 * np.arctan(2 * x), 0, 1) @ plane_rotation(0.4 * np.sin(1.5 * x), 1, 2)
        lam = np.stack([x * x - 1.0, x * x + 0.5, x * x + 2.0], axis=-1)
        return np.einsum("...ik,...k,...jk->...ij", R, lam, R)

    return from_matrix_function(evaluate, 3, {"kind": "twisted_three_level"})


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ladder", type=float, nargs="+", default=[1e3, 2e3, 4e3, 8e3])
    parser.add_argument("--intervals", type=int, default=1200)
    parser.add_argument("--out", default="results/three_level_orders.csv")
    args = parser.parse_args()

    pot, grid = twisted_potential(), SpatialGrid(-3.0, 3.0, args.intervals)
    rows = []
    for M in args.ladder:
        rep = residual_r0(psi_recursion(pot, M, 3, grid))
        r0 = residual_r0(psi_recursion(pot, M, 2, grid)).r0_sup
        rows.append((M, rep.frame_steps[0], rep.frame_steps[1], rep.level_steps[0], r0))
    cols = np.array(rows)
    for k, name in enumerate(["|Psi2-Psi1|", "|Psi3-Psi2|", "|Lam2-Lam1|", "r0 (kappa=2)"], start=1):
        fit = fit_loglog(cols[:, 0], cols[:, k])
        if fit is not None:
            print(f"{name:>14}: slope {fit.slope:+.4f}  R2 {fit.r2:.5f}")
    tag = hashlib.sha256(repr((args.ladder, args.intervals)).encode()).hexdigest()[:16]
    print(write_csv(args.out, ["M", "frame_step_21", "frame_step_32", "level_step_21", "r0_kappa2"],
                    rows, tag, "three_level_orders"))


if __name__ == "__main__":
    main()
