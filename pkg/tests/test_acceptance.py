"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test prints a single ``criterion N PASS|FAIL`` line (also repeated in
the terminal summary) before asserting.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from canonical_bomd import cli
from canonical_bomd.borndyn import (PhaseSpaceGrid, gibbs_weights, md_correlation, md_correlation_curve,
                                    steps_for, surface_energy, surface_force, verlet_flow, weighted_moment)
from canonical_bomd.config import load
from canonical_bomd.convergence import fit_loglog
from canonical_bomd.diag import psi_recursion, residual_r0
from canonical_bomd.experiments import density_errors, gaussian_pair, weyl_identities
from canonical_bomd.langevin import (LangevinParams, estimate_weights_groundstate, langevin_average,
                                     merged_path_average)
from canonical_bomd.model import build_avoided_crossing, harmonic
from canonical_bomd.quantum import SpatialGrid, gibbs_position_moment, quantum_correlation, solve
from canonical_bomd.weyl import moyal_remainder, refined_grid

T_DENSITY, T_CORR = 1.9946, 1.9947
DENSITY_GRID = SpatialGrid(-6.0, 6.0, 751)
CORR_GRID = SpatialGrid(-4.5, 4.5, 2048)
DESK_PHASE = PhaseSpaceGrid.square(4.5, 201)


def slope_ok(fit, target, tol):
    return fit is not None and math.isfinite(fit.slope) and abs(fit.slope - target) <= tol


def test_c01_weights(criterion):
    t0 = time.perf_counter()
    q1 = gibbs_weights(build_avoided_crossing(0.1, 1.0, 10.0), T_CORR, DENSITY_GRID).q[0]
    dt = time.perf_counter() - t0
    ok = 0.79 <= q1 <= 0.81 and dt < 1.0
    criterion(1, "weight reproduction", ok, f"q1={q1:.8f} (want [0.79, 0.81]) in {dt:.3f}s")
    assert ok


def test_c02_density_agreement(criterion):
    t0 = time.perf_counter()
    _, _, l1, linf = density_errors(build_avoided_crossing(0.1), T_DENSITY, DENSITY_GRID, 1000.0)
    dt = time.perf_counter() - t0
    ok = linf < 5e-3 and dt < 60
    criterion(2, "density agreement", ok, f"Linf={linf:.3e} L1={l1:.3e} (want Linf < 5e-3) in {dt:.1f}s")
    assert ok


def test_c03_density_order(criterion):
    t0 = time.perf_counter()
    ladder = [125.0, 250.0, 500.0, 1000.0]
    parts, ok = [], True
    slopes = []
    for delta in (0.05, 0.1):
        pot = build_avoided_crossing(delta)
        errs = np.array([density_errors(pot, T_DENSITY, DENSITY_GRID, M)[2:] for M in ladder])
        for col, norm in enumerate(("L1", "Linf")):
            fit = fit_loglog(ladder, errs[:, col])
            slopes.append(fit.slope)
            good = -1.2 <= fit.slope <= -0.8 and fit.r2 >= 0.98
            ok &= good
            parts.append(f"d={delta} {norm} slope={fit.slope:.3f} R2={fit.r2:.4f}")
    # "for all delta": both deltas inside the band, and their slopes within the band width of each other
    spread = max(slopes) - min(slopes)
    dt = time.perf_counter() - t0
    ok &= spread <= 0.4 and dt < 600
    criterion(3, "density convergence order", ok,
              "; ".join(parts) + f"; spread={spread:.3f} (want slopes in [-1.2,-0.8], R2>=0.98) in {dt:.0f}s")
    assert ok


def test_c04_correlation_order(criterion):
    t0 = time.perf_counter()
    pot = build_avoided_crossing(0.1)
    md = md_correlation(pot, T_CORR, 0.2, DESK_PHASE, threads=4)
    ladder = [25.0, 50.0, 100.0]
    errs = [abs(quantum_correlation(solve(pot, CORR_GRID, M), T_CORR, 0.2) - md) for M in ladder]
    fit = fit_loglog(ladder, errs)
    dt = time.perf_counter() - t0
    ok = -1.25 <= fit.slope <= -0.75 and dt < 900
    criterion(4, "correlation convergence order", ok,
              f"errors={['%.3e' % e for e in errs]} slope={fit.slope:.3f} (want [-1.25,-0.75]) in {dt:.0f}s")
    assert ok


def test_c05_zero_time(criterion):
    t0 = time.perf_counter()
    pot = build_avoided_crossing(0.1)

    def integral(f):
        return sum(quad(lambda x, j=j: f(x) * math.exp(-pot.eigenvalues(x)[j] / T_CORR), -10, 10,
                        limit=500, points=[0.0])[0] for j in (0, 1))

    oracle = integral(lambda x: x * x) / integral(lambda x: 1.0)
    quantum = quantum_correlation(solve(pot, DENSITY_GRID, 1000.0), T_CORR, 0.0)
    md = md_correlation(pot, T_CORR, 0.0, DESK_PHASE)
    rq, rm = abs(quantum / oracle - 1), abs(md / oracle - 1)
    dt = time.perf_counter() - t0
    ok = rq < 1e-3 and rm < 1e-3 and dt < 120
    criterion(5, "tau=0 cross-check", ok,
              f"oracle={oracle:.8f} quantum rel={rq:.2e} md rel={rm:.2e} (want < 1e-3) in {dt:.1f}s")
    assert ok


def test_c06_integrator(criterion):
    def harmonic_error(dt, tau=1.0):
        x, p, _ = verlet_flow(lambda y: -y, 1.0, 0.0, dt, steps_for(tau, dt))
        return math.hypot(x - math.cos(tau), p + math.sin(tau))

    order_ratio = harmonic_error(0.02) / harmonic_error(0.01)

    pot = build_avoided_crossing(0.1)
    rng = np.random.default_rng(0)
    x0, p0 = rng.uniform(-2, 2, 200), rng.uniform(-3, 3, 200)
    force = lambda y: surface_force(pot, 0, y, check_gap=False)
    x1, p1, _ = verlet_flow(force, x0, p0, 1e-3, 200)
    xb, pb, _ = verlet_flow(force, x1, p1, -1e-3, 200)
    reversal = float(max(np.abs(xb - x0).max(), np.abs(pb - p0).max()))

    def drift(dt):
        x, p, _ = verlet_flow(force, 0.4, 1.2, dt, steps_for(2.0, dt))
        return abs(surface_energy(pot, 0, x, p) - surface_energy(pot, 0, 0.4, 1.2))

    drift_ratio = drift(2e-3) / drift(1e-3)
    ok = 3.0 <= order_ratio <= 5.0 and reversal < 1e-10 and 3 < drift_ratio < 5
    criterion(6, "integrator properties", ok,
              f"error ratio={order_ratio:.3f} (want 4 +- 25%), reversal={reversal:.1e} (want < 1e-10), "
              f"energy drift ratio={drift_ratio:.3f} (want (3,5))")
    assert ok


def test_c07_diagonalization_orders(criterion):
    t0 = time.perf_counter()
    pot = build_avoided_crossing(0.5)
    grid = SpatialGrid(-3.0, 3.0, 1200)
    ladder = [1e3, 2e3, 4e3, 8e3]
    reps = [residual_r0(psi_recursion(pot, M, 3, grid)) for M in ladder]
    r0 = [residual_r0(psi_recursion(pot, M, 2, grid)).r0_sup for M in ladder]
    d21 = [r.frame_steps[0] for r in reps]
    d32 = [r.frame_steps[1] for r in reps]

    def fit(values):
        return fit_loglog(ladder, values) if min(values) > 0 else None

    f21, f32, fr = fit(d21), fit(d32), fit(r0)
    show = lambda f: "nan" if f is None else f"{f.slope:.3f}"
    dt = time.perf_counter() - t0
    ok = slope_ok(f21, -1, 0.1) and slope_ok(f32, -2, 0.15) and slope_ok(fr, -2, 0.2) and dt < 60
    criterion(7, "diagonalization orders", ok,
              f"|Psi2-Psi1| slope={show(f21)} (max {max(d21):.1e}), |Psi3-Psi2| slope={show(f32)} "
              f"(max {max(d32):.1e}), r0 slope={show(fr)} (max {max(r0):.1e}); "
              f"want -1+-0.1, -2+-0.15, -2+-0.2 in {dt:.1f}s")
    assert ok


def test_c08_weyl(criterion):
    t0 = time.perf_counter()
    ids = weyl_identities(100.0)
    ladder = [32.0, 64.0, 128.0, 256.0]
    grid = refined_grid(5.0, 5.0, max(ladder))
    A, B = gaussian_pair(grid)
    rems = [moyal_remainder(A, B, M, (0, 1, 2)) for M in ladder]
    fits = {m: fit_loglog(ladder, [r[m] for r in rems]) for m in (0, 1, 2)}
    dt = time.perf_counter() - t0
    ok = (ids["trace_rel_error"] < 1e-6 and ids["composition_trace_rel_error"] < 1e-5
          and all(slope_ok(fits[m], -(m + 1) / 2, 0.2) for m in fits) and dt < 300)
    criterion(8, "Weyl identities", ok,
              f"trace rel={ids['trace_rel_error']:.1e} (want < 1e-6), composition rel="
              f"{ids['composition_trace_rel_error']:.1e} (want < 1e-5), Moyal slopes "
              + ", ".join(f"m={m}: {fits[m].slope:.3f}" for m in fits) + f" in {dt:.0f}s")
    assert ok


def test_c09_langevin(criterion):
    t0 = time.perf_counter()
    cfg = load().langevin
    base = dict(alpha=cfg.alpha, dt=cfg.dt, burn_in=cfg.burn_in, n_steps=cfg.n_steps,
                n_paths=cfg.n_paths, n_batches=cfg.n_batches, seed=0)
    unit = LangevinParams(T=1.0, **base)
    p2 = langevin_average(harmonic(), 0, lambda x, p: p * p, unit)
    x2 = langevin_average(harmonic(), 0, lambda x, p: x * x, unit)
    pot = build_avoided_crossing(0.1)
    hot = LangevinParams(T=T_CORR, **base)
    quad_q = gibbs_weights(pot, T_CORR, DENSITY_GRID).q[0]
    gs = estimate_weights_groundstate(pot, T_CORR, hot)
    merged = merged_path_average(pot, T_CORR, lambda x, p: x * x, hot)
    ref = weighted_moment(pot, T_CORR, DENSITY_GRID)
    z = {"<p^2>": (p2.mean - 1.0) / p2.stderr, "<x^2>": (x2.mean - 1.0) / x2.stderr,
         "q1": (gs.q[0] - quad_q) / gs.stderr[0], "merged <x^2>": (merged.mean - ref) / merged.stderr}
    dt = time.perf_counter() - t0
    ok = all(abs(v) <= 3 for v in z.values()) and dt < 300
    criterion(9, "Langevin statistics", ok,
              ", ".join(f"{k} z={v:+.2f}" for k, v in z.items()) + f" (want |z| <= 3) in {dt:.0f}s")
    assert ok


def test_c10_determinism(criterion, tmp_path):
    small = {"phase_grid": {"half_width": 4.5, "n_nodes": 101},
             "correlation_grid": {"x_min": -4.5, "x_max": 4.5, "n_intervals": 400},
             "langevin": {"n_steps": 5000, "burn_in": 500, "n_paths": 8},
             "M_ladder": [25.0, 50.0], "delta_ladder": [0.1],
             "diag": {"grid": {"x_min": -3.0, "x_max": 3.0, "n_intervals": 300}},
             "weyl": {"M_ladder": [16.0, 32.0], "trace_M": 16.0}}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(small))
    mismatched = []
    for cmd in sorted(cli.COMMANDS):
        outputs = []
        for threads in (1, 4, 8):
            out = tmp_path / f"{cmd}-{threads}"
            code = cli.main([cmd, "--preset", "desk", "--config", str(cfg), "--seed", "7",
                             "--threads", str(threads), "--out", str(out)])
            outputs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
        if not outputs[0] == outputs[1] == outputs[2]:
            mismatched.append(cmd)
    ok = not mismatched
    criterion(10, "determinism", ok,
              f"{len(cli.COMMANDS)} commands x threads (1, 4, 8): "
              + ("all outputs byte-identical" if ok else f"differences in {mismatched}"))
    assert ok
