"""End-to-end experiments: quantum reference versus weighted Born-Oppenheimer MD.

Every ``run_*`` function takes an :class:`ExperimentConfig` and returns plain
Python data (rows and scalar summaries).  Writing files is left to
:mod:`canonical_bomd.results` so the numerics can be called from tests and
scripts without touching the filesystem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .borndyn import (PhaseSpaceGrid, gibbs_weights, md_correlation_curve, md_equilibrium_density,
                      weighted_moment)
from .config import ConfigError, ExperimentConfig
from .convergence import ConvergenceTable, fit_loglog
from .diag import psi_recursion, residual_r0
from .langevin import LangevinParams, estimate_weights_groundstate, langevin_average, merged_path_average
from .model import build_avoided_crossing, harmonic
from .quantum import SpatialGrid, equilibrium_density, quantum_correlations, solve
from .weyl import SymbolField, compose, moyal_remainder, refined_grid, trace_of, weyl_quantize

logger = logging.getLogger(__name__)


@dataclass
class Outcome:
    """Tables (name -> (header, rows)) and JSON summaries (name -> dict) of one command."""

    tables: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    unreliable: list = field(default_factory=list)


def _potential(cfg: ExperimentConfig, delta: float | None = None):
    p = cfg.potential
    return build_avoided_crossing(p.delta if delta is None else delta, p.a, p.b)


def _grid(g) -> SpatialGrid:
    return SpatialGrid(float(g.x_min), float(g.x_max), int(g.n_intervals))


def _phase_grid(cfg: ExperimentConfig) -> PhaseSpaceGrid:
    return PhaseSpaceGrid.square(cfg.phase_grid.half_width, cfg.phase_grid.n_nodes)


def density_errors(pot, T: float, grid: SpatialGrid, M: float):
    """Quantum and MD densities on ``grid`` and their L1 and Linf distances."""
    rho_q = equilibrium_density(solve(pot, grid, M), T)
    rho_md = md_equilibrium_density(pot, T, grid)
    diff = np.abs(rho_q - rho_md)
    return rho_q, rho_md, float(grid.trapezoid_weights() @ diff), float(diff.max())


def run_density(cfg: ExperimentConfig) -> Outcome:
    grid = _grid(cfg.density_grid)
    rho_q, rho_md, l1, linf = density_errors(_potential(cfg), cfg.T_density, grid, cfg.M)
    xs = grid.nodes
    out = Outcome()
    out.tables["density_quantum"] = (["x", "rho"], list(zip(xs, rho_q)))
    out.tables["density_md"] = (["x", "rho"], list(zip(xs, rho_md)))
    out.summaries["density_error"] = {"M": cfg.M, "T": cfg.T_density, "delta": cfg.potential.delta,
                                      "l1": l1, "linf": linf}
    return out


def run_converge_density(cfg: ExperimentConfig) -> Outcome:
    grid = _grid(cfg.density_grid)
    out = Outcome()
    rows, per_delta = [], {}
    for delta in cfg.delta_ladder:
        pot = _potential(cfg, delta)
        table = ConvergenceTable()
        for M in cfg.M_ladder:
            _, _, l1, linf = density_errors(pot, cfg.T_density, grid, M)
            logger.info("density delta=%g M=%g: L1=%.3e Linf=%.3e", delta, M, l1, linf)
            table.add(M, l1, linf)
            rows.append((delta, M, l1, linf))
        per_delta[repr(float(delta))] = table.summary()
    out.tables["density_convergence"] = (["delta", "M", "l1", "linf"], rows)
    out.summaries["density_convergence"] = {"T": cfg.T_density, "by_delta": per_delta}
    return out


def _md_curve(cfg: ExperimentConfig, taus, threads: int, out: Outcome):
    report = md_correlation_curve(_potential(cfg), cfg.T_correlation, taus, _phase_grid(cfg),
                                  dt=cfg.verlet_dt, threads=threads)
    if not report.reliable:
        out.unreliable.append(f"MD escape fraction {report.escaped_fraction:.4f}")
    return report


def run_correlate(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    if not cfg.taus:
        raise ConfigError("taus: must be a nonempty list")
    out = Outcome()
    taus = [float(t) for t in cfg.taus]
    md = _md_curve(cfg, taus, threads, out)
    pot = _potential(cfg)
    rows = []
    for M in cfg.M_correlation:
        spec = solve(pot, _grid(cfg.correlation_grid), M)
        qc = quantum_correlations(spec, cfg.T_correlation, taus, M)
        for tau, qv, mv in zip(taus, qc, md.values):
            rows.append((tau, M, qv, mv, abs(qv - mv)))
    out.tables["correlation"] = (["tau", "M", "quantum", "md", "abs_error"], rows)
    return out


def run_converge_correlation(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    out = Outcome()
    tau = float(cfg.tau_convergence)
    md = float(_md_curve(cfg, [tau], threads, out).values[0])
    pot = _potential(cfg)
    table = ConvergenceTable()
    rows = []
    for M in cfg.M_correlation:
        spec = solve(pot, _grid(cfg.correlation_grid), M)
        qv = float(quantum_correlations(spec, cfg.T_correlation, [tau], M)[0])
        err = abs(qv - md)
        logger.info("correlation M=%g: quantum=%.10f md=%.10f error=%.3e", M, qv, md, err)
        table.add(M, err, err)
        rows.append((tau, M, qv, md, err))
    out.tables["correlation_convergence"] = (["tau", "M", "quantum", "md", "abs_error"], rows)
    summary = {"tau": tau, "T": cfg.T_correlation, "md": md, "M": table.M, "linf": table.linf}
    fit = table.fit("linf")
    if fit is not None:
        summary.update(slope_linf=fit.slope, r2_linf=fit.r2)
    out.summaries["correlation_convergence"] = summary
    return out


def _langevin_params(cfg: ExperimentConfig, T: float) -> LangevinParams:
    lc = cfg.langevin
    return LangevinParams(alpha=lc.alpha, T=T, dt=lc.dt, burn_in=lc.burn_in, n_steps=lc.n_steps,
                          seed=cfg.seed, n_paths=lc.n_paths, n_batches=lc.n_batches)


def run_weights(cfg: ExperimentConfig) -> Outcome:
    pot = _potential(cfg)
    T = cfg.T_correlation
    quad = gibbs_weights(pot, T, _grid(cfg.density_grid))
    lang = estimate_weights_groundstate(pot, T, _langevin_params(cfg, T))
    z = [abs(a - b) / s if s > 0 else math.inf for a, b, s in zip(lang.q, quad.q, lang.stderr)]
    out = Outcome()
    out.summaries["weights"] = {
        "T": T, "delta": cfg.potential.delta,
        "quadrature_q": [float(v) for v in quad.q],
        "langevin_q": [float(v) for v in lang.q],
        "langevin_stderr": [float(v) for v in lang.stderr],
        "z_scores": [float(v) for v in z],
    }
    return out


def run_sample_langevin(cfg: ExperimentConfig) -> Outcome:
    """Ergodic averages with their quadrature references."""
    T = cfg.T_correlation
    params = _langevin_params(cfg, T)
    pot = _potential(cfg)
    grid = _grid(cfg.density_grid)
    osc = harmonic(1.0)
    rows = []

    def add(name, est, ref):
        rows.append((name, est.mean, est.stderr, ref, est.effective_samples))

    add("harmonic_p2", langevin_average(osc, 0, lambda x, p: p * p, params), T)
    add("harmonic_x2", langevin_average(osc, 0, lambda x, p: x * x, params), T)
    quad = gibbs_weights(pot, T, grid)
    lang = estimate_weights_groundstate(pot, T, params)
    for j in range(pot.dim):
        rows.append((f"groundstate_q{j + 1}", float(lang.q[j]), float(lang.stderr[j]), float(quad.q[j]),
                     math.nan))
    add("merged_x2", merged_path_average(pot, T, lambda x, p: x * x, params), weighted_moment(pot, T, grid))
    out = Outcome()
    out.tables["langevin"] = (["estimator", "mean", "stderr", "reference", "effective_samples"], rows)
    return out


def run_diag_check(cfg: ExperimentConfig) -> Outcome:
    dc = cfg.diag
    pot = _potential(cfg, dc.delta)
    grid = _grid(dc.grid)
    rows = []
    for M in dc.M_ladder:
        rep = residual_r0(psi_recursion(pot, M, dc.kappa, grid))
        r0 = residual_r0(psi_recursion(pot, M, 2, grid)).r0_sup
        for level, (fs, ls) in enumerate(zip(rep.frame_steps, rep.level_steps), start=1):
            rows.append((M, level, fs, ls, r0))
    out = Outcome()
    out.tables["diag_orders"] = (["M", "level", "frame_step", "level_step", "r0_kappa2"], rows)
    summary = {"delta": dc.delta, "kappa": dc.kappa}
    for level in range(1, dc.kappa):
        sel = [r for r in rows if r[1] == level]
        for col, name in ((2, "frame"), (3, "level")):
            fit = _safe_fit([r[0] for r in sel], [r[col] for r in sel])
            if fit is not None:
                summary[f"slope_{name}_{level + 1}_{level}"] = fit
    fit = _safe_fit(list(dc.M_ladder), [r[4] for r in rows if r[1] == 1])
    if fit is not None:
        summary["slope_r0"] = fit
    out.summaries["diag_orders"] = summary
    return out


def _safe_fit(x, y):
    """Slope of a log-log fit, ``None`` for a single point, NaN when some value is zero."""
    if len(x) < 2:
        return None
    if min(y) <= 0:
        return math.nan
    return fit_loglog(x, y).slope


def gaussian_pair(grid: PhaseSpaceGrid):
    """Two non-commuting, decaying 2x2 test symbols (real symmetric)."""
    sa = np.array([[1.0, 0.5], [0.5, -1.0]])
    sb = np.array([[0.3, 1.0], [1.0, 0.7]])

    def fa(X, P):
        return (np.exp(-(X - 0.3) ** 2 - (P + 0.2) ** 2)[..., None, None] * sa
                + np.exp(-X ** 2 - 2 * P ** 2)[..., None, None] * np.eye(2))

    def fb(X, P):
        return np.exp(-1.5 * (X + 0.2) ** 2 - (P - 0.4) ** 2 + 0.5 * X * P)[..., None, None] * sb

    return SymbolField.from_function(fa, grid), SymbolField.from_function(fb, grid)


def weyl_identities(M: float, half_width: float = 5.0) -> dict:
    """Relative errors of the trace and composition-trace identities at one ``M``."""
    grid = refined_grid(half_width, half_width, M)
    G = SymbolField.from_function(lambda X, P: np.exp(-X ** 2 - P ** 2), grid, dim=2)
    exact = 2.0 * math.pi  # trace of exp(-x^2 - p^2) I_2 over R^2
    tr = trace_of(weyl_quantize(G, M)) * 2.0 * math.pi / math.sqrt(M)
    A, B = gaussian_pair(grid)
    KA, KB = weyl_quantize(A, M), weyl_quantize(B, M)
    ctr = trace_of(compose(KA, KB))
    ref = math.sqrt(M) / (2.0 * math.pi) * SymbolField(grid, A.values @ B.values).phase_integral_trace()
    cyc = trace_of(compose(KB, KA))
    return {"trace_rel_error": abs(tr - exact) / exact,
            "composition_trace_rel_error": abs(ctr - ref) / abs(ref),
            "cyclicity_rel_error": abs(ctr - cyc) / abs(ctr),
            "hermitian_defect": KA.hermitian_defect()}


def run_weyl_check(cfg: ExperimentConfig) -> Outcome:
    wc = cfg.weyl
    grid = refined_grid(wc.half_width, wc.half_width, max(wc.M_ladder))
    A, B = gaussian_pair(grid)
    rows = []
    for M in wc.M_ladder:
        rem = moyal_remainder(A, B, M, tuple(wc.orders))
        logger.info("weyl M=%g remainders %s", M, rem)
        rows.extend((m, M, rem[m]) for m in wc.orders)
    out = Outcome()
    out.tables["weyl_orders"] = (["m", "M", "norm"], rows)
    summary = {"identities": weyl_identities(wc.trace_M, wc.half_width)}
    for m in wc.orders:
        fit = _safe_fit(list(wc.M_ladder), [r[2] for r in rows if r[0] == m])
        if fit is not None:
            summary[f"slope_m{m}"] = fit
    out.summaries["weyl_orders"] = summary
    return out
