"""Weighted Born-Oppenheimer molecular dynamics.

Each electron level ``j`` contributes a classical canonical ensemble on the
adiabatic surface ``lam_j`` with weight ``q_j``.  Time correlations use the
single-surface Hamiltonian flow ``x' = p, p' = -lam_j'(x)`` integrated by
position Verlet and averaged over a trapezoidal phase-space grid.

Surface indices are 0-based throughout (level ``j`` is ``pot.eigen(x)[0][..., j]``).

Quadrature sums are bit-stable: the grid is split into fixed row blocks,
each block is reduced on its own, and block sums are combined in index
order, so the thread count only changes scheduling.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import MatrixPotential
from .quantum import SpatialGrid

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MIN_GAP = 1e-10
ROW_BLOCK = 16
ESCAPE_TOLERANCE = 0.01


class SurfaceError(ValueError):
    """Surface derivative undefined (eigenvalues nearly degenerate)."""


class ReliabilityWarning(RuntimeWarning):
    """Raised (as a warning) when a quadrature diagnostic fails its gate."""


@dataclass(frozen=True)
class PhasePoint:
    x: float
    p: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point components must be finite")


@dataclass(frozen=True)
class PhaseSpaceGrid:
    x_grid: SpatialGrid
    p_grid: SpatialGrid

    @classmethod
    def square(cls, half_width: float = 4.5, n_nodes: int = 201) -> "PhaseSpaceGrid":
        g = SpatialGrid(-half_width, half_width, n_nodes - 1)
        return cls(g, g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.x_grid.n_nodes, self.p_grid.n_nodes

    def weights(self) -> np.ndarray:
        return np.outer(self.x_grid.trapezoid_weights(), self.p_grid.trapezoid_weights())


@dataclass(frozen=True)
class GibbsWeights:
    """Surface probabilities ``q`` and (shifted) partition integrals ``Z``.

    ``Z[j] = integral of exp(-(p^2/2 + lam_j(x) - shift)/T) dx dp``; ``stderr``
    is set only for statistical estimates.
    """

    q: np.ndarray
    Z: np.ndarray
    shift: float = 0.0
    stderr: Optional[np.ndarray] = None


@dataclass(frozen=True)
class VerletParams:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Verlet timestep must be positive, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError(f"n_steps must be a nonnegative integer, got {self.n_steps!r}")

    @property
    def duration(self) -> float:
        return self.dt * self.n_steps

    @classmethod
    def for_tau(cls, tau: float, dt: Optional[float] = None) -> "VerletParams":
        """Steps covering ``|tau|`` exactly; default ``dt = min(1e-3, |tau|/200)``."""
        span = abs(float(tau))
        if dt is None:
            dt = min(1e-3, span / 200.0) if span > 0 else 1e-3
        return cls(dt=float(dt), n_steps=steps_for(span, dt))


def steps_for(tau: float, dt: float) -> int:
    span = abs(float(tau))
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-12 * max(1.0, span):
        raise ValueError(f"timestep {dt!r} does not divide tau = {tau!r}")
    return n


def _check_gap(lam: np.ndarray, j: int, x) -> None:
    d = lam.shape[-1]
    gaps = []
    if j > 0:
        gaps.append(lam[..., j] - lam[..., j - 1])
    if j < d - 1:
        gaps.append(lam[..., j + 1] - lam[..., j])
    for g in gaps:
        if np.any(g < MIN_GAP):
            where = np.asarray(x)[np.asarray(g < MIN_GAP)] if np.ndim(x) else x
            raise SurfaceError(f"surface {j} is degenerate with a neighbour at x = {np.ravel(where)[:3].tolist()}")


def surface_force(pot: MatrixPotential, j: int, x, check_gap: bool = True):
    """``-d lam_j / dx``; analytic when the potential provides it."""
    if not 0 <= j < pot.dim:
        raise IndexError(f"surface index {j} outside 0..{pot.dim - 1}")
    x = np.asarray(x, dtype=float)
    if check_gap and pot.dim > 1:
        _check_gap(pot.eigenvalues(x), j, x)
    if pot.surface_gradient is not None:
        return -pot.surface_gradient(x)[..., j]
    lam_plus = pot.eigenvalues(x + FD_STEP)[..., j]
    lam_minus = pot.eigenvalues(x - FD_STEP)[..., j]
    return -(lam_plus - lam_minus) / (2.0 * FD_STEP)


def surface_energy(pot: MatrixPotential, j: int, x, p):
    """``H_jj(x, p) = p^2/2 + lam_j(x)``."""
    return 0.5 * np.asarray(p) ** 2 + pot.eigenvalues(x)[..., j]


def verlet_flow(force: Callable, x0, p0, dt: float, n_steps: int, x_escape: float = math.inf):
    """Position Verlet for ``x' = p, p' = force(x)`` on arrays of initial data.

    A negative ``dt`` runs the flow backwards.  Points leaving ``|x| <= x_escape``
    are frozen at their last in-bounds state.  Returns ``(x, p, escaped)``.
    """
    x = np.array(x0, dtype=float, copy=True)
    p = np.array(p0, dtype=float, copy=True)
    escaped = np.zeros(x.shape, dtype=bool)
    half = 0.5 * dt
    track = math.isfinite(x_escape)
    for _ in range(n_steps):
        x_new = x + half * p
        p_new = p + dt * force(x_new)
        x_new = x_new + half * p_new
        if track:
            out = ~np.isfinite(x_new) | (np.abs(x_new) > x_escape)
            if np.any(out):
                escaped |= out
            live = ~escaped
            x = np.where(live, x_new, x)
            p = np.where(live, p_new, p)
        else:
            x, p = x_new, p_new
    return x, p, escaped


def verlet_trajectory(pot: MatrixPotential, j: int, z0: PhasePoint, tau: float,
                      params: VerletParams, x_escape: float = math.inf) -> PhasePoint:
    """Advance ``z0`` along surface ``j`` for time ``tau`` (negative runs backwards)."""
    if abs(params.duration - abs(tau)) > 1e-12 * max(1.0, abs(tau)):
        raise ValueError(f"n_steps*dt = {params.duration!r} does not match |tau| = {abs(tau)!r}")
    dt = math.copysign(params.dt, tau) if tau != 0 else params.dt
    x, p, escaped = verlet_flow(lambda y: surface_force(pot, j, y, check_gap=False),
                                z0.x, z0.p, dt, params.n_steps, x_escape)
    if np.any(escaped):
        logger.warning("trajectory on surface %d left |x| <= %g", j, x_escape)
    if np.ndim(x) == 0:
        return PhasePoint(float(x), float(p))
    return PhasePoint(x, p)


def gibbs_weights(pot: MatrixPotential, T: float, grid: SpatialGrid) -> GibbsWeights:
    """Surface probabilities from position-space trapezoid integrals.

    The momentum Gaussian is common to all surfaces and cancels in ``q``;
    it is still included in ``Z`` so that ``Z`` is a phase-space integral.
    """
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T!r}")
    lam = pot.eigenvalues(grid.nodes)
    shift = float(lam.min())
    boltz = np.exp(-(lam - shift) / T)
    Zx = grid.trapezoid_weights() @ boltz
    total = Zx.sum()
    if not (np.isfinite(total) and total > 0):
        raise FloatingPointError("all surface partition integrals underflow; shift the potential by min(lam)")
    return GibbsWeights(q=Zx / total, Z=Zx * math.sqrt(2.0 * math.pi * T), shift=shift)


def md_equilibrium_density(pot: MatrixPotential, T: float, grid: SpatialGrid) -> np.ndarray:
    """``sum_j q_j exp(-lam_j/T) / Z_j`` on the grid nodes, trapezoid-normalised."""
    gw = gibbs_weights(pot, T, grid)
    lam = pot.eigenvalues(grid.nodes)
    boltz = np.exp(-(lam - gw.shift) / T)
    Zx = gw.Z / math.sqrt(2.0 * math.pi * T)
    rho = boltz @ (gw.q / Zx)
    return rho / (grid.trapezoid_weights() @ rho)


@dataclass(frozen=True)
class CorrelationReport:
    taus: np.ndarray
    values: np.ndarray
    per_surface: np.ndarray  # (n_tau, d), each normalised by its own Z_j
    weights: GibbsWeights
    escaped_fraction: float

    @property
    def reliable(self) -> bool:
        return self.escaped_fraction <= ESCAPE_TOLERANCE


def _row_blocks(n_rows: int) -> list[slice]:
    return [slice(i, min(i + ROW_BLOCK, n_rows)) for i in range(0, n_rows, ROW_BLOCK)]


def _map_blocks(fn, blocks, threads: int):
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def md_correlation_curve(pot: MatrixPotential, T: float, taus: Sequence[float],
                         phase_grid: PhaseSpaceGrid, dt: Optional[float] = None,
                         x_escape: Optional[float] = None, threads: int = 1) -> CorrelationReport:
    """Weighted MD correlation ``sum_j q_j <x_tau^j x_0>_j`` for several times.

    All ``tau`` share one timestep; a single forward (and, for negative
    times, backward) sweep samples every requested time.
    """
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T!r}")
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("need a nonempty 1-d list of correlation times")
    if dt is None:
        nonzero = np.abs(taus[taus != 0])
        dt = min(1e-3, nonzero.min() / 200.0) if nonzero.size else 1e-3
    steps = np.array([steps_for(t, dt) for t in taus])
    if x_escape is None:
        x_escape = 2.0 * max(abs(phase_grid.x_grid.x_min), abs(phase_grid.x_grid.x_max))

    xs = phase_grid.x_grid.nodes
    ps = phase_grid.p_grid.nodes
    wx = phase_grid.x_grid.trapezoid_weights()
    wp = phase_grid.p_grid.trapezoid_weights()
    d = pot.dim
    lam = pot.eigenvalues(xs)
    shift = float(lam.min())
    blocks = _row_blocks(xs.size)

    def run_block(rows: slice):
        x0 = np.repeat(xs[rows], ps.size).reshape(-1, ps.size)
        p0 = np.broadcast_to(ps, x0.shape)
        w = wx[rows, None] * wp[None, :]
        kin = 0.5 * p0 * p0
        moments = np.zeros((taus.size, d))
        partition = np.zeros(d)
        n_escaped = 0
        for j in range(d):
            boltz = w * np.exp(-(kin + lam[rows, j][:, None] - shift) / T)
            partition[j] = np.sum(boltz)
            weighted_x0 = boltz * x0
            force = lambda y, j=j: surface_force(pot, j, y, check_gap=False)
            for direction in (1.0, -1.0):
                sel = np.flatnonzero(np.sign(taus) == direction) if direction < 0 else np.flatnonzero(taus >= 0)
                if sel.size == 0:
                    continue
                order = sel[np.argsort(steps[sel], kind="stable")]
                x, p = x0.copy(), p0.copy()
                escaped = np.zeros(x.shape, dtype=bool)
                done = 0
                for i in order:
                    x, p, esc = verlet_flow(force, x, p, direction * dt, int(steps[i] - done), x_escape)
                    escaped |= esc
                    done = int(steps[i])
                    moments[i, j] = np.sum(weighted_x0 * x)
                n_escaped += int(np.count_nonzero(escaped))
        return moments, partition, n_escaped

    results = _map_blocks(run_block, blocks, threads)
    moments = np.sum(np.stack([r[0] for r in results]), axis=0)
    partition = np.sum(np.stack([r[1] for r in results]), axis=0)
    n_escaped = sum(r[2] for r in results)
    n_paths = xs.size * ps.size * d * (1 + int(np.any(taus < 0)))
    escaped_fraction = n_escaped / n_paths

    q = partition / partition.sum()
    per_surface = moments / partition
    values = per_surface @ q
    report = CorrelationReport(taus=taus, values=values, per_surface=per_surface,
                               weights=GibbsWeights(q=q, Z=partition, shift=shift),
                               escaped_fraction=escaped_fraction)
    if not report.reliable:
        warnings.warn(f"{100 * escaped_fraction:.2f}% of MD trajectories escaped |x| <= {x_escape}",
                      ReliabilityWarning, stacklevel=2)
    return report


def md_correlation(pot: MatrixPotential, T: float, tau: float, phase_grid: PhaseSpaceGrid,
                   params: Optional[VerletParams] = None, threads: int = 1) -> float:
    """Weighted MD approximation of the symmetrised canonical ``<x_tau x_0>``."""
    if params is None:
        params = VerletParams.for_tau(tau)
    elif abs(params.duration - abs(tau)) > 1e-12 * max(1.0, abs(tau)):
        raise ValueError(f"n_steps*dt = {params.duration!r} does not match |tau| = {abs(tau)!r}")
    report = md_correlation_curve(pot, T, [tau], phase_grid, dt=params.dt, threads=threads)
    return float(report.values[0])


def gibbs_surface_moment(pot: MatrixPotential, T: float, grid: SpatialGrid, j: int,
                         fn: Callable = lambda x: x * x) -> float:
    """Canonical average of ``fn(x)`` on surface ``j`` by direct trapezoid quadrature."""
    lam = pot.eigenvalues(grid.nodes)[..., j]
    w = grid.trapezoid_weights() * np.exp(-(lam - lam.min()) / T)
    return float(w @ fn(grid.nodes) / w.sum())


def weighted_moment(pot: MatrixPotential, T: float, grid: SpatialGrid,
                    fn: Callable = lambda x: x * x) -> float:
    """``sum_j q_j <fn>_j`` by direct quadrature."""
    gw = gibbs_weights(pot, T, grid)
    return float(sum(gw.q[j] * gibbs_surface_moment(pot, T, grid, j, fn) for j in range(pot.dim)))
