"""Ergodic Langevin averages on adiabatic surfaces.

The SDE ``dx = p dt, dp = -lam'(x) dt - alpha p dt + sqrt(2 alpha T) dW`` is
discretised by the symmetric splitting kick-drift-OU-drift-kick, with the
Ornstein-Uhlenbeck momentum substep sampled exactly.  A run advances an
ensemble of independent paths in lockstep; path ``i`` draws its noise from
a Philox stream keyed by ``(seed, i)``, so results never depend on how the
ensemble is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .borndyn import GibbsWeights, surface_force
from .model import MatrixPotential, scalar_potential

NOISE_BLOCK = 4096


@dataclass(frozen=True)
class LangevinParams:
    alpha: float = 1.0
    T: float = 1.0
    dt: float = 1e-2
    burn_in: int = 1000
    n_steps: int = 100_000
    seed: int = 0
    n_paths: int = 32
    n_batches: int = 32

    def __post_init__(self):
        for name in ("alpha", "T", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.burn_in < 0 or self.n_steps <= self.burn_in:
            raise ValueError("need 0 <= burn_in < n_steps")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if self.n_batches < 20:
            raise ValueError("batch-means error bars need at least 20 batches")
        if self.n_steps - self.burn_in < self.n_batches:
            raise ValueError("fewer recorded steps than batches")


@dataclass(frozen=True)
class ErgodicEstimate:
    mean: float
    stderr: float
    effective_samples: float


def path_stream(seed: int, path_id: int) -> np.random.Generator:
    """Counter-based generator for one path: Philox keyed by ``(seed, path_id)``."""
    return np.random.Generator(np.random.Philox(key=(int(path_id) << 64) | int(seed)))


def _simulate(force: Callable, observable: Callable, params: LangevinParams,
              x0: float = 0.0, stream_offset: int = 0) -> np.ndarray:
    """Run the ensemble and return the path-averaged observable series.

    The returned array has shape ``(n_steps - burn_in, k)`` where ``k`` is the
    number of observable components.
    """
    n_paths = params.n_paths
    dt = params.dt
    c1 = math.exp(-params.alpha * dt)
    c3 = math.sqrt(params.T * (1.0 - c1 * c1))
    streams = [path_stream(params.seed, stream_offset + i) for i in range(n_paths)]

    x = np.full(n_paths, float(x0))
    # momenta start from the equilibrium Maxwell distribution
    p = math.sqrt(params.T) * np.array([s.standard_normal() for s in streams])
    f = force(x)

    n_rec = params.n_steps - params.burn_in
    series = None
    step = 0
    while step < params.n_steps:
        block = min(NOISE_BLOCK, params.n_steps - step)
        noise = np.stack([s.standard_normal(block) for s in streams], axis=1)
        for b in range(block):
            p += 0.5 * dt * f
            x += 0.5 * dt * p
            p = c1 * p + c3 * noise[b]
            x += 0.5 * dt * p
            f = force(x)
            p += 0.5 * dt * f
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"Langevin state became non-finite at step {step + b}")
            if step + b >= params.burn_in:
                val = np.asarray(observable(x, p), dtype=float)
                val = val.reshape(n_paths, -1)
                if series is None:
                    series = np.empty((n_rec, val.shape[1]))
                series[step + b - params.burn_in] = val.mean(axis=0)
        step += block
    return series


def batch_means(series: np.ndarray, n_batches: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Means, batch means, and batch-means covariance of the mean, per component."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    size = series.shape[0] // n_batches
    # drop the oldest samples so every batch has the same length
    trimmed = series[series.shape[0] - size * n_batches:]
    batches = trimmed.reshape(n_batches, size, -1).mean(axis=1)
    mean = trimmed.mean(axis=0)
    cov = np.atleast_2d(np.cov(batches, rowvar=False, ddof=1)) / n_batches
    return mean, batches, cov


def _estimate(series: np.ndarray, params: LangevinParams, col: int = 0) -> ErgodicEstimate:
    mean, _, cov = batch_means(series[:, col], params.n_batches)
    var_mean = max(float(cov[0, 0]), 0.0)
    stderr = math.sqrt(var_mean)
    sample_var = float(np.var(series[:, col])) * params.n_paths
    ess = sample_var / var_mean if var_mean > 0 else float(series.shape[0] * params.n_paths)
    return ErgodicEstimate(mean=float(mean[0]), stderr=stderr, effective_samples=ess)


def langevin_series(pot: MatrixPotential, j: int, observable: Callable, params: LangevinParams,
                    x0: float | None = None) -> np.ndarray:
    """Path-averaged ``observable(x, p)`` after burn-in, shape ``(n_rec, k)``."""
    if x0 is None:
        x0 = _surface_minimum(pot, j)

    def force(x):
        return surface_force(pot, j, x, check_gap=False)

    return _simulate(force, observable, params, x0=x0)


def langevin_average(pot: MatrixPotential, j: int, observable: Callable, params: LangevinParams,
                     x0: float | None = None) -> ErgodicEstimate:
    """Time average of ``observable(x, p)`` along Langevin paths on surface ``j``."""
    return _estimate(langevin_series(pot, j, observable, params, x0), params)


def _surface_minimum(pot: MatrixPotential, j: int, half_width: float = 5.0) -> float:
    xs = np.linspace(-half_width, half_width, 2001)
    return float(xs[np.argmin(pot.eigenvalues(xs)[..., j])])


def estimate_weights_groundstate(pot: MatrixPotential, T: float, params: LangevinParams) -> GibbsWeights:
    """Surface weights from one ground-state ensemble.

    ``qbar_j`` is the ground-surface time average of ``exp(-(lam_j - lam_1)/T)``
    and ``q = qbar / sum(qbar)``; standard errors follow by the delta method
    from the batch-means covariance.
    """
    params = replace(params, T=float(T))

    def observable(x, p):
        lam = pot.eigenvalues(x)
        return np.exp(-(lam - lam[..., :1]) / T)

    def force(x):
        return surface_force(pot, 0, x, check_gap=False)

    series = _simulate(force, observable, params, x0=_surface_minimum(pot, 0))
    qbar, _, cov = batch_means(series, params.n_batches)
    total = qbar.sum()
    q = qbar / total
    jac = (np.eye(pot.dim) - np.outer(q, np.ones(pot.dim))) / total
    var_q = np.einsum("ij,jk,ik->i", jac, cov, jac)
    return GibbsWeights(q=q, Z=qbar, shift=0.0, stderr=np.sqrt(np.maximum(var_q, 0.0)))


def merged_potential(pot: MatrixPotential, T: float) -> MatrixPotential:
    """One-level potential ``lam_bar = -T log sum_j exp(-lam_j/T)``."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T!r}")

    def _softmin(lam):
        low = lam.min(axis=-1, keepdims=True)
        shifted = np.exp(-(lam - low) / T)
        total = shifted.sum(axis=-1)
        return low[..., 0] - T * np.log(total), shifted / total[..., None]

    def value(x):
        return _softmin(pot.eigenvalues(x))[0]

    def gradient(x):
        x = np.asarray(x, dtype=float)
        lam = pot.eigenvalues(x)
        _, share = _softmin(lam)
        if pot.surface_gradient is not None:
            grads = pot.surface_gradient(x)
        else:
            grads = -np.stack([surface_force(pot, j, x, check_gap=False) for j in range(pot.dim)], axis=-1)
        return np.sum(share * grads, axis=-1)

    return scalar_potential(value, gradient, params={"kind": "merged", "T": float(T), "base": pot.params})


def merged_path_average(pot: MatrixPotential, T: float, observable: Callable,
                        params: LangevinParams) -> ErgodicEstimate:
    """Gibbs average of a level-independent observable from one merged-surface ensemble."""
    params = replace(params, T=float(T))
    return langevin_average(merged_potential(pot, T), 0, observable, params)
