"""Asymptotic diagonalisation of ``V + (1/4M) Psi Psi'^T Psi' Psi^T``.

Starting from the adiabatic frame ``Psi[1] = S(V)``, each level
re-diagonalises the potential corrected by the previous frame::

    Psi[j+1] = S(V + B(Psi[j]) / (4M)),   B(Psi) = Psi (Psi'^T Psi') Psi^T

where ``S`` returns ascending eigenvectors and ``Psi'`` is a finite-difference
derivative on the spatial grid.  Column signs are chosen for continuity: the
first frame is sign-aligned node to node along the grid and every later
frame is aligned with its predecessor.  Successive frames differ
by ``O(M^-j)``; the recursion is asymptotic, not convergent, so ``kappa`` is
capped at 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MatrixPotential, eigh_sorted
from .quantum import SpatialGrid

MAX_KAPPA = 4
MIN_GAP = 1e-6


@dataclass(frozen=True)
class DiagonalizationIterate:
    """Frames ``Psi[1..kappa]`` and eigenvalues ``Lambda[1..kappa]`` on grid nodes.

    ``frames[i]`` is ``Psi[i+1]`` with shape ``(n_nodes, d, d)``; ``levels[i]``
    holds the matching diagonal ``Lambda[i+1]`` with shape ``(n_nodes, d)``.
    """

    kappa: int
    M: float
    grid: SpatialGrid
    potential: np.ndarray
    frames: tuple
    levels: tuple

    @property
    def psi(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def lam(self) -> np.ndarray:
        return self.levels[-1]


@dataclass(frozen=True)
class ResidualReport:
    r0_sup: float
    frame_steps: tuple  # sup ||Psi[j+1] - Psi[j]||_max for j = 1..kappa-1
    level_steps: tuple  # sup |Lambda[j+1] - Lambda[j]| for j = 1..kappa-1


def frame_derivative(psi: np.ndarray, dx: float) -> np.ndarray:
    """Centred differences inside, second-order one-sided at the ends."""
    return np.gradient(psi, dx, axis=0, edge_order=2)


def coupling(psi: np.ndarray, dx: float) -> np.ndarray:
    """``B(Psi) = Psi (Psi'^T Psi') Psi^T`` at every node."""
    dpsi = frame_derivative(psi, dx)
    inner = np.einsum("nki,nkj->nij", dpsi, dpsi)
    return np.einsum("nik,nkl,njl->nij", psi, inner, psi)


def align_columns(psi: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip columns of ``psi`` so each has a nonnegative overlap with ``reference``."""
    overlap = np.einsum("...ki,...ki->...i", reference, psi)
    return psi * np.where(overlap < 0.0, -1.0, 1.0)[..., None, :]


def continuous_frame(psi: np.ndarray) -> np.ndarray:
    """Sign-align a stack of frames node by node, starting from node 0."""
    out = np.array(psi, dtype=float, copy=True)
    for k in range(1, out.shape[0]):
        out[k] = align_columns(out[k], out[k - 1])
    return out


def _check_gaps(lam: np.ndarray, nodes: np.ndarray) -> None:
    if lam.shape[-1] < 2:
        return
    gaps = np.diff(lam, axis=-1).min(axis=-1)
    bad = gaps <= MIN_GAP
    if np.any(bad):
        raise ValueError(f"eigenvalue gap collapses (<= {MIN_GAP}) at x = {nodes[bad][:5].tolist()}")


def psi_recursion(pot: MatrixPotential, M: float, kappa: int, grid: SpatialGrid) -> DiagonalizationIterate:
    if not M > 0:
        raise ValueError(f"mass ratio must be positive, got {M!r}")
    if not 1 <= kappa <= MAX_KAPPA:
        raise ValueError(f"kappa must lie in 1..{MAX_KAPPA}, got {kappa!r}")
    nodes = grid.nodes
    V = np.asarray(pot.evaluate(nodes), dtype=float)
    lam, psi = pot.eigen(nodes)
    _check_gaps(lam, nodes)
    frames = [continuous_frame(psi)]
    levels = [np.asarray(lam, dtype=float)]
    for _ in range(kappa - 1):
        effective = V + coupling(frames[-1], grid.dx) / (4.0 * M)
        effective = 0.5 * (effective + np.swapaxes(effective, 1, 2))
        lam, psi = eigh_sorted(effective)
        _check_gaps(lam, nodes)
        frames.append(align_columns(psi, frames[-1]))
        levels.append(lam)
    return DiagonalizationIterate(kappa=kappa, M=float(M), grid=grid, potential=V,
                                  frames=tuple(frames), levels=tuple(levels))


def residual_field(it: DiagonalizationIterate) -> np.ndarray:
    """``r0(x) = Psi[k]^T (B(Psi[k]) - B(Psi[k-1])) Psi[k] / (4M)`` on the nodes."""
    if it.kappa < 2:
        raise ValueError("the residual needs kappa >= 2")
    dx = it.grid.dx
    diff = coupling(it.frames[-1], dx) - coupling(it.frames[-2], dx)
    psi = it.frames[-1]
    return np.einsum("nki,nkl,nlj->nij", psi, diff, psi) / (4.0 * it.M)


def residual_r0(it: DiagonalizationIterate, grid: SpatialGrid | None = None) -> ResidualReport:
    if grid is not None and grid != it.grid:
        raise ValueError("residual must be evaluated on the grid of the iterate")
    r0 = residual_field(it)
    frames = it.frames
    steps = tuple(float(np.max(np.abs(frames[j + 1] - frames[j]))) for j in range(len(frames) - 1))
    lsteps = tuple(float(np.max(np.abs(it.levels[j + 1] - it.levels[j]))) for j in range(len(frames) - 1))
    return ResidualReport(r0_sup=float(np.max(np.abs(r0))), frame_steps=steps, level_steps=lsteps)


def effective_offdiagonal(it: DiagonalizationIterate, level: int) -> float:
    """Largest off-diagonal entry of ``Psi[l+1]^T (V + B(Psi[l])/4M) Psi[l+1]``."""
    if not 1 <= level < it.kappa:
        raise ValueError("level must satisfy 1 <= level < kappa")
    eff = it.potential + coupling(it.frames[level - 1], it.grid.dx) / (4.0 * it.M)
    psi = it.frames[level]
    rot = np.einsum("nki,nkl,nlj->nij", psi, eff, psi)
    d = rot.shape[-1]
    off = rot * (1.0 - np.eye(d))
    return float(np.max(np.abs(off)))
