"""Finite-difference Schroedinger operator with a matrix potential.

The operator ``-(2M)^{-1} I d^2/dx^2 + V(x)`` is discretised on the nodes
``x_k = x_min + k dx``, ``k = 0..N``, with the two-component values of each
node interleaved: index ``d*k + i`` holds component ``i`` at node ``k``.
The stencil couples node ``k`` to ``k +- 1`` only; values beyond the end
nodes are zero.

Canonical (Gibbs) quantities are evaluated in the eigenbasis of the dense
matrix, with every Boltzmann factor shifted by the ground-state energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import MatrixPotential

logger = logging.getLogger(__name__)

# Boltzmann weights below this (relative to the ground state) are dropped
# from correlation sums; they cannot change a double-precision result.
WEIGHT_CUTOFF = 1e-30


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_intervals: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 2:
            raise ValueError(f"n_intervals must be an integer >= 2, got {self.n_intervals}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_intervals

    @property
    def n_nodes(self) -> int:
        return self.n_intervals + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_nodes)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass(frozen=True)
class DiscreteHamiltonian:
    M: float
    grid: SpatialGrid
    dim: int
    matrix: np.ndarray


@dataclass
class SpectralDecomposition:
    """Eigenpairs of ``H_d``: ``H_d = P diag(e) P^T``.

    Column ``n`` of ``P`` is the interleaved grid function ``phi_n``.
    """

    energies: np.ndarray
    P: np.ndarray
    grid: SpatialGrid
    dim: int
    M: float
    _position_rows: dict = field(default_factory=dict, repr=False)

    @cached_property
    def position_diagonal(self) -> np.ndarray:
        """Diagonal of the position matrix ``X`` in the interleaved basis."""
        return np.repeat(self.grid.nodes, self.dim)

    def boltzmann(self, T: float) -> np.ndarray:
        """``exp(-(e_n - e_1)/T)``; the ground-state shift cancels in every ratio."""
        if not T > 0:
            raise ValueError(f"temperature must be positive, got {T!r}")
        return np.exp(-(self.energies - self.energies[0]) / T)

    def position_rows(self, n_rows: int) -> np.ndarray:
        """First ``n_rows`` rows of ``Y = P^T X P`` (cached, grows on demand)."""
        cached = self._position_rows.get("Y")
        if cached is None or cached.shape[0] < n_rows:
            head = self.P[:, :n_rows]
            cached = (head * self.position_diagonal[:, None]).T @ self.P
            self._position_rows["Y"] = cached
        return cached[:n_rows]


def assemble_hamiltonian(pot: MatrixPotential, grid: SpatialGrid, M: float) -> DiscreteHamiltonian:
    """Dense interleaved finite-difference matrix ``H_d``.

    Diagonal blocks are ``V(x_k) + I/(M dx^2)``; each component couples to
    itself at neighbouring nodes with ``-1/(2 M dx^2)``.
    """
    if not M > 0:
        raise ValueError(f"mass ratio M must be positive, got {M!r}")
    d = pot.dim
    nodes = grid.nodes
    V = np.asarray(pot.evaluate(nodes), dtype=float).reshape(grid.n_nodes, d, d)
    if not np.all(np.isfinite(V)):
        bad = nodes[~np.all(np.isfinite(V), axis=(1, 2))]
        raise ValueError(f"potential is not finite at x = {bad[:5].tolist()}")
    # symmetrise roundoff so the dense matrix is exactly symmetric
    V = 0.5 * (V + np.swapaxes(V, 1, 2))

    n = d * grid.n_nodes
    scale = 1.0 / (2.0 * M * grid.dx**2)
    H = np.zeros((n, n))
    for k in range(grid.n_nodes):
        sl = slice(d * k, d * (k + 1))
        H[sl, sl] = V[k] + 2.0 * scale * np.eye(d)
    idx = np.arange(n - d)
    H[idx, idx + d] = -scale
    H[idx + d, idx] = -scale
    return DiscreteHamiltonian(M=float(M), grid=grid, dim=d, matrix=H)


def solve_eigenproblem(H: DiscreteHamiltonian) -> SpectralDecomposition:
    """Full dense symmetric eigensolve (LAPACK ``syevd`` via numpy)."""
    A = H.matrix
    if not np.array_equal(A, A.T):
        asym = np.max(np.abs(A - A.T))
        raise ValueError(f"Hamiltonian matrix is not symmetric (max asymmetry {asym:.3e})")
    try:
        e, P = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.norm(A, ord="fro")
        raise EigensolverError(
            f"dense eigensolve failed for a {A.shape[0]}x{A.shape[1]} matrix "
            f"(Frobenius norm {cond:.3e}, finite entries: {bool(np.all(np.isfinite(A)))})"
        ) from exc
    logger.debug("eigensolve n=%d  e_1=%.6g  e_max=%.6g", A.shape[0], e[0], e[-1])
    return SpectralDecomposition(energies=e, P=P, grid=H.grid, dim=H.dim, M=H.M)


def solve(pot: MatrixPotential, grid: SpatialGrid, M: float) -> SpectralDecomposition:
    return solve_eigenproblem(assemble_hamiltonian(pot, grid, M))


def equilibrium_density(spec: SpectralDecomposition, T: float) -> np.ndarray:
    """Canonical position density on the grid nodes, ``sum_k rho_k dx = 1``."""
    w = spec.boltzmann(T)
    keep = w > WEIGHT_CUTOFF
    P = spec.P[:, keep]
    amp = (P * P) @ w[keep]
    rho = amp.reshape(spec.grid.n_nodes, spec.dim).sum(axis=1)
    return rho / (rho.sum() * spec.grid.dx)


def _correlation_terms(spec: SpectralDecomposition, T: float, taus, M: float):
    w = spec.boltzmann(T)
    n_keep = int(np.count_nonzero(w > WEIGHT_CUTOFF))
    Y = spec.position_rows(n_keep)
    Y2 = Y * Y
    e = spec.energies
    ws = w[:n_keep]
    partition = 2.0 * w.sum()
    out = []
    for tau in np.atleast_1d(np.asarray(taus, dtype=float)):
        # phases e^{i tau sqrt(M) (e_n - e_m)} for the significant rows n
        theta = tau * np.sqrt(M) * (e[:n_keep, None] - e[None, :])
        phase = np.exp(1j * theta)
        # trace(x_tau x_0 W) and trace(x_tau W x_0), written in the eigenbasis
        t1 = np.sum(ws * np.sum(Y2 * phase, axis=1))
        t2 = np.sum(ws * np.sum(Y2 * np.conj(phase), axis=1))
        out.append((t1 + t2) / partition)
    return np.array(out)


def quantum_correlation(spec: SpectralDecomposition, T: float, tau: float, M: float | None = None) -> float:
    """Symmetrised canonical correlation ``<x_tau x_0>`` of the discrete model.

    ``x_tau = exp(i tau sqrt(M) H_d) X exp(-i tau sqrt(M) H_d)`` and the
    result is ``trace(x_tau (X W + W X)) / trace(2 W)`` with ``W = exp(-H_d/T)``.
    """
    return float(quantum_correlations(spec, T, [tau], M)[0])


def quantum_correlations(spec: SpectralDecomposition, T: float, taus, M: float | None = None) -> np.ndarray:
    """Vector version of :func:`quantum_correlation`; the position matrix is reused."""
    M = spec.M if M is None else float(M)
    vals = _correlation_terms(spec, T, taus, M)
    scale = np.maximum(np.abs(vals.real), 1e-300)
    rel_imag = np.abs(vals.imag) / scale
    if np.any(rel_imag > 1e-8):
        raise ArithmeticError(f"correlation trace has relative imaginary part {rel_imag.max():.3e}")
    return vals.real


def gibbs_position_moment(spec: SpectralDecomposition, T: float, power: int = 2) -> float:
    """``trace(X^power W)/trace(W)`` evaluated directly on the eigenvectors."""
    w = spec.boltzmann(T)
    keep = w > WEIGHT_CUTOFF
    P = spec.P[:, keep]
    xp = spec.position_diagonal**power
    diag = np.einsum("in,i,in->n", P, xp, P)
    return float(diag @ w[keep] / w.sum())
