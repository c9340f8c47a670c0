"""Weyl quantisation of matrix symbols on a truncated 1D phase space.

A symbol ``A(x, p)`` sampled on a :class:`PhaseSpaceGrid` is turned into the
integral kernel

    K_A(x, y) = sqrt(M)/(2 pi) * int exp(i sqrt(M) (x - y) p) A((x + y)/2, p) dp

with the ``p`` integral done by the trapezoid rule.  Kernel nodes are every
second ``x`` node of the symbol grid, so each midpoint ``(x + y)/2`` is itself
a symbol node and no interpolation is needed.  With ``stride=1`` the kernel
lives on all symbol nodes and odd midpoints are linearly interpolated.

Operator products are discrete integral-operator products on the kernel
nodes; they serve as the reference composition for Moyal truncations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .borndyn import PhaseSpaceGrid
from .quantum import SpatialGrid

DECAY_GATE = 1e-8
MAX_MOYAL_ORDER = 4


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolField:
    """Matrix symbol values ``A[k, l] = A(x_k, p_l)``, shape ``(nx, np, d, d)``."""

    grid: PhaseSpaceGrid
    values: np.ndarray

    def __post_init__(self):
        nx, npp = self.grid.shape
        if self.values.shape[:2] != (nx, npp) or self.values.ndim != 4:
            raise ValueError(f"symbol values must have shape ({nx}, {npp}, d, d), got {self.values.shape}")

    @classmethod
    def from_function(cls, fn: Callable, grid: PhaseSpaceGrid, dim: int | None = None) -> "SymbolField":
        """Sample ``fn(x, p)``; a scalar-valued ``fn`` is promoted to ``fn * I_dim``."""
        X, P = np.meshgrid(grid.x_grid.nodes, grid.p_grid.nodes, indexing="ij")
        vals = np.asarray(fn(X, P), dtype=complex)
        if vals.shape == X.shape:
            vals = vals[..., None, None] * np.eye(dim or 1)
        return cls(grid, vals)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def decay_flag(self) -> float:
        """Largest boundary magnitude relative to the overall maximum."""
        mag = np.max(np.abs(self.values), axis=(-2, -1))
        peak = mag.max()
        if peak == 0:
            return 0.0
        edge = max(mag[0].max(), mag[-1].max(), mag[:, 0].max(), mag[:, -1].max())
        return float(edge / peak)

    def __add__(self, other: "SymbolField") -> "SymbolField":
        return SymbolField(self.grid, self.values + other.values)

    def __sub__(self, other: "SymbolField") -> "SymbolField":
        return SymbolField(self.grid, self.values - other.values)

    def phase_integral_trace(self) -> complex:
        """Trapezoid ``int trace A(x, p) dx dp``."""
        tr = np.trace(self.values, axis1=-2, axis2=-1)
        return complex(np.sum(self.grid.weights() * tr))

    def l2_norm(self) -> float:
        """``(int trace(A^* A) dx dp)^(1/2)`` by the trapezoid rule."""
        sq = np.sum(np.abs(self.values) ** 2, axis=(-2, -1))
        return math.sqrt(float(np.sum(self.grid.weights() * sq)))


@dataclass(frozen=True)
class OperatorKernel:
    """Blocks ``K[k, m] = K(x_k, x_m)`` on uniformly spaced kernel nodes."""

    nodes: np.ndarray
    blocks: np.ndarray  # (n, n, d, d)
    M: float

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    def as_matrix(self) -> np.ndarray:
        n, d = self.nodes.size, self.dim
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)

    @classmethod
    def from_matrix(cls, nodes: np.ndarray, mat: np.ndarray, M: float, dim: int) -> "OperatorKernel":
        n = nodes.size
        return cls(nodes, mat.reshape(n, dim, n, dim).transpose(0, 2, 1, 3), M)

    def hermitian_defect(self) -> float:
        K = self.as_matrix()
        return float(np.max(np.abs(K - K.conj().T)) / np.max(np.abs(K)))


def required_intervals(M: float, grid: PhaseSpaceGrid, stride: int = 2) -> int:
    """Smallest x-interval count making ``sqrt(M) h p_max <= pi`` for kernel spacing ``h``."""
    p_max = max(abs(grid.p_grid.x_min), abs(grid.p_grid.x_max))
    width = grid.x_grid.x_max - grid.x_grid.x_min
    return int(math.ceil(stride * width * math.sqrt(M) * p_max / math.pi))


def check_admissible(A: SymbolField, M: float, stride: int = 2) -> None:
    g = A.grid
    p_max = max(abs(g.p_grid.x_min), abs(g.p_grid.x_max))
    h = stride * g.x_grid.dx
    if math.sqrt(M) * h * p_max > math.pi * (1 + 1e-12):
        need = required_intervals(M, g, stride)
        raise AdmissibilityError(
            f"x-grid too coarse for M={M}: sqrt(M)*h*p_max = {math.sqrt(M) * h * p_max:.4g} > pi; "
            f"use at least {need} x-intervals")
    width = g.x_grid.x_max - g.x_grid.x_min
    # the p-trapezoid aliases kernel entries once sqrt(M)|x-y| dp reaches pi
    if math.sqrt(M) * width * g.p_grid.dx > math.pi * (1 + 1e-12):
        need = int(math.ceil(math.sqrt(M) * width * (g.p_grid.x_max - g.p_grid.x_min) / math.pi))
        raise AdmissibilityError(f"p-grid too coarse for M={M}: use at least {need} p-intervals")
    if A.decay_flag > DECAY_GATE:
        raise AdmissibilityError(f"symbol does not decay at the grid boundary (flag {A.decay_flag:.2e})")


def weyl_quantize(A: SymbolField, M: float, stride: int = 2, check: bool = True) -> OperatorKernel:
    if not M > 0:
        raise ValueError(f"mass ratio must be positive, got {M!r}")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if check:
        check_admissible(A, M, stride)
    g = A.grid
    xs = g.x_grid.nodes
    if stride == 2:
        if xs.size % 2 == 0:
            raise ValueError("stride-2 quantisation needs an odd number of x nodes")
        vals = A.values
        kernel_nodes = xs[::2]
    else:
        # midpoints at half nodes by linear interpolation
        vals = np.empty((2 * xs.size - 1,) + A.values.shape[1:], dtype=complex)
        vals[::2] = A.values
        vals[1::2] = 0.5 * (A.values[1:] + A.values[:-1])
        kernel_nodes = xs
    n = kernel_nodes.size
    h = kernel_nodes[1] - kernel_nodes[0]
    ps = g.p_grid.nodes
    wp = g.p_grid.trapezoid_weights()
    d = A.dim
    sqm = math.sqrt(M)

    # F[c, r] = sqrt(M)/2pi * sum_l wp_l e^{i sqrt(M) r h p_l} A(mid_c, p_l); c = k + m, r = k - m
    r = np.arange(-(n - 1), n)
    phase = np.exp(1j * sqm * h * np.outer(r, ps)) * wp
    F = (phase @ vals.transpose(1, 0, 2, 3).reshape(ps.size, -1)).reshape(r.size, vals.shape[0], d, d)
    F *= sqm / (2.0 * math.pi)

    k = np.arange(n)
    c = k[:, None] + k[None, :]
    rr = k[:, None] - k[None, :] + (n - 1)
    blocks = F[rr, c]
    return OperatorKernel(nodes=kernel_nodes, blocks=blocks, M=float(M))


def trace_of(kernel: OperatorKernel) -> complex:
    """``sum_k trace K(x_k, x_k) h``."""
    diag = np.einsum("kkii->", kernel.blocks)
    return complex(diag * kernel.h)


def compose(K1: OperatorKernel, K2: OperatorKernel) -> OperatorKernel:
    """Kernel of the operator product, ``int K1(x, z) K2(z, y) dz`` on the nodes."""
    if K1.nodes.shape != K2.nodes.shape or not np.allclose(K1.nodes, K2.nodes):
        raise ValueError("kernels live on different nodes")
    mat = K1.as_matrix() @ K2.as_matrix() * K1.h
    return OperatorKernel.from_matrix(K1.nodes, mat, K1.M, K1.dim)


def symbol_of(kernel: OperatorKernel, grid: PhaseSpaceGrid) -> SymbolField:
    """Invert the quantisation: ``A(x, p) = int K(x + s/2, x - s/2) e^{-i sqrt(M) s p} ds``.

    ``grid`` must be the stride-2 symbol grid of the kernel; every symbol
    ``x`` node is a midpoint of kernel node pairs.
    """
    n = kernel.nodes.size
    xs = grid.x_grid.nodes
    if xs.size != 2 * n - 1 or not np.allclose(xs[::2], kernel.nodes):
        raise ValueError("grid is not the stride-2 refinement of the kernel nodes")
    h = kernel.h
    sqm = math.sqrt(kernel.M)
    ps = grid.p_grid.nodes
    d = kernel.dim
    k = np.arange(n)
    c_idx = (k[:, None] + k[None, :]).ravel()
    r_idx = (k[:, None] - k[None, :]).ravel()
    blocks = kernel.blocks.reshape(n * n, d, d)
    # regroup kernel entries by midpoint c and displacement r
    table = np.zeros((2 * n - 1, 2 * n - 1, d, d), dtype=complex)
    table[c_idx, r_idx + n - 1] = blocks
    r = np.arange(-(n - 1), n)
    phase = np.exp(-1j * sqm * h * np.outer(ps, r)) * (2.0 * h)
    vals = np.einsum("lr,crij->clij", phase, table, optimize=True)
    return SymbolField(grid, vals)


def _spectral_derivative(values: np.ndarray, spacing: float, order: int, axis: int) -> np.ndarray:
    if order == 0:
        return values
    n = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)


def symbol_derivative(A: SymbolField, nx: int, np_: int) -> np.ndarray:
    """``d^nx/dx^nx d^np/dp^np A`` by discrete Fourier differentiation."""
    out = _spectral_derivative(A.values, A.grid.x_grid.dx, nx, axis=0)
    return _spectral_derivative(out, A.grid.p_grid.dx, np_, axis=1)


def moyal_term(A: SymbolField, B: SymbolField, M: float, n: int) -> np.ndarray:
    """Order-``n`` term of the Moyal expansion of ``A # B``.

    The sign matches the kernel convention above (``p -> -i M^{-1/2} d/dx``)::

        (1/n!) (i/(2 sqrt(M)))^n (d_x d_p' - d_x' d_p)^n A(x, p) B(x', p') |_{x'=x, p'=p}
    """
    total = np.zeros(A.values.shape, dtype=complex)
    for k in range(n + 1):
        # k factors of d_x' d_p (sign -1 each), n - k factors of d_x d_p'
        dA = symbol_derivative(A, n - k, k)
        dB = symbol_derivative(B, k, n - k)
        total += math.comb(n, k) * (-1) ** k * np.einsum("...ij,...jk->...ik", dA, dB)
    return total * (1j / (2.0 * math.sqrt(M))) ** n / math.factorial(n)


def moyal_compose(A: SymbolField, B: SymbolField, M: float, order: int) -> SymbolField:
    """Moyal expansion of ``A # B`` truncated after ``order`` terms."""
    if not 0 <= order <= MAX_MOYAL_ORDER:
        raise ValueError(f"Moyal order must lie in 0..{MAX_MOYAL_ORDER}, got {order}")
    if A.grid != B.grid:
        raise ValueError("symbols must share a grid")
    for S in (A, B):
        if S.decay_flag > DECAY_GATE:
            raise AdmissibilityError(f"symbol not decaying at the boundary (flag {S.decay_flag:.2e})")
    vals = sum(moyal_term(A, B, M, n) for n in range(order + 1))
    return SymbolField(A.grid, vals)


def moyal_remainder(A: SymbolField, B: SymbolField, M: float, orders=(0, 1, 2)) -> dict:
    """``||symbol(K_A K_B) - truncation_m(A # B)||_L2`` for each order ``m``."""
    exact = symbol_of(compose(weyl_quantize(A, M), weyl_quantize(B, M)), A.grid)
    return {m: (exact - moyal_compose(A, B, M, m)).l2_norm() for m in orders}


def refined_grid(half_x: float, half_p: float, M_max: float, margin: float = 1.0) -> PhaseSpaceGrid:
    """Smallest symmetric grid admissible for every ``M <= M_max`` (odd x-node count)."""
    sqm = math.sqrt(M_max)
    # kernel spacing h = 2 dx with sqrt(M) h p_max <= pi, and recovery needs 2h
    nx = int(math.ceil(margin * 2 * 2 * (2 * half_x) * sqm * half_p / math.pi))
    nx += nx % 2
    npp = int(math.ceil(margin * sqm * (2 * half_x) * (2 * half_p) / math.pi))
    return PhaseSpaceGrid(SpatialGrid(-half_x, half_x, nx), SpatialGrid(-half_p, half_p, npp))
