"""Matrix-valued potentials V(x) and their adiabatic eigen-decompositions.

Every potential maps positions to real symmetric ``d x d`` matrices.  All
evaluation maps are vectorised: a scalar position returns a single matrix,
an array of positions of shape ``(n,)`` returns a stack ``(n, d, d)``.

Eigenvector columns follow a fixed gauge (first component whose magnitude
exceeds ``GAUGE_TOL`` is positive) so that the adiabatic frame varies
continuously in ``x`` away from crossings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

GAUGE_TOL = 1e-12

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MatrixPotential:
    """Hermitian (real symmetric) matrix potential with sorted eigenpairs.

    Attributes
    ----------
    dim : int
        Number of electron levels ``d``.
    evaluate : callable
        ``x -> V(x)`` with shape ``x.shape + (d, d)``.
    eigen : callable
        ``x -> (lam, psi)`` with ``lam`` ascending along the last axis and
        ``psi[..., :, j]`` the eigenvector of ``lam[..., j]``.
    params : dict
        Named model parameters, for provenance only.
    surface_gradient : callable, optional
        ``x -> dlam/dx`` with shape ``x.shape + (d,)``.  When absent the
        gradient is taken by central differences.
    """

    dim: int
    evaluate: ArrayFn
    eigen: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    params: dict = field(default_factory=dict)
    surface_gradient: Optional[ArrayFn] = None

    def eigenvalues(self, x) -> np.ndarray:
        return self.eigen(x)[0]

    def surface(self, j: int) -> ArrayFn:
        """Adiabatic surface ``x -> lam_j(x)`` for a 0-based level index."""
        if not 0 <= j < self.dim:
            raise IndexError(f"surface index {j} outside 0..{self.dim - 1}")
        return lambda x: self.eigen(x)[0][..., j]


def fix_gauge(psi: np.ndarray, tol: float = GAUGE_TOL) -> np.ndarray:
    """Flip eigenvector columns so their first significant entry is positive."""
    psi = np.array(psi, dtype=float, copy=True)
    significant = np.abs(psi) > tol
    # index of first significant row in each column
    first = np.argmax(significant, axis=-2)
    lead = np.take_along_axis(psi, first[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(lead < 0.0, -1.0, 1.0)
    return psi * sign[..., None, :]


def eig2(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form eigen-decomposition of real symmetric 2x2 matrices.

    Works on a single matrix or a stack ``(..., 2, 2)``.  Returns
    ``(lam1, lam2, psi)`` with ``lam1 <= lam2`` and gauge-fixed columns.
    A multiple of the identity returns the identity frame.
    """
    V = np.asarray(V, dtype=float)
    a = V[..., 0, 0]
    c = V[..., 1, 1]
    b = 0.5 * (V[..., 0, 1] + V[..., 1, 0])
    mean = 0.5 * (a + c)
    half = 0.5 * (a - c)
    r = np.hypot(half, b)
    lam1 = mean - r
    lam2 = mean + r

    theta = 0.5 * np.arctan2(b, half)
    cos, sin = np.cos(theta), np.sin(theta)
    degenerate = r == 0.0
    cos = np.where(degenerate, 0.0, cos)
    sin = np.where(degenerate, 1.0, sin)

    psi = np.empty(V.shape, dtype=float)
    # column 0 belongs to lam1, column 1 to lam2
    psi[..., 0, 0] = -sin
    psi[..., 1, 0] = cos
    psi[..., 0, 1] = cos
    psi[..., 1, 1] = sin
    # the degenerate branch above gives [[-1, 0], [0, 1]]; gauge turns it into I
    return lam1, lam2, fix_gauge(psi)


def eigh_sorted(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenpairs of a stack of symmetric matrices, gauge fixed."""
    V = np.asarray(V, dtype=float)
    if V.shape[-1] == 1:
        return V[..., 0, :].copy(), np.ones_like(V)
    if V.shape[-1] == 2:
        lam1, lam2, psi = eig2(V)
        return np.stack([lam1, lam2], axis=-1), psi
    lam, psi = np.linalg.eigh(V)
    return lam, fix_gauge(psi)


def build_avoided_crossing(delta: float, a: float = 1.0, b: float = 10.0) -> MatrixPotential:
    """Two-level avoided crossing with minimal gap ``2 * delta`` at ``x = 0``.

    The adiabatic surfaces are::

        lam1(x) = x**2 - sqrt(delta**2 + x**2) + a*cos(b*x) - 1
        lam2(x) = x**2 + sqrt(delta**2 + x**2)

    and the frame is that of ``[[x + x**2, delta], [delta, -x + x**2]]``,
    which does not depend on ``a`` or ``b``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    delta = float(delta)
    a = float(a)
    b = float(b)

    def _frame(x):
        x = np.asarray(x, dtype=float)
        s = np.hypot(delta, x)
        # u = (x - s)/delta and v = (x + s)/delta without cancellation; u*v = -1
        pos = x >= 0
        xs_plus = np.where(pos, x + s, 0.0)
        s_minus = np.where(pos, 0.0, s - x)
        with np.errstate(divide="ignore"):
            u = np.where(pos, -delta / np.where(pos, xs_plus, 1.0), (x - s) / delta)
            v = np.where(pos, xs_plus / delta, delta / np.where(pos, 1.0, s_minus))
        n1 = np.hypot(u, 1.0)
        n2 = np.hypot(v, 1.0)
        psi = np.empty(x.shape + (2, 2))
        # u < 0 always, so the first column is flipped into the positive gauge
        psi[..., 0, 0] = -u / n1
        psi[..., 1, 0] = -1.0 / n1
        psi[..., 0, 1] = v / n2
        psi[..., 1, 1] = 1.0 / n2
        return s, psi

    def eigen(x):
        x = np.asarray(x, dtype=float)
        s, psi = _frame(x)
        lam = np.empty(x.shape + (2,))
        lam[..., 0] = x * x - s + a * np.cos(b * x) - 1.0
        lam[..., 1] = x * x + s
        return lam, psi

    def evaluate(x):
        lam, psi = eigen(x)
        V = np.einsum("...ik,...k,...jk->...ij", psi, lam, psi)
        # float addition commutes, so this is symmetric to the last bit
        return 0.5 * (V + np.swapaxes(V, -1, -2))

    def surface_gradient(x):
        x = np.asarray(x, dtype=float)
        s = np.hypot(delta, x)
        grad = np.empty(x.shape + (2,))
        grad[..., 0] = 2.0 * x - x / s - a * b * np.sin(b * x)
        grad[..., 1] = 2.0 * x + x / s
        return grad

    return MatrixPotential(
        dim=2,
        evaluate=evaluate,
        eigen=eigen,
        params={"kind": "avoided_crossing", "delta": delta, "a": a, "b": b},
        surface_gradient=surface_gradient,
    )


def from_matrix_function(evaluate: ArrayFn, dim: int, params: Optional[dict] = None) -> MatrixPotential:
    """Wrap a user-supplied ``x -> V(x)`` map; eigenpairs are computed numerically."""
    if dim < 1:
        raise ValueError("dim must be a positive integer")

    def _eval(x):
        V = np.asarray(evaluate(np.asarray(x, dtype=float)), dtype=float)
        if V.shape[-2:] != (dim, dim):
            raise ValueError(f"potential returned shape {V.shape}, expected (..., {dim}, {dim})")
        return V

    def eigen(x):
        return eigh_sorted(_eval(x))

    return MatrixPotential(dim=dim, evaluate=_eval, eigen=eigen, params=dict(params or {}))


def diagonal_potential(
    surfaces: list[ArrayFn],
    gradients: Optional[list[ArrayFn]] = None,
    params: Optional[dict] = None,
) -> MatrixPotential:
    """Potential ``diag(f_1(x), ..., f_d(x))`` with the identity frame.

    The surfaces are taken in the given order and must already be sorted
    pointwise (``f_1 <= f_2 <= ...``) on the region of interest.
    """
    dim = len(surfaces)
    if dim < 1:
        raise ValueError("need at least one surface")

    def _lams(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in surfaces], axis=-1)

    def eigen(x):
        lam = _lams(x)
        psi = np.broadcast_to(np.eye(dim), lam.shape + (dim,)).copy()
        return lam, psi

    def evaluate(x):
        lam = _lams(x)
        return lam[..., :, None] * np.eye(dim)

    grad = None
    if gradients is not None:
        if len(gradients) != dim:
            raise ValueError("one gradient per surface required")

        def grad(x):
            x = np.asarray(x, dtype=float)
            return np.stack(
                [np.broadcast_to(np.asarray(g(x), dtype=float), x.shape) for g in gradients], axis=-1
            )

    return MatrixPotential(dim=dim, evaluate=evaluate, eigen=eigen, params=dict(params or {}),
                           surface_gradient=grad)


def scalar_potential(f: ArrayFn, df: Optional[ArrayFn] = None, params: Optional[dict] = None) -> MatrixPotential:
    """Single-level potential; convenient for oracle checks (e.g. harmonic wells)."""
    return diagonal_potential([f], None if df is None else [df], params)


def harmonic(omega: float = 1.0) -> MatrixPotential:
    """``lam(x) = omega**2 x**2 / 2`` as a one-level potential."""
    w2 = float(omega) ** 2
    return scalar_potential(lambda x: 0.5 * w2 * x * x, lambda x: w2 * x,
                            params={"kind": "harmonic", "omega": float(omega)})
