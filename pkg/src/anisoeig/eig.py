"""Principal (Perron) eigenpair of an assembled operator.

The operators built by :mod:`anisoeig.operator` have nonnegative
off-diagonal entries (as long as the cell Peclet numbers are moderate), so
``M = L + sigma I`` is a nonnegative irreducible matrix for a large enough
shift and its Perron vector is the principal eigenfunction. We run the power
method on ``M`` and, every ``accel_every`` steps, take one shift-invert step
with a shift just above the Collatz-Wielandt upper bound
``max_i (L phi)_i / phi_i``. For such a shift ``(s I - L)^{-1}`` is again a
positive matrix, so the iterate never leaves the positive cone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, NumericalError, PositivityError
from .operator import SparseOperator

__all__ = ["EigenPair", "principal_eigenpair", "dense_oracle", "DEFAULT_TOL", "DEFAULT_MAX_ITER"]

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200_000
ACCEL_EVERY = 50
SHIFT_INVERT_MAX_DIM = 20_000
DENSE_MAX_DIM = 2500


@dataclass(frozen=True, eq=False)
class EigenPair:
    k: float
    phi: np.ndarray
    residual: float
    iterations: int

    @property
    def min_phi(self) -> float:
        return float(self.phi.min())


def _normalize(phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    return phi / np.dot(w, phi)


def _residual(L: sp.csr_matrix, phi: np.ndarray) -> tuple[float, float, np.ndarray]:
    Lphi = L @ phi
    k = float(np.dot(phi, Lphi) / np.dot(phi, phi))
    r = float(np.max(np.abs(Lphi - k * phi)) / np.max(np.abs(phi)))
    return k, r, Lphi


def gershgorin_shift(L: sp.csr_matrix) -> float:
    """Smallest shift putting every Gershgorin disc of ``L + sigma I`` in ``Re >= 1``."""
    diag = L.diagonal()
    radius = np.asarray(abs(L).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.max(radius - diag)) + 1.0


def principal_eigenpair(
    op: SparseOperator,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    accel_every: int = ACCEL_EVERY,
) -> EigenPair:
    """Principal eigenpair ``(k, phi)`` with ``phi > 0`` and ``sum(w * phi) == 1``.

    Stops when ``||L phi - k phi||_inf <= tol * ||phi||_inf``. Raises
    :class:`ConvergenceError` after ``max_iter`` steps and
    :class:`PositivityError` if an iterate stops being positive.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    L = op.matrix
    w = op.weights
    n = op.dimension
    offdiag = L - sp.diags(L.diagonal())
    if offdiag.nnz and offdiag.data.min() < 0:
        logger.warning(
            "operator %s has negative off-diagonal entries (min %.3g); Perron structure not guaranteed",
            op.tag, offdiag.data.min(),
        )
    sigma = gershgorin_shift(L)
    M = (L + sigma * sp.identity(n, format="csr")).tocsr()
    use_si = n <= SHIFT_INVERT_MAX_DIM
    eye = sp.identity(n, format="csc")

    phi = _normalize(np.ones(n), w)
    k, res, Lphi = _residual(L, phi)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"principal_eigenpair({op.tag}) did not converge in {max_iter} steps "
                f"(residual {res:.3g} > tol {tol:.3g})"
            )
        it += 1
        if use_si and (it - 1) % accel_every == 0:
            ratio = Lphi / phi
            hi, lo = float(ratio.max()), float(ratio.min())
            s = hi + max(1e-3 * (hi - lo), 1e-13 * (1.0 + abs(hi)))
            lu = spla.splu((s * eye - L).tocsc())
            phi = lu.solve(phi)
        else:
            phi = M @ phi
        if not np.all(phi > 0):
            raise PositivityError(
                f"iterate lost positivity at step {it} for operator {op.tag} (min {phi.min():.3g})"
            )
        phi = _normalize(phi, w)
        k, res, Lphi = _residual(L, phi)
    logger.debug("principal_eigenpair(%s): k=%.17g residual=%.3g iterations=%d", op.tag, k, res, it)
    return EigenPair(k, phi, res, it)


def dense_oracle(op: SparseOperator, imag_tol: float = 1e-8, sign_tol: float = 1e-10) -> EigenPair:
    """Reference eigenpair from a full dense eigendecomposition (LAPACK ``geev``).

    Selects the eigenvalue of maximal real part and checks that it is real
    and that its eigenvector has one sign.
    """
    n = op.dimension
    if n > DENSE_MAX_DIM:
        raise ValueError(f"dense_oracle is limited to dimension {DENSE_MAX_DIM}, got {n}")
    L = op.toarray()
    vals, vecs = np.linalg.eig(L)
    top = int(np.argmax(vals.real))
    lam = vals[top]
    scale = 1.0 + np.max(np.abs(vals))
    if abs(lam.imag) > imag_tol * scale:
        raise NumericalError(f"principal eigenvalue is complex: {lam}")
    v = vecs[:, top]
    v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
    phi = v.real
    if phi.sum() < 0:
        phi = -phi
    if phi.min() < -sign_tol * np.abs(phi).max():
        raise PositivityError("principal eigenvector of the dense oracle changes sign")
    phi = _normalize(phi, op.weights)
    k = float(lam.real)
    res = float(np.max(np.abs(L @ phi - k * phi)) / np.max(np.abs(phi)))
    return EigenPair(k, phi, res, 0)
