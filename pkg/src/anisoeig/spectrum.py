"""Local spectrum ``y -> k^y`` and the small-``eps`` limit predictors.

For each slow coordinate ``y`` the local problem ``(L_z + c(y, .)) psi = k psi``
is solved on the z-grid. From the curve ``k^y`` we form the effective
potential ``F(y) = k^y - B(y)^2 / (4 A(y))`` and

* ``M = max_y F``,
* ``gamma = int_0^1 B / (2A) dy``,
* ``j(k) = int_0^1 sqrt((k - F(y)) / A(y)) dy`` for ``k >= M``.

With ``B == 0`` the limit of the global eigenvalue is ``max_y k^y``. On the
one-dimensional torus it is ``M`` when ``|gamma| <= j(M)`` and
``j^{-1}(|gamma|)`` otherwise.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .eig import DEFAULT_TOL, EigenPair, principal_eigenpair
from .errors import HypothesisError, NumericalError
from .grid import Grid1D, Grid2D
from .operator import CoefficientSet, assemble_local

__all__ = [
    "LocalSpectrum",
    "LimitPrediction",
    "Regime",
    "TransportIntegrals",
    "SliceTV",
    "local_spectrum",
    "predict_limit",
    "slice_tv_diagnostic",
    "divergence_sup",
    "tv_distance",
    "B_ZERO_TOL",
]

logger = logging.getLogger(__name__)

B_ZERO_TOL = 1e-14
QUAD_REFINE = 32


class Regime(str, enum.Enum):
    B_ZERO = "Bzero"
    SUBCRITICAL = "TransportSubcritical"
    SUPERCRITICAL = "TransportSupercritical"


@dataclass(frozen=True, eq=False)
class LocalSpectrum:
    grid: Grid2D
    k: np.ndarray  # (ny,)
    psi: np.ndarray  # (ny, nz), each row sums to 1 against the z-weights
    residuals: np.ndarray

    @property
    def y_nodes(self) -> np.ndarray:
        return self.grid.gy.nodes

    @cached_property
    def k_interpolant(self) -> CubicSpline:
        """Cubic spline of ``k^y``; periodic on the torus, not-a-knot on an interval."""
        gy = self.grid.gy
        if gy.periodic:
            x = np.append(gy.nodes, 1.0)
            return CubicSpline(x, np.append(self.k, self.k[0]), bc_type="periodic")
        return CubicSpline(gy.nodes, self.k)

    def k_at(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.grid.gy.periodic:
            y = np.mod(y, 1.0)
        return self.k_interpolant(y)


def local_spectrum(grid: Grid2D, coeffs: CoefficientSet, tol: float = DEFAULT_TOL) -> LocalSpectrum:
    coeffs.validate(grid)
    ny, nz = grid.shape
    k = np.empty(ny)
    psi = np.empty((ny, nz))
    res = np.empty(ny)
    for i, y in enumerate(grid.gy.nodes):
        try:
            pair = principal_eigenpair(assemble_local(grid.gz, coeffs, float(y)), tol=tol)
        except NumericalError as err:
            raise type(err)(f"local problem at y={float(y)!r} (node {i}): {err}") from err
        k[i], psi[i], res[i] = pair.k, pair.phi, pair.residual
    return LocalSpectrum(grid, k, psi, res)


# ---------------------------------------------------------------- predictors


class TransportIntegrals:
    """``F``, ``M``, ``gamma``, ``j`` and ``j^{-1}`` for one local spectrum.

    ``F`` between nodes uses the cubic spline of ``k^y`` together with the
    exact ``A`` and ``B``. Integrals use the trapezoid rule on a uniform grid
    ``QUAD_REFINE`` times finer than the y-grid; on the torus that grid is
    anchored at the maximiser of ``F`` so the square-root kink of
    ``sqrt(M - F)`` falls on a node.
    """

    def __init__(self, spec: LocalSpectrum, coeffs: CoefficientSet, refine: int = QUAD_REFINE):
        self.spec = spec
        self.coeffs = coeffs
        gy = spec.grid.gy
        self.periodic = gy.periodic
        self.F_nodes = spec.k - coeffs.B_of(gy.nodes) ** 2 / (4 * coeffs.A_of(gy.nodes))
        self.M, self.y_star = self._maximise(gy)
        cells = refine * (gy.n if self.periodic else gy.n - 1)
        x = np.linspace(0.0, 1.0, cells + 1)
        if self.periodic:
            x = x + self.y_star
        self.quad_x = x
        self.quad_w = np.full(cells + 1, 1.0 / cells)
        self.quad_w[[0, -1]] *= 0.5
        self._F_quad = self.F(x)
        self._A_quad = coeffs.A_of(self._wrap(x))
        self.gamma = float(np.dot(self.quad_w, coeffs.B_of(self._wrap(x)) / (2 * self._A_quad)))

    def _wrap(self, y):
        return np.mod(y, 1.0) if self.periodic else np.asarray(y, dtype=float)

    def F(self, y):
        y = self._wrap(y)
        return self.spec.k_at(y) - self.coeffs.B_of(y) ** 2 / (4 * self.coeffs.A_of(y))

    def _maximise(self, gy: Grid1D) -> tuple[float, float]:
        """Grid argmax, 3-point parabolic refinement, then a polish on the spline."""
        f = self.F_nodes
        i = int(np.argmax(f))
        n, h = gy.n, gy.h
        if not self.periodic and i in (0, n - 1):
            lo, hi = (0.0, h) if i == 0 else (1.0 - h, 1.0)
            seed = gy.nodes[i]
        else:
            fm, f0, fp = f[(i - 1) % n], f[i], f[(i + 1) % n]
            curv = fm - 2 * f0 + fp
            offset = 0.5 * (fm - fp) / curv if curv < 0 else 0.0
            seed = gy.nodes[i] + offset * h
            lo, hi = gy.nodes[i] - h, gy.nodes[i] + h
        res = minimize_scalar(lambda t: -float(self.F(t)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        y_best, M_best = seed, float(self.F(seed))
        if -res.fun > M_best:
            y_best, M_best = float(res.x), float(-res.fun)
        if f[i] > M_best:
            y_best, M_best = float(gy.nodes[i]), float(f[i])
        if self.periodic:
            y_best = float(np.mod(y_best, 1.0))
        return M_best, y_best

    def j(self, k: float) -> float:
        if k < self.M - 1e-12 * (1 + abs(self.M)):
            raise ValueError(f"j(k) is defined for k >= M = {self.M!r}, got {k!r}")
        integrand = np.sqrt(np.maximum(k - self._F_quad, 0.0) / self._A_quad)
        return float(np.dot(self.quad_w, integrand))

    @cached_property
    def jM(self) -> float:
        return self.j(self.M)

    def j_inv(self, t: float) -> float:
        """The ``k >= M`` with ``j(k) = t``; ``t`` must be at least ``j(M)``."""
        if t < self.jM - 1e-13:
            raise ValueError(f"j^-1(t) needs t >= j(M) = {self.jM!r}, got {t!r}")
        if t <= self.jM:
            return self.M
        width = max(1.0, self.gamma**2 * float(self._A_quad.max()))
        while self.j(self.M + width) < t:
            width *= 2.0
            if width > 1e12:
                raise NumericalError("could not bracket j^-1")
        return float(brentq(lambda k: self.j(k) - t, self.M, self.M + width, xtol=1e-14, rtol=1e-15,
                            maxiter=500))


@dataclass(frozen=True)
class LimitPrediction:
    M: float
    gamma: float
    jM: float
    k0: float
    regime: Regime
    y_star: float  # where F attains M


def predict_limit(spec: LocalSpectrum, coeffs: CoefficientSet) -> LimitPrediction:
    """Predicted ``lim_{eps -> 0} k_eps``.

    On a torus y-domain the transport formula applies (it reduces to
    ``max k^y`` when ``B == 0``). On an interval only ``B == 0`` is covered;
    other inputs raise :class:`HypothesisError`.
    """
    gy = spec.grid.gy
    b_sup = float(np.max(np.abs(coeffs.B_of(np.concatenate([gy.nodes, gy.midpoints])))))
    ti = TransportIntegrals(spec, coeffs)
    if not gy.periodic:
        if b_sup > B_ZERO_TOL:
            raise HypothesisError(
                "the transport limit formula needs a torus y-domain; refusing to predict with "
                f"B != 0 (sup |B| = {b_sup:.3g}) on an interval"
            )
        return LimitPrediction(ti.M, 0.0, float("nan"), ti.M, Regime.B_ZERO, ti.y_star)
    gamma = 0.0 if b_sup <= B_ZERO_TOL else ti.gamma
    jM = ti.jM
    if abs(gamma) <= jM:
        return LimitPrediction(ti.M, gamma, jM, ti.M, Regime.SUBCRITICAL, ti.y_star)
    return LimitPrediction(ti.M, gamma, jM, ti.j_inv(abs(gamma)), Regime.SUPERCRITICAL, ti.y_star)


# --------------------------------------------------------------- diagnostics


def tv_distance(p, q, weights=None) -> float:
    """Half the (weighted) L1 distance between two densities or mass vectors."""
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    if weights is not None:
        d = d * weights
    return 0.5 * float(d.sum())


@dataclass(frozen=True, eq=False)
class SliceTV:
    per_y: np.ndarray
    sup: float


def slice_tv_diagnostic(global_pair: EigenPair, spec: LocalSpectrum, grid: Grid2D) -> SliceTV:
    """TV distance between each normalised slice ``phi(y_i, .)`` and ``psi^{y_i}``."""
    if spec.grid.shape != grid.shape:
        raise ValueError("global eigenpair and local spectrum live on different grids")
    phi = global_pair.phi.reshape(grid.shape)
    wz = grid.gz.weights
    mass = phi @ wz
    if np.any(mass <= 0):
        raise NumericalError("a slice of the global eigenfunction has nonpositive mass")
    slices = phi / mass[:, None]
    per_y = 0.5 * (np.abs(slices - spec.psi) @ wz)
    return SliceTV(per_y, float(per_y.max()))


def _central_derivative(g: Grid1D, f: np.ndarray) -> np.ndarray:
    h = g.h
    if g.periodic:
        return (np.roll(f, -1) - np.roll(f, 1)) / (2 * h)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return d


def divergence_sup(coeffs: CoefficientSet, grid: Grid2D) -> tuple[float, float, float]:
    """``(||B'||_inf, ||b'||_inf, c_m)`` with ``c_m = ||c||_inf + ||b'|| + ||B'|| + 1``."""
    dB = float(np.max(np.abs(_central_derivative(grid.gy, coeffs.B_of(grid.gy.nodes)))))
    db = float(np.max(np.abs(_central_derivative(grid.gz, coeffs.b_of(grid.gz.nodes)))))
    Y, Z = grid.mesh()
    c_sup = float(np.max(np.abs(coeffs.c_of(Y, Z))))
    return dB, db, c_sup + db + dB + 1.0
