"""Explicit solutions of the one-dimensional Hamilton-Jacobi equation

    -A(y) u'(y)^2 - B(y) u'(y) - k^y + k = 0,      y on the unit torus,

for the two transport regimes, plus a residual checker.

Writing ``r_k(y) = sqrt((k - F(y)) / A(y))`` with ``F = k^y - B^2/(4A)``,
every ``u' = -B/(2A) +/- r_k`` solves the equation pointwise.

* Supercritical (``|gamma| >= j(M)``): ``ubar' = -B/(2A) + s r_k`` with
  ``s = sign(gamma)`` and ``j(k) = |gamma|`` is 1-periodic.
* Subcritical (``|gamma| <= j(M)``): with ``k = M`` and the maximiser of
  ``F`` moved to 0, ``v' = -B/(2A) + s S(y) r_M`` where ``S`` is +1 on
  ``[0, 1)`` and -1 on ``[1, 2)``. Then ``v + gamma y`` is 2-periodic and the
  derivative only switches branch at integers, where ``r_M`` vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import HypothesisError
from .operator import CoefficientSet
from .spectrum import LocalSpectrum, TransportIntegrals

__all__ = ["HjSolution", "build_ubar", "build_v", "hj_residual", "DEFAULT_REFINE"]

DEFAULT_REFINE = 4
KINK_RADIUS = 2.0  # in units of the fine spacing
TOUCH_TOL = 1e-10  # F within this of M counts as a further maximiser


@dataclass(frozen=True, eq=False)
class HjSolution:
    kind: str  # "ubar" or "v"
    y_nodes: np.ndarray  # fine samples, user coordinates (may extend past 1)
    u: np.ndarray
    uprime: np.ndarray
    kink_set: np.ndarray
    k_used: float
    gamma: float
    sign: int
    shift: float = 0.0  # v is built in x = y - shift, so x = 0 is the maximiser of F
    h: float = field(default=0.0)

    @cached_property
    def _derivative_pieces(self) -> tuple[np.ndarray, list[CubicSpline]]:
        """One spline per smooth piece: ``u'`` only has one-sided limits at kinks."""
        cuts = [0]
        for k in self.kink_set:
            i = int(np.argmin(np.abs(self.y_nodes - k)))
            if 0 < i < self.y_nodes.size - 1:
                cuts.append(i)
        cuts.append(self.y_nodes.size - 1)
        cuts = sorted(set(cuts))
        pieces = [CubicSpline(self.y_nodes[a:b + 1], self.uprime[a:b + 1]) for a, b in zip(cuts, cuts[1:])]
        return self.y_nodes[cuts[1:-1]], pieces

    @cached_property
    def _value_spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.y_nodes, self.u, self.uprime)

    def __call__(self, y):
        return self._value_spline(y)

    def derivative(self, y):
        breaks, pieces = self._derivative_pieces
        y = np.asarray(y, dtype=float)
        which = np.searchsorted(breaks, y, side="right")
        out = np.empty(y.shape)
        for m, spline in enumerate(pieces):
            sel = which == m
            out[sel] = spline(y[sel])
        return out if out.ndim else float(out)

    @property
    def periodicity_defect(self) -> float:
        """``|u(1) - u(0)|`` for ubar; ``|v(2) + 2 gamma - v(0)|`` for v."""
        if self.kind == "ubar":
            return float(abs(self.u[-1] - self.u[0]))
        span = self.y_nodes[-1] - self.y_nodes[0]
        return float(abs(self.u[-1] + self.gamma * span - self.u[0]))


def _sign(sign, gamma: float) -> int:
    if sign is None:
        return 1 if gamma >= 0 else -1
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def build_ubar(spec: LocalSpectrum, coeffs: CoefficientSet, k: float, sign=None,
               refine: int = DEFAULT_REFINE, integrals: TransportIntegrals | None = None) -> HjSolution:
    """Supercritical construction on ``[0, 1]`` with ``refine * ny`` cells.

    ``sign`` defaults to the sign of ``gamma``; ``k`` must be at least ``M``.
    """
    if not spec.grid.gy.periodic:
        raise HypothesisError("the explicit Hamilton-Jacobi solutions need a torus y-domain")
    ti = integrals or TransportIntegrals(spec, coeffs)
    if k < ti.M - 1e-12 * (1 + abs(ti.M)):
        raise ValueError(f"k = {k!r} is below M = {ti.M!r}: the square root would be imaginary")
    s = _sign(sign, ti.gamma)
    cells = refine * spec.grid.gy.n
    y = np.linspace(0.0, 1.0, cells + 1)
    A, B = coeffs.A_of(np.mod(y, 1.0)), coeffs.B_of(np.mod(y, 1.0))
    root = np.sqrt(np.maximum(k - ti.F(y), 0.0) / A)
    uprime = -B / (2 * A) + s * root
    u = cumulative_trapezoid(uprime, y, initial=0.0)
    return HjSolution("ubar", y, u, uprime, np.empty(0), float(k), ti.gamma, s, 0.0, 1.0 / cells)


def build_v(spec: LocalSpectrum, coeffs: CoefficientSet, sign=None, refine: int = DEFAULT_REFINE,
            integrals: TransportIntegrals | None = None) -> HjSolution:
    """Subcritical construction over two periods starting at the maximiser of ``F``."""
    if not spec.grid.gy.periodic:
        raise HypothesisError("the explicit Hamilton-Jacobi solutions need a torus y-domain")
    ti = integrals or TransportIntegrals(spec, coeffs)
    s = _sign(sign, ti.gamma)
    cells = 2 * refine * spec.grid.gy.n
    x = np.linspace(0.0, 2.0, cells + 1)
    y = x + ti.y_star
    S = np.where(np.mod(x, 2.0) < 1.0, 1.0, -1.0)
    A, B = coeffs.A_of(np.mod(y, 1.0)), coeffs.B_of(np.mod(y, 1.0))
    gap = ti.M - ti.F(y)
    root = np.sqrt(np.maximum(gap, 0.0) / A)
    uprime = -B / (2 * A) + s * S * root
    u = cumulative_trapezoid(uprime, x, initial=0.0)
    # every other maximiser of F is also a zero of the root, hence a kink of v
    # (on a plateau of F the root vanishes identically and nothing switches)
    tol = TOUCH_TOL * (1 + abs(ti.M))
    mid, left, right = gap[1:-1], gap[:-2], gap[2:]
    touch = np.flatnonzero((mid <= tol) & (mid <= left) & (mid <= right) & (np.maximum(left, right) > tol)) + 1
    kinks = np.union1d(ti.y_star + np.array([0.0, 1.0, 2.0]), y[touch])
    return HjSolution("v", y, u, uprime, kinks, ti.M, ti.gamma, s, ti.y_star, 2.0 / cells)


def hj_residual(sol: HjSolution, spec: LocalSpectrum, coeffs: CoefficientSet, k: float | None = None) -> float:
    """Max of ``|-A u'^2 - B u' - k^y + k|`` at the cell midpoints of ``sol``.

    ``u'`` comes from the spline through the stored derivative samples, so
    the check exercises the sampled solution and not only its formula.
    Points within ``2h`` of a kink are skipped.
    """
    k = sol.k_used if k is None else float(k)
    y = 0.5 * (sol.y_nodes[1:] + sol.y_nodes[:-1])
    if sol.kink_set.size:
        dist = np.min(np.abs(y[:, None] - sol.kink_set[None, :]), axis=1)
        y = y[dist > KINK_RADIUS * sol.h]
    yw = np.mod(y, 1.0)
    up = sol.derivative(y)
    R = -coeffs.A_of(yw) * up**2 - coeffs.B_of(yw) * up - spec.k_at(yw) + k
    return float(np.max(np.abs(R)))
