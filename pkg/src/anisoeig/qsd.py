"""Monte Carlo for the killed diffusion and its law conditioned on survival.

The unkilled process is the reflected diffusion whose density solves the
conservative forward equation. Its backward generator is
``eps^2 (A f')' - eps B f'`` in ``y`` and ``(a f')' - b f'`` in ``z``, so
Euler-Maruyama uses

    dY = (eps^2 A'(Y) - eps B(Y)) dt + eps sqrt(2 A(Y)) dW
    dZ = (a'(Z) - b(Z)) dt + sqrt(2 a(Z)) dW'

with folding at interval ends and wrapping on a torus. Each particle dies
when its integrated hazard ``int d(Y, Z) dt`` (trapezoid along the path,
``d = c_m - c``) first exceeds an independent unit exponential.

With ``resample=True`` a particle that dies is moved onto a uniformly chosen
survivor of the same step (Fleming-Viot), which keeps the ensemble size
constant over long horizons.

Every particle owns a splitmix64 stream seeded from ``(seed, index)``.
Resampling draws from a separate stream seeded from ``(seed, step)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .eig import EigenPair
from .errors import ConfigError, NumericalError
from .grid import Grid2D
from .operator import CoefficientSet
from .spectrum import divergence_sup, tv_distance

__all__ = [
    "ParticleEnsemble",
    "QsdEstimate",
    "simulate",
    "qsd_sweep",
    "max_stable_dt",
    "unit_exponentials",
    "clock_times",
    "MIN_PARTICLES",
]

logger = logging.getLogger(__name__)

MIN_PARTICLES = 100
FD_STEP = 1e-6

# ----------------------------------------------------------- kernel template

_KERNEL_TEMPLATE = '''
import math
import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0
FD = {fd!r}


@njit(inline="always", error_model="numpy")
def mix(x):
    x = (x ^ (x >> S30)) * MIX1
    x = (x ^ (x >> S27)) * MIX2
    return x ^ (x >> S31)


@njit(inline="always", error_model="numpy")
def uniform(state, i):
    # in (0, 1]
    state[i] += GAMMA
    return (float(mix(state[i]) >> S11) + 1.0) * INV53


@njit(inline="always", error_model="numpy")
def normal_pair(state, i):
    # Marsaglia polar method
    while True:
        u = 2.0 * uniform(state, i) - 1.0
        v = 2.0 * uniform(state, i) - 1.0
        q = u * u + v * v
        if q < 1.0:
            break
    f = math.sqrt(-2.0 * math.log(q) / q)
    return u * f, v * f


@njit(inline="always", error_model="numpy")
def coef_A(y):
    z = 0.0
    return {A}


@njit(inline="always", error_model="numpy")
def coef_B(y):
    z = 0.0
    return {B}


@njit(inline="always", error_model="numpy")
def coef_a(z):
    y = 0.0
    return {a}


@njit(inline="always", error_model="numpy")
def coef_b(z):
    y = 0.0
    return {b}


@njit(inline="always", error_model="numpy")
def coef_dA(y):
    return {dA}


@njit(inline="always", error_model="numpy")
def coef_da(z):
    return {da}


@njit(inline="always", error_model="numpy")
def coef_c(y, z):
    return {c}


@njit(inline="always", error_model="numpy")
def fold(x, periodic):
    if periodic:
        return x - math.floor(x)
    if x < 0.0:
        x = -x
    if x > 1.0:
        x = 2.0 - x
    # a second fold only triggers for steps larger than the domain
    if x < 0.0:
        x = -x
    return min(max(x, 0.0), 1.0)


@njit(error_model="numpy")
def seed_streams(seed, n):
    state = np.empty(n, dtype=np.uint64)
    base = mix(np.uint64(seed) * GAMMA + np.uint64(0x2545F4914F6CDD1D))
    for i in range(n):
        state[i] = mix(base ^ mix(np.uint64(i) + GAMMA))
    return state


@njit(error_model="numpy")
def exponentials(state):
    n = state.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = -math.log(uniform(state, i))
    return out


@njit(error_model="numpy")
def init_positions(state, y, z, cdf, ny, nz, hy, hz, y_periodic, z_periodic):
    n = state.shape[0]
    for i in range(n):
        u = uniform(state, i)
        cell = np.searchsorted(cdf, u * cdf[-1])
        if cell >= cdf.shape[0]:
            cell = cdf.shape[0] - 1
        iy = cell // nz
        iz = cell - iy * nz
        y[i] = fold(iy * hy + (uniform(state, i) - 0.5) * hy, y_periodic)
        z[i] = fold(iz * hz + (uniform(state, i) - 0.5) * hz, z_periodic)
        if not y_periodic and (iy == 0 or iy == ny - 1):
            y[i] = min(max(iy * hy + (uniform(state, i) - 1.0) * 0.5 * hy * (1 if iy else -1), 0.0), 1.0)
        if not z_periodic and (iz == 0 or iz == nz - 1):
            z[i] = min(max(iz * hz + (uniform(state, i) - 1.0) * 0.5 * hz * (1 if iz else -1), 0.0), 1.0)


@njit(error_model="numpy")
def hazard_rate(y, z, c_m):
    n = y.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = c_m - coef_c(y[i], z[i])
    return out


@njit(error_model="numpy")
def advance(y, z, H, E, D, alive, state, n_steps, step0, dt, eps, c_m,
            y_periodic, z_periodic, resample, seed):
    n = y.shape[0]
    dead = np.empty(n, dtype=np.int64)
    sqdt = math.sqrt(dt)
    eps2 = eps * eps
    for step in range(n_steps):
        n_dead = 0
        for i in range(n):
            if not alive[i]:
                continue
            yi = y[i]
            zi = z[i]
            g1, g2 = normal_pair(state, i)
            Ay = coef_A(yi)
            dAy = coef_dA(yi)
            az = coef_a(zi)
            daz = coef_da(zi)
            yi = yi + (eps2 * dAy - eps * coef_B(yi)) * dt + eps * math.sqrt(2.0 * Ay) * sqdt * g1
            zi = zi + (daz - coef_b(zi)) * dt + math.sqrt(2.0 * az) * sqdt * g2
            yi = fold(yi, y_periodic)
            zi = fold(zi, z_periodic)
            y[i] = yi
            z[i] = zi
            d_new = c_m - coef_c(yi, zi)
            H[i] += 0.5 * (D[i] + d_new) * dt
            D[i] = d_new
            if H[i] >= E[i]:
                alive[i] = False
                dead[n_dead] = i
                n_dead += 1
        if resample and n_dead > 0:
            if n_dead == n:
                return step0 + step, -1
            gstate = np.empty(1, dtype=np.uint64)
            gstate[0] = mix(np.uint64(seed) ^ mix(np.uint64(step0 + step) + GAMMA))
            for k in range(n_dead):
                i = dead[k]
                while True:
                    j = int(uniform(gstate, 0) * n)
                    if j >= n:
                        j = n - 1
                    if alive[j]:
                        break
                y[i] = y[j]
                z[i] = z[j]
            for k in range(n_dead):
                i = dead[k]
                alive[i] = True
                H[i] = 0.0
                E[i] = -math.log(uniform(state, i))
                D[i] = c_m - coef_c(y[i], z[i])
    return step0 + n_steps, 0
'''


_CENTRAL = "(coef_{0}({1} + FD) - coef_{0}({1} - FD)) / (2.0 * FD)"


@lru_cache(maxsize=16)
def _kernel(A: str, B: str, a: str, b: str, c: str, A_const: bool = True, a_const: bool = True):
    """Compile (once per coefficient set) the numba kernels with coefficients inlined.

    Derivatives of non-constant diffusion coefficients use central differences.
    """
    dA = "0.0" if A_const else _CENTRAL.format("A", "y")
    da = "0.0" if a_const else _CENTRAL.format("a", "z")
    src = _KERNEL_TEMPLATE.format(A=A, B=B, a=a, b=b, c=c, dA=dA, da=da, fd=FD_STEP)
    namespace: dict = {}
    exec(compile(src, "<anisoeig-qsd-kernel>", "exec"), namespace)
    return namespace


def _kernel_for(coeffs: CoefficientSet):
    sources = (ex.to_source(getattr(coeffs, name)) for name in "ABabc")
    return _kernel(*sources, ex.is_constant(coeffs.A), ex.is_constant(coeffs.a))


_DEFAULT_STREAM_KERNEL = ("1.0", "0.0", "1.0", "0.0", "0.0")


def unit_exponentials(seed: int, n: int) -> np.ndarray:
    """The first unit-exponential draw of each per-particle stream."""
    k = _kernel(*_DEFAULT_STREAM_KERNEL)
    return k["exponentials"](k["seed_streams"](np.uint64(seed), n))


def clock_times(rates, dt: float, thresholds) -> np.ndarray:
    """Death times of clocks sharing one sampled rate path.

    ``rates[m]`` is the rate at time ``m * dt``, taken as linear in between
    samples; the resulting piecewise-quadratic hazard is inverted exactly.
    Particles whose threshold is never reached get ``inf``.
    """
    rates = np.asarray(rates, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if rates.ndim == 0:
        return thresholds / float(rates)
    H = np.concatenate([[0.0], np.cumsum(0.5 * (rates[1:] + rates[:-1]) * dt)])
    m = np.searchsorted(H, thresholds, side="left")
    out = np.full(thresholds.shape, np.inf)
    ok = (m > 0) & (m < H.size)
    m_ok = m[ok]
    r0, r1 = rates[m_ok - 1], rates[m_ok]
    # solve H(t0) + r0 s + (r1 - r0) s^2 / (2 dt) = E in the cancellation-free form
    rest = thresholds[ok] - H[m_ok - 1]
    s = 2 * rest / (r0 + np.sqrt(r0**2 + 2 * (r1 - r0) / dt * rest))
    out[ok] = (m_ok - 1) * dt + s
    out[m == 0] = 0.0
    return out


def max_stable_dt(coeffs: CoefficientSet, grid: Grid2D, eps: float) -> float:
    """``min(h_y, h_z)^2 / (2 max(eps^2 A, a))`` sampled on the grid."""
    peak = max(eps**2 * float(np.max(coeffs.A_of(grid.gy.nodes))), float(np.max(coeffs.a_of(grid.gz.nodes))))
    return min(grid.gy.h, grid.gz.h) ** 2 / (2.0 * peak)


# ------------------------------------------------------------------- results


@dataclass(frozen=True, eq=False)
class QsdEstimate:
    t: float
    histogram: np.ndarray  # (ny, nz) survivor mass per grid cell, sums to 1
    survivors: int
    n_particles: int
    tv_vs_phi: Optional[float] = None
    diagnostic: str = ""

    @property
    def noise_floor(self) -> float:
        """``3 sqrt(#cells / survivors)``."""
        if self.survivors == 0:
            return math.inf
        return 3.0 * math.sqrt(self.histogram.size / self.survivors)


Initial = Union[str, tuple, np.ndarray]


@dataclass(eq=False)
class ParticleEnsemble:
    """Particle positions, clocks and RNG streams; advanced in place."""

    coeffs: CoefficientSet
    grid: Grid2D
    eps: float
    n_particles: int
    dt: float
    seed: int
    resample: bool = False
    c_m: float = field(init=False)
    y: np.ndarray = field(init=False, repr=False)
    z: np.ndarray = field(init=False, repr=False)
    hazard: np.ndarray = field(init=False, repr=False)
    threshold: np.ndarray = field(init=False, repr=False)
    rate: np.ndarray = field(init=False, repr=False)
    alive: np.ndarray = field(init=False, repr=False)
    t: float = field(init=False, default=0.0)
    steps: int = field(init=False, default=0)

    @classmethod
    def start(cls, coeffs: CoefficientSet, grid: Grid2D, eps: float, n_particles: int, dt: float,
              seed: int, initial: Initial = "uniform", resample: bool = False) -> "ParticleEnsemble":
        if not eps > 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        if n_particles < MIN_PARTICLES:
            raise ConfigError(f"need at least {MIN_PARTICLES} particles, got {n_particles}")
        limit = max_stable_dt(coeffs, grid, eps)
        if not 0 < dt <= limit * (1 + 1e-12):
            raise ConfigError(f"dt = {dt!r} violates the stability guard dt <= {limit!r}")
        coeffs.validate(grid)
        ens = cls(coeffs, grid, eps, int(n_particles), float(dt), int(seed), bool(resample))
        ens._kern = _kernel_for(coeffs)
        ens.c_m = divergence_sup(coeffs, grid)[2]
        ens._init(initial)
        return ens

    def _init(self, initial: Initial) -> None:
        k, g, n = self._kern, self.grid, self.n_particles
        mass = _initial_cell_mass(initial, g)
        cdf = np.cumsum(mass)
        self._state = k["seed_streams"](np.uint64(self.seed), n)
        self.y = np.empty(n)
        self.z = np.empty(n)
        k["init_positions"](self._state, self.y, self.z, cdf, g.gy.n, g.gz.n, g.gy.h, g.gz.h,
                            g.gy.periodic, g.gz.periodic)
        self.threshold = k["exponentials"](self._state)
        self.hazard = np.zeros(n)
        self.rate = k["hazard_rate"](self.y, self.z, self.c_m)
        self.alive = np.ones(n, dtype=np.bool_)

    @property
    def survivors(self) -> int:
        return int(self.alive.sum())

    def advance_to(self, t_target: float) -> None:
        """Step to exactly ``t_target`` with steps no longer than ``dt``."""
        span = t_target - self.t
        if span < -1e-12:
            raise ValueError(f"cannot step backwards from t={self.t} to t={t_target}")
        if span <= 1e-12:
            return
        n_steps = int(math.ceil(span / self.dt - 1e-9))
        dt = span / n_steps
        steps, status = self._kern["advance"](
            self.y, self.z, self.hazard, self.threshold, self.rate, self.alive, self._state,
            n_steps, self.steps, dt, self.eps, self.c_m, self.grid.gy.periodic,
            self.grid.gz.periodic, self.resample, np.uint64(self.seed),
        )
        if status < 0:
            raise NumericalError(f"every particle died in step {steps}; resampling impossible")
        self.steps = steps
        self.t = float(t_target)

    def histogram(self) -> np.ndarray:
        """Counts of living particles per node cell, shape ``grid.shape``."""
        g = self.grid
        alive = self.alive
        iy = g.gy.cell_index(self.y[alive])
        iz = g.gz.cell_index(self.z[alive])
        return np.bincount(iy * g.gz.n + iz, minlength=g.size).reshape(g.shape)

    def estimate(self, reference: Optional[EigenPair] = None) -> QsdEstimate:
        counts = self.histogram()
        survivors = int(counts.sum())
        if survivors == 0:
            expected = math.exp(-self.c_m * self.t)
            msg = (f"all {self.n_particles} particles died by t={self.t}; survival is of order "
                   f"exp(-c_m t) = {expected:.3g} with c_m = {self.c_m:.4g}")
            logger.warning(msg)
            return QsdEstimate(self.t, np.zeros(self.grid.shape), 0, self.n_particles, None, msg)
        hist = counts / survivors
        tv = None
        if reference is not None:
            tv = tv_distance(hist.ravel(), reference.phi * self.grid.weights)
        return QsdEstimate(self.t, hist, survivors, self.n_particles, tv)


def _initial_cell_mass(initial: Initial, grid: Grid2D) -> np.ndarray:
    if isinstance(initial, str):
        if initial != "uniform":
            raise ConfigError(f"unknown initial distribution {initial!r}")
        return grid.weights
    if isinstance(initial, tuple):
        if len(initial) != 3 or initial[0] != "cell":
            raise ConfigError(f"initial cell must be ('cell', i, j), got {initial!r}")
        i, j = int(initial[1]), int(initial[2])
        if not (0 <= i < grid.gy.n and 0 <= j < grid.gz.n):
            raise ConfigError(f"initial cell ({i}, {j}) is outside the grid")
        mass = np.zeros(grid.size)
        mass[grid.idx(i, j)] = 1.0
        return mass
    mass = np.asarray(initial, dtype=float).ravel()
    if mass.shape != (grid.size,) or np.any(mass < 0) or not mass.sum() > 0:
        raise ConfigError("initial cell masses must be a nonnegative vector over the grid")
    return mass / mass.sum()


def qsd_sweep(coeffs: CoefficientSet, grid: Grid2D, eps: float, n_particles: int,
              t_checkpoints: Sequence[float], dt: float, seed: int, initial: Initial = "uniform",
              resample: bool = False, reference: Optional[EigenPair] = None) -> list[QsdEstimate]:
    """Conditional law at each checkpoint, all from one ensemble."""
    ts = [float(t) for t in t_checkpoints]
    if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ConfigError(f"checkpoints must be nonnegative and increasing, got {ts}")
    ens = ParticleEnsemble.start(coeffs, grid, eps, n_particles, dt, seed, initial, resample)
    out = []
    for t in ts:
        ens.advance_to(t)
        out.append(ens.estimate(reference))
    return out


def simulate(coeffs: CoefficientSet, grid: Grid2D, eps: float, n_particles: int, t_final: float,
             dt: float, seed: int, initial: Initial = "uniform", resample: bool = False,
             reference: Optional[EigenPair] = None) -> QsdEstimate:
    return qsd_sweep(coeffs, grid, eps, n_particles, [t_final], dt, seed, initial, resample, reference)[0]
