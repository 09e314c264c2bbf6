"""Node-centred meshes on the unit torus or the unit interval.

A torus grid with ``n`` nodes has spacing ``1/n`` and nodes ``0, h, ...,
(n-1)h``; an interval grid has spacing ``1/(n-1)`` and includes both
endpoints. Quadrature weights are the trapezoid weights, so they always sum
to one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["Kind", "Domain1D", "Grid1D", "Grid2D", "build_grid", "cell_measure", "TORUS", "INTERVAL"]

MIN_NODES = 4


class Kind(str, enum.Enum):
    TORUS = "torus"
    INTERVAL = "interval"

    @classmethod
    def parse(cls, text: str) -> "Kind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown domain kind {text!r} (expected 'torus' or 'interval')") from None


@dataclass(frozen=True)
class Domain1D:
    kind: Kind
    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError(f"domain length must be positive, got {self.length}")
        if self.length != 1.0:
            raise ConfigError("only unit-length domains are supported")

    @property
    def periodic(self) -> bool:
        return self.kind is Kind.TORUS


TORUS = Domain1D(Kind.TORUS)
INTERVAL = Domain1D(Kind.INTERVAL)


@dataclass(frozen=True, eq=False)
class Grid1D:
    domain: Domain1D
    n: int
    h: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def periodic(self) -> bool:
        return self.domain.periodic

    @property
    def midpoints(self) -> np.ndarray:
        """Interface coordinates ``x_{i+1/2}``; ``n`` of them on a torus, ``n-1`` on an interval."""
        m = self.n if self.periodic else self.n - 1
        return (np.arange(m) + 0.5) * self.h

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        """Index of the node whose dual cell ``[x_i - h/2, x_i + h/2)`` contains ``x``."""
        i = np.floor(np.asarray(x) / self.h + 0.5).astype(np.int64)
        if self.periodic:
            return np.mod(i, self.n)
        return np.clip(i, 0, self.n - 1)

    def __eq__(self, other):
        return isinstance(other, Grid1D) and (self.domain, self.n) == (other.domain, other.n)

    def __hash__(self):
        return hash((self.domain, self.n))


def build_grid(domain: Domain1D, n: int) -> Grid1D:
    if int(n) != n or n < MIN_NODES:
        raise ConfigError(f"a grid needs at least {MIN_NODES} nodes, got {n}")
    n = int(n)
    if domain.periodic:
        h = domain.length / n
        nodes = np.arange(n) * h
        weights = np.full(n, h)
    else:
        h = domain.length / (n - 1)
        nodes = np.arange(n) * h
        nodes[-1] = domain.length
        weights = np.full(n, h)
        weights[[0, -1]] = h / 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return Grid1D(domain, n, h, nodes, weights)


def cell_measure(g: Grid1D, i: int) -> float:
    if not 0 <= i < g.n:
        raise IndexError(f"node index {i} out of range for a grid of {g.n} nodes")
    return float(g.weights[i])


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid; ``y`` is the slow variable, ``z`` the fast one.

    Fields are flattened row-major: ``idx(i, j) = i * gz.n + j``.
    """

    gy: Grid1D
    gz: Grid1D

    def __post_init__(self):
        if not (self.gy.periodic or self.gz.periodic):
            raise ConfigError("at least one of the y- and z-domains must be a torus")

    @classmethod
    def build(cls, y_kind: Kind | str, ny: int, z_kind: Kind | str, nz: int) -> "Grid2D":
        def kind(k):
            return k if isinstance(k, Kind) else Kind.parse(k)

        return cls(build_grid(Domain1D(kind(y_kind)), ny), build_grid(Domain1D(kind(z_kind)), nz))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gy.n, self.gz.n)

    @property
    def size(self) -> int:
        return self.gy.n * self.gz.n

    def idx(self, i, j):
        return np.asarray(i) * self.gz.n + np.asarray(j)

    def unravel(self, k):
        return np.divmod(k, self.gz.n)

    @property
    def weights(self) -> np.ndarray:
        """Flattened tensor-product quadrature weights."""
        return np.outer(self.gy.weights, self.gz.weights).ravel()

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.gy.nodes, self.gz.nodes, indexing="ij")

    def describe(self) -> str:
        return f"{self.gy.domain.kind.value}[{self.gy.n}] x {self.gz.domain.kind.value}[{self.gz.n}]"
