"""Finite-difference assembly of the anisotropic elliptic operator.

The global operator acts on fields over the tensor grid::

    L_eps phi = eps^2 d_y(A d_y phi) + eps d_y(B phi) + d_z(a d_z phi) + d_z(b phi) + c phi

and the local operator at a frozen slow coordinate ``y0`` is the ``z``-part
plus ``c(y0, .)``. Both use the conservative flux form: diffusion fluxes are
taken at half-nodes with the coefficient sampled at the midpoint, the
transport flux ``B phi`` is averaged onto half-nodes (a centred difference),
and interval ends are half-cells whose outer flux is zero. With the trapezoid
weights ``w`` this gives ``sum_i w_i (L - diag(c))_{ik} = 0`` for every
column ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from . import expr as ex
from .errors import CoefficientError, ExprSyntaxError
from .grid import Grid1D, Grid2D

__all__ = [
    "CoefficientSet",
    "SparseOperator",
    "assemble_global",
    "assemble_local",
    "apply",
    "flux_operator_1d",
    "NO_FLUX_TOL",
]

NO_FLUX_TOL = 1e-12

_DEPENDENCE = {"A": {"y"}, "B": {"y"}, "a": {"z"}, "b": {"z"}, "c": {"y", "z"}}


@dataclass(frozen=True)
class CoefficientSet:
    """Diffusion ``A(y), a(z)``, transport ``B(y), b(z)`` and potential ``c(y, z)``."""

    A: ex.Expr
    B: ex.Expr
    a: ex.Expr
    b: ex.Expr
    c: ex.Expr
    sources: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name, allowed in _DEPENDENCE.items():
            extra = ex.variables(getattr(self, name)) - allowed
            if extra:
                raise CoefficientError(
                    f"coefficient {name} may depend only on {sorted(allowed)}, "
                    f"but uses {sorted(extra)}"
                )

    @classmethod
    def from_strings(cls, A="1", B="0", a="1", b="0", c="0") -> "CoefficientSet":
        sources = dict(A=A, B=B, a=a, b=b, c=c)
        parsed = {}
        for name, text in sources.items():
            try:
                parsed[name] = ex.parse(str(text))
            except ExprSyntaxError as err:
                raise CoefficientError(f"coefficient {name} = {text!r}: {err}") from err
        return cls(**parsed, sources=sources)

    def source(self, name: str) -> str:
        return self.sources.get(name) or ex.to_string(getattr(self, name))

    # Each coefficient evaluated on the variable it depends on.
    def A_of(self, y):
        return ex.evaluate(self.A, y, np.zeros_like(np.asarray(y, dtype=float)))

    def B_of(self, y):
        return ex.evaluate(self.B, y, np.zeros_like(np.asarray(y, dtype=float)))

    def a_of(self, z):
        return ex.evaluate(self.a, np.zeros_like(np.asarray(z, dtype=float)), z)

    def b_of(self, z):
        return ex.evaluate(self.b, np.zeros_like(np.asarray(z, dtype=float)), z)

    def c_of(self, y, z):
        return ex.evaluate(self.c, y, z)

    def validate(self, grid: Union[Grid2D, Grid1D], axes: str = "yz") -> None:
        """Check ellipticity and the no-flux condition on the sampled grid.

        ``grid`` may be a :class:`Grid2D`, or a single z-grid with ``axes="z"``.
        """
        checks = []
        if "y" in axes:
            checks.append(("A", "B", self.A_of, self.B_of, grid.gy))
        if "z" in axes:
            checks.append(("a", "b", self.a_of, self.b_of, grid if axes == "z" else grid.gz))
        for dname, tname, dfun, tfun, g in checks:
            samples = np.concatenate([dfun(g.nodes), dfun(g.midpoints)])
            dmin = float(samples.min())
            if not dmin > 0:
                raise CoefficientError(
                    f"diffusion coefficient {dname} is not uniformly elliptic: min {dmin:.6g} <= 0"
                )
            if not g.periodic:
                ends = np.abs(tfun(np.array([0.0, 1.0])))
                if ends.max() > NO_FLUX_TOL:
                    raise CoefficientError(
                        f"transport coefficient {tname} must vanish at the interval ends "
                        f"(no-flux condition): |{tname}(0)|={ends[0]:.3g}, |{tname}(1)|={ends[1]:.3g}"
                    )


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Compressed-row matrix plus the quadrature weights of its grid."""

    matrix: sp.csr_matrix
    weights: np.ndarray
    grid: Union[Grid2D, Grid1D]
    eps: Optional[float] = None  # None for a local (z-only) operator
    y0: Optional[float] = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def tag(self) -> str:
        return "local" if self.eps is None else f"eps={self.eps!r}"

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def shifted(self, delta: float) -> "SparseOperator":
        m = (self.matrix + delta * sp.identity(self.dimension, format="csr")).tocsr()
        return SparseOperator(m, self.weights, self.grid, self.eps, self.y0)

    def adjoint(self) -> "SparseOperator":
        """Weighted adjoint ``L*_{pq} = w_q L_{qp} / w_p``."""
        w = self.weights
        m = (sp.diags(1.0 / w) @ self.matrix.T @ sp.diags(w)).tocsr()
        return SparseOperator(m, w, self.grid, self.eps, self.y0)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump(self, path: Union[str, Path]) -> None:
        """Write ``row col value`` lines, row-major, 17 significant digits."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="ascii") as fh:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {v:.17g}\n")


def flux_operator_1d(g: Grid1D, diff_mid, trans_nodes, diff_scale: float = 1.0,
                     trans_scale: float = 1.0) -> sp.csr_matrix:
    """1-D ``diff_scale * d(D d.) + trans_scale * d(T .)`` in flux form.

    ``diff_mid`` holds ``D`` at ``g.midpoints``, ``trans_nodes`` holds ``T``
    at ``g.nodes``.
    """
    n, h = g.n, g.h
    D = np.asarray(diff_mid, dtype=float) * diff_scale / h**2
    T = np.asarray(trans_nodes, dtype=float) * trans_scale
    idx = np.arange(n)
    if g.periodic:
        left, right = (idx - 1) % n, (idx + 1) % n
        d_right, d_left = D, D[left]
        rows = np.concatenate([idx, idx, idx])
        cols = np.concatenate([idx, right, left])
        vals = np.concatenate([
            -(d_right + d_left),
            d_right + T[right] / (2 * h),
            d_left - T[left] / (2 * h),
        ])
    else:
        inner = idx[1:-1]
        rows = [inner, inner, inner, [0, 0], [n - 1, n - 1]]
        cols = [inner, inner + 1, inner - 1, [0, 1], [n - 1, n - 2]]
        vals = [
            -(D[inner] + D[inner - 1]),
            D[inner] + T[inner + 1] / (2 * h),
            D[inner - 1] - T[inner - 1] / (2 * h),
            # half-cell [0, h/2]: zero flux through x=0
            [-2 * D[0] + T[0] / h, 2 * D[0] + T[1] / h],
            # half-cell [1-h/2, 1]: zero flux through x=1
            [-2 * D[n - 2] - T[n - 1] / h, 2 * D[n - 2] - T[n - 2] / h],
        ]
        rows, cols, vals = (np.concatenate([np.asarray(v) for v in x]) for x in (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _z_part(gz: Grid1D, coeffs: CoefficientSet) -> sp.csr_matrix:
    return flux_operator_1d(gz, coeffs.a_of(gz.midpoints), coeffs.b_of(gz.nodes))


def _y_part(gy: Grid1D, coeffs: CoefficientSet, eps: float) -> sp.csr_matrix:
    return flux_operator_1d(gy, coeffs.A_of(gy.midpoints), coeffs.B_of(gy.nodes), eps**2, eps)


def assemble_global(grid: Grid2D, coeffs: CoefficientSet, eps: float) -> SparseOperator:
    if not eps > 0:
        raise CoefficientError(f"eps must be positive, got {eps}")
    coeffs.validate(grid)
    Y, Z = grid.mesh()
    c = coeffs.c_of(Y, Z).ravel()
    Ly = _y_part(grid.gy, coeffs, eps)
    Lz = _z_part(grid.gz, coeffs)
    m = (
        sp.kron(Ly, sp.identity(grid.gz.n), format="csr")
        + sp.kron(sp.identity(grid.gy.n), Lz, format="csr")
        + sp.diags(c, format="csr")
    ).tocsr()
    m.sort_indices()
    return SparseOperator(m, grid.weights, grid, eps=float(eps))


def assemble_local(gz: Grid1D, coeffs: CoefficientSet, y0: float) -> SparseOperator:
    if not 0.0 <= y0 <= 1.0:
        raise CoefficientError(f"y0={y0} lies outside the unit y-domain")
    coeffs.validate(gz, axes="z")
    c = coeffs.c_of(np.full(gz.n, float(y0)), gz.nodes)
    m = (_z_part(gz, coeffs) + sp.diags(c, format="csr")).tocsr()
    m.sort_indices()
    return SparseOperator(m, gz.weights.copy(), gz, eps=None, y0=float(y0))


def apply(op: SparseOperator, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (op.dimension,):
        raise ValueError(f"vector of shape {v.shape} does not match operator dimension {op.dimension}")
    return op.matrix @ v
