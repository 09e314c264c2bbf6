from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from anisoeig.errors import CoefficientError
from anisoeig.grid import Grid2D
from strategies import coefficient_sets

from anisoeig.operator import (
    CoefficientSet,
    apply,
    assemble_global,
    assemble_local,
    flux_operator_1d,
)


def _coeffs(**kw) -> CoefficientSet:
    return CoefficientSet.from_strings(**kw)


def test_laplacian_stencil():
    g = Grid2D.build("torus", 4, "torus", 4)
    L = assemble_global(g, _coeffs(), 1.0).toarray()
    h = 0.25
    for i in range(4):
        for j in range(4):
            row = L[g.idx(i, j)]
            assert row[g.idx(i, j)] == pytest.approx(-4 / h**2)
            for di in (-1, 1):
                assert row[g.idx((i + di) % 4, j)] == pytest.approx(1 / h**2)
            for dj in (-1, 1):
                assert row[g.idx(i, (j + dj) % 4)] == pytest.approx(1 / h**2)
            assert np.count_nonzero(row) == 5


def test_constant_potential_shifts_diagonal_exactly():
    g = Grid2D.build("torus", 4, "torus", 4)
    L0 = assemble_global(g, _coeffs(), 1.0).toarray()
    L3 = assemble_global(g, _coeffs(c="3"), 1.0).toarray()
    np.testing.assert_array_equal(L3 - L0, 3 * np.eye(16))


def test_flux_form_annihilates_constants():
    g = Grid2D.build("torus", 16, "torus", 4)
    op = assemble_global(g, _coeffs(A="1 + 0.5*cos(2*pi*y)"), 0.3)
    assert np.max(np.abs(op.matrix @ np.ones(g.size))) <= 1e-12


@settings(max_examples=30)
@given(coefficient_sets())
def test_constant_annihilation_torus(coeffs):
    g = Grid2D.build("torus", 12, "torus", 10)
    zero_transport = CoefficientSet(coeffs.A, _coeffs().B, coeffs.a, _coeffs().b, _coeffs().c)
    op = assemble_global(g, zero_transport, 0.37)
    assert np.max(np.abs(op.matrix @ np.ones(g.size))) <= 1e-11


@settings(max_examples=30)
@given(st.sampled_from(["tt", "it", "ti"]), st.data())
def test_weighted_column_sums_vanish(kinds, data):
    yk = "interval" if kinds[0] == "i" else "torus"
    zk = "interval" if kinds[1] == "i" else "torus"
    coeffs = data.draw(coefficient_sets(y_interval=yk == "interval", z_interval=zk == "interval"))
    g = Grid2D.build(yk, 9, zk, 11)
    op = assemble_global(g, coeffs, 0.25)
    Y, Z = g.mesh()
    L = op.matrix - sp.diags(coeffs.c_of(Y, Z).ravel())
    colsum = g.weights @ L
    assert np.max(np.abs(colsum)) <= 1e-12 * np.max(np.abs(L))


@settings(max_examples=20)
@given(coefficient_sets())
def test_at_most_five_nonzeros_and_finite(coeffs):
    g = Grid2D.build("torus", 8, "torus", 8)
    m = assemble_global(g, coeffs, 0.5).matrix
    assert np.diff(m.indptr).max() <= 5
    assert np.all(np.isfinite(m.data))


def test_interval_ends_match_mirror_ghost_node():
    # Independent construction: ghost value phi_{-1} = phi_1 in the centred
    # 3-point stencil, with A sampled at the mirrored midpoint.
    g = Grid2D.build("interval", 6, "torus", 4)
    coeffs = _coeffs(A="1 + 0.5*y")
    L = flux_operator_1d(g.gy, coeffs.A_of(g.gy.midpoints), np.zeros(6)).toarray()
    h = g.gy.h
    A_half = coeffs.A_of(np.array([h / 2, 1 - h / 2]))
    assert L[0, 0] == pytest.approx(-2 * A_half[0] / h**2)
    assert L[0, 1] == pytest.approx(2 * A_half[0] / h**2)
    assert L[5, 5] == pytest.approx(-2 * A_half[1] / h**2)
    assert L[5, 4] == pytest.approx(2 * A_half[1] / h**2)


@pytest.mark.parametrize("kind", ["torus", "interval"])
def test_second_order_consistency(kind):
    # (A f')' + (B f)' for f = cos(pi y) (Neumann-compatible on the interval),
    # with A = 1 + y^2/4 and B = y(1 - y) on the interval or periodic data.
    errs = []
    for n in (33, 65):
        g = Grid2D.build(kind, n, "torus", 4)
        if kind == "interval":
            A, B = "1 + y^2/4", "y*(1 - y)"
            y = g.gy.nodes
            f = np.cos(np.pi * y)
            exact = (np.pi * y / 2 * -np.sin(np.pi * y) + (1 + y**2 / 4) * -np.pi**2 * np.cos(np.pi * y)
                     + (1 - 2 * y) * f + y * (1 - y) * -np.pi * np.sin(np.pi * y))
        else:
            A, B = "1 + 0.5*sin(2*pi*y)", "cos(2*pi*y)"
            y = g.gy.nodes
            w = 2 * np.pi
            f = np.sin(w * y)
            Ay, dA = 1 + 0.5 * np.sin(w * y), 0.5 * w * np.cos(w * y)
            exact = dA * w * np.cos(w * y) - Ay * w**2 * np.sin(w * y) - w * np.sin(w * y) * f \
                + np.cos(w * y) * w * np.cos(w * y)
        co = _coeffs(A=A, B=B)
        L = flux_operator_1d(g.gy, co.A_of(g.gy.midpoints), co.B_of(g.gy.nodes))
        err = np.abs(L @ f - exact)
        errs.append(err[2:-2].max() if kind == "interval" else err.max())
    assert errs[0] / errs[1] > 3.5


def test_local_block_matches_global():
    g = Grid2D.build("torus", 6, "torus", 8)
    coeffs = _coeffs(A="1 + 0.3*cos(2*pi*y)", B="0.4*sin(2*pi*y)", a="1 + 0.2*sin(2*pi*z)",
                     b="0.5*cos(2*pi*z)", c="cos(2*pi*y)*sin(2*pi*z)")
    eps = 0.3
    L = assemble_global(g, coeffs, eps).toarray()
    Ly = flux_operator_1d(g.gy, coeffs.A_of(g.gy.midpoints), coeffs.B_of(g.gy.nodes), eps**2, eps).toarray()
    for i, y0 in enumerate(g.gy.nodes):
        block = L[i * 8:(i + 1) * 8, i * 8:(i + 1) * 8] - Ly[i, i] * np.eye(8)
        local = assemble_local(g.gz, coeffs, float(y0)).toarray()
        np.testing.assert_allclose(local, block, rtol=0, atol=1e-12)


def test_local_constant_potential_is_shifted_laplacian():
    g = Grid2D.build("torus", 4, "torus", 8)
    lap = assemble_local(g.gz, _coeffs(), 0.5).toarray()
    shifted = assemble_local(g.gz, _coeffs(c="2.5"), 0.5).toarray()
    np.testing.assert_array_equal(shifted, lap + 2.5 * np.eye(8))
    eig = np.sort(np.linalg.eigvalsh(lap))
    h = 1 / 8
    symbol = np.sort(-(2 / h**2) * (1 - np.cos(2 * np.pi * np.arange(8) / 8)))
    np.testing.assert_allclose(eig, symbol, atol=1e-10)


def test_local_potential_vanishing_at_y0():
    g = Grid2D.build("torus", 4, "interval", 9)
    a = assemble_local(g.gz, _coeffs(c="y*cos(2*pi*z)"), 0.0).toarray()
    b = assemble_local(g.gz, _coeffs(), 0.0).toarray()
    np.testing.assert_array_equal(a, b)
    with pytest.raises(CoefficientError):
        assemble_local(g.gz, _coeffs(), 1.5)


def test_eps_scaling():
    g = Grid2D.build("torus", 6, "interval", 5)
    coeffs = _coeffs(A="1 + 0.3*cos(2*pi*y)", B="0.7 + sin(2*pi*y)", b="sin(pi*z)", c="y*z")
    L1 = assemble_global(g, coeffs, 0.1).toarray()
    L2 = assemble_global(g, coeffs, 0.2).toarray()
    diff_y = flux_operator_1d(g.gy, coeffs.A_of(g.gy.midpoints), np.zeros(6)).toarray()
    trans_y = flux_operator_1d(g.gy, np.zeros(6), coeffs.B_of(g.gy.nodes)).toarray()
    expected = np.kron((0.04 - 0.01) * diff_y + (0.2 - 0.1) * trans_y, np.eye(5))
    np.testing.assert_allclose(L2 - L1, expected, atol=1e-10)
    I, J = np.nonzero(L2 - L1)
    assert np.all(I % 5 == J % 5), "eps only enters the y-coupling"


@settings(max_examples=20)
@given(coefficient_sets())
def test_adjoint(coeffs):
    g = Grid2D.build("torus", 5, "torus", 6)
    op = assemble_global(g, coeffs, 0.4)
    W = np.diag(g.weights)
    dense = np.linalg.inv(W) @ op.toarray().T @ W
    np.testing.assert_allclose(op.adjoint().toarray(), dense, atol=1e-9)
    no_transport = CoefficientSet(coeffs.A, _coeffs().B, coeffs.a, _coeffs().b, coeffs.c)
    adj = assemble_global(g, no_transport, 0.4).adjoint()
    Y, Z = g.mesh()
    np.testing.assert_allclose(adj.matrix @ np.ones(g.size), coeffs.c_of(Y, Z).ravel(), atol=1e-10)


def test_apply():
    g = Grid2D.build("torus", 4, "torus", 4)
    op = assemble_global(g, _coeffs(A="1 + 0.2*sin(2*pi*y)", B="0.3", c="z"), 0.5)
    dense = op.toarray()
    np.testing.assert_array_equal(apply(op, np.zeros(16)), np.zeros(16))
    for k in (0, 7, 15):
        e = np.zeros(16)
        e[k] = 1
        np.testing.assert_array_equal(apply(op, e), dense[:, k])
    v = np.random.default_rng(3).normal(size=16)
    np.testing.assert_allclose(apply(op, v), dense @ v, rtol=0, atol=1e-13 * np.abs(dense).max())
    with pytest.raises(ValueError):
        apply(op, np.ones(15))


def test_shifted_and_metadata():
    g = Grid2D.build("torus", 4, "torus", 4)
    op = assemble_global(g, _coeffs(), 0.5)
    np.testing.assert_array_equal(op.shifted(2.0).diagonal, op.diagonal + 2.0)
    assert op.tag == "eps=0.5"
    assert assemble_local(g.gz, _coeffs(), 0.0).tag == "local"


@pytest.mark.parametrize(
    "kinds, kw, match",
    [
        (("torus", "torus"), dict(A="cos(2*pi*y)"), "elliptic"),
        (("torus", "torus"), dict(a="0"), "elliptic"),
        (("interval", "torus"), dict(B="y"), "no-flux"),
        (("torus", "interval"), dict(b="1 + z"), "no-flux"),
    ],
)
def test_coefficient_validation(kinds, kw, match):
    g = Grid2D.build(kinds[0], 8, kinds[1], 8)
    with pytest.raises(CoefficientError, match=match):
        assemble_global(g, _coeffs(**kw), 0.5)


@pytest.mark.parametrize("kw", [dict(A="z"), dict(B="y*z"), dict(a="y"), dict(b="1 + y")])
def test_variable_dependence(kw):
    with pytest.raises(CoefficientError, match="may depend only"):
        _coeffs(**kw)


def test_eps_must_be_positive():
    with pytest.raises(CoefficientError):
        assemble_global(Grid2D.build("torus", 4, "torus", 4), _coeffs(), 0.0)


def test_dump(tmp_path):
    g = Grid2D.build("interval", 4, "torus", 4)
    op = assemble_global(g, _coeffs(A="1 + y/3", c="cos(z)"), 0.3)
    path = tmp_path / "op.txt"
    op.dump(path)
    lines = path.read_text().splitlines()
    assert len(lines) == op.matrix.nnz
    rows = [tuple(map(int, ln.split()[:2])) for ln in lines]
    assert rows == sorted(rows)
    back = np.zeros((16, 16))
    for ln in lines:
        r, c, v = ln.split()
        back[int(r), int(c)] = float(v)
    np.testing.assert_array_equal(back, op.toarray())
