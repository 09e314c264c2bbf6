from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisoeig.errors import ConfigError
from anisoeig.grid import INTERVAL, TORUS, Domain1D, Grid2D, Kind, build_grid, cell_measure


def test_torus_nodes():
    g = build_grid(TORUS, 4)
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75])
    assert g.h == 0.25


def test_interval_nodes():
    g = build_grid(INTERVAL, 5)
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1])
    assert g.h == 0.25
    assert g.nodes[-1] == 1.0


@pytest.mark.parametrize("n", [3, 0, -1, 2.5])
def test_too_few_nodes(n):
    with pytest.raises(ConfigError):
        build_grid(TORUS, n)


def test_cell_measure_examples():
    assert cell_measure(build_grid(TORUS, 4), 2) == 0.25
    assert cell_measure(build_grid(INTERVAL, 5), 0) == 0.125
    assert cell_measure(build_grid(INTERVAL, 5), 2) == 0.25
    with pytest.raises(IndexError):
        cell_measure(build_grid(TORUS, 4), 4)
    with pytest.raises(IndexError):
        cell_measure(build_grid(TORUS, 4), -1)


@given(st.sampled_from([TORUS, INTERVAL]), st.integers(4, 500))
def test_weights_partition_unity(domain, n):
    g = build_grid(domain, n)
    assert sum(cell_measure(g, i) for i in range(n)) == pytest.approx(1.0, abs=1e-13)


@given(st.integers(4, 300))
def test_trapezoid_integrates_cosine_to_zero_on_torus(n):
    g = build_grid(TORUS, n)
    assert abs(np.dot(g.weights, np.cos(2 * np.pi * g.nodes))) <= 1e-12


def test_domain_length_fixed_to_one():
    with pytest.raises(ConfigError):
        Domain1D(Kind.TORUS, 2.0)
    with pytest.raises(ConfigError):
        Domain1D(Kind.TORUS, 0.0)


def test_grid2d_requires_a_torus():
    with pytest.raises(ConfigError):
        Grid2D.build("interval", 8, "interval", 8)
    with pytest.raises(ConfigError):
        Grid2D.build("sphere", 8, "torus", 8)
    assert Grid2D.build("Torus", 8, "interval", 6).describe() == "torus[8] x interval[6]"


@given(st.integers(4, 20), st.integers(4, 20))
def test_index_map_is_a_bijection(ny, nz):
    g = Grid2D.build("torus", ny, "interval", nz)
    I, J = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    k = g.idx(I, J).ravel()
    assert g.size == ny * nz
    np.testing.assert_array_equal(np.sort(k), np.arange(g.size))
    i2, j2 = g.unravel(k)
    np.testing.assert_array_equal(i2, I.ravel())
    np.testing.assert_array_equal(j2, J.ravel())
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-13)


def test_mesh_matches_index_map():
    g = Grid2D.build("torus", 4, "torus", 5)
    Y, Z = g.mesh()
    assert Y.ravel()[g.idx(2, 3)] == g.gy.nodes[2]
    assert Z.ravel()[g.idx(2, 3)] == g.gz.nodes[3]


def test_cell_index():
    t = build_grid(TORUS, 4)
    np.testing.assert_array_equal(t.cell_index(np.array([0.0, 0.12, 0.13, 0.99, 0.874])), [0, 0, 1, 0, 3])
    iv = build_grid(INTERVAL, 5)
    np.testing.assert_array_equal(iv.cell_index(np.array([0.0, 0.124, 0.126, 1.0])), [0, 0, 1, 4])
