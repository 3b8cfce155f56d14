import math

import numpy as np
import pytest

from detproc import ust_oracle as uo
from detproc.sampling import chi2_test
from detproc.spectral import fourier_coeffs
from detproc.symbol import builtin_symbol


def test_small_trees_are_spanning():
    r, u = uo.wilson_batch(2, 200, seed=1)
    for s in range(200):
        t = uo.TorusTree(2, r[s], u[s])
        assert t.n_edges == 3 and t.is_spanning_tree()


def test_large_trees_are_spanning():
    r, u = uo.wilson_batch(64, 100, seed=2)
    assert all(uo.TorusTree(64, r[s], u[s]).is_spanning_tree() for s in range(100))


def test_not_a_tree_detected():
    r = np.ones((3, 3), np.uint8)
    u = np.zeros((3, 3), np.uint8)
    assert not uo.TorusTree(3, r, u).is_spanning_tree()
    r[0, 0] = 0
    u[0, 0] = 1
    r[1, 1] = 0  # 8 edges but two cycles survive
    assert uo.TorusTree(3, r, u).n_edges == 8
    assert not uo.TorusTree(3, r, u).is_spanning_tree()


def test_edge_frequency_n4():
    n, S = 4, 10_000
    r, u = uo.wilson_batch(n, S, seed=3)
    p = (n * n - 1) / (2 * n * n)
    se = math.sqrt(p * (1 - p) / S)
    freq = np.concatenate([r.mean(0).ravel(), u.mean(0).ravel()])
    assert np.all(np.abs(freq - p) <= 4 * se)


def test_uniform_over_trees_n3():
    n, S = 3, 100_000
    r, u = uo.wilson_batch(n, S, seed=4)
    keys = np.packbits(np.concatenate([r.reshape(S, -1), u.reshape(S, -1)], 1), axis=1)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    # the 3 x 3 torus has 11664 spanning trees
    assert len(counts) <= 11664
    full = np.zeros(11664)
    full[: len(counts)] = counts
    assert chi2_test(full, np.full(11664, 1 / 11664)) > 1e-3


def test_seeded_determinism():
    a = uo.wilson_ust(8, seed=5)
    b = uo.wilson_ust(8, seed=5)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != uo.wilson_ust(8, seed=6).to_csv()
    assert a.to_csv().splitlines()[0] == "x,y,direction"
    with pytest.raises(ValueError):
        uo.wilson_batch(1, 1)


def test_edge_line_geometry():
    n = 5
    r = np.arange(n * n).reshape(1, n, n)
    u = 100 + np.arange(n * n).reshape(1, n, n)
    assert uo.edge_lines(r, u, "horizontal").shape == (1, n, n)
    xa = uo.edge_lines(r, u, "x-axis")
    assert list(xa[0, 2]) == [r[0, x, 2] for x in range(n)]
    dg = uo.edge_lines(r, u, "diagonal")
    assert list(dg[0, 1]) == [r[0, k, (k + 1) % n] for k in range(n)]
    zz = uo.edge_lines(r, u, "zigzag")
    assert zz.shape == (1, n, 2 * n)
    assert zz[0, 0, 2] == r[0, 1, 1] and zz[0, 0, 3] == u[0, 2, 1]
    with pytest.raises(ValueError):
        uo.edge_lines(r, u, "vertical")


def test_edge_process_single_tree():
    t = uo.wilson_ust(6, seed=7)
    assert uo.edge_process(t, "horizontal").shape == (6, 6)
    assert uo.edge_process(t, "zigzag").shape == (12,)


def test_compare_on_independent_bits():
    rng = np.random.default_rng(8)
    X = (rng.random((4000, 3, 50)) < 0.5).astype(np.uint8)
    t = fourier_coeffs(builtin_symbol("const", 0.5), 3)
    rep = uo.compare_to_symbol(X, t, [1, 2, 3], allowance=0.0)
    assert rep.passed
    assert all(c.se > 0 for c in rep.lags)
    assert rep.to_dict()["finite_size_allowance"] == 0.0


def test_compare_flags_wrong_prediction():
    rng = np.random.default_rng(9)
    X = (rng.random((4000, 50)) < 0.5).astype(np.uint8)
    t = fourier_coeffs(builtin_symbol("sin2"), 3)  # predicts -1/16 at lag 1
    rep = uo.compare_to_symbol(X, t, [1], allowance=0.01)
    assert not rep.lags[0].passed


@pytest.fixture(scope="module")
def torus32():
    return uo.wilson_batch(32, 2000, seed=10)


def test_horizontal_field_mean_and_lag(torus32):
    r, u = torus32
    t = fourier_coeffs(builtin_symbol("ust2d"), (2, 2))
    rep = uo.compare_to_symbol(uo.edge_lines(r, u, "horizontal"), t, [(0, 1), (1, 0)])
    assert abs(rep.mean - 0.5) < 0.01
    assert rep.passed


def test_axis_and_diagonal_lines(torus32):
    r, u = torus32
    g = fourier_coeffs(builtin_symbol("ust_axis_g"), 2)
    assert abs(g[1]) == pytest.approx(abs(0.5 - 2 / math.pi), abs=1e-9)
    assert uo.compare_to_symbol(uo.edge_lines(r, u, "x-axis"), g, [1, 2]).passed
    half = fourier_coeffs(builtin_symbol("const", 0.5), 2)
    rep = uo.compare_to_symbol(uo.edge_lines(r, u, "diagonal"), half, [1, 2], allowance=0.005)
    assert rep.passed


def test_zigzag_line(torus32):
    r, u = torus32
    z = fourier_coeffs(builtin_symbol("zigzag"), 3)
    assert abs(z[1]) == pytest.approx(abs(1 / math.pi - 0.5), abs=1e-12)
    assert uo.compare_to_symbol(uo.edge_lines(r, u, "zigzag"), z, [1, 2, 3]).passed
