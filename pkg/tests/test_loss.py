import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdpl.dct import dct2_8x8, idct2_8x8
from fdpl.loss import (
    FDPLLoss,
    antidiagonal_transpose,
    compute_diff_matrix,
    fdpl_gradient,
    fdpl_loss,
    jpeg_luminance_qtable,
    load_weight_matrix,
    make_loss,
    mse_gradient,
    mse_loss,
    save_weight_matrix,
)

Q = jpeg_luminance_qtable()
ONES = np.ones((8, 8))
mats = arrays(np.float64, (8, 8), elements=st.floats(0.1, 100))
planes = arrays(np.float64, (8, 16), elements=st.floats(-1, 1))


def finite_diff(f, x, h=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_qtable_annex_k():
    assert Q[0, 0] == 16 and Q[7, 7] == 99
    assert Q[0, 1] == 11 and Q[6, 5] == 121
    assert np.all(Q > 0) and np.all(Q == np.round(Q))
    assert Q[4:, 4:].mean() > Q[:4, :4].mean()


def test_qtable_is_a_copy():
    q = jpeg_luminance_qtable()
    q[0, 0] = 0
    assert jpeg_luminance_qtable()[0, 0] == 16


def test_antidiagonal_transpose():
    at = antidiagonal_transpose(Q)
    assert at[7, 7] == 16
    for j in range(8):
        for k in range(8):
            assert at[j, k] == Q[7 - k, 7 - j]
            if j + k == 7:
                assert at[j, k] == Q[j, k]
    assert np.array_equal(antidiagonal_transpose(at), Q)
    assert sorted(at.ravel()) == sorted(Q.ravel())


@given(mats)
def test_antidiagonal_involution(w):
    assert np.array_equal(antidiagonal_transpose(antidiagonal_transpose(w)), w)


def test_diff_matrix_identical_pairs(rng):
    x = rng.random((16, 16))
    stats = compute_diff_matrix([(x, x.copy())])
    assert np.all(stats.raw == 0)
    assert np.all(stats.d > 0)
    assert stats.num_blocks == 4


def test_diff_matrix_single_block_scalar():
    gt = np.arange(64, dtype=float).reshape(8, 8) / 64
    deg = gt * 0.5 + 0.1
    eps = 1e-3
    cg, cd = dct2_8x8(gt), dct2_8x8(deg)
    expect = np.zeros((8, 8))
    for j in range(8):
        for k in range(8):
            expect[j, k] = abs(cg[j, k] - cd[j, k]) / (abs(cg[j, k]) + eps)
    stats = compute_diff_matrix(iter([(gt, deg)]), eps)
    assert np.allclose(stats.raw, expect, rtol=1e-12)
    assert np.allclose(stats.d, np.maximum(expect / expect.mean(), 1e-6))
    assert stats.d.mean() == pytest.approx(1.0, abs=1e-6)


def test_diff_matrix_aggregate_single_block_matches_tile():
    gt = np.arange(64, dtype=float).reshape(8, 8) / 64
    deg = gt * 0.5 + 0.1
    tile = compute_diff_matrix([(gt, deg)], reduction="tile")
    agg = compute_diff_matrix([(gt, deg)], reduction="aggregate")
    assert np.allclose(tile.raw, agg.raw, rtol=1e-12)
    assert agg.reduction == "aggregate"


def test_diff_matrix_aggregate_oracle(rng):
    pairs = [(rng.random((16, 24)), rng.random((16, 24))) for _ in range(3)]
    eps = 1e-2
    diffs, mags = [], []
    for gt, deg in pairs:
        for r in range(0, 16, 8):
            for c in range(0, 24, 8):
                cg, cd = dct2_8x8(gt[r : r + 8, c : c + 8]), dct2_8x8(deg[r : r + 8, c : c + 8])
                diffs.append(np.abs(cg - cd))
                mags.append(np.abs(cg))
    expect = np.mean(diffs, axis=0) / (np.mean(mags, axis=0) + eps)
    stats = compute_diff_matrix(pairs, eps, reduction="aggregate")
    assert stats.num_blocks == 18
    assert np.allclose(stats.raw, expect, rtol=1e-12)


def test_diff_matrix_errors(rng):
    with pytest.raises(ValueError):
        compute_diff_matrix([])
    with pytest.raises(ValueError):
        compute_diff_matrix([(np.zeros((8, 8)), np.zeros((8, 16)))])
    with pytest.raises(ValueError):
        compute_diff_matrix([(np.zeros((8, 8)), np.zeros((8, 8)))], epsilon=0)
    with pytest.raises(ValueError, match="reduction"):
        compute_diff_matrix([(np.zeros((8, 8)), np.zeros((8, 8)))], reduction="median")


def test_diff_matrix_deterministic(rng):
    pairs = [(rng.random((16, 24)), rng.random((16, 24))) for _ in range(3)]
    a = compute_diff_matrix(pairs).d
    b = compute_diff_matrix(pairs).d
    assert np.array_equal(a, b)


def test_fdpl_zero_on_identical(rng):
    y = rng.random((16, 16))
    assert fdpl_loss(y, y, Q, ONES) == 0.0
    assert np.all(fdpl_gradient(y, y, Q, ONES) == 0)


def test_fdpl_single_coefficient():
    d = np.full((8, 8), 2.0)
    c = np.zeros((8, 8))
    c[2, 5] = 0.3
    out = idct2_8x8(c)
    assert fdpl_loss(np.zeros((8, 8)), out, Q, d) == pytest.approx(0.09 * 2.0 / Q[2, 5], rel=1e-12)


def test_fdpl_parseval_mse(rng):
    gt, out = rng.random((16, 24)), rng.random((16, 24))
    assert fdpl_loss(gt, out, ONES, ONES) == pytest.approx(64 * np.mean((gt - out) ** 2), rel=1e-9)
    assert np.allclose(fdpl_gradient(gt, out, ONES, ONES), 64 * mse_gradient(gt, out), atol=1e-12)
    # B = 6 blocks: -(128 / B) (gt - out) / 64 per pixel
    assert np.allclose(fdpl_gradient(gt, out, ONES, ONES), -(128 / 6) * (gt - out) / 64)


def test_fdpl_gradient_finite_differences(rng):
    d = rng.uniform(0.2, 3, (8, 8))
    for _ in range(5):
        gt, out = rng.random((16, 8)), rng.random((16, 8))
        num = finite_diff(lambda o: fdpl_loss(gt, o, Q, d), out)
        ana = fdpl_gradient(gt, out, Q, d)
        assert np.max(np.abs(num - ana) / np.maximum(np.abs(ana), 1e-8)) < 1e-4


def test_fdpl_batch_is_mean(rng):
    gt, out = rng.random((3, 8, 16)), rng.random((3, 8, 16))
    d = rng.uniform(0.5, 2, (8, 8))
    per = [fdpl_loss(gt[i], out[i], Q, d) for i in range(3)]
    assert fdpl_loss(gt, out, Q, d) == pytest.approx(np.mean(per))
    grads = np.stack([fdpl_gradient(gt[i], out[i], Q, d) for i in range(3)])
    assert np.allclose(fdpl_gradient(gt, out, Q, d), grads / 3)


@settings(deadline=None)
@given(planes, planes, mats, st.floats(0.1, 10))
def test_fdpl_properties(gt, out, d, c):
    value = fdpl_loss(gt, out, Q, d)
    assert value >= 0
    assert fdpl_loss(out, gt, Q, d) == pytest.approx(value, rel=1e-12, abs=1e-300)
    assert np.allclose(fdpl_gradient(out, gt, Q, d), -fdpl_gradient(gt, out, Q, d))
    assert fdpl_loss(gt, out, Q, c * d) == pytest.approx(c * value, rel=1e-9, abs=1e-300)
    if np.max(np.abs(gt - out)) > 1e-100:  # squares of tinier gaps underflow
        assert value > 0


def test_fdpl_shape_mismatch():
    with pytest.raises(ValueError):
        fdpl_loss(np.zeros((8, 8)), np.zeros((8, 16)), Q, ONES)
    with pytest.raises(ValueError):
        fdpl_loss(np.zeros((8, 8)), np.zeros((8, 8)), Q, -ONES)


def test_mse_basic():
    assert mse_loss(np.ones((2, 2)), np.zeros((2, 2))) == 1.0
    assert np.all(mse_gradient(np.ones((2, 2)), np.zeros((2, 2))) == -0.5)
    assert mse_loss(np.ones((2, 2)), np.ones((2, 2))) == 0.0


def test_mse_naive(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    total = 0.0
    for i in range(16):
        for j in range(16):
            total += (a[i, j] - b[i, j]) ** 2
    assert mse_loss(a, b) == pytest.approx(total / 256, abs=1e-12)
    assert np.allclose(mse_gradient(a, b), finite_diff(lambda o: mse_loss(a, o), b), atol=1e-9)


def test_make_loss():
    assert make_loss("mse").kind == "mse"
    with pytest.raises(ValueError):
        make_loss("fdpl")
    at = make_loss("fdpl-at", ONES)
    assert isinstance(at, FDPLLoss) and np.array_equal(at.q, antidiagonal_transpose(Q))
    with pytest.raises(ValueError):
        make_loss("l1")


def test_weight_file_roundtrip(tmp_path, rng):
    w = rng.uniform(0.01, 5, (8, 8))
    path = tmp_path / "d.txt"
    save_weight_matrix(w, path, ["num_blocks = 3", "epsilon = 0.001"])
    text = path.read_text().splitlines()
    assert text[0] == "# num_blocks = 3" and len(text) == 10
    assert np.array_equal(load_weight_matrix(path), w)


def test_weight_file_bad(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(ValueError):
        load_weight_matrix(path)
