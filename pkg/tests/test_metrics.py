import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_psnr, brute_rmse, brute_ssim
from wdnet import metrics
from wdnet.errors import UsageError


def pair(seed, shape=(32, 32, 3)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.random(shape)


class TestPSNR:
    def test_identical_is_capped(self):
        a, _ = pair(0)
        assert metrics.psnr(a, a) == 99.0

    def test_constant_offset(self):
        a = np.zeros((8, 8, 3))
        b = np.full((8, 8, 3), 128 / 255)
        assert metrics.psnr(a, b) == pytest.approx(20 * math.log10(255 / 128), abs=1e-9)
        assert metrics.psnr(a, b) == pytest.approx(5.987, abs=1e-3)

    def test_symmetric_and_matches_oracle(self):
        for seed in range(5):
            a, b = pair(seed, (9, 7, 3))
            assert metrics.psnr(a, b) == metrics.psnr(b, a)
            assert metrics.psnr(a, b) == pytest.approx(brute_psnr(a, b), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            metrics.psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestRMSE:
    def test_values(self):
        a = np.zeros((6, 6, 3))
        assert metrics.rmse(a, a) == 0
        assert metrics.rmse(a, a + 10 / 255) == pytest.approx(10.0, abs=1e-9)

    def test_matches_oracle(self):
        for seed in range(5):
            a, b = pair(seed, (10, 12, 3))
            assert metrics.rmse(a, b) == pytest.approx(brute_rmse(a, b), abs=1e-9)

    def test_psnr_relation(self):
        a, b = pair(3)
        assert metrics.psnr(a, b) == pytest.approx(20 * math.log10(255 / metrics.rmse(a, b)), abs=1e-9)


class TestRMSEw:
    def test_half_mask(self):
        a = np.zeros((8, 8, 3))
        b = a.copy()
        b[:4] += 10 / 255
        m = np.zeros((8, 8))
        m[:4] = 1
        val, empty = metrics.rmse_w(a, b, m)
        assert val == pytest.approx(10.0, abs=1e-9) and not empty

    def test_empty_mask(self):
        a, b = pair(1, (8, 8, 3))
        assert metrics.rmse_w(a, b, np.zeros((8, 8))) == (0.0, True)

    def test_full_mask_is_rmse(self):
        a, b = pair(2)
        val, _ = metrics.rmse_w(a, b, np.ones((32, 32)))
        assert val == pytest.approx(metrics.rmse(a, b), abs=1e-9)

    def test_soft_mask_is_binarized(self):
        a, b = pair(4, (8, 8, 3))
        soft = np.random.default_rng(0).random((8, 8))
        assert metrics.rmse_w(a, b, soft) == metrics.rmse_w(a, b, (soft >= 0.5).astype(float))

    def test_ignores_pixels_outside_mask(self):
        a, b = pair(5, (8, 8, 3))
        m = np.zeros((8, 8))
        m[2:5, 3:7] = 1
        b2 = b.copy()
        b2[m == 0] = 0.123
        assert metrics.rmse_w(a, b, m) == metrics.rmse_w(a, b2, m)

    def test_mask_shape(self):
        with pytest.raises(UsageError):
            metrics.rmse_w(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((3, 4)))


class TestSSIM:
    def test_identical(self):
        a, _ = pair(0)
        assert metrics.ssim(a, a) == 1.0

    def test_matches_bruteforce(self):
        for seed in range(3):
            a, b = pair(seed)
            b = np.clip(0.6 * a + 0.4 * b, 0, 1)
            assert metrics.ssim(a, b) == pytest.approx(brute_ssim(a, b), abs=1e-6)

    def test_symmetric_and_bounded(self):
        a, b = pair(7)
        assert metrics.ssim(a, b) == pytest.approx(metrics.ssim(b, a), abs=1e-12)
        assert metrics.ssim(a, b) < 1.0

    def test_too_small(self):
        with pytest.raises(UsageError):
            metrics.ssim(np.zeros((10, 10, 3)), np.zeros((10, 10, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_flip_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    m = (rng.random((16, 16)) > 0.5).astype(float)
    fa, fb, fm = a[:, ::-1], b[:, ::-1], m[:, ::-1]
    assert metrics.psnr(a, b) == pytest.approx(metrics.psnr(fa, fb), abs=1e-9)
    assert metrics.rmse(a, b) == pytest.approx(metrics.rmse(fa, fb), abs=1e-9)
    assert metrics.ssim(a, b) == pytest.approx(metrics.ssim(fa, fb), abs=1e-9)
    assert metrics.rmse_w(a, b, m)[0] == pytest.approx(metrics.rmse_w(fa, fb, fm)[0], abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1 / 255, 0.5), st.integers(0, 15), st.integers(0, 15))
def test_ssim_below_one_unless_identical(seed, delta, r, c):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16, 3)) * 0.5
    b = a.copy()
    b[r, c, 0] += delta
    assert metrics.ssim(a, a) == 1.0
    # a corner pixel carries a tiny gaussian weight, so only strictness is guaranteed
    assert metrics.ssim(a, b) < 1.0


def test_mask_iou():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    assert metrics.mask_iou(a, b) == 1.0
    a[:2] = 1
    b[1:3] = 1
    assert metrics.mask_iou(a, b) == pytest.approx(1 / 3)
