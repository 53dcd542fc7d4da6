import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wdnet.errors import UsageError
from wdnet.imaging import binarize, compose, decompose, mask_from_alpha, merge_masked


def rand_triple(rng, h=8, w=8, amax=1.0):
    y = rng.random((h, w, 3), dtype=np.float32)
    wm = rng.random((h, w, 3), dtype=np.float32)
    a = (rng.random((h, w), dtype=np.float32) * amax).astype(np.float32)
    return y, wm, a


def full(v, shape=(4, 5, 3)):
    return np.full(shape, v, dtype=np.float32)


class TestCompose:
    def test_zero_alpha_is_identity(self):
        y, w, _ = rand_triple(np.random.default_rng(0))
        np.testing.assert_array_equal(compose(y, w, np.zeros(y.shape[:2], np.float32)), y)

    def test_unit_alpha_gives_watermark(self):
        y, w, _ = rand_triple(np.random.default_rng(1))
        np.testing.assert_array_equal(compose(y, w, np.ones(y.shape[:2], np.float32)), w)

    def test_hand_value(self):
        x = compose(full(0.2), full(0.8), np.full((4, 5), 0.5, np.float32))
        np.testing.assert_allclose(x, 0.5, atol=1e-7)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            compose(full(0.2), full(0.8), np.zeros((4, 4), np.float32))
        with pytest.raises(UsageError):
            compose(full(0.2), full(0.8, (4, 4, 3)), np.zeros((4, 5), np.float32))

    def test_accepts_trailing_channel_matte(self):
        y, w, a = rand_triple(np.random.default_rng(2))
        np.testing.assert_array_equal(compose(y, w, a), compose(y, w, a[..., None]))

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(3)
        y, w, _ = rand_triple(rng)
        alphas = np.linspace(0, 1, 11, dtype=np.float32)
        xs = np.stack([compose(y, w, np.full(y.shape[:2], a, np.float32)) for a in alphas])
        # x moves linearly from y to w: x(a) - y == a * (w - y)
        for a, x in zip(alphas, xs):
            np.testing.assert_allclose(x - y, a * (w - y), atol=1e-6)


class TestDecompose:
    def test_zero_alpha_is_identity(self):
        x, w, _ = rand_triple(np.random.default_rng(4))
        np.testing.assert_array_equal(decompose(x, w, np.zeros(x.shape[:2], np.float32)), x)

    def test_hand_value(self):
        y = decompose(full(0.5), full(0.8), np.full((4, 5), 0.5, np.float32))
        np.testing.assert_allclose(y, 0.2, atol=1e-6)

    def test_opaque_pixels_stay_finite(self):
        x, w, _ = rand_triple(np.random.default_rng(5))
        y = decompose(x, w, np.ones(x.shape[:2], np.float32))
        assert np.isfinite(y).all()
        assert y.min() >= 0 and y.max() <= 1

    def test_rejects_nonpositive_eps(self):
        x, w, a = rand_triple(np.random.default_rng(6))
        with pytest.raises(UsageError):
            decompose(x, w, a, eps=0.0)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            y, w, a = rand_triple(rng, 16, 16, amax=0.9)
            back = decompose(compose(y, w, a), w, a, 1e-6)
            assert np.abs(back - y).max() < 1e-5

    def test_torch_layout_matches_numpy(self):
        y, w, a = rand_triple(np.random.default_rng(8), amax=0.9)
        x = compose(y, w, a)
        t = lambda im: torch.from_numpy(im).permute(2, 0, 1)[None]
        out = decompose(t(x), t(w), torch.from_numpy(a)[None, None])
        np.testing.assert_allclose(out[0].permute(1, 2, 0).numpy(), decompose(x, w, a), atol=1e-7)


class TestMerge:
    def test_mask_extremes(self):
        y, x, _ = rand_triple(np.random.default_rng(9))
        np.testing.assert_array_equal(merge_masked(y, x, np.zeros(y.shape[:2], np.float32)), x)
        np.testing.assert_array_equal(merge_masked(y, x, np.ones(y.shape[:2], np.float32)), y)

    def test_soft_mask(self):
        out = merge_masked(full(0.0), full(1.0), np.full((4, 5), 0.5, np.float32))
        np.testing.assert_allclose(out, 0.5)

    def test_decompose_then_merge_recovers_target(self):
        rng = np.random.default_rng(10)
        y, w, a = rand_triple(rng, 16, 16, amax=0.9)
        a[a < 0.3] = 0.0  # mixture of untouched and watermarked pixels
        x = compose(y, w, a)
        tau = 0.1
        out = merge_masked(decompose(x, w, a), x, mask_from_alpha(a, tau))
        inside = a > tau
        np.testing.assert_allclose(out[inside], y[inside], atol=1e-5)
        np.testing.assert_array_equal(out[~inside], x[~inside])


class TestMask:
    def test_values(self):
        assert mask_from_alpha(np.zeros((3, 3), np.float32)).sum() == 0
        assert mask_from_alpha(np.array([[0.5]], np.float32), 0.1)[0, 0] == 1
        assert mask_from_alpha(np.array([[0.05]], np.float32), 0.1)[0, 0] == 0

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_tau_range(self, tau):
        with pytest.raises(UsageError):
            mask_from_alpha(np.zeros((2, 2), np.float32), tau)

    def test_binarize_soft(self):
        soft = np.array([[0.49, 0.5, 0.9]], np.float32)
        np.testing.assert_array_equal(binarize(soft), [[0, 1, 1]])


alpha_grids = arrays(np.float32, (6, 6), elements=st.floats(0, 1, width=32))


@settings(max_examples=60, deadline=None)
@given(alpha_grids, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_mask_monotone_in_tau(alpha, t1, t2):
    lo, hi = sorted((t1, t2))
    assert (mask_from_alpha(alpha, hi) <= mask_from_alpha(alpha, lo)).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 7), st.integers(0, 7))
def test_operations_are_pixel_local(seed, r, c):
    rng = np.random.default_rng(seed)
    y, w, a = rand_triple(rng, amax=0.9)
    x = compose(y, w, a)
    m = mask_from_alpha(a)
    base = [compose(y, w, a), decompose(x, w, a), merge_masked(y, x, m), mask_from_alpha(a)]
    y2 = y.copy()
    y2[r, c] = 1.0 - y2[r, c]
    a2 = a.copy()
    a2[r, c] = 0.95 - a2[r, c]
    x2 = x.copy()
    x2[r, c] = 1.0 - x2[r, c]
    pert = [compose(y2, w, a2), decompose(x2, w, a2), merge_masked(y2, x2, mask_from_alpha(a2)), mask_from_alpha(a2)]
    keep = np.ones((8, 8), bool)
    keep[r, c] = False
    for b, p in zip(base, pert):
        np.testing.assert_array_equal(b[keep], p[keep])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_round_trip_property(seed):
    y, w, a = rand_triple(np.random.default_rng(seed), 8, 8, amax=0.9)
    assert np.abs(decompose(compose(y, w, a), w, a) - y).max() < 1e-5
