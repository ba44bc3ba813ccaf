import itertools

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ntndiff.errors import InvalidShapeError, InvalidThresholdError
from ntndiff.regions import RegionMask
from ntndiff.spectral import (
    BandThresholdParams,
    adaptive_low_threshold,
    adaptive_mid_thresholds,
    dct2,
    full_mask,
    idct2,
    low_pass_mask,
    mid_pass_mask,
    substitute_band,
    unmasked_ratio,
)


def direct_dct2(g):
    """Textbook double sum for the orthonormal 2D DCT-II of one channel."""
    h, w = g.shape
    out = np.zeros((h, w))
    for u in range(h):
        for v in range(w):
            cu = np.sqrt(1 / h) if u == 0 else np.sqrt(2 / h)
            cv = np.sqrt(1 / w) if v == 0 else np.sqrt(2 / w)
            acc = 0.0
            for x in range(h):
                for y in range(w):
                    acc += g[x, y] * np.cos(np.pi * (2 * x + 1) * u / (2 * h)) * np.cos(np.pi * (2 * y + 1) * v / (2 * w))
            out[u, v] = cu * cv * acc
    return out


def test_constant_grid_has_only_dc(backend):
    spec = dct2(np.ones((1, 4, 4)))
    expected = np.zeros((1, 4, 4))
    expected[0, 0, 0] = 4.0
    np.testing.assert_allclose(spec, expected, atol=1e-12)


def test_two_by_two_hand_example(backend):
    # N=2 basis rows: [1, 1]/sqrt2 and [1, -1]/sqrt2
    np.testing.assert_allclose(dct2(np.array([[1.0, -1.0], [1.0, -1.0]])), [[0.0, 2.0], [0.0, 0.0]], atol=1e-12)


def test_inverse_of_dc(backend):
    spec = np.zeros((4, 4))
    spec[0, 0] = 4.0
    np.testing.assert_allclose(idct2(spec), np.ones((4, 4)), atol=1e-12)
    assert not idct2(np.zeros((3, 5))).any()


@pytest.mark.parametrize("shape", [(1, 3, 5), (2, 4, 4), (1, 7, 2), (3, 1, 6)])
def test_matches_direct_sum_and_scipy(backend, rng, shape):
    g = rng.standard_normal(shape)
    spec = dct2(g)
    for c in range(shape[0]):
        np.testing.assert_allclose(spec[c], direct_dct2(g[c]), atol=1e-12)
    np.testing.assert_allclose(spec, scipy.fft.dctn(g, axes=(1, 2), norm="ortho"), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=12),
                  elements=st.floats(-1e3, 1e3)))
def test_round_trip_and_parseval(g):
    back = idct2(dct2(g))
    assert np.max(np.abs(back - g), initial=0) <= 1e-9 * max(1.0, np.abs(g).max())
    spec = dct2(g)
    e_spatial = (g ** 2).sum(axis=(1, 2))
    e_spec = (spec ** 2).sum(axis=(1, 2))
    np.testing.assert_allclose(e_spec, e_spatial, rtol=1e-9, atol=1e-9)


def test_forward_of_inverse(rng):
    s = rng.standard_normal((4, 9, 6))
    np.testing.assert_allclose(dct2(idct2(s)), s, atol=1e-9)


def test_shape_errors():
    with pytest.raises(InvalidShapeError):
        dct2(np.zeros((1, 0, 4)))
    with pytest.raises(InvalidShapeError):
        dct2(np.zeros(5))
    with pytest.raises(InvalidShapeError):
        idct2(np.zeros((2, 4, 4)), shape=(2, 4, 5))


def test_low_pass_examples():
    m = low_pass_mask(4, 4, 2)
    ones = {tuple(p) for p in np.argwhere(m.bits)}
    assert ones == {(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)}
    assert low_pass_mask(4, 4, 0).bits.sum() == 1 and low_pass_mask(4, 4, 0).bits[0, 0] == 1
    assert low_pass_mask(4, 4, 6).bits.sum() == 16
    with pytest.raises(InvalidShapeError):
        low_pass_mask(-1, 4, 2)


def test_mid_pass_examples():
    assert mid_pass_mask(4, 4, 1, 3).bits.sum() == 7
    m = mid_pass_mask(4, 4, 0, 6)
    assert m.bits.sum() == 15 and m.bits[0, 0] == 0
    assert mid_pass_mask(4, 4, 3, 3.0001).bits.sum() == 0
    with pytest.raises(InvalidThresholdError):
        mid_pass_mask(4, 4, 3, 3)


@pytest.mark.parametrize("h,w", [(1, 1), (3, 5), (8, 8), (16, 9)])
@pytest.mark.parametrize("th", [-0.5, 0, 1.5, 2, 7.25, 40])
def test_masks_match_enumeration(h, w, th):
    low = low_pass_mask(h, w, th).bits
    mid = mid_pass_mask(h, w, th, th + 3.5).bits
    for x, y in itertools.product(range(h), range(w)):
        assert low[x, y] == (1 if x + y <= th else 0)
        assert mid[x, y] == (1 if th < x + y <= th + 3.5 else 0)


@given(st.integers(1, 16), st.integers(1, 16), st.floats(0, 30), st.floats(0, 30), st.floats(0.01, 30))
def test_band_partition(h, w, th_lp, gap, width):
    low = low_pass_mask(h, w, th_lp).bits
    mid = mid_pass_mask(h, w, th_lp + gap, th_lp + gap + width).bits
    assert not (low & mid).any()
    rest = 1 - low - mid
    assert set(np.unique(rest)) <= {0, 1}


def _mask_with_ratio(ratio, n=10):
    M = np.zeros(n * n)
    M[: int(round(ratio * n * n))] = 1
    return RegionMask(M.reshape(n, n), (5, 5))


def test_adaptive_low_threshold():
    p = BandThresholdParams(4, 2, 0, 0, 1, 0)
    assert adaptive_low_threshold(_mask_with_ratio(0.5), p) == 5.0
    assert adaptive_low_threshold(_mask_with_ratio(0.0), p) == 4.0
    assert adaptive_low_threshold(_mask_with_ratio(1.0), p) == 6.0
    assert adaptive_low_threshold(np.ones((3, 3)), p) == 6.0


def test_adaptive_mid_thresholds():
    p = BandThresholdParams(0, 0, 3, 1, 7, 1)
    assert adaptive_mid_thresholds(_mask_with_ratio(0.5), p) == (2.5, 7.5)
    assert adaptive_mid_thresholds(_mask_with_ratio(0.0), p) == (3.0, 7.0)
    clamp = BandThresholdParams(0, 0, 1, 2, 7, 1)
    th1, th2 = adaptive_mid_thresholds(_mask_with_ratio(1.0), clamp)
    assert th1 == 0.0 and th2 == 8.0
    with pytest.raises(InvalidThresholdError):
        adaptive_mid_thresholds(_mask_with_ratio(0.5), BandThresholdParams(0, 0, 5, 0, 5, 0))


@given(st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotonicity(r1, r2):
    lo, hi = sorted((r1, r2))
    p = BandThresholdParams.defaults(16, 16)
    m_lo, m_hi = np.zeros((1, 1000)), np.zeros((1, 1000))
    m_lo[0, : int(lo * 1000)] = 1
    m_hi[0, : int(hi * 1000)] = 1
    assert adaptive_low_threshold(m_lo, p) <= adaptive_low_threshold(m_hi, p)
    a1, a2 = adaptive_mid_thresholds(m_lo, p)
    b1, b2 = adaptive_mid_thresholds(m_hi, p)
    assert a2 - a1 <= b2 - b1


def test_default_params_valid_on_all_ratios():
    for h, w in [(2, 2), (16, 16), (64, 32)]:
        p = BandThresholdParams.defaults(h, w).check(h, w)
        for ratio in np.linspace(0, 1, 11):
            m = np.zeros((1, 100))
            m[0, : int(round(ratio * 100))] = 1
            th1, th2 = adaptive_mid_thresholds(m, p)
            assert 0 <= adaptive_low_threshold(m, p) and 0 <= th1 < th2 <= h + w - 2


def test_param_validation():
    with pytest.raises(InvalidThresholdError):
        BandThresholdParams(-1, 0, 0, 0, 1, 0)
    with pytest.raises(InvalidThresholdError):
        BandThresholdParams(0, 0, 3, 0, 2, 0).check(8, 8)
    with pytest.raises(InvalidThresholdError):
        BandThresholdParams(0, 0, 1, 0, 10, 10).check(8, 8)


def test_unmasked_ratio_counts_ones():
    assert unmasked_ratio(np.array([[1, 0], [0, 0]])) == 0.25


class TestSubstituteBand:
    def test_empty_and_full_bands(self, backend, rng):
        d, r = rng.standard_normal((2, 3, 6, 5))
        np.testing.assert_allclose(substitute_band(d, r, full_mask(6, 5, 0)), r, atol=1e-9)
        np.testing.assert_allclose(substitute_band(d, r, full_mask(6, 5, 1)), d, atol=1e-9)
        np.testing.assert_allclose(substitute_band(d, d, low_pass_mask(6, 5, 3)), d, atol=1e-9)

    def test_coefficients_split_by_band(self, backend, rng):
        d, r = rng.standard_normal((2, 2, 8, 8))
        band = mid_pass_mask(8, 8, 2, 6)
        out = dct2(substitute_band(d, r, band))
        bits = band.bits.astype(bool)
        np.testing.assert_allclose(out[:, bits], dct2(d)[:, bits], atol=1e-9)
        np.testing.assert_allclose(out[:, ~bits], dct2(r)[:, ~bits], atol=1e-9)

    def test_matches_scipy_formula(self, backend, rng):
        d, r = rng.standard_normal((2, 2, 7, 9))
        band = low_pass_mask(7, 9, 4.5)
        sd = scipy.fft.dctn(d, axes=(1, 2), norm="ortho")
        sr = scipy.fft.dctn(r, axes=(1, 2), norm="ortho")
        expected = scipy.fft.idctn(sd * band.bits + sr * (1 - band.bits), axes=(1, 2), norm="ortho")
        np.testing.assert_allclose(substitute_band(d, r, band), expected, atol=1e-12)

    def test_idempotent(self, rng):
        d, r = rng.standard_normal((2, 4, 8, 8))
        band = low_pass_mask(8, 8, 5)
        once = substitute_band(d, r, band)
        np.testing.assert_allclose(substitute_band(d, once, band), once, atol=1e-9)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InvalidShapeError):
            substitute_band(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)), full_mask(4, 4, 1))
        with pytest.raises(InvalidShapeError):
            substitute_band(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), full_mask(4, 5, 1))
