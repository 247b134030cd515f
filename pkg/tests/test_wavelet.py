import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpwno.wavelet import (
    coarse_analysis_matrices,
    daubechies_filters,
    dwt1d,
    dwt2d,
    idwt1d,
    idwt2d,
    max_levels,
)

R2 = np.sqrt(2.0)


def _energy1(c):
    return np.sum(c.approx ** 2) + sum(np.sum(d ** 2) for d in c.details)


def _energy2(c):
    return np.sum(c.approx ** 2) + sum(np.sum(b ** 2) for t in c.details for b in t)


def test_haar_filters():
    f = daubechies_filters(1)
    assert np.allclose(f.dec_lo, [1 / R2, 1 / R2], atol=1e-15)
    assert np.allclose(f.dec_hi, [1 / R2, -1 / R2], atol=1e-15)


def test_db2_filters():
    f = daubechies_filters(2)
    assert np.allclose(f.dec_lo, [0.48296291, 0.83651630, 0.22414387, -0.12940952], atol=1e-8)


@pytest.mark.parametrize("order", range(1, 11))
def test_filter_invariants(order):
    f = daubechies_filters(order)
    h, g = f.dec_lo, f.dec_hi
    L = f.length
    assert L == 2 * order
    assert abs(h.sum() - R2) < 1e-12
    assert abs(g.sum()) < 1e-12
    for m in range(L // 2):
        # double-shift orthonormality of lowpass and highpass, and cross-orthogonality
        want = 1.0 if m == 0 else 0.0
        assert abs(np.dot(h[2 * m:], h[:L - 2 * m]) - want) < 1e-12
        assert abs(np.dot(g[2 * m:], g[:L - 2 * m]) - want) < 1e-12
    for m in range(-(L // 2) + 1, L // 2):
        s = sum(h[k] * g[k + 2 * m] for k in range(L) if 0 <= k + 2 * m < L)
        assert abs(s) < 1e-12
    k = np.arange(L, dtype=float)
    for p in range(order):
        assert abs(np.sum(k ** p * g)) < 1e-9 * max(1.0, L ** p)  # vanishing moments
    assert np.array_equal(f.rec_lo, h[::-1])


def test_unsupported_order():
    for bad in (0, 11, 2.5):
        with pytest.raises(ValueError):
            daubechies_filters(bad)


def test_haar_hand_example():
    c = dwt1d([1.0, 2.0, 3.0, 4.0], daubechies_filters(1), 1)
    assert np.allclose(c.approx, [2.1213203, 4.9497475], atol=1e-7)
    assert np.allclose(c.details[0], [-0.7071068, -0.7071068], atol=1e-7)


def test_zero_signal_and_zero_coefficients():
    f = daubechies_filters(4)
    c = dwt1d(np.zeros(32), f, 3)
    assert not c.approx.any() and not any(d.any() for d in c.details)
    assert not idwt1d(c, f).any()


def test_haar_scaled_approx_reconstruction():
    f = daubechies_filters(1)
    c = dwt1d(np.full(8, 1.5), f, 1)
    c.approx = 2 * c.approx
    c.details = [np.zeros_like(c.details[0])]
    assert np.allclose(idwt1d(c, f), 3.0, atol=1e-15)


def test_2d_constant_field():
    f = daubechies_filters(1)
    c = dwt2d(np.full((16, 16), 0.7), f, 3)
    assert np.allclose(c.approx, 0.7 * 2 ** 3, atol=1e-13)
    assert all(np.allclose(b, 0, atol=1e-13) for t in c.details for b in t)


def test_subband_orientation():
    # a field varying only along rows (axis 0) carries detail energy in HL
    f = daubechies_filters(1)
    x = np.tile(np.array([1.0, -1.0] * 4)[:, None], (1, 8))
    LH, HL, HH = dwt2d(x, f, 1).details[0]
    assert np.abs(HL).sum() > 0 and np.allclose(LH, 0) and np.allclose(HH, 0)


def test_level_extents_and_errors():
    f = daubechies_filters(3)
    c = dwt1d(np.ones(48), f, 4)
    assert [d.shape[-1] for d in c.details] == [24, 12, 6, 3]
    assert c.approx.shape == (3,)
    with pytest.raises(ValueError, match="too many levels"):
        dwt1d(np.ones(48), f, 5)
    with pytest.raises(ValueError):
        dwt1d(np.ones(8), f, 0)
    c.details[1] = c.details[1][:-1]
    with pytest.raises(ValueError, match="inconsistent"):
        idwt1d(c, f)


def test_batched_axis():
    rng = np.random.default_rng(0)
    f = daubechies_filters(2)
    x = rng.normal(size=(3, 16, 5))
    c = dwt1d(x, f, 2, axis=1)
    single = dwt1d(x[1, :, 2], f, 2)
    assert np.array_equal(c.approx[1, 2], single.approx)
    assert np.allclose(np.moveaxis(idwt1d(c, f), -1, 1), x, atol=1e-12)


def test_coarse_matrices_match_transform():
    rng = np.random.default_rng(1)
    f = daubechies_filters(6)
    A, D = coarse_analysis_matrices(64, f, 3)
    x = rng.normal(size=64)
    c = dwt1d(x, f, 3)
    assert np.allclose(A @ x, c.approx, atol=1e-13)
    assert np.allclose(D @ x, c.details[-1], atol=1e-13)
    assert np.allclose(np.vstack([A, D]) @ np.vstack([A, D]).T, np.eye(16), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(order=st.integers(1, 6), log_n=st.integers(5, 10), data=st.data())
def test_1d_reconstruction_energy_linearity(order, log_n, data):
    n = 2 ** log_n
    levels = data.draw(st.integers(1, min(8, max_levels(n))))
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, n))
    f = daubechies_filters(order)
    cx, cy = dwt1d(x, f, levels), dwt1d(y, f, levels)
    assert np.max(np.abs(idwt1d(cx, f) - x)) <= 1e-8
    assert abs(_energy1(cx) - np.sum(x ** 2)) <= 1e-10 * np.sum(x ** 2)
    cz = dwt1d(2.0 * x - 3.0 * y, f, levels)
    assert np.allclose(cz.approx, 2.0 * cx.approx - 3.0 * cy.approx, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(order=st.integers(1, 6), log_n=st.integers(4, 6), data=st.data())
def test_2d_reconstruction_energy(order, log_n, data):
    n = 2 ** log_n
    levels = data.draw(st.integers(1, min(4, max_levels(n))))
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    x = rng.normal(size=(2, n, n))
    f = daubechies_filters(order)
    c = dwt2d(x, f, levels)
    shapes = {b.shape for b in c.details[-1]}
    assert shapes == {c.approx.shape}
    assert np.max(np.abs(idwt2d(c, f) - x)) <= 1e-8
    assert abs(_energy2(c) - np.sum(x ** 2)) <= 1e-10 * np.sum(x ** 2)
