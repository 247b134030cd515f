"""Periodized multi-level Daubechies wavelet transforms (1D and separable 2D).

Conventions
-----------
Analysis is correlation followed by downsampling with circular wrap::

    approx[i] = sum_k dec_lo[k] * x[(2 i + k) mod n]
    detail[i] = sum_k dec_hi[k] * x[(2 i + k) mod n]

For an even length ``n`` the periodized filter bank is an orthogonal map,
whatever the relation between ``n`` and the filter length, so synthesis is
the transpose of analysis. A transform of ``levels`` levels therefore only
needs the extent to be divisible by ``2**levels``.

2D subband names use one letter per transformed axis, row axis first:
``HL`` is high-pass along rows and low-pass along columns (the horizontal
detail).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import mpmath
import numpy as np

MAX_ORDER = 10
SUBBANDS_2D = ("LL", "LH", "HL", "HH")
SUBBANDS_1D = ("approx", "detail")


@dataclass(frozen=True)
class WaveletFilter:
    order: int
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def length(self) -> int:
        return len(self.dec_lo)


@functools.lru_cache(maxsize=None)
def _daubechies_lowpass(order: int) -> tuple[float, ...]:
    # Minimum-phase spectral factor of the Daubechies half-band polynomial.
    with mpmath.workdps(60):
        N = order
        # P(y) = sum_k C(N-1+k, k) y^k, highest degree first for polyroots
        coeffs = [mpmath.binomial(N - 1 + k, k) for k in range(N - 1, -1, -1)]
        ys = mpmath.polyroots(coeffs, maxsteps=400, extraprec=200) if N > 1 else []
        zs = []
        for y in ys:
            # y = (2 - z - 1/z) / 4  =>  z^2 - (2 - 4y) z + 1 = 0
            b = 2 - 4 * y
            disc = mpmath.sqrt(b * b - 4)
            z1, z2 = (b + disc) / 2, (b - disc) / 2
            zs.append(z1 if abs(z1) < 1 else z2)
        roots = [mpmath.mpf(-1)] * N + zs
        poly = [mpmath.mpc(1)]
        for r in roots:
            nxt = [mpmath.mpc(0)] * (len(poly) + 1)
            for i, c in enumerate(poly):
                nxt[i] += c
                nxt[i + 1] -= r * c
            poly = nxt
        real = [mpmath.re(c) for c in poly]
        scale = mpmath.sqrt(2) / mpmath.fsum(real)
        return tuple(float(c * scale) for c in real)


def daubechies_filters(order: int) -> WaveletFilter:
    """Daubechies-``order`` filter bank (``order=1`` is Haar)."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported Daubechies order {order!r}; expected 1..{MAX_ORDER}")
    lo = np.array(_daubechies_lowpass(int(order)))
    L = len(lo)
    hi = np.array([(-1) ** k * lo[L - 1 - k] for k in range(L)])
    return WaveletFilter(int(order), lo, hi, lo[::-1].copy(), hi[::-1].copy())


def max_levels(n: int) -> int:
    """Largest level count for which every level input has even length."""
    levels = 0
    while n % 2 == 0 and n >= 2:
        n //= 2
        levels += 1
    return levels


def check_levels(n: int, levels: int) -> None:
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if levels > max_levels(n):
        raise ValueError(
            f"too many levels ({levels}) for extent {n}: extent must be divisible by 2**levels"
        )


def _analysis_step(x: np.ndarray, filt: WaveletFilter) -> tuple[np.ndarray, np.ndarray]:
    # last axis, even length
    a = np.zeros(x.shape[:-1] + (x.shape[-1] // 2,))
    d = np.zeros_like(a)
    for k, (h, g) in enumerate(zip(filt.dec_lo, filt.dec_hi)):
        xs = np.roll(x, -k, axis=-1)[..., ::2]
        a += h * xs
        d += g * xs
    return a, d


def _synthesis_step(a: np.ndarray, d: np.ndarray, filt: WaveletFilter) -> np.ndarray:
    n = 2 * a.shape[-1]
    out = np.zeros(a.shape[:-1] + (n,))
    up = np.zeros_like(out)
    for k, (h, g) in enumerate(zip(filt.dec_lo, filt.dec_hi)):
        up[..., ::2] = h * a + g * d
        out += np.roll(up, k, axis=-1)
    return out


@dataclass
class Dwt1dCoeffs:
    approx: np.ndarray
    details: list[np.ndarray]  # finest level first
    levels: int
    original_length: int


@dataclass
class Dwt2dCoeffs:
    approx: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]  # (LH, HL, HH), finest first
    levels: int
    original_shape: tuple[int, int]


def dwt1d(x, filt: WaveletFilter, levels: int, axis: int = -1) -> Dwt1dCoeffs:
    """Multi-level periodized DWT along ``axis`` (other axes are batched).

    Returned coefficient arrays keep the transformed axis last.
    """
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    n = x.shape[-1]
    check_levels(n, levels)
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, filt)
        details.append(d)
    return Dwt1dCoeffs(a, details, levels, n)


def idwt1d(c: Dwt1dCoeffs, filt: WaveletFilter) -> np.ndarray:
    """Inverse of :func:`dwt1d`; the transformed axis is returned last."""
    if len(c.details) != c.levels:
        raise ValueError(f"expected {c.levels} detail arrays, got {len(c.details)}")
    expected = c.original_length
    a = np.asarray(c.approx, dtype=np.float64)
    for lvl in range(c.levels - 1, -1, -1):
        d = np.asarray(c.details[lvl], dtype=np.float64)
        want = expected >> (lvl + 1)
        if a.shape != d.shape or a.shape[-1] != want:
            raise ValueError(
                f"inconsistent coefficient extents at level {lvl + 1}: "
                f"approx {a.shape}, detail {d.shape}, expected length {want}"
            )
        a = _synthesis_step(a, d, filt)
    return a


def dwt2d(x, filt: WaveletFilter, levels: int, axes: tuple[int, int] = (-2, -1)) -> Dwt2dCoeffs:
    """Separable multi-level periodized DWT over two axes (Mallat recursion on LL)."""
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axes, (-2, -1))
    r, c = x.shape[-2:]
    check_levels(r, levels)
    check_levels(c, levels)
    details = []
    ll = x
    for _ in range(levels):
        lo_c, hi_c = _analysis_step(ll, filt)  # along columns (last axis)
        lo_c, hi_c = np.swapaxes(lo_c, -1, -2), np.swapaxes(hi_c, -1, -2)
        LL, HL = _analysis_step(lo_c, filt)  # along rows
        LH, HH = _analysis_step(hi_c, filt)
        ll = np.swapaxes(LL, -1, -2)
        details.append(tuple(np.swapaxes(b, -1, -2) for b in (LH, HL, HH)))
    return Dwt2dCoeffs(ll, details, levels, (r, c))


def idwt2d(c: Dwt2dCoeffs, filt: WaveletFilter) -> np.ndarray:
    """Inverse of :func:`dwt2d`; the two transformed axes are returned last."""
    if len(c.details) != c.levels:
        raise ValueError(f"expected {c.levels} detail triples, got {len(c.details)}")
    r, cc = c.original_shape
    ll = np.asarray(c.approx, dtype=np.float64)
    for lvl in range(c.levels - 1, -1, -1):
        LH, HL, HH = (np.asarray(b, dtype=np.float64) for b in c.details[lvl])
        want = (r >> (lvl + 1), cc >> (lvl + 1))
        if not (ll.shape == LH.shape == HL.shape == HH.shape) or ll.shape[-2:] != want:
            raise ValueError(
                f"inconsistent subband extents at level {lvl + 1}: "
                f"{ll.shape}, {LH.shape}, {HL.shape}, {HH.shape}; expected trailing {want}"
            )
        lo_c = _synthesis_step(np.swapaxes(ll, -1, -2), np.swapaxes(HL, -1, -2), filt)
        hi_c = _synthesis_step(np.swapaxes(LH, -1, -2), np.swapaxes(HH, -1, -2), filt)
        ll = _synthesis_step(np.swapaxes(lo_c, -1, -2), np.swapaxes(hi_c, -1, -2), filt)
    return ll


def coarse_analysis_matrices(n: int, filt: WaveletFilter, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the final-level approximation and detail analysis operators.

    Returns ``(A, D)``, each of shape ``[n >> levels, n]``, so that
    ``dwt1d(x).approx == A @ x`` and ``dwt1d(x).details[-1] == D @ x``.
    Their rows are orthonormal, so ``A.T`` and ``D.T`` are the matching
    synthesis operators.
    """
    c = dwt1d(np.eye(n), filt, levels)
    return np.ascontiguousarray(c.approx.T), np.ascontiguousarray(c.details[-1].T)
