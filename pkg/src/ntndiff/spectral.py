"""Orthonormal 2D DCT, anti-diagonal band masks and band substitution.

Coefficient ``(x, y)`` is (row, column) frequency with ``(0, 0)`` the DC term.
Grids are ``(C, h, w)``; a 2D ``(h, w)`` array is treated as one channel and
returned with its original rank.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _backend
from .errors import InvalidShapeError, InvalidThresholdError


@lru_cache(maxsize=64)
def dct_matrix(n):
    """Orthonormal DCT-II basis, rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    mat[0] /= np.sqrt(2.0)
    mat.setflags(write=False)
    return mat


def _as_grid(arr, name="grid"):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise InvalidShapeError(f"{name} must be a non-empty (C, h, w) or (h, w) array, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _restore(out, like):
    return out[0] if np.ndim(like) == 2 else out


def dct2(grid):
    g = _as_grid(grid)
    _, h, w = g.shape
    return _restore(_backend.kernels.dct_apply(g, dct_matrix(h), dct_matrix(w)), grid)


def idct2(spec, shape=None):
    """Inverse of :func:`dct2`; ``shape`` optionally asserts the output shape."""
    s = _as_grid(spec, "spectrum")
    if shape is not None and tuple(np.shape(spec)) != tuple(shape):
        raise InvalidShapeError(f"spectrum shape {np.shape(spec)} does not match expected {tuple(shape)}")
    _, h, w = s.shape
    basis_h = np.ascontiguousarray(dct_matrix(h).T)
    basis_w = np.ascontiguousarray(dct_matrix(w).T)
    return _restore(_backend.kernels.dct_apply(s, basis_h, basis_w), spec)


@dataclass(frozen=True)
class BandMask:
    bits: np.ndarray
    kind: str
    thresholds: tuple

    @property
    def shape(self):
        return self.bits.shape

    def complement(self):
        return BandMask(1 - self.bits, f"not-{self.kind}", self.thresholds)


def _antidiagonal(h, w):
    if h < 1 or w < 1:
        raise InvalidShapeError(f"band mask dims must be >= 1, got ({h}, {w})")
    return np.add.outer(np.arange(h), np.arange(w))


def low_pass_mask(h, w, th_lp):
    """Bits set where ``x + y <= th_lp``."""
    s = _antidiagonal(h, w)
    return BandMask((s <= th_lp).astype(np.uint8), "low-pass", (float(th_lp),))


def mid_pass_mask(h, w, th_mp1, th_mp2):
    """Bits set where ``th_mp1 < x + y <= th_mp2``."""
    if not th_mp2 > th_mp1:
        raise InvalidThresholdError(f"mid-pass needs th_mp2 > th_mp1, got ({th_mp1}, {th_mp2})")
    s = _antidiagonal(h, w)
    bits = ((s > th_mp1) & (s <= th_mp2)).astype(np.uint8)
    return BandMask(bits, "mid-pass", (float(th_mp1), float(th_mp2)))


def full_mask(h, w, value):
    """Constant band (all ones or all zeros), handy for tests and diagnostics."""
    _antidiagonal(h, w)
    return BandMask(np.full((h, w), int(bool(value)), dtype=np.uint8), "constant", ())


@dataclass(frozen=True)
class BandThresholdParams:
    """Affine coefficients for the ratio-adaptive thresholds, in anti-diagonal units."""

    lam_f_lp: float
    lam_r_lp: float
    lam_f_mp1: float
    lam_r_mp1: float
    lam_f_mp2: float
    lam_r_mp2: float

    def __post_init__(self):
        for name, value in vars(self).items():
            if not np.isfinite(value) or value < 0:
                raise InvalidThresholdError(f"{name} must be a nonnegative finite number, got {value}")

    @classmethod
    def defaults(cls, h, w):
        # Placeholder fractions of the largest anti-diagonal index D = h + w - 2.
        d = h + w - 2
        return cls(0.10 * d, 0.10 * d, 0.15 * d, 0.05 * d, 0.50 * d, 0.10 * d)

    def check(self, h, w):
        """Validate the invariants for every unmasked ratio in [0, 1] on an h x w grid."""
        d = h + w - 2
        # th_mp2 - th_mp1 is smallest at ratio 0, th_mp2 largest at ratio 1
        if not self.lam_f_mp2 > self.lam_f_mp1:
            raise InvalidThresholdError(
                f"lam_f_mp2 ({self.lam_f_mp2}) must exceed lam_f_mp1 ({self.lam_f_mp1})")
        if self.lam_f_mp2 + self.lam_r_mp2 > d:
            raise InvalidThresholdError(
                f"th_mp2 can reach {self.lam_f_mp2 + self.lam_r_mp2}, beyond the largest anti-diagonal {d}")
        return self


def unmasked_ratio(mask):
    """Fraction of 1-valued (kept) entries in a region mask."""
    m = np.asarray(getattr(mask, "M", mask))
    if m.ndim != 2 or min(m.shape) < 1:
        raise InvalidShapeError(f"region mask must be a non-empty 2D array, got shape {m.shape}")
    return float(np.count_nonzero(m == 1)) / m.size


def adaptive_low_threshold(mask, params):
    return params.lam_f_lp + params.lam_r_lp * unmasked_ratio(mask)


def adaptive_mid_thresholds(mask, params):
    """Mid-band edges; the band widens on both sides as the unmasked ratio grows.

    A negative lower edge is clamped to 0.
    """
    if not params.lam_f_mp2 > params.lam_f_mp1:
        raise InvalidThresholdError(
            f"lam_f_mp2 ({params.lam_f_mp2}) must exceed lam_f_mp1 ({params.lam_f_mp1})")
    ratio = unmasked_ratio(mask)
    th1 = max(0.0, params.lam_f_mp1 - params.lam_r_mp1 * ratio)
    th2 = params.lam_f_mp2 + params.lam_r_mp2 * ratio
    if not th2 > th1:
        raise InvalidThresholdError(f"thresholds collapse at unmasked ratio {ratio}: ({th1}, {th2})")
    return th1, th2


def substitute_band(donor, recipient, band):
    """IDCT(DCT(donor) inside ``band`` + DCT(recipient) outside it)."""
    d = _as_grid(donor, "donor")
    r = _as_grid(recipient, "recipient")
    bits = np.ascontiguousarray(getattr(band, "bits", band), dtype=np.uint8)
    if d.shape != r.shape or bits.shape != d.shape[1:]:
        raise InvalidShapeError(
            f"donor {d.shape}, recipient {r.shape} and band {bits.shape} are not congruent")
    _, h, w = d.shape
    out = _backend.kernels.band_substitute(d, r, bits, dct_matrix(h), dct_matrix(w))
    return _restore(out, recipient)
