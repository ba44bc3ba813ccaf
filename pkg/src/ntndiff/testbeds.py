"""Reference Gaussian-mixture testbeds.

All testbeds are built from fixed seeds, so the same call always returns the
same model. ``two_component`` has a positive-offset mode A and a
negative-offset mode B; ``frequency`` has components that share their DC
level and differ only in weak high-band texture.
"""
import numpy as np

from .denoiser import GmmModel
from .spectral import idct2, low_pass_mask, mid_pass_mask

SHAPE = (2, 16, 16)


def _band_field(rng, shape, lo, hi):
    """Random field whose DCT support is the anti-diagonals lo <= x+y <= hi, unit RMS."""
    C, h, w = shape
    s = np.add.outer(np.arange(h), np.arange(w))
    spec = rng.standard_normal(shape) * ((s >= lo) & (s <= hi))
    field = idct2(spec)
    return field / np.sqrt(np.mean(field ** 2))


def two_component(shape=SHAPE, offset=0.8, sigma=0.3, seed=7):
    rng = np.random.default_rng(seed)
    d = shape[1] + shape[2] - 2
    mode_a = offset + 0.3 * _band_field(rng, shape, 1, d // 4)
    mode_b = -offset + 0.3 * _band_field(rng, shape, 1, d // 4)
    return GmmModel(np.stack([mode_a, mode_b]), sigma, [0.5, 0.5])


def five_component(shape=SHAPE, sigma=0.3, seed=11):
    rng = np.random.default_rng(seed)
    d = shape[1] + shape[2] - 2
    offsets = np.linspace(-1.0, 1.0, 5)
    means = np.stack([o + 0.4 * _band_field(rng, shape, 1, d // 3) for o in offsets])
    return GmmModel(means, sigma, np.full(5, 0.2))


def frequency(shape=SHAPE, dc=1.0, texture=0.1, sigma=0.05, k=3, seed=3):
    rng = np.random.default_rng(seed)
    d = shape[1] + shape[2] - 2
    means = np.stack([dc + texture * _band_field(rng, shape, d // 2 + 1, d) for _ in range(k)])
    return GmmModel(means, sigma, np.full(k, 1.0 / k))


def frequency_bands(h, w):
    """Low band (x+y <= 2) and high band (x+y > (h+w-2)/2) used by the trend check."""
    d = h + w - 2
    return {"low": low_pass_mask(h, w, 2), "high": mid_pass_mask(h, w, d / 2, d)}


TESTBEDS = {
    "two-component": two_component,
    "five-component": five_component,
    "frequency": frequency,
}
