"""Reference metrics, image statistics and per-band spectral energy.

Images are 2D ``(H, W)`` grayscale or channel-first ``(C, H, W)`` with C in
{1, 3}, on a 0..255 scale. Latents are mapped to grayscale by
:func:`latent_to_image`.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _backend
from .errors import InvalidShapeError
from .spectral import dct2

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _scope(shape, scope):
    """Boolean selector broadcast over leading channel axes."""
    if scope is None:
        return np.ones(shape, dtype=bool)
    s = np.asarray(scope).astype(bool)
    if s.shape != shape[-s.ndim:]:
        raise InvalidShapeError(f"scope {s.shape} does not match data {shape}")
    sel = np.broadcast_to(s, shape)
    if not sel.any():
        raise InvalidShapeError("empty scope")
    return sel


def mse(a, b, scope=None):
    a, b = _pair(a, b)
    sel = _scope(a.shape, scope)
    return float(np.mean((a[sel] - b[sel]) ** 2))


def psnr(a, b, peak=255.0, scope=None):
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    err = mse(a, b, scope)
    if err == 0:
        return PSNR_CAP
    return 10.0 * math.log10(peak ** 2 / err)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_map(a, b, peak=255.0):
    """Per-pixel SSIM of two 2D arrays (reflect padding at the borders)."""
    win = _gaussian_window()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2

    def filt(x):
        return ndimage.correlate(x, win, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, peak=255.0, scope=None):
    """Mean SSIM over ``scope``; channels of a 3D input are handled separately."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise InvalidShapeError(f"ssim expects 2D or (C, H, W) data, got {a.shape}")
    maps = np.stack([ssim_map(x, y, peak) for x, y in zip(a, b)])
    return float(maps[_scope(maps.shape, scope)].mean())


# -- image statistics --------------------------------------------------------

def _channels(img):
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 2:
        return x[None]
    if x.ndim == 3 and x.shape[0] in (1, 3):
        return x
    raise InvalidShapeError(f"expected (H, W) or (C, H, W) with C in {{1, 3}}, got {x.shape}")


def to_gray(img):
    x = _channels(img)
    return x[0] if x.shape[0] == 1 else x.mean(axis=0)


def mean_gray(img):
    return float(to_gray(img).mean())


def mean_luma(img):
    x = _channels(img)
    if x.shape[0] == 1:
        return float(x.mean())
    return float((0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]).mean())


def mean_hsv_v(img):
    return float(_channels(img).max(axis=0).mean())


def avg_gradient(img):
    g = to_gray(img)
    if min(g.shape) < 2:
        raise InvalidShapeError(f"gradient needs at least 2x2 pixels, got {g.shape}")
    dx = g[:-1, 1:] - g[:-1, :-1]
    dy = g[1:, :-1] - g[:-1, :-1]
    return float(np.mean(np.sqrt((dx ** 2 + dy ** 2) / 2.0)))


def variance(img):
    return float(to_gray(img).var())


def lbp_codes(img):
    """8-neighbour LBP codes, interior pixels only.

    Bit 0 is the top-left neighbour, then clockwise; a neighbour >= the centre
    sets its bit.
    """
    g = np.ascontiguousarray(to_gray(img))
    if min(g.shape) < 3:
        raise InvalidShapeError(f"LBP needs at least 3x3 pixels, got {g.shape}")
    return _backend.kernels.lbp_codes(g)


def lbp_variance(img):
    return float(lbp_codes(img).astype(np.float64).var())


def band_energy(grid, band):
    g = np.asarray(grid, dtype=np.float64)
    bits = np.asarray(getattr(band, "bits", band))
    if bits.shape != g.shape[-2:]:
        raise InvalidShapeError(f"band {bits.shape} does not match grid {g.shape}")
    spec = dct2(g)
    return float(np.sum(spec ** 2 * bits))


def latent_to_image(z, lo=-3.0, hi=3.0, channel=0):
    """Affine map of one latent channel onto 0..255 (clipped)."""
    z = np.asarray(z, dtype=np.float64)
    plane = z[channel] if z.ndim == 3 else z
    return np.clip((plane - lo) / (hi - lo) * 255.0, 0.0, 255.0)


IMAGE_STATS = {
    "mean_gray": mean_gray,
    "mean_hsv_v": mean_hsv_v,
    "mean_luma": mean_luma,
    "avg_gradient": avg_gradient,
    "variance": variance,
    "lbp_variance": lbp_variance,
}


# -- reports -----------------------------------------------------------------

@dataclass
class MetricReport:
    rows: list = field(default_factory=list)   # (step, metric, scope, value)

    COLUMNS = ("step", "metric", "scope", "value")

    def add(self, step, metric, scope, value):
        value = float(value)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite {metric} at step {step}")
        self.rows.append((int(step), metric, scope, value))

    def steps(self):
        return sorted({r[0] for r in self.rows})

    def series(self, metric, scope="global"):
        return {s: v for s, m, sc, v in self.rows if m == metric and sc == scope}

    def value(self, step, metric, scope="global"):
        for s, m, sc, v in self.rows:
            if (s, m, sc) == (step, metric, scope):
                return v
        raise KeyError((step, metric, scope))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for step, metric, scope, value in self.rows:
            writer.writerow((step, metric, scope, repr(value)))
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"columns": list(self.COLUMNS), "psnr_cap": PSNR_CAP,
                           "rows": [list(r) for r in self.rows]}, indent=1)

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != cls.COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return cls([(int(s), m, sc, float(v)) for s, m, sc, v in reader])


def trajectory_report(trajectory, bands=None, reference=None, mask=None, peak=6.0, image_range=(-3.0, 3.0)):
    """Per-step statistics for a sequence of latents.

    ``trajectory`` is a list of latents or of ``(step, latent)`` pairs.
    ``bands`` maps a name to a BandMask; each yields ``energy_<name>``.
    With a ``reference`` latent, mse/psnr/ssim are added (peak ``peak`` in
    latent units), and with a latent-resolution ``mask`` also per scope.
    """
    items = list(trajectory)
    if not items:
        raise ValueError("empty trajectory")
    if not isinstance(items[0], tuple):
        items = list(enumerate(items))
    report = MetricReport()
    scopes = {"global": None}
    if mask is not None:
        m = np.asarray(mask).astype(bool)
        if (~m).any():
            scopes["masked"] = ~m
        if m.any():
            scopes["unmasked"] = m
    for step, z in items:
        img = latent_to_image(z, *image_range)
        for name, fn in IMAGE_STATS.items():
            report.add(step, name, "global", fn(img))
        for name, band in (bands or {}).items():
            report.add(step, f"energy_{name}", "global", band_energy(z, band))
        if reference is not None:
            for scope, sel in scopes.items():
                report.add(step, "mse", scope, mse(z, reference, sel))
                report.add(step, "psnr", scope, psnr(z, reference, peak, sel))
                report.add(step, "ssim", scope, ssim(z, reference, peak, sel))
    return report
