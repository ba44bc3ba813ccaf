"""Inpainting region masks (1 = unmasked/keep, 0 = masked/inpaint)."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidShapeError


def downsample_nearest(mask, h, w):
    """Nearest-neighbour resample of a 2D mask to (h, w), then threshold at 0.5.

    Each output cell samples the input pixel nearest to its centre.
    """
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1 or h < 1 or w < 1:
        raise InvalidShapeError(f"cannot resample mask of shape {m.shape} to ({h}, {w})")
    H, W = m.shape
    rows = np.minimum(((np.arange(h) + 0.5) * H / h).astype(int), H - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * W / w).astype(int), W - 1)
    return (m[np.ix_(rows, cols)] >= 0.5).astype(np.float64)


@dataclass(frozen=True)
class RegionMask:
    M: np.ndarray
    latent_shape: tuple
    m_z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M = np.asarray(self.M)
        if M.ndim != 2 or min(M.shape) < 1:
            raise InvalidShapeError(f"mask must be a non-empty 2D array, got shape {M.shape}")
        if not np.isin(M, (0, 1)).all():
            raise InvalidShapeError("mask must be binary (0 = masked, 1 = unmasked)")
        M = M.astype(np.float64)
        M.setflags(write=False)
        h, w = self.latent_shape
        m_z = downsample_nearest(M, h, w)
        m_z.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "latent_shape", (int(h), int(w)))
        object.__setattr__(self, "m_z", m_z)

    @property
    def ratio(self):
        return float(self.M.sum()) / self.M.size

    def at(self, h, w):
        """The mask resampled to another resolution (e.g. an attention layer)."""
        return downsample_nearest(self.M, h, w)


def square_mask(H, W, coverage, center=(0.5, 0.5)):
    """Masked (0) axis-aligned square of roughly ``coverage`` area inside an all-ones mask."""
    if not 0 <= coverage <= 1:
        raise InvalidShapeError(f"coverage must lie in [0, 1], got {coverage}")
    side_h = int(round(H * np.sqrt(coverage)))
    side_w = int(round(W * np.sqrt(coverage)))
    top = int(round(center[0] * H - side_h / 2))
    left = int(round(center[1] * W - side_w / 2))
    top = min(max(top, 0), H - side_h)
    left = min(max(left, 0), W - side_w)
    M = np.ones((H, W))
    M[top:top + side_h, left:left + side_w] = 0
    return M


def half_mask(H, W, side="right"):
    M = np.ones((H, W))
    if side == "right":
        M[:, W // 2:] = 0
    elif side == "left":
        M[:, :W // 2] = 0
    elif side == "bottom":
        M[H // 2:, :] = 0
    elif side == "top":
        M[:H // 2, :] = 0
    else:
        raise InvalidShapeError(f"unknown half-mask side {side!r}")
    return M
