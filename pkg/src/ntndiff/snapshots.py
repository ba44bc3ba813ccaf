"""Latent snapshot files and PGM previews.

Snapshot layout: one ASCII line ``"C h w\\n"`` followed by ``C*h*w``
little-endian float64 values in row-major order.
"""
import re
from pathlib import Path

import numpy as np

from .errors import SnapshotFormatError

_HEADER = re.compile(rb"^(\d+) (\d+) (\d+)\n")
_STEP = re.compile(r"(\d+)")


def encode_snapshot(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        z = z[None]
    if z.ndim != 3:
        raise SnapshotFormatError(f"snapshots hold (C, h, w) latents, got {z.shape}")
    header = "{} {} {}\n".format(*z.shape).encode("ascii")
    return header + np.ascontiguousarray(z).astype("<f8").tobytes()


def decode_snapshot(data, name="<bytes>"):
    nl = data.find(b"\n")
    match = _HEADER.match(data[:nl + 1]) if nl >= 0 else None
    if match is None:
        raise SnapshotFormatError(f"{name}: malformed header")
    shape = tuple(int(g) for g in match.groups())
    body = data[match.end():]
    if len(body) != 8 * int(np.prod(shape)):
        raise SnapshotFormatError(f"{name}: expected {8 * int(np.prod(shape))} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(shape).astype(np.float64)


def write_snapshot(path, z):
    Path(path).write_bytes(encode_snapshot(z))


def read_snapshot(path):
    path = Path(path)
    return decode_snapshot(path.read_bytes(), str(path))


def write_pgm(path, img):
    """8-bit binary PGM (P5) from a 2D array on a 0..255 scale."""
    a = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = a.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + a.tobytes())


_PGM = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path):
    data = Path(path).read_bytes()
    match = _PGM.match(data)
    if match is None or int(match.group(3)) != 255:
        raise SnapshotFormatError(f"{path}: not an 8-bit P5 PGM")
    w, h = int(match.group(1)), int(match.group(2))
    body = data[match.end():]
    if len(body) != w * h:
        raise SnapshotFormatError(f"{path}: expected {w * h} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def write_trajectory(log, directory):
    """One subdirectory per branch, ``step_NNNN.bin`` per recorded noise level."""
    directory = Path(directory)
    for t, branch, z in log.states:
        sub = directory / branch
        sub.mkdir(parents=True, exist_ok=True)
        write_snapshot(sub / f"step_{t:04d}.bin", z)


def read_trajectory(directory):
    """Snapshots of one directory as ``[(step, latent)]``, highest step first.

    The step is the last integer in each file name.
    """
    directory = Path(directory)
    files = sorted(directory.glob("*.bin"))
    if not files:
        raise SnapshotFormatError(f"{directory}: no snapshot files")
    out = []
    for f in files:
        nums = _STEP.findall(f.stem)
        if not nums:
            raise SnapshotFormatError(f"{f}: no step index in file name")
        out.append((int(nums[-1]), read_snapshot(f)))
    return sorted(out, key=lambda item: -item[0])
