import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ntndiff.errors import SnapshotFormatError
from ntndiff.pipeline import PipelineLog
from ntndiff.snapshots import (
    decode_snapshot,
    encode_snapshot,
    read_pgm,
    read_snapshot,
    read_trajectory,
    write_pgm,
    write_snapshot,
    write_trajectory,
)


def struct_reader(data):
    header, body = data.split(b"\n", 1)
    c, h, w = (int(x) for x in header.decode("ascii").split(" "))
    vals = struct.unpack("<%dd" % (c * h * w), body)
    return np.array(vals).reshape(c, h, w)


def test_layout_by_hand():
    z = np.arange(6.0).reshape(1, 2, 3)
    data = encode_snapshot(z)
    assert data.startswith(b"1 2 3\n")
    assert data[6:14] == struct.pack("<d", 0.0)
    assert data[-8:] == struct.pack("<d", 5.0)
    assert len(data) == 6 + 6 * 8


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_against_independent_reader(z):
    data = encode_snapshot(z)
    assert np.array_equal(struct_reader(data), z)
    assert np.array_equal(decode_snapshot(data), z)


def test_2d_is_one_channel(tmp_path):
    write_snapshot(tmp_path / "a.bin", np.ones((3, 4)))
    assert read_snapshot(tmp_path / "a.bin").shape == (1, 3, 4)


@pytest.mark.parametrize("data", [b"", b"garbage", b"1 2\n" + bytes(16), b"1 2 2\n" + bytes(31), b"1 2 2\n" + bytes(33)])
def test_malformed(tmp_path, data):
    p = tmp_path / "bad.bin"
    p.write_bytes(data)
    with pytest.raises(SnapshotFormatError, match="bad.bin"):
        read_snapshot(p)


def test_pgm_round_trip(tmp_path):
    img = np.arange(256.0).reshape(16, 16)   # includes whitespace byte values
    write_pgm(tmp_path / "p.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "p.pgm"), img.astype(np.uint8))
    (tmp_path / "q.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(SnapshotFormatError):
        read_pgm(tmp_path / "q.pgm")


def test_trajectory_dirs(tmp_path, rng):
    log = PipelineLog()
    frames = {t: rng.standard_normal((2, 4, 4)) for t in (3, 2, 1)}
    for t, z in frames.items():
        log.states.append((t, "in", z))
        log.states.append((t, "un", -z))
    write_trajectory(log, tmp_path)
    assert sorted(p.name for p in (tmp_path / "in").iterdir()) == ["step_0001.bin", "step_0002.bin", "step_0003.bin"]
    back = read_trajectory(tmp_path / "in")
    assert [s for s, _ in back] == [3, 2, 1]
    for s, z in back:
        assert np.array_equal(z, frames[s])


def test_empty_trajectory_dir(tmp_path):
    with pytest.raises(SnapshotFormatError, match="no snapshot"):
        read_trajectory(tmp_path)
