"""Binary time-tag container (magic ``QTT1``).

Layout, little-endian throughout:

    header: magic 4 bytes "QTT1" | version u32 | channel_count u16
            | rep_period_ps u64 | duration_ps u64 | record_count u64
    records: record_count x { channel u8 | timestamp_ps u64 }

Records are sorted by timestamp.  Reading validates the magic, the record
count against the payload length and the timestamp ordering.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ValidationError
from .stream import CHANNELS, TimeTagStream

MAGIC = b"QTT1"
VERSION = 1
_HEADER = struct.Struct("<4sIHQQQ")
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])


def write_stream(path, stream: TimeTagStream) -> None:
    """Write a stream to ``path``; deterministic for identical inputs."""
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp"] = stream.timestamps.astype(np.uint64)
    header = _HEADER.pack(MAGIC, VERSION, len(CHANNELS),
                          int(stream.rep_period_ps or 0),
                          int(stream.duration_ps), len(stream))
    with open(path, "wb") as fh:
        fh.write(header)
        records.tofile(fh)


def read_stream(path) -> TimeTagStream:
    """Read a ``QTT1`` file back into a :class:`TimeTagStream`."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, channel_count, rep_period, duration, n_records = \
            _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        payload = np.fromfile(fh, dtype=_RECORD_DTYPE)
    if payload.size != n_records:
        raise ValidationError(
            f"{path}: header promises {n_records} records but payload holds "
            f"{payload.size}")
    if payload.size and payload["channel"].max() >= channel_count:
        raise ValidationError(f"{path}: channel code out of range")
    return TimeTagStream(
        channels=payload["channel"],
        timestamps=payload["timestamp"].astype(np.int64),
        duration_ps=int(duration),
        rep_period_ps=int(rep_period) or None,
        metadata={"path": str(path)},
    )


__all__ = ["write_stream", "read_stream", "MAGIC", "VERSION"]
