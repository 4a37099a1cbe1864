"""Reading and writing sequences in the four supported on-disk formats.

``bits_packed``  raw bytes, bits taken most-significant first within each byte
``bits_ascii``   characters '0'/'1', any whitespace ignored
``floats_text``  one decimal number in [0,1] per line (blank lines ignored)
``floats_le64``  consecutive 8-byte little-endian IEEE-754 doubles in [0,1]
"""

from __future__ import annotations

import numpy as np

from .errors import MalformedInput, OutOfRangeFloat
from .model import SampleSpace
from .statistics import Sequence

FORMATS = ("bits_packed", "bits_ascii", "floats_text", "floats_le64")
_WHITESPACE = frozenset(b" \t\r\n\v\f")


def _check_unit(values: np.ndarray, offsets) -> None:
    bad = np.flatnonzero(~(np.isfinite(values) & (values >= 0.0) & (values <= 1.0)))
    if bad.size:
        i = int(bad[0])
        raise OutOfRangeFloat(f"value {values[i]!r} is outside [0, 1]", int(offsets(i)))


def parse_stream(raw: bytes, fmt: str, space: SampleSpace | None = None, length: int | None = None) -> Sequence:
    if fmt == "bits_packed":
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if length is not None:
            if length > bits.size:
                raise MalformedInput(f"declared length {length} exceeds the {bits.size} bits present", len(raw))
            bits = bits[:length]
        data = bits
    elif fmt == "bits_ascii":
        buf = np.frombuffer(raw, dtype=np.uint8)
        keep = ~np.isin(buf, list(_WHITESPACE))
        bad = np.flatnonzero(keep & (buf != ord("0")) & (buf != ord("1")))
        if bad.size:
            raise MalformedInput(f"unexpected byte {bytes(buf[bad[:1]])!r} in bit text", int(bad[0]))
        data = (buf[keep] - ord("0")).astype(np.uint8)
        if length is not None:
            data = data[:length]
    elif fmt == "floats_text":
        values, offsets, pos = [], [], 0
        for line in raw.splitlines(keepends=True):
            text = line.strip()
            if text:
                try:
                    values.append(float(text.decode("ascii")))
                except (UnicodeDecodeError, ValueError):
                    raise MalformedInput(f"cannot parse {text[:40]!r} as a number", pos) from None
                offsets.append(pos)
            pos += len(line)
        data = np.asarray(values, dtype=np.float64)
        _check_unit(data, lambda i: offsets[i])
    elif fmt == "floats_le64":
        if len(raw) % 8:
            raise MalformedInput(f"{len(raw)} bytes is not a whole number of doubles", len(raw) - len(raw) % 8)
        data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        _check_unit(data, lambda i: 8 * i)
    else:
        raise MalformedInput(f"unknown stream format {fmt!r}")
    if fmt in ("floats_text", "floats_le64") and length is not None:
        data = data[:length]
    if data.size == 0:
        raise MalformedInput("stream contains no elements", len(raw))
    if space is None:
        space = SampleSpace.finite(2) if fmt.startswith("bits") else SampleSpace.unit_interval()
    return Sequence(space, data)


def ingest_stream(path, fmt: str, space: SampleSpace | None = None, length: int | None = None) -> Sequence:
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_stream(raw, fmt, space, length)


def format_stream(seq: Sequence, fmt: str) -> bytes:
    data = seq.data
    if fmt == "bits_packed":
        return np.packbits(np.asarray(data, dtype=np.uint8)).tobytes()
    if fmt == "bits_ascii":
        return (np.asarray(data, dtype=np.uint8) + ord("0")).tobytes() + b"\n"
    if fmt == "floats_text":
        return "".join(f"{float(v)!r}\n" for v in data).encode("ascii")
    if fmt == "floats_le64":
        return np.asarray(data, dtype="<f8").tobytes()
    raise MalformedInput(f"unknown stream format {fmt!r}")


def write_stream(seq: Sequence, path, fmt: str) -> None:
    """Write ``seq``; for ``bits_packed`` the reader needs ``length=seq.n`` unless n is a multiple of 8."""
    with open(path, "wb") as fh:
        fh.write(format_stream(seq, fmt))
