"""Dataset files: packed binary and plain-text bit-vector formats.

The binary form is a fixed 18-byte header (magic, format version,
vector count, dimensionality, all little-endian) followed by one packed
row per vector: bit i lives in byte i//8 at position i%8, least
significant first, with zero padding bits in the final byte. The text
form is one line of '0'/'1' characters per vector. Both round-trip
losslessly, and every malformed-file error names the exact byte offset
of the problem.
"""

import struct

import numpy as np

__all__ = [
    "DatasetFormatError",
    "MAGIC",
    "VERSION",
    "load_dataset",
    "read_binary",
    "read_text",
    "save_dataset",
    "write_binary",
    "write_text",
]

MAGIC = b"APKN"
VERSION = 1

_HEADER = struct.Struct("<HQI")
_HEADER_LEN = len(MAGIC) + _HEADER.size


class DatasetFormatError(ValueError):
    """A malformed dataset file; ``offset`` is the offending byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


def _as_bits(vectors) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(vectors, dtype=np.uint8))
    if rows.ndim != 2:
        raise ValueError("vectors must form a 2D bit array")
    if rows.shape[1] == 0:
        raise ValueError("dimensionality must be positive")
    if rows.size and rows.max() > 1:
        raise ValueError("vector components must be 0 or 1")
    return rows


def write_binary(path, vectors) -> None:
    rows = _as_bits(vectors)
    n, d = rows.shape
    payload = np.packbits(rows, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, n, d))
        fh.write(payload.tobytes())


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER_LEN:
        raise DatasetFormatError(
            f"truncated header, need {_HEADER_LEN} bytes", len(data))
    if data[:4] != MAGIC:
        raise DatasetFormatError("bad magic, not a dataset file", 0)
    version, n, d = _HEADER.unpack_from(data, 4)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported format version {version}", 4)
    if d == 0:
        raise DatasetFormatError("dimensionality must be positive", 14)
    stride = -(-d // 8)
    expected = _HEADER_LEN + n * stride
    if len(data) < expected:
        raise DatasetFormatError(
            f"row data ends early, header promises {expected} bytes",
            len(data))
    if len(data) > expected:
        raise DatasetFormatError("trailing bytes after the last row",
                                 expected)
    raw = np.frombuffer(data, dtype=np.uint8,
                        offset=_HEADER_LEN).reshape(n, stride)
    if d % 8 and n:
        pad_mask = (0xFF << (d % 8)) & 0xFF
        bad = np.nonzero(raw[:, -1] & pad_mask)[0]
        if bad.size:
            raise DatasetFormatError(
                "nonzero padding bits in packed row",
                _HEADER_LEN + int(bad[0]) * stride + stride - 1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :d].copy()


def write_text(path, vectors) -> None:
    rows = _as_bits(vectors)
    with open(path, "w") as fh:
        for row in rows:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")


def read_text(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise DatasetFormatError("empty dataset file", 0)
    rows = []
    width = None
    pos = 0
    for line in data.split(b"\n"):
        if pos >= len(data):
            break
        for j, ch in enumerate(line):
            if ch not in (0x30, 0x31):
                raise DatasetFormatError(
                    f"invalid character {chr(ch)!r}", pos + j)
        if width is None:
            if not line:
                raise DatasetFormatError("zero-width vector", pos)
            width = len(line)
        elif len(line) != width:
            raise DatasetFormatError(
                f"line length {len(line)} does not match first line "
                f"length {width}", pos)
        rows.append(np.frombuffer(line, dtype=np.uint8) - 0x30)
        pos += len(line) + 1
    return np.stack(rows)


def load_dataset(path) -> np.ndarray:
    """Read either format, sniffing by magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary(path)
    return read_text(path)


def save_dataset(path, vectors, form: str = "binary") -> None:
    if form == "binary":
        write_binary(path, vectors)
    elif form == "text":
        write_text(path, vectors)
    else:
        raise ValueError(f"unknown dataset form {form!r}")
