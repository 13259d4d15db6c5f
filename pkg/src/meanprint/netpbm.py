"""Binary PGM (P5) reading/writing and PBM (P4) bitmaps.

Images are numpy arrays indexed ``[row, col]`` (y downward, x rightward).
Grayscale images are ``uint8``; masks and skeletons are ``bool``.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    """Base class for all netpbm parse failures."""


class UnsupportedFormatError(NetpbmError):
    pass


class MalformedHeaderError(NetpbmError):
    pass


class UnsupportedMaxvalError(NetpbmError):
    pass


def _read_header(data: bytes, nfields: int) -> tuple[bytes, list[int], int]:
    """Parse magic + ``nfields`` integers; return (magic, fields, data offset)."""
    pos = 0
    tokens: list[bytes] = []
    n = len(data)
    while len(tokens) < nfields + 1:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeaderError("truncated header")
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
        if len(tokens) == 1 and tokens[0] not in (b"P5", b"P4"):
            raise UnsupportedFormatError(f"unsupported netpbm magic {tokens[0]!r}")
    # exactly one whitespace byte separates the header from the raster
    if pos < n and not data[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after header")
    pos += 1
    try:
        fields = [int(t) for t in tokens[1:]]
    except ValueError as exc:
        raise MalformedHeaderError(f"non-numeric header field: {exc}") from None
    return tokens[0], fields, pos


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary 8-bit PGM file into a ``(height, width)`` uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise UnsupportedFormatError(f"{path}: not a binary PGM (P5) file")
    _, (width, height, maxval), offset = _read_header(data, 3)
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"{path}: maxval {maxval} (only 255 supported)")
    raster = data[offset : offset + width * height]
    if len(raster) != width * height:
        raise MalformedHeaderError(f"{path}: raster truncated ({len(raster)} of {width * height} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def read_pbm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PBM (P4) file; bit 1 becomes ``True``."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P4"):
        raise UnsupportedFormatError(f"{path}: not a binary PBM (P4) file")
    _, (width, height), offset = _read_header(data, 2)
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height}")
    row_bytes = (width + 7) // 8
    raster = data[offset : offset + row_bytes * height]
    if len(raster) != row_bytes * height:
        raise MalformedHeaderError(f"{path}: raster truncated")
    packed = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
    return np.unpackbits(packed, axis=1)[:, :width].astype(bool)


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def encode_pbm(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    return b"P4\n%d %d\n" % (w, h) + np.packbits(bits, axis=1).tobytes()


def atomic_write(path: str | os.PathLike, payload: bytes | str) -> None:
    """Write ``payload`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    if isinstance(payload, str):
        payload = payload.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    atomic_write(path, encode_pgm(img))


def write_pbm(path: str | os.PathLike, bits: np.ndarray) -> None:
    atomic_write(path, encode_pbm(bits))
