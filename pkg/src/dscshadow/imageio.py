"""Binary PPM (P6) and PGM (P5) raster files, 8-bit only.

Deliberately dependency-free and byte-auditable: parse errors carry the byte
offset, writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np


class PnmError(ValueError):
    """Malformed PNM file; the message names the offending byte offset."""


def _atomic_write(path: str, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Scanner:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def error(self, msg: str):
        raise PnmError(f"{self.path}: {msg} at byte {self.pos}")

    def skip_space(self):
        # whitespace and '#' comments running to end of line
        while self.pos < len(self.blob):
            c = self.blob[self.pos:self.pos + 1]
            if c.isspace():
                self.pos += 1
            elif c == b"#":
                nl = self.blob.find(b"\n", self.pos)
                if nl < 0:
                    self.error("unterminated comment")
                self.pos = nl + 1
            else:
                return

    def token(self) -> bytes:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.blob) and not self.blob[self.pos:self.pos + 1].isspace():
            self.pos += 1
        if self.pos == start:
            self.error("unexpected end of header")
        return self.blob[start:self.pos]

    def integer(self, what: str) -> int:
        tok = self.token()
        try:
            return int(tok)
        except ValueError:
            self.error(f"bad {what} {tok!r}")
        raise AssertionError


def _read_pnm(path: str, magic: bytes) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    sc = _Scanner(blob, path)
    got = sc.token()
    if got != magic:
        sc.error(f"expected magic {magic.decode()}, found {got!r}")
    width = sc.integer("width")
    height = sc.integer("height")
    maxval = sc.integer("maxval")
    if width < 1 or height < 1:
        sc.error(f"bad dimensions {width}x{height}")
    if maxval != 255:
        sc.error(f"unsupported maxval {maxval} (only 255)")
    if sc.pos >= len(blob) or not blob[sc.pos:sc.pos + 1].isspace():
        sc.error("missing whitespace before payload")
    sc.pos += 1
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = blob[sc.pos:sc.pos + need]
    if len(payload) < need:
        sc.pos += len(payload)
        raise PnmError(f"{path}: payload truncated at byte {sc.pos}, "
                       f"need {need - len(payload)} more")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()


def read_ppm(path: str) -> np.ndarray:
    """Read a binary P6 file into a (H,W,3) uint8 array."""
    return _read_pnm(path, b"P6")


def read_pgm(path: str) -> np.ndarray:
    """Read a binary P5 file into a (H,W) uint8 array."""
    return _read_pnm(path, b"P5")


def write_ppm(path: str, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] != 3 or raster.dtype != np.uint8:
        raise ValueError(f"write_ppm: need (H,W,3) uint8, got {raster.shape} {raster.dtype}")
    h, w = raster.shape[:2]
    _atomic_write(path, b"P6\n%d %d\n255\n" % (w, h) + raster.tobytes())


def write_pgm(path: str, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 2 or raster.dtype != np.uint8:
        raise ValueError(f"write_pgm: need (H,W) uint8, got {raster.shape} {raster.dtype}")
    h, w = raster.shape
    _atomic_write(path, b"P5\n%d %d\n255\n" % (w, h) + raster.tobytes())


def read_mask(path: str) -> np.ndarray:
    """Read a P5 mask; every pixel must be 0 or 255. Returns bool (True = shadow)."""
    arr = read_pgm(path)
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise PnmError(f"{path}: mask value {arr[y, x]} at pixel ({y},{x}) "
                       "is not binary (0 or 255)")
    return arr == 255


def write_mask(path: str, mask: np.ndarray) -> None:
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
