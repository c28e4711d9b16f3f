"""Netpbm image I/O and the importance-profile text format.

Profile files are ``key = value`` lines; ``#`` starts a comment::

    segment.0 = 0.4975
    segment.1 = 0.4975
    segment.2 = 0.0050
    bit.8 = 16384      # optional per-bit override, b in 1..B
    depth = 8          # optional, default 8
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .imagemodel import ImagePlane, ImportanceProfile, SegmentMap, default_bit_weights

__all__ = [
    "read_pnm",
    "write_pnm",
    "read_planes",
    "write_planes",
    "read_mask",
    "read_profile",
    "write_profile",
    "parse_profile",
]


class PnmError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int):
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError("truncated header")
        out.append(data[start:pos])
    return out, pos


def read_pnm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM (P5) or PPM (P6). Returns ``(array, maxval)``;
    the array is ``H x W`` or ``H x W x 3``."""
    path = Path(path)
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"{path}: unsupported format {magic!r}, expected P5 or P6")
    try:
        (w, h, maxval), pos = _tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise PnmError(f"{path}: bad header ({exc})") from None
    if not 0 < maxval < 65536:
        raise PnmError(f"{path}: maxval {maxval} out of range")
    pos += 1  # single whitespace byte before raster
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * channels
    raster = data[pos:pos + n * dtype.itemsize]
    if len(raster) != n * dtype.itemsize:
        raise PnmError(f"{path}: raster truncated")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    arr = arr.reshape((h, w, 3) if channels == 3 else (h, w))
    return arr, maxval


def write_pnm(path, arr: np.ndarray, maxval: int = 255) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise PnmError(f"cannot write array of shape {arr.shape}")
    h, w = arr.shape[:2]
    dtype = ">u2" if maxval > 255 else "u1"
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    Path(path).write_bytes(header + arr.astype(dtype).tobytes())


def _depth_of(maxval: int) -> int:
    return max(1, int(maxval).bit_length())


def read_planes(path) -> list[ImagePlane]:
    """One plane for PGM, three (R, G, B) for PPM."""
    arr, maxval = read_pnm(path)
    depth = _depth_of(maxval)
    if arr.ndim == 2:
        return [ImagePlane(arr, depth)]
    return [ImagePlane(arr[:, :, c], depth) for c in range(3)]


def write_planes(path, planes: list[ImagePlane]) -> None:
    depth = planes[0].depth
    if len(planes) == 1:
        write_pnm(path, planes[0].pixels, 2**depth - 1)
    elif len(planes) == 3:
        write_pnm(path, np.stack([p.pixels for p in planes], axis=-1), 2**depth - 1)
    else:
        raise PnmError(f"expected 1 or 3 planes, got {len(planes)}")


def read_mask(path, segment_count: int | None = None) -> SegmentMap:
    arr, _ = read_pnm(path)
    if arr.ndim != 2:
        raise PnmError(f"{path}: segment mask must be a PGM")
    try:
        return SegmentMap(arr, segment_count)
    except ValueError as exc:
        raise PnmError(f"{path}: {exc}") from None


_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(\S+)\s*$")


def parse_profile(text: str, source: str = "<profile>") -> ImportanceProfile:
    segments: dict[int, float] = {}
    bits: dict[int, float] = {}
    depth = 8
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = m.groups()
        try:
            if key == "depth":
                depth = int(value)
            elif key.startswith("segment."):
                segments[int(key[8:])] = float(value)
            elif key.startswith("bit."):
                bits[int(key[4:])] = float(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    if sorted(segments) != list(range(len(segments))):
        raise ValueError(f"{source}: segment ids must be 0..S-1, got {sorted(segments)}")
    bit_weights = default_bit_weights(depth)
    for b, w in bits.items():
        if not 1 <= b <= depth:
            raise ValueError(f"{source}: bit index {b} outside 1..{depth}")
        bit_weights[b - 1] = w
    try:
        return ImportanceProfile(tuple(segments[s] for s in range(len(segments))), tuple(bit_weights))
    except ValueError as exc:
        raise ValueError(f"{source}: {exc}") from None


def read_profile(path) -> ImportanceProfile:
    path = Path(path)
    return parse_profile(path.read_text(), str(path))


def write_profile(path, profile: ImportanceProfile) -> None:
    lines = [f"depth = {profile.depth}"]
    lines += [f"segment.{s} = {w!r}" for s, w in enumerate(profile.segment_weights)]
    defaults = default_bit_weights(profile.depth)
    lines += [
        f"bit.{b} = {w!r}"
        for b, w in enumerate(profile.bit_weights, 1)
        if w != defaults[b - 1]
    ]
    Path(path).write_text("\n".join(lines) + "\n")
