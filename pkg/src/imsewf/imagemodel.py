"""Bit-plane and semantic-segment decomposition of image planes.

A plane of ``B``-bit pixels is split into ``K = S * B`` sub-streams: stream
``(b, s)`` carries bit ``b`` (1 = least significant) of every pixel labelled
``s``, scanned in row-major order. Streams are always listed with ``b``
ascending, then ``s`` ascending.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ImagePlane",
    "SegmentMap",
    "ImportanceProfile",
    "SubStream",
    "bitplane_decompose",
    "bitplane_recompose",
    "partition",
    "reassemble",
    "default_bit_weights",
    "stream_keys",
]

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ImagePlane:
    """One colour channel: an ``H x W`` matrix of ``depth``-bit integers."""

    pixels: np.ndarray
    depth: int = 8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"plane must be a non-empty 2-D array, got shape {px.shape}")
        if not 1 <= self.depth <= 16:
            raise ValueError(f"depth must be in [1, 16], got {self.depth}")
        if px.dtype.kind not in "iub":
            if not np.all(np.mod(px, 1) == 0):
                raise ValueError("pixel values must be integers")
        if px.size and (px.min() < 0 or px.max() >= 2**self.depth):
            raise ValueError(f"pixel values must lie in [0, {2**self.depth - 1}]")
        px = px.astype(np.uint16 if self.depth > 8 else np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, ImagePlane):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class SegmentMap:
    """Per-pixel segment labels in ``[0, S-1]``; every label must occur."""

    labels: np.ndarray
    segment_count: int | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise ValueError(f"segment map must be a non-empty 2-D array, got shape {lab.shape}")
        lab = lab.astype(np.int64)
        if lab.min() < 0:
            raise ValueError("segment ids must be non-negative")
        count = int(lab.max()) + 1 if self.segment_count is None else int(self.segment_count)
        if lab.max() >= count:
            raise ValueError(f"segment id {int(lab.max())} outside [0, {count - 1}]")
        present = np.bincount(lab.ravel(), minlength=count)
        missing = np.flatnonzero(present == 0)
        if missing.size:
            raise ValueError(f"segment ids {missing.tolist()} have no pixels")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "segment_count", count)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.segment_count)

    @classmethod
    def uniform(cls, shape: tuple[int, int]) -> "SegmentMap":
        return cls(np.zeros(shape, dtype=np.int64), 1)


def default_bit_weights(depth: int) -> list[float]:
    """Squared error magnitude of a flip in each bit position: ``4**(b-1)``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return [float(4**b) for b in range(depth)]


@dataclass(frozen=True)
class ImportanceProfile:
    """Segment weights (summing to one) and per-bit weights."""

    segment_weights: tuple[float, ...]
    bit_weights: tuple[float, ...] = field(default_factory=lambda: tuple(default_bit_weights(8)))

    def __post_init__(self):
        sw = tuple(float(w) for w in self.segment_weights)
        bw = tuple(float(w) for w in self.bit_weights)
        if not sw:
            raise ValueError("at least one segment weight is required")
        if any(w < 0 or not np.isfinite(w) for w in sw):
            raise ValueError("segment weights must be finite and non-negative")
        if abs(sum(sw) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"segment weights must sum to 1, got {sum(sw)!r}")
        if not bw or any(w <= 0 or not np.isfinite(w) for w in bw):
            raise ValueError("bit weights must be finite and positive")
        object.__setattr__(self, "segment_weights", sw)
        object.__setattr__(self, "bit_weights", bw)

    @classmethod
    def build(cls, segment_weights: Sequence[float], depth: int = 8) -> "ImportanceProfile":
        """Profile with the default ``4**(b-1)`` bit weights."""
        return cls(tuple(segment_weights), tuple(default_bit_weights(depth)))

    @property
    def segment_count(self) -> int:
        return len(self.segment_weights)

    @property
    def depth(self) -> int:
        return len(self.bit_weights)

    def weight(self, b: int, s: int) -> float:
        return self.bit_weights[b - 1] * self.segment_weights[s]

    def weight_matrix(self) -> np.ndarray:
        """``(B, S)`` array of weight products, row ``b-1``."""
        return np.outer(self.bit_weights, self.segment_weights)


@dataclass(frozen=True)
class SubStream:
    bit_index: int
    segment_index: int
    bits: np.ndarray
    weight_product: float

    @property
    def length(self) -> int:
        return int(self.bits.size)

    @property
    def key(self) -> tuple[int, int]:
        return (self.bit_index, self.segment_index)


def stream_keys(depth: int, segment_count: int) -> list[tuple[int, int]]:
    """Canonical ``(b, s)`` ordering of the K sub-streams."""
    return [(b, s) for b in range(1, depth + 1) for s in range(segment_count)]


def bitplane_decompose(plane: ImagePlane) -> list[np.ndarray]:
    """Binary matrices ``[B_1, ..., B_B]``; ``B_b`` holds bit ``b`` of each pixel."""
    px = plane.pixels.astype(np.uint32)
    return [((px >> (b - 1)) & 1).astype(np.uint8) for b in range(1, plane.depth + 1)]


def bitplane_recompose(planes: Sequence[np.ndarray]) -> ImagePlane:
    if len(planes) == 0:
        raise ValueError("no bit planes given")
    arrs = [np.asarray(p) for p in planes]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("bit planes have mismatched shapes")
    if any(a.size and (a.min() < 0 or a.max() > 1) for a in arrs):
        raise ValueError("bit planes must be binary")
    acc = np.zeros(shape, dtype=np.uint32)
    for b, a in enumerate(arrs):
        acc |= a.astype(np.uint32) << b
    return ImagePlane(acc, depth=len(arrs))


def _check_dims(plane: ImagePlane, segmap: SegmentMap, profile: ImportanceProfile | None):
    if segmap.shape != plane.shape:
        raise ValueError(f"segment map shape {segmap.shape} != plane shape {plane.shape}")
    if profile is not None:
        if profile.segment_count != segmap.segment_count:
            raise ValueError(
                f"profile has {profile.segment_count} segment weights, map has "
                f"{segmap.segment_count} segments"
            )
        if profile.depth != plane.depth:
            raise ValueError(f"profile has {profile.depth} bit weights, plane depth is {plane.depth}")


def partition(plane: ImagePlane, segmap: SegmentMap, profile: ImportanceProfile) -> list[SubStream]:
    _check_dims(plane, segmap, profile)
    bitplanes = bitplane_decompose(plane)
    flat_labels = segmap.labels.ravel()
    masks = [flat_labels == s for s in range(segmap.segment_count)]
    streams = []
    for b, s in stream_keys(plane.depth, segmap.segment_count):
        bits = bitplanes[b - 1].ravel()[masks[s]]
        streams.append(SubStream(b, s, bits, profile.weight(b, s)))
    return streams


def reassemble(streams: Sequence[SubStream], segmap: SegmentMap, shape: tuple[int, int],
               depth: int | None = None) -> ImagePlane:
    """Inverse of :func:`partition`."""
    if tuple(shape) != segmap.shape:
        raise ValueError(f"shape {tuple(shape)} != segment map shape {segmap.shape}")
    by_key = {st.key: st for st in streams}
    if depth is None:
        depth = max((b for b, _ in by_key), default=0)
    missing = [k for k in stream_keys(depth, segmap.segment_count) if k not in by_key]
    if missing:
        raise ValueError(f"missing sub-streams {missing}")
    flat_labels = segmap.labels.ravel()
    sizes = segmap.sizes()
    acc = np.zeros(flat_labels.size, dtype=np.uint32)
    for s in range(segmap.segment_count):
        mask = flat_labels == s
        for b in range(1, depth + 1):
            bits = np.asarray(by_key[(b, s)].bits)
            if bits.size != sizes[s]:
                raise ValueError(f"stream {(b, s)} has {bits.size} bits, segment has {sizes[s]} pixels")
            acc[mask] |= bits.astype(np.uint32) << (b - 1)
    return ImagePlane(acc.reshape(shape), depth=depth)
