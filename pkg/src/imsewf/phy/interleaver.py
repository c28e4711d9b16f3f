"""Seeded uniform random bit interleaver."""

from __future__ import annotations

import numpy as np

__all__ = ["permutation", "interleave", "deinterleave"]


def permutation(n: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def interleave(bits, seed) -> np.ndarray:
    x = np.asarray(bits)
    return x[permutation(x.size, seed)]


def deinterleave(bits, seed) -> np.ndarray:
    x = np.asarray(bits)
    out = np.empty_like(x)
    out[permutation(x.size, seed)] = x
    return out
