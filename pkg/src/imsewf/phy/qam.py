"""Gray-mapped square QAM with unit average symbol energy.

Bits are taken in groups of ``log2 M``; even positions drive the in-phase
axis and odd positions the quadrature axis. On each axis the first bit picks
the sign and the remaining bits the magnitude, e.g. for 16-QAM
``I = (1-2b0) * (2 - (1-2b2))``, so ``0000`` maps to ``(1+1j)/sqrt(10)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["constellation", "qam_modulate", "qam_demodulate", "qam_llr"]


def _axis_level(bits: np.ndarray) -> np.ndarray:
    """Gray PAM amplitude for bit columns ``bits[..., 0]`` (sign) onwards."""
    m = bits.shape[-1]
    mag = np.ones(bits.shape[:-1])
    for j in range(m - 1, 0, -1):
        mag = 2.0 ** (m - j) - (1 - 2.0 * bits[..., j]) * mag
    return (1 - 2.0 * bits[..., 0]) * mag


def _check_order(M: int) -> int:
    k = int(M).bit_length() - 1
    if M < 4 or M != 1 << k or k % 2:
        raise ValueError(f"modulation order must be a square power of 2 >= 4, got {M}")
    return k


@lru_cache(maxsize=None)
def constellation(M: int) -> tuple[np.ndarray, np.ndarray]:
    """``(points, labels)``: point ``i`` carries bit pattern ``labels[i]``
    (``labels`` has shape ``(M, log2 M)``), normalised to unit mean energy."""
    k = _check_order(M)
    labels = ((np.arange(M)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    pts = _axis_level(labels[:, 0::2]) + 1j * _axis_level(labels[:, 1::2])
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    labels.setflags(write=False)
    return pts, labels


def qam_modulate(bits, M: int = 16) -> np.ndarray:
    k = _check_order(M)
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % k:
        raise ValueError(f"bit count {b.size} not divisible by log2(M) = {k}")
    pts, _ = constellation(M)
    idx = b.reshape(-1, k) @ (1 << np.arange(k - 1, -1, -1))
    return pts[idx]


def _distances(symbols, M):
    pts, _ = constellation(M)
    y = np.asarray(symbols, dtype=complex).ravel()
    return np.abs(y[:, None] - pts[None, :]) ** 2


def qam_demodulate(symbols, M: int = 16) -> np.ndarray:
    """Hard minimum-distance decisions, returned as a flat bit array."""
    _, labels = constellation(M)
    return labels[np.argmin(_distances(symbols, M), axis=1)].ravel()


def qam_llr(symbols, M: int = 16, noise_var=1.0) -> np.ndarray:
    """Max-log LLRs ``ln P(b=0)/P(b=1)`` for equalised symbols with complex
    noise variance ``noise_var`` (scalar or per symbol)."""
    _, labels = constellation(M)
    d = _distances(symbols, M)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), (d.shape[0],))[:, None]
    llr = np.empty((d.shape[0], labels.shape[1]))
    for j in range(labels.shape[1]):
        one = labels[:, j] == 1
        llr[:, j] = (d[:, one].min(axis=1) - d[:, ~one].min(axis=1))
    return (llr / nv).ravel()
