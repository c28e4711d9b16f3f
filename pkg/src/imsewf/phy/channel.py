"""Flat block-fading channels and the analytic bit-flip channel."""

from __future__ import annotations

import numpy as np

from ..links import BepParams

__all__ = ["rayleigh_gain", "transmit", "analytic_bitflip_channel"]


def rayleigh_gain(seed, size=None):
    """CN(0, 1) draws: ``E|h|^2 = 1``."""
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * np.sqrt(0.5)
    return complex(h) if size is None else h


def transmit(symbols, power: float, gain: complex, noise_var: float, seed) -> np.ndarray:
    """``y = h * sqrt(p) * x + v`` with ``v ~ CN(0, noise_var)``."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    x = np.asarray(symbols, dtype=complex)
    rng = np.random.default_rng(seed)
    v = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * np.sqrt(noise_var / 2)
    return gain * np.sqrt(power) * x + v


def analytic_bitflip_channel(bits, snr, bep: BepParams, seed) -> np.ndarray:
    """Flip each bit independently with probability ``min(alpha*exp(beta*snr), 0.5)``."""
    if snr < 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    b = np.asarray(bits)
    p = float(bep.probability(snr))
    flips = np.random.default_rng(seed).random(b.shape) < p
    return b ^ flips.astype(b.dtype)
