"""Per-stream link descriptions shared by the optimizer, metric and simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["BepParams", "DEFAULT_BEP", "StreamLink", "LinkConfig", "link_arrays"]


@dataclass(frozen=True)
class BepParams:
    """Exponential bit-error model ``P_e(snr) = alpha * exp(beta * snr)``,
    ``snr`` on a linear scale."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta < 0:
            raise ValueError(f"beta must be < 0, got {self.beta}")

    def probability(self, snr, clamp: bool = True):
        """Bit-error probability; clamped to 0.5 unless ``clamp`` is False."""
        p = self.alpha * np.exp(self.beta * np.asarray(snr, dtype=float))
        return np.minimum(p, 0.5) if clamp else p


# Fitted for rate-1/2 convolutional coding with 16-QAM.
DEFAULT_BEP = BepParams(0.5123, -0.2862)


@dataclass(frozen=True)
class StreamLink:
    """One sub-stream as seen by the power allocator."""

    length: float
    weight: float
    gain: float
    noise: float = 1.0

    def __post_init__(self):
        for name in ("length", "weight", "gain", "noise"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"StreamLink.{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class LinkConfig:
    coding_rate: float = 0.5
    modulation_order: int = 16
    bep: BepParams = DEFAULT_BEP

    def __post_init__(self):
        if not 0 < self.coding_rate <= 1:
            raise ValueError(f"coding rate must be in (0, 1], got {self.coding_rate}")
        m = self.modulation_order
        if m < 2 or m & (m - 1):
            raise ValueError(f"modulation order must be a power of 2 >= 2, got {m}")

    @property
    def bits_per_symbol(self) -> int:
        return int(self.modulation_order).bit_length() - 1

    @property
    def info_bits_per_symbol(self) -> float:
        """``R * log2(M)``: source bits carried per modulated symbol."""
        return self.coding_rate * self.bits_per_symbol

    def symbols(self, length):
        return np.asarray(length, dtype=float) / self.info_bits_per_symbol


def link_arrays(links: Sequence[StreamLink]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(length, weight, gain, noise)`` as float arrays."""
    if len(links) == 0:
        raise ValueError("at least one stream link is required")
    arr = np.array([(ln.length, ln.weight, ln.gain, ln.noise) for ln in links], dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
