"""Per-stream link: interleave, encode, modulate, fade, demodulate, decode."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..links import LinkConfig
from .conv import CodecConfig, conv_encode, decode_many
from .interleaver import deinterleave, interleave
from .qam import qam_demodulate, qam_llr, qam_modulate
from .channel import transmit

__all__ = ["send_streams", "measure_ber"]


def _receive(bits, power, gain, noise_var, cfg: LinkConfig, codec: CodecConfig, il_seed, noise_seed):
    k = cfg.bits_per_symbol
    x = bits if il_seed is None else interleave(bits, il_seed)
    coded = conv_encode(x, codec)
    pad = (-coded.size) % k
    tx = qam_modulate(np.concatenate([coded, np.zeros(pad, dtype=coded.dtype)]), cfg.modulation_order)
    y = transmit(tx, power, gain, noise_var, noise_seed)
    amp = gain * np.sqrt(power)
    if abs(amp) > 0:
        z, nv = y / amp, noise_var / abs(amp) ** 2
    else:
        z, nv = y, noise_var
    if codec.decision == "soft":
        rx = qam_llr(z, cfg.modulation_order, nv)
    else:
        rx = qam_demodulate(z, cfg.modulation_order)
    return rx[: coded.size]


def send_streams(streams: Sequence[np.ndarray], powers, gains, noise_var: float,
                 cfg: LinkConfig, codec: CodecConfig,
                 interleaver_seeds: Sequence | None, noise_seeds: Sequence) -> list[np.ndarray]:
    """Push each bit stream through the coded QAM link at its own symbol
    power and complex gain; returns the received bit streams."""
    if abs(codec.rate - cfg.coding_rate) > 1e-12:
        raise ValueError(f"codec rate {codec.rate} differs from link coding rate {cfg.coding_rate}")
    received = []
    for k, bits in enumerate(streams):
        il = None if interleaver_seeds is None else interleaver_seeds[k]
        received.append(
            _receive(np.asarray(bits, dtype=np.uint8), float(powers[k]), complex(gains[k]),
                     noise_var, cfg, codec, il, noise_seeds[k])
        )
    decoded = decode_many(received, codec, soft=codec.decision == "soft")
    out = []
    for k, bits in enumerate(decoded):
        il = None if interleaver_seeds is None else interleaver_seeds[k]
        out.append(bits if il is None else deinterleave(bits, il))
    return out


def measure_ber(snr_linear: float, n_bits: int, cfg: LinkConfig, codec: CodecConfig,
                seed, block: int = 4096) -> float:
    """Information BER of the coded link over AWGN (``|h| = 1``, ``sigma^2 = 1``)
    at symbol SNR ``snr_linear``."""
    n_blocks = max(1, -(-n_bits // block))
    ss = np.random.SeedSequence(seed)
    data_seed, *noise_seeds = ss.spawn(n_blocks + 1)
    data = np.random.default_rng(data_seed).integers(0, 2, (n_blocks, block), dtype=np.uint8)
    rx = send_streams(list(data), np.full(n_blocks, snr_linear), np.ones(n_blocks), 1.0,
                      cfg, codec, None, noise_seeds)
    errors = sum(int(np.count_nonzero(r != d)) for r, d in zip(rx, data))
    return errors / (n_blocks * block)
