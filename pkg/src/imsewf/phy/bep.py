"""Fitting the exponential bit-error model to measured BER points."""

from __future__ import annotations

import numpy as np

from ..links import BepParams

__all__ = ["fit_bep"]


def fit_bep(samples) -> BepParams:
    """Least-squares fit of ``ln(ber) = ln(alpha) + beta * snr`` (linear snr).

    ``samples`` is an iterable of ``(snr, ber)`` pairs with ``ber > 0``.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise ValueError("need at least two (snr, ber) samples")
    snr, ber = arr[:, 0], arr[:, 1]
    if np.any(ber <= 0):
        raise ValueError("all BER samples must be positive")
    if np.ptp(snr) == 0:
        raise ValueError("singular fit: all samples share one snr")
    A = np.column_stack([np.ones_like(snr), snr])
    (ln_alpha, beta), *_ = np.linalg.lstsq(A, np.log(ber), rcond=None)
    if beta >= 0:
        raise ValueError(f"fitted slope {beta:.4g} is not negative; BER must fall with snr")
    return BepParams(float(np.exp(ln_alpha)), float(beta))
