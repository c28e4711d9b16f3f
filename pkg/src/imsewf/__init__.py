"""Importance-aware power allocation for bit-plane image sub-streams."""

from .imagemodel import (
    ImagePlane,
    ImportanceProfile,
    SegmentMap,
    SubStream,
    bitplane_decompose,
    bitplane_recompose,
    default_bit_weights,
    partition,
    reassemble,
)
from .links import DEFAULT_BEP, BepParams, LinkConfig, StreamLink
from .metric import ImseReport, expected_imse, imse, mse, normalize_imse, stream_error_rate
from .optimizer import AllocationResult, equal_power, kkt_residual, ma_waterfill, waterfill
from .sim import ExperimentConfig, gain_at, run_trial, snr_required, snr_to_budget, sweep

__version__ = "0.1.0"
