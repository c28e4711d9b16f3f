"""Bit-level physical layer."""

from ..links import DEFAULT_BEP, BepParams
from .bep import fit_bep
from .chain import measure_ber, send_streams
from .channel import analytic_bitflip_channel, rayleigh_gain, transmit
from .conv import CodecConfig, coded_length, conv_encode, decode_many, viterbi_decode, viterbi_decode_batch
from .interleaver import deinterleave, interleave, permutation
from .qam import constellation, qam_demodulate, qam_llr, qam_modulate

__all__ = [
    "BepParams",
    "DEFAULT_BEP",
    "CodecConfig",
    "coded_length",
    "conv_encode",
    "viterbi_decode",
    "viterbi_decode_batch",
    "decode_many",
    "interleave",
    "deinterleave",
    "permutation",
    "constellation",
    "qam_modulate",
    "qam_demodulate",
    "qam_llr",
    "transmit",
    "rayleigh_gain",
    "analytic_bitflip_channel",
    "fit_bep",
    "send_streams",
    "measure_ber",
]
