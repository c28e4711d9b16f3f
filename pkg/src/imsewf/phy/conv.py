"""Zero-tailed feed-forward convolutional code with a Viterbi decoder.

Generators are given in octal with the most significant tap applied to the
current input bit, so ``(133, 171)`` with constraint length 7 is the usual
64-state rate-1/2 code. Coded bits are emitted generator-interleaved:
``c1[0], c2[0], c1[1], c2[1], ...``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

__all__ = ["CodecConfig", "conv_encode", "viterbi_decode", "viterbi_decode_batch", "decode_many", "coded_length"]


@dataclass(frozen=True)
class CodecConfig:
    constraint_length: int = 7
    generators: tuple[int, ...] = (0o133, 0o171)
    decision: Literal["hard", "soft"] = "hard"

    def __post_init__(self):
        gens = tuple(int(g) for g in self.generators)
        object.__setattr__(self, "generators", gens)
        k = self.constraint_length
        if not 2 <= k <= 16:
            raise ValueError(f"constraint length must be in [2, 16], got {k}")
        if not gens:
            raise ValueError("at least one generator polynomial is required")
        for g in gens:
            if not 0 < g < 2**k:
                raise ValueError(f"generator {g:o} does not fit constraint length {k}")
        if self.decision not in ("hard", "soft"):
            raise ValueError(f"decision must be 'hard' or 'soft', got {self.decision!r}")

    @property
    def rate(self) -> float:
        return 1.0 / len(self.generators)

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    def describe(self) -> dict:
        return {
            "constraint_length": self.constraint_length,
            "generators_octal": [f"{g:o}" for g in self.generators],
            "rate": self.rate,
            "decision": self.decision,
        }


def coded_length(n_info: int, cfg: CodecConfig) -> int:
    return (n_info + cfg.memory) * len(cfg.generators)


def _taps(g: int, k: int) -> np.ndarray:
    # taps[j] multiplies u[t - j]
    return np.array([(g >> (k - 1 - j)) & 1 for j in range(k)], dtype=np.int64)


def conv_encode(bits, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    u = np.asarray(bits, dtype=np.int64).ravel()
    if u.size == 0:
        raise ValueError("cannot encode an empty bit sequence")
    k = cfg.constraint_length
    u = np.concatenate([u, np.zeros(cfg.memory, dtype=np.int64)])
    out = np.empty((u.size, len(cfg.generators)), dtype=np.uint8)
    for i, g in enumerate(cfg.generators):
        out[:, i] = np.convolve(u, _taps(g, k))[: u.size] & 1
    return out.ravel()


@lru_cache(maxsize=None)
def _trellis(k: int, gens: tuple[int, ...]):
    """Predecessor states and branch output signs for every next state.

    State = last ``k-1`` inputs, newest in the most significant bit. The next
    state ``s'`` is reached from ``p`` with input ``u = s' >> (k-2)``.
    """
    m = k - 1
    n_states = 1 << m
    nxt = np.arange(n_states)
    u = nxt >> (m - 1)
    pred = np.empty((2, n_states), dtype=np.int64)
    signs = np.empty((2, n_states, len(gens)), dtype=np.float64)
    for j in range(2):
        p = ((nxt << 1) & (n_states - 1)) | j
        pred[j] = p
        reg = (u << m) | p
        for i, g in enumerate(gens):
            bit = np.array([bin(r & g).count("1") & 1 for r in reg])
            signs[j, :, i] = 1.0 - 2.0 * bit
    return pred, signs, u


def viterbi_decode_batch(llrs, cfg: CodecConfig = CodecConfig(), starts=None) -> np.ndarray:
    """Decode a batch of zero-tailed codewords.

    ``llrs`` has shape ``(batch, n_coded)`` with positive values favouring a
    0 bit. Hard decisions are passed as ``1 - 2*bit``. Returns the
    ``(batch, n_info)`` maximum-likelihood information bits.

    Shorter codewords may be right-aligned in the batch: ``starts[i]`` is the
    trellis step at which row ``i`` begins (its decoded bits before that step
    are meaningless).
    """
    L = np.asarray(llrs, dtype=np.float64)
    if L.ndim != 2:
        raise ValueError("expected a (batch, n_coded) array")
    n_out = len(cfg.generators)
    if L.shape[1] % n_out:
        raise ValueError(f"coded length {L.shape[1]} is not a multiple of {n_out}")
    steps = L.shape[1] // n_out
    n_info = steps - cfg.memory
    if n_info < 1:
        raise ValueError(f"coded length {L.shape[1]} too short for memory {cfg.memory}")
    batch = L.shape[0]
    pred, signs, u_of_state = _trellis(cfg.constraint_length, cfg.generators)
    n_states = pred.shape[1]
    L = L.reshape(batch, steps, n_out)

    metric = np.full((batch, n_states), np.inf)
    metric[:, 0] = 0.0
    decisions = np.empty((steps, batch, n_states), dtype=bool)
    # Branch correlation: larger is better, so minimise its negative.
    sig = np.concatenate([signs[0].T, signs[1].T], axis=1)
    p0, p1 = pred
    resets: dict[int, np.ndarray] = {}
    if starts is not None:
        starts = np.asarray(starts, dtype=np.int64)
        for t0 in np.unique(starts[starts > 0]):
            resets[int(t0)] = np.flatnonzero(starts == t0)
    for t in range(steps):
        if t in resets:
            rows_t = resets[t]
            metric[rows_t] = np.inf
            metric[rows_t, 0] = 0.0
        br = L[:, t, :] @ sig
        c0 = metric[:, p0] - br[:, :n_states]
        c1 = metric[:, p1] - br[:, n_states:]
        np.less(c1, c0, out=decisions[t])
        metric = np.minimum(c0, c1)
        if t % 32 == 31:
            metric -= metric.min(axis=1, keepdims=True)

    state = np.zeros(batch, dtype=np.int64)
    rows = np.arange(batch)
    out = np.empty((batch, steps), dtype=np.uint8)
    for t in range(steps - 1, -1, -1):
        out[:, t] = u_of_state[state]
        d = decisions[t, rows, state]
        state = np.where(d, p1[state], p0[state])
    return out[:, :n_info]


def viterbi_decode(received, cfg: CodecConfig = CodecConfig(), soft: bool | None = None) -> np.ndarray:
    """Decode one codeword.

    With ``soft`` False (the default for hard-decision configs) ``received``
    holds 0/1 bits; otherwise it holds LLRs.
    """
    r = np.asarray(received)
    if soft is None:
        soft = cfg.decision == "soft"
    llr = r.astype(np.float64) if soft else 1.0 - 2.0 * r.astype(np.float64)
    return viterbi_decode_batch(llr[None, :], cfg)[0]


def decode_many(sequences: Sequence[np.ndarray], cfg: CodecConfig, soft: bool) -> list[np.ndarray]:
    """Decode codewords of mixed lengths in one right-aligned batch."""
    n_out = len(cfg.generators)
    lengths = [len(s) for s in sequences]
    if any(n % n_out for n in lengths):
        raise ValueError(f"coded lengths must be multiples of {n_out}")
    width = max(lengths)
    llr = np.zeros((len(sequences), width))
    for i, s in enumerate(sequences):
        s = np.asarray(s, dtype=np.float64)
        llr[i, width - s.size:] = s if soft else 1.0 - 2.0 * s
    starts = [(width - n) // n_out for n in lengths]
    decoded = viterbi_decode_batch(llr, cfg, starts)
    return [decoded[i, st:] for i, st in enumerate(starts)]
