"""Power allocation across sub-streams.

The proposed allocator minimises

    sum_k  w_k * alpha * exp(beta * p_k * g_k / sigma_k^2)
    s.t.   sum_k  n_k * p_k <= P,   p_k >= 0

where ``w_k`` is the stream's importance weight, ``g_k = |h_k|^2`` and
``n_k = I_k / (R log2 M)`` its number of modulated symbols. Stationarity gives
the waterfilling form ``p_k = W_k * (level - H_k)^+`` with

    W_k = -sigma_k^2 / (beta * g_k)
    H_k = ln(I_k * sigma_k^2 / (w_k * g_k))

and the water level is searched so that the budget holds with equality.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .links import LinkConfig, StreamLink, link_arrays

__all__ = [
    "AllocationResult",
    "ConvergenceError",
    "base_width",
    "base_height",
    "waterfill",
    "ma_waterfill",
    "equal_power",
    "allocate",
    "kkt_residual",
    "objective",
    "STRATEGIES",
    "DEFAULT_TOLERANCE",
    "MAX_ITERATIONS",
]

DEFAULT_TOLERANCE = 1e-6
MAX_ITERATIONS = 10_000
_TINY_BUDGET = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class AllocationResult:
    strategy: str
    powers: np.ndarray
    budget: float
    consumed_power: float
    water_level: float | None = None
    base_widths: np.ndarray | None = None
    base_heights: np.ndarray | None = None
    multiplier: float | None = None
    iterations: int = 0
    method: str = "closed-form"
    converged: bool = True
    symbols: np.ndarray = field(default=None, repr=False)

    @property
    def active(self) -> np.ndarray:
        return self.powers > 0

    def budget_error(self) -> float:
        """Relative budget mismatch (absolute when the budget is ~0)."""
        diff = abs(self.consumed_power - self.budget)
        return diff if self.budget < _TINY_BUDGET else diff / self.budget

    def summary(self) -> dict:
        def g(x):
            return None if x is None else float(f"{x:.9g}")

        return {
            "strategy": self.strategy,
            "budget": g(self.budget),
            "consumed_power": g(self.consumed_power),
            "water_level": g(self.water_level),
            "multiplier": g(self.multiplier),
            "iterations": self.iterations,
            "method": self.method,
            "converged": self.converged,
            "active_streams": int(np.count_nonzero(self.active)),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def to_csv(self, links: Sequence[StreamLink], keys: Sequence[tuple[int, int]] | None = None) -> str:
        length, weight, gain, _ = link_arrays(links)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stream", "b", "s", "length", "weight", "gain", "width", "height", "power"])
        for k in range(len(links)):
            b, s = keys[k] if keys is not None else ("", "")
            width = "" if self.base_widths is None else f"{self.base_widths[k]:.9g}"
            height = "" if self.base_heights is None else f"{self.base_heights[k]:.9g}"
            w.writerow([
                k, b, s, f"{length[k]:.9g}", f"{weight[k]:.9g}", f"{gain[k]:.9g}",
                width, height, f"{self.powers[k]:.9g}",
            ])
        return buf.getvalue()


def _check_beta(cfg: LinkConfig):
    if not cfg.bep.beta < 0:
        raise ValueError(f"beta must be negative, got {cfg.bep.beta}")


def base_width(link: StreamLink, cfg: LinkConfig) -> float:
    _check_beta(cfg)
    return -link.noise / (cfg.bep.beta * link.gain)


def base_height(link: StreamLink) -> float:
    return math.log(link.length * link.noise / (link.weight * link.gain))


def objective(powers, links: Sequence[StreamLink], cfg: LinkConfig) -> float:
    """Unclamped expected IMSE of an allocation."""
    _, weight, gain, noise = link_arrays(links)
    p = np.asarray(powers, dtype=float)
    return float(np.dot(weight, cfg.bep.alpha * np.exp(cfg.bep.beta * p * gain / noise)))


def _fill(level, widths, heights):
    return widths * np.maximum(level - heights, 0.0)


def _solve_level(symbols, widths, heights, budget, tol, max_iter):
    """Water-level search. Returns ``(level, iterations, method)``."""
    nw = symbols * widths
    total_nw = nw.sum()

    def consumed(level):
        return float(np.dot(symbols, _fill(level, widths, heights)))

    def done(c):
        return abs(c - budget) / budget < tol

    # Level that would hold with every stream active; clipping only adds
    # power, so the iterates below approach the solution from above.
    level = (budget + float(np.dot(nw, heights))) / total_nw
    c = consumed(level)
    it = 0
    while not done(c) and it < max_iter:
        level -= (c - budget) / total_nw
        c = consumed(level)
        it += 1
    if done(c):
        method = "fixed-point"
    else:
        lo = float(heights.min())
        hi = float(heights.max()) + budget / (widths.min() * symbols.min())
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            c = consumed(mid)
            if c > budget:
                hi = mid
            else:
                lo = mid
            it += 1
            if done(c):
                break
        level = mid
        method = "bisection"

    # The budget is piecewise linear in the level: once the active set is
    # known the level follows exactly. Newton steps on the piecewise-linear
    # budget terminate in at most K steps.
    for _ in range(len(heights) + 1):
        act = heights < level
        if not act.any():
            break
        new = (budget + float(np.dot(nw[act], heights[act]))) / float(nw[act].sum())
        if new == level or np.array_equal(heights < new, act):
            level = new
            break
        level = new
    return level, it, method


def _waterfill_arrays(strategy, length, weight, gain, noise, cfg, budget, tol, max_iter):
    _check_beta(cfg)
    if budget < 0 or not math.isfinite(budget):
        raise ValueError(f"budget must be finite and >= 0, got {budget}")
    symbols = cfg.symbols(length)
    widths = -noise / (cfg.bep.beta * gain)
    heights = np.log(length * noise / (weight * gain))
    if budget < _TINY_BUDGET:
        level = float(heights.min())
        powers = np.zeros_like(heights)
        it, method = 0, "degenerate"
    else:
        level, it, method = _solve_level(symbols, widths, heights, budget, tol, max_iter)
        powers = _fill(level, widths, heights)
    consumed = float(np.dot(symbols, powers))
    multiplier = -cfg.bep.alpha * cfg.bep.beta * cfg.info_bits_per_symbol * math.exp(-level)
    res = AllocationResult(
        strategy=strategy,
        powers=powers,
        budget=float(budget),
        consumed_power=consumed,
        water_level=float(level),
        base_widths=widths,
        base_heights=heights,
        multiplier=multiplier,
        iterations=it,
        method=method,
        symbols=symbols,
    )
    limit = max(tol, 1e-12) if budget >= _TINY_BUDGET else _TINY_BUDGET
    if res.budget_error() > limit:
        bad = replace(res, converged=False)
        raise ConvergenceError(
            f"water level search did not meet the budget (relative error {res.budget_error():.3g})",
            bad,
        )
    return res


def waterfill(links: Sequence[StreamLink], cfg: LinkConfig, budget: float,
              tol: float = DEFAULT_TOLERANCE, max_iter: int = MAX_ITERATIONS) -> AllocationResult:
    """Importance-aware waterfilling over ``links`` with total power ``budget``.

    The level is found with the fixed-point update
    ``level -= (consumed - P) / sum(n * W)`` until the relative budget error
    drops below ``tol``; after ``max_iter`` updates it falls back to
    bisection. The returned level is then made exact on the final active set.
    """
    length, weight, gain, noise = link_arrays(links)
    return _waterfill_arrays("proposed", length, weight, gain, noise, cfg, budget, tol, max_iter)


def ma_waterfill(links: Sequence[StreamLink], cfg: LinkConfig, budget: float,
                 tol: float = DEFAULT_TOLERANCE, max_iter: int = MAX_ITERATIONS) -> AllocationResult:
    """Margin-adaptive baseline: minimise the plain sum of stream BERs, i.e.
    the same program with every importance weight set to one."""
    length, _, gain, noise = link_arrays(links)
    return _waterfill_arrays("ma", length, np.ones_like(length), gain, noise, cfg, budget, tol, max_iter)


def equal_power(links: Sequence[StreamLink], cfg: LinkConfig, budget: float) -> AllocationResult:
    if budget < 0 or not math.isfinite(budget):
        raise ValueError(f"budget must be finite and >= 0, got {budget}")
    length, _, _, _ = link_arrays(links)
    symbols = cfg.symbols(length)
    per_symbol = budget / symbols.sum()
    powers = np.full(length.shape, per_symbol)
    return AllocationResult(
        strategy="equal",
        powers=powers,
        budget=float(budget),
        consumed_power=float(budget),
        symbols=symbols,
    )


STRATEGIES = {
    "proposed": waterfill,
    "ma": ma_waterfill,
    "equal": equal_power,
}


def allocate(strategy: str, links: Sequence[StreamLink], cfg: LinkConfig, budget: float,
             tol: float = DEFAULT_TOLERANCE) -> AllocationResult:
    try:
        fn = STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}") from None
    if fn is equal_power:
        return fn(links, cfg, budget)
    return fn(links, cfg, budget, tol)


def kkt_residual(result: AllocationResult, links: Sequence[StreamLink], cfg: LinkConfig,
                 weights=None) -> float:
    """Largest relative spread of the per-stream Lagrange multipliers implied
    by stationarity, over streams with positive power.

    ``weights`` overrides the links' importance weights (use ones to check a
    margin-adaptive allocation).
    """
    length, weight, gain, noise = link_arrays(links)
    if weights is not None:
        weight = np.broadcast_to(np.asarray(weights, dtype=float), length.shape)
    p = np.asarray(result.powers, dtype=float)
    act = p > 0
    if not act.any():
        raise ValueError("degenerate allocation: no active streams")
    a, b = cfg.bep.alpha, cfg.bep.beta
    snr_slope = gain[act] / noise[act]
    dpe = a * b * snr_slope * np.exp(b * p[act] * snr_slope)
    lam = -weight[act] * dpe * cfg.info_bits_per_symbol / length[act]
    if lam.size == 1:
        return 0.0
    mean = lam.mean()
    return float(np.max(np.abs(lam - mean)) / abs(mean))
