import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imsewf.links import BepParams, LinkConfig, StreamLink
from imsewf.optimizer import (
    ConvergenceError,
    allocate,
    base_height,
    base_width,
    equal_power,
    kkt_residual,
    ma_waterfill,
    objective,
    waterfill,
)
from oracles import pgd_allocation

CFG = LinkConfig()


def random_links(rng, K):
    L = np.exp(rng.uniform(math.log(1e2), math.log(1e5), K))
    w = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), K))
    g = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), K))
    return [StreamLink(*a) for a in zip(L, w, g)]


def test_base_width_examples():
    ln = StreamLink(100, 1.0, 1.0)
    assert base_width(ln, CFG) == pytest.approx(3.4941, abs=5e-5)
    assert base_width(StreamLink(100, 1.0, 2.0), CFG) == pytest.approx(base_width(ln, CFG) / 2)
    assert base_width(ln, LinkConfig(bep=BepParams(0.5, -1.0))) == 1.0


def test_bep_rejects_nonnegative_beta():
    with pytest.raises(ValueError):
        BepParams(0.5, 0.0)


def test_base_height_examples():
    assert base_height(StreamLink(1, 1.0, 1.0)) == 0.0
    assert base_height(StreamLink(1000, 4.0, 2.0)) == pytest.approx(math.log(125))
    assert base_height(StreamLink(1000, 4.0, 2.0)) == pytest.approx(4.8283, abs=5e-5)
    assert base_height(StreamLink(7, math.e * 3, 1.0)) == pytest.approx(base_height(StreamLink(7, 3, 1.0)) - 1)


@pytest.mark.parametrize("weight,gain", [(1.0, 1.0), (1e-3, 50.0), (300.0, 0.01)])
def test_single_stream_takes_everything(weight, gain):
    # I / (R log2 M) = 1000 / (0.5 * 4) = 500 symbols
    assert CFG.symbols(1000) == 500
    res = waterfill([StreamLink(1000, weight, gain)], CFG, 500.0)
    assert res.powers[0] == pytest.approx(1.0, rel=1e-9)
    res = waterfill([StreamLink(1000, weight, gain)], CFG, 250.0)
    assert res.powers[0] == pytest.approx(0.5, rel=1e-9)
    assert kkt_residual(res, [StreamLink(1000, weight, gain)], CFG) == 0.0


def test_weight_gap_between_twin_streams():
    links = [StreamLink(1000, 1.0, 1.0), StreamLink(1000, 4.0, 1.0)]
    res = waterfill(links, CFG, 10000.0)
    assert res.active.all()
    p1, p2 = res.powers
    assert p2 > p1
    assert p2 - p1 == pytest.approx(base_width(links[0], CFG) * math.log(4), rel=1e-9)
    oracle, _ = pgd_allocation(np.array([1000.0] * 2), np.array([1.0, 4.0]), np.ones(2), np.ones(2),
                               CFG.bep.alpha, CFG.bep.beta, CFG.info_bits_per_symbol, 10000.0)
    np.testing.assert_allclose(res.powers, oracle, rtol=1e-6)


def test_waterfilling_form_holds():
    links = random_links(np.random.default_rng(3), 12)
    budget = 10 * sum(CFG.symbols(ln.length) for ln in links)
    res = waterfill(links, CFG, budget)
    expect = res.base_widths * np.maximum(res.water_level - res.base_heights, 0.0)
    np.testing.assert_allclose(res.powers, expect, rtol=1e-12, atol=0)
    inactive = ~res.active
    assert np.all(res.base_heights[inactive] >= res.water_level)
    assert res.multiplier == pytest.approx(
        -CFG.bep.alpha * CFG.bep.beta * CFG.info_bits_per_symbol * math.exp(-res.water_level))


@pytest.mark.parametrize("seed", range(20))
def test_matches_projected_gradient_oracle(seed):
    rng = np.random.default_rng(seed)
    links = random_links(rng, int(rng.integers(2, 17)))
    L = np.array([ln.length for ln in links])
    budget = float(np.exp(rng.uniform(0, math.log(100))) * CFG.symbols(L).sum())
    res = waterfill(links, CFG, budget)
    _, f_oracle = pgd_allocation(L, np.array([ln.weight for ln in links]), np.array([ln.gain for ln in links]),
                                 np.ones(len(links)), CFG.bep.alpha, CFG.bep.beta, CFG.info_bits_per_symbol,
                                 budget)
    assert objective(res.powers, links, CFG) <= f_oracle * (1 + 1e-6)
    assert res.budget_error() <= 1e-6
    assert kkt_residual(res, links, CFG) <= 1e-6


def test_kkt_detects_perturbation():
    links = random_links(np.random.default_rng(5), 8)
    budget = 20 * sum(CFG.symbols(ln.length) for ln in links)
    res = waterfill(links, CFG, budget)
    assert kkt_residual(res, links, CFG) <= 1e-6
    k = int(np.argmax(res.powers))
    p = res.powers.copy()
    p[k] *= 1.1
    from dataclasses import replace
    assert kkt_residual(replace(res, powers=p), links, CFG) > 0.05


def test_kkt_degenerate():
    links = [StreamLink(10, 1.0, 1.0)] * 2
    res = waterfill(links, CFG, 0.0)
    assert not res.powers.any()
    assert res.consumed_power == 0
    with pytest.raises(ValueError):
        kkt_residual(res, links, CFG)


def test_tiny_budget_uses_absolute_tolerance():
    links = random_links(np.random.default_rng(9), 5)
    res = waterfill(links, CFG, 1e-14)
    assert res.budget_error() <= 1e-6


def test_rejects_bad_budget():
    with pytest.raises(ValueError):
        waterfill([StreamLink(10, 1.0, 1.0)], CFG, -1.0)
    with pytest.raises(ValueError):
        equal_power([StreamLink(10, 1.0, 1.0)], CFG, math.inf)


def test_iteration_cap_falls_back():
    links = random_links(np.random.default_rng(11), 16)
    budget = 3 * sum(CFG.symbols(ln.length) for ln in links)
    ref = waterfill(links, CFG, budget)
    capped = waterfill(links, CFG, budget, max_iter=1)
    assert capped.converged
    assert capped.method != ref.method or ref.iterations <= 1
    np.testing.assert_allclose(capped.powers, ref.powers, rtol=1e-9, atol=1e-12)


def test_convergence_error_carries_result():
    err = ConvergenceError("x", result=123)
    assert err.result == 123


def test_ma_identical_links_equal_powers():
    links = [StreamLink(500, w, 0.7) for w in (1.0, 5.0, 0.01)]
    res = ma_waterfill(links, CFG, 3000.0)
    np.testing.assert_allclose(res.powers, res.powers[0], rtol=1e-12)


@given(st.floats(10, 1e4), st.floats(1.5, 100), st.floats(0.05, 20), st.floats(0.1, 100))
def test_ma_prioritizes_short_streams(short, ratio, gain, snr):
    links = [StreamLink(short, 1.0, gain), StreamLink(short * ratio, 1.0, gain)]
    budget = snr * sum(CFG.symbols(ln.length) for ln in links)
    res = ma_waterfill(links, CFG, budget)
    assert res.powers[0] >= res.powers[1]


@given(st.lists(st.tuples(st.floats(10, 1e5), st.floats(0.01, 100)), min_size=1, max_size=8),
       st.floats(1e-3, 1e3), st.floats(0.01, 100))
def test_ma_equals_proposed_iff_uniform_weights(spec, c, snr):
    links = [StreamLink(L, c, g) for L, g in spec]
    budget = snr * sum(CFG.symbols(ln.length) for ln in links)
    np.testing.assert_allclose(waterfill(links, CFG, budget).powers, ma_waterfill(links, CFG, budget).powers,
                               rtol=1e-9, atol=1e-12)


def test_ma_differs_for_non_uniform_weights():
    links = [StreamLink(1000, 1.0, 1.0), StreamLink(1000, 100.0, 1.0)]
    assert not np.allclose(waterfill(links, CFG, 1000.0).powers, ma_waterfill(links, CFG, 1000.0).powers)


def test_equal_power_examples():
    links = [StreamLink(1e5, 1.0, 0.3), StreamLink(1e5, 9.0, 4.0)]
    assert CFG.symbols(2e5) == 1e5
    res = equal_power(links, CFG, 1e5)
    np.testing.assert_array_equal(res.powers, [1.0, 1.0])
    assert res.consumed_power == 1e5
    assert res.water_level is None


def test_allocate_dispatch():
    links = random_links(np.random.default_rng(2), 4)
    for name in ("proposed", "ma", "equal"):
        assert allocate(name, links, CFG, 100.0).strategy == name
    with pytest.raises(ValueError):
        allocate("greedy", links, CFG, 100.0)


def test_result_serialization():
    links = random_links(np.random.default_rng(4), 3)
    res = waterfill(links, CFG, 1000.0)
    rows = res.to_csv(links, [(1, 0), (1, 1), (1, 2)]).strip().split("\n")
    assert rows[0] == "stream,b,s,length,weight,gain,width,height,power"
    assert len(rows) == 4
    assert '"strategy": "proposed"' in res.to_json()


@given(st.integers(0, 10_000), st.integers(2, 16), st.floats(0.01, 1e3))
def test_budget_and_nonnegativity_all_strategies(seed, K, snr):
    links = random_links(np.random.default_rng(seed), K)
    budget = snr * sum(CFG.symbols(ln.length) for ln in links)
    for name in ("proposed", "ma", "equal"):
        res = allocate(name, links, CFG, budget)
        assert np.all(res.powers >= 0)
        assert res.budget_error() <= 1e-6
        symbols = CFG.symbols(np.array([ln.length for ln in links]))
        assert abs(np.dot(symbols, res.powers) - budget) <= 1e-6 * budget


@given(st.integers(0, 10_000), st.integers(2, 10), st.floats(0.1, 100), st.floats(1e-3, 1e3))
def test_scale_coherence(seed, K, snr, scale):
    links = random_links(np.random.default_rng(seed), K)
    scaled = [StreamLink(ln.length, ln.weight, ln.gain, ln.noise * scale) for ln in links]
    n = sum(CFG.symbols(ln.length) for ln in links)
    a = waterfill(links, CFG, snr * n)
    b = waterfill(scaled, CFG, snr * n * scale)
    np.testing.assert_allclose(b.powers / scale, a.powers, rtol=1e-7, atol=1e-9 * snr)


def test_weight_monotonicity_grid():
    rng = np.random.default_rng(21)
    links = random_links(rng, 6)
    budget = 5 * sum(CFG.symbols(ln.length) for ln in links)
    grid = np.logspace(-3, 3, 20)
    p = []
    for w in grid:
        trial = list(links)
        trial[2] = StreamLink(links[2].length, float(w), links[2].gain)
        p.append(waterfill(trial, CFG, budget).powers[2])
    assert np.all(np.diff(p) >= 0)
    assert p[-1] > p[0]


def test_gain_sweep_has_interior_maximum():
    gains = np.logspace(-3, 3, 50)
    p = np.array([waterfill([StreamLink(1000, 1.0, g), StreamLink(1000, 1.0, 1.0)], CFG, 500.0).powers[0]
                  for g in gains])
    i = int(np.argmax(p))
    assert 0 < i < len(p) - 1
    assert np.all(np.diff(p[: i + 1]) >= -1e-12)
    assert np.all(np.diff(p[i:]) <= 1e-12)
    assert p[0] < p[i] and p[-1] < p[i]
