import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from imsewf.links import DEFAULT_BEP, BepParams, LinkConfig
from imsewf.phy import (
    CodecConfig,
    analytic_bitflip_channel,
    coded_length,
    constellation,
    conv_encode,
    deinterleave,
    fit_bep,
    interleave,
    measure_ber,
    permutation,
    qam_demodulate,
    qam_llr,
    qam_modulate,
    rayleigh_gain,
    send_streams,
    transmit,
    viterbi_decode,
)
from imsewf.phy.conv import decode_many, viterbi_decode_batch

CODEC = CodecConfig()


def test_codec_validation():
    with pytest.raises(ValueError):
        CodecConfig(constraint_length=3, generators=(0o133,))
    with pytest.raises(ValueError):
        CodecConfig(generators=())
    with pytest.raises(ValueError):
        CodecConfig(decision="fuzzy")
    assert CodecConfig().rate == 0.5
    assert CodecConfig(generators=(0o133, 0o171, 0o165)).rate == pytest.approx(1 / 3)


def test_encode_zero_and_length():
    assert not conv_encode(np.zeros(50, dtype=int)).any()
    out = conv_encode(np.random.default_rng(0).integers(0, 2, 1000))
    assert out.size == 2 * (1000 + 7 - 1) == coded_length(1000, CODEC)
    with pytest.raises(ValueError):
        conv_encode([])


def test_encoder_known_impulse_response():
    # a single 1 followed by zeros emits the generator taps, interleaved
    out = conv_encode([1], CODEC).reshape(-1, 2)
    g1 = [int(c) for c in f"{0o133:07b}"]
    g2 = [int(c) for c in f"{0o171:07b}"]
    np.testing.assert_array_equal(out[:, 0], g1)
    np.testing.assert_array_equal(out[:, 1], g2)


def test_viterbi_corrects_isolated_errors():
    rng = np.random.default_rng(1)
    u = rng.integers(0, 2, 400)
    c = conv_encode(u)
    c[[10, 90, 300, 611]] ^= 1
    np.testing.assert_array_equal(viterbi_decode(c), u)


def test_soft_decoding_uses_reliabilities():
    rng = np.random.default_rng(2)
    u = rng.integers(0, 2, 300)
    llr = 4.0 * (1 - 2.0 * conv_encode(u))
    llr[20:24] = -0.1 * np.sign(llr[20:24])  # burst of weak wrong decisions
    np.testing.assert_array_equal(viterbi_decode(llr, CodecConfig(decision="soft")), u)


def test_decoder_rejects_bad_lengths():
    with pytest.raises(ValueError):
        viterbi_decode_batch(np.zeros((1, 7)))
    with pytest.raises(ValueError):
        viterbi_decode_batch(np.zeros((1, 10)))
    with pytest.raises(ValueError):
        viterbi_decode_batch(np.zeros(12))


def test_decode_many_mixed_lengths():
    rng = np.random.default_rng(3)
    msgs = [rng.integers(0, 2, n) for n in (5, 40, 1, 17)]
    out = decode_many([conv_encode(m) for m in msgs], CODEC, soft=False)
    for m, d in zip(msgs, out):
        np.testing.assert_array_equal(d, m)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200), st.integers(0, 2**32 - 1))
def test_interleaver_round_trip(bits, seed):
    x = np.array(bits, dtype=np.uint8)
    np.testing.assert_array_equal(deinterleave(interleave(x, seed), seed), x)


def test_interleaver_is_seeded():
    np.testing.assert_array_equal(permutation(100, 7), permutation(100, 7))
    assert not np.array_equal(permutation(100, 7), permutation(100, 8))


def _max_run(x):
    change = np.flatnonzero(np.diff(x)) + 1
    bounds = np.concatenate([[0], change, [x.size]])
    return int(np.diff(bounds).max())


def test_interleaver_disperses_runs():
    x = np.repeat([0, 1], 2**14).astype(np.uint8)
    runs = [_max_run(interleave(x, seed)) for seed in range(100)]
    assert max(runs) < 64


def test_constellation_energy_and_gray():
    pts, labels = constellation(16)
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert pts[0] == pytest.approx((1 + 1j) / math.sqrt(10))
    d_min = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
    for i in range(16):
        for j in range(i + 1, 16):
            if abs(abs(pts[i] - pts[j]) - d_min) < 1e-9:
                assert int(np.sum(labels[i] != labels[j])) == 1


@pytest.mark.parametrize("M", [4, 16, 64, 256])
def test_qam_round_trip_all_orders(M):
    k = int(math.log2(M))
    bits = np.random.default_rng(M).integers(0, 2, 60 * k)
    np.testing.assert_array_equal(qam_demodulate(qam_modulate(bits, M), M), bits)
    llr = qam_llr(qam_modulate(bits, M), M, 0.1)
    np.testing.assert_array_equal((llr < 0).astype(int), bits)


def test_qam_errors():
    with pytest.raises(ValueError):
        qam_modulate([0, 1, 0], 16)
    with pytest.raises(ValueError):
        constellation(8)


def test_transmit_noiseless_and_pure_noise():
    x = qam_modulate(np.random.default_rng(4).integers(0, 2, 400))
    np.testing.assert_allclose(transmit(x, 1.0, 1.0, 0.0, 0), x)
    y = transmit(x, 0.0, 1.0, 1.0, 0)
    np.testing.assert_allclose(y, transmit(np.zeros_like(x), 1.0, 1.0, 1.0, 0))
    with pytest.raises(ValueError):
        transmit(x, -1.0, 1.0, 1.0, 0)


def test_transmit_snr():
    n = 10**6
    x = qam_modulate(np.random.default_rng(5).integers(0, 2, 4 * n))
    p, h, s2 = 2.5, 0.6 - 0.3j, 0.7
    y = transmit(x, p, h, s2, 6)
    noise = y - h * math.sqrt(p) * x
    signal = h * math.sqrt(p) * x
    snr = np.mean(np.abs(signal) ** 2) / np.mean(np.abs(noise) ** 2)
    assert snr == pytest.approx(p * abs(h) ** 2 / s2, rel=0.01)


def test_bitflip_channel():
    bits = np.zeros(10**6, dtype=np.uint8)
    assert not analytic_bitflip_channel(bits, 1e4, DEFAULT_BEP, 0).any()
    p = 0.5123 * math.exp(-0.2862 * 10)
    rate = analytic_bitflip_channel(bits, 10.0, DEFAULT_BEP, 1).mean()
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / bits.size)
    assert float(DEFAULT_BEP.probability(0.0)) == 0.5
    assert float(BepParams(0.3, -1.0).probability(0.0)) == 0.3
    with pytest.raises(ValueError):
        analytic_bitflip_channel(bits, -1.0, DEFAULT_BEP, 0)


def test_fit_bep_recovers_exact_model():
    snr = np.linspace(1, 20, 12)
    fit = fit_bep(zip(snr, 0.5123 * np.exp(-0.2862 * snr)))
    assert fit.alpha == pytest.approx(0.5123, abs=1e-9)
    assert fit.beta == pytest.approx(-0.2862, abs=1e-9)


def test_fit_bep_two_points_define_the_line():
    fit = fit_bep([(1.0, 0.1), (3.0, 0.01)])
    assert fit.probability(1.0, clamp=False) == pytest.approx(0.1)
    assert fit.probability(3.0, clamp=False) == pytest.approx(0.01)


@pytest.mark.parametrize("samples", [[(1.0, 0.1)], [(1.0, 0.1), (1.0, 0.2)], [(1.0, 0.0), (2.0, 0.1)],
                                     [(1.0, 0.01), (2.0, 0.1)]])
def test_fit_bep_errors(samples):
    with pytest.raises(ValueError):
        fit_bep(samples)


@given(st.floats(1e-3, 0.5), st.floats(-3.0, -1e-3), st.lists(st.floats(0, 30), min_size=2, max_size=10, unique=True))
def test_fit_slope_negative_on_decreasing_curve(alpha, beta, snrs):
    if np.ptp(snrs) < 1e-3:
        return
    fit = fit_bep([(s, alpha * math.exp(beta * s)) for s in snrs])
    assert fit.beta < 0
    assert fit.beta == pytest.approx(beta, rel=1e-6)


def test_rayleigh_statistics():
    h = rayleigh_gain(np.random.SeedSequence(0), 10**5)
    g = np.abs(h) ** 2
    assert g.mean() == pytest.approx(1.0, rel=0.01)
    assert stats.kstest(g, "expon").pvalue > 0.01
    assert rayleigh_gain(3) == rayleigh_gain(3)
    assert isinstance(rayleigh_gain(3), complex)


def test_full_chain_noiseless_identity():
    rng = np.random.default_rng(8)
    streams = [rng.integers(0, 2, n).astype(np.uint8) for n in (1, 37, 500)]
    cfg = LinkConfig()
    for codec in (CODEC, CodecConfig(decision="soft")):
        out = send_streams(streams, [1.0, 0.3, 2.0], [1.0, 0.5j, -0.2 + 0.1j], 1e-30, cfg, codec,
                           [11, 12, 13], [1, 2, 3])
        for s, o in zip(streams, out):
            np.testing.assert_array_equal(o, s)


def test_send_streams_rejects_rate_mismatch():
    with pytest.raises(ValueError):
        send_streams([np.zeros(4, dtype=np.uint8)], [1.0], [1.0], 1.0, LinkConfig(coding_rate=2 / 3), CODEC,
                     None, [0])


def test_measure_ber_decreases_with_snr():
    cfg = LinkConfig()
    lo = measure_ber(3.0, 8192, cfg, CODEC, seed=0)
    hi = measure_ber(12.0, 8192, cfg, CODEC, seed=0)
    assert 0 < hi < lo < 0.5
