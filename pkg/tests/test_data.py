import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqlab.constellation import qam
from eqlab.data import (
    BitSource,
    demap_symbols,
    dac_effective_symbols,
    dac_frame_repeat,
    generate_symbols,
    iq_features,
    map_symbols,
    multi_trace_mix,
    prbs_bits,
    symbol_periodicity,
    window_dataset,
)
from eqlab.lfsr import NonPrimitivePolynomial


# --- bit sources -------------------------------------------------------------

def test_prbs_empty_and_deterministic():
    src = BitSource("prbs_lfsr", 5, 16)
    assert prbs_bits(src, 0).size == 0
    assert np.array_equal(src.bits(1000), BitSource("prbs_lfsr", 5, 16).bits(1000))


def test_prbs_order16_period():
    s = BitSource("prbs_lfsr", 1, 16).bits(2 * 65535)
    assert np.array_equal(s[:65535], s[65535:])
    assert not np.array_equal(s[:65534], s[1:65535])


def test_prbs_custom_taps_and_rejection():
    assert BitSource("prbs_lfsr", 1, 7, (7, 6)).bits(10).size == 10
    with pytest.raises(NonPrimitivePolynomial):
        BitSource("prbs_lfsr", 1, 4, (4, 2)).bits(10)
    with pytest.raises(ValueError):
        BitSource("prbs_lfsr", 1, 7, (5, 3))
    with pytest.raises(ValueError):
        BitSource("prbs_lfsr", 1, 99)
    with pytest.raises(ValueError):
        BitSource("dice")


@pytest.mark.parametrize("seeds", [(1, 2), (3, 4), (10, 11)])
def test_mt_disjoint_seed_cross_correlation(seeds):
    c = qam(16)
    n = 1 << 18
    a = generate_symbols(BitSource(seed=seeds[0]), c, n)[:, 0]
    b = generate_symbols(BitSource(seed=seeds[1]), c, n)[:, 0]
    a, b = a - a.mean(), b - b.mean()
    xc = np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b)))
    xc = np.abs(xc) / np.sqrt(np.sum(np.abs(a) ** 2) * np.sum(np.abs(b) ** 2))
    assert xc[0] < 0.004
    # every lag stays under the independent-sequence bound, P(exceed) ~ 1e-6
    assert xc.max() < np.sqrt((np.log(n) + 14) / n)


# --- mapping -----------------------------------------------------------------

def test_16qam_zero_bits_map_to_corner():
    c = qam(16)
    s = map_symbols(np.zeros(8, np.uint8), c)
    assert s.shape == (1, 2)
    assert np.allclose(s, c.points[0])


def test_interleaved_polarizations():
    c = qam(4)
    bits = np.array([0, 0, 1, 1, 1, 0, 0, 1], np.uint8)
    s = map_symbols(bits, c)
    assert np.allclose(s, [[c.points[0], c.points[3]], [c.points[2], c.points[1]]])


@given(st.sampled_from([2, 4, 8, 16, 32, 64, 128]), st.integers(0, 2**31), st.integers(1, 64))
def test_map_demap_roundtrip(order, seed, n):
    c = qam(order)
    bits = np.random.default_rng(seed).integers(0, 2, 2 * c.bits_per_symbol * n).astype(np.uint8)
    assert np.array_equal(demap_symbols(map_symbols(bits, c), c), bits)


def test_map_rejects_partial_symbol():
    with pytest.raises(ValueError):
        map_symbols(np.zeros(5, np.uint8), qam(16))


def test_mean_power_of_random_stream():
    s = generate_symbols(BitSource(seed=3), qam(64), 500_000)
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0, rel=0.005)


# --- periodicity arithmetic ----------------------------------------------------

def test_symbol_periodicity_values():
    assert symbol_periodicity(20, 6) == 174_762
    assert symbol_periodicity(16, 6) == 10_922
    assert symbol_periodicity(1, 1) == 1
    with pytest.raises(ValueError):
        symbol_periodicity(0, 6)


def test_dac_effective_symbols_example():
    assert dac_effective_symbols(512 * 1024, 10, 80.0, 34.4) == 22_544
    with pytest.raises(ValueError):
        dac_effective_symbols(10, 10, 80.0, 34.4)


def test_dac_frame_repeat_identity_and_tiling():
    s = generate_symbols(BitSource(seed=1), qam(16), 1000)
    assert np.array_equal(dac_frame_repeat(s, 10**6, 1, 34.4, 34.4), s)
    t = dac_frame_repeat(s, 100, 1, 1.0, 1.0, length=950)
    assert t.shape == (950, 2)
    assert np.array_equal(t[:100], s[:100]) and np.array_equal(t[100:200], s[:100])


# --- windowing ---------------------------------------------------------------

def _pair(n=500, order=16, seed=0, noise=0.0):
    c = qam(order)
    tx = generate_symbols(BitSource(seed=seed), c, n)
    g = np.random.default_rng(seed)
    rx = tx + noise * (g.standard_normal(tx.shape) + 1j * g.standard_normal(tx.shape))
    return c, tx, rx


def test_window_shapes():
    c, tx, rx = _pair()
    ds = window_dataset(tx, rx, 0, c)
    assert ds.inputs.shape == (500, 1, 4)
    assert np.allclose(ds.inputs[:, 0], iq_features(rx))
    ds = window_dataset(tx, rx, 25, c)
    assert ds.inputs.shape == (450, 51, 4) and ds.window == 51


def test_window_content_and_noiseless_labels():
    c, tx, rx = _pair()
    ds = window_dataset(tx, rx, 3, c, (0.5, 0.25, 0.25))
    k = 17
    assert np.allclose(ds.inputs[k], iq_features(rx[k:k + 7]))
    centre = ds.inputs[:, 3, 0] + 1j * ds.inputs[:, 3, 1]
    assert np.array_equal(c.decide(centre), ds.targets_class)
    sizes = [ds.splits[s].size for s in ("train", "val", "test")]
    assert sum(sizes) == len(ds) and ds.splits["train"][-1] + 1 == ds.splits["val"][0]


def test_window_validation():
    c, tx, rx = _pair(10)
    with pytest.raises(ValueError):
        window_dataset(tx, rx, 5, c)
    with pytest.raises(ValueError):
        window_dataset(tx, rx[:-1], 1, c)
    with pytest.raises(ValueError):
        window_dataset(tx, rx, 1, c, (0.5, 0.5, 0.5))


def test_epoch_shuffle_covers_train_once():
    c, tx, rx = _pair()
    ds = window_dataset(tx, rx, 2, c, shuffle_seed=4)
    o0, o1 = ds.epoch_order(0), ds.epoch_order(1)
    assert np.array_equal(np.sort(o0), ds.splits["train"])
    assert not np.array_equal(o0, o1)
    assert np.array_equal(o0, ds.epoch_order(0))
    n = sum(len(b) for b in ds.epoch_batches(0, 64))
    assert n == ds.train_size()


def test_multi_trace_mix():
    c = qam(16)
    traces = []
    for seed in range(3):
        _, tx, rx = _pair(300, seed=seed)
        traces.append(window_dataset(tx, rx, 2, c))
    mix = multi_trace_mix(traces, 2, 200, seed=1)
    assert mix.pool_size == 2 * 296 and mix.test_size == 296
    e0, e1 = mix.epoch_indices(0), mix.epoch_indices(1)
    assert len(set(e0)) == 200 and set(e0) != set(e1)
    trace, local = mix.locate(np.array([0, 295, 296, 591]))
    assert list(trace) == [0, 0, 1, 1] and list(local) == [0, 295, 0, 295]
    test = mix.test_set()
    assert np.array_equal(test.inputs, traces[2].inputs)
    batch = next(mix.epoch_batches(0, 10))
    t, l = mix.locate(e0[:10])
    assert np.array_equal(batch.inputs[0], traces[t[0]].inputs[l[0]])
    with pytest.raises(ValueError):
        multi_trace_mix(traces, 3, 10)


def test_paper_scale_pool_arithmetic():
    # 60 traces of 2**18 symbols, 50 for training
    per = 2**18 - 2 * 25
    assert 50 * per == pytest.approx(13e6, rel=0.01)
    assert 10 * per == pytest.approx(2.6e6, rel=0.01)
