"""Acceptance suite: one printed PASS/FAIL line per criterion at its pinned tolerance.

Criteria 7, 8 and 10 are desk-scale training experiments (minutes to tens of
minutes on one core) and carry the ``slow`` marker.
"""
import math
import time

import numpy as np
import pytest

from eqlab.channel import FiberParams, LinkConfig, OpticalField, ShapingConfig, simulate_link, ssfm_span
from eqlab.complexity import QuantSpec, TopologySpec, bops_dense, bops_mlp3, reference_specs, rmps
from eqlab.constellation import qam
from eqlab.data import (
    BitSource,
    EvalSet,
    dac_effective_symbols,
    dac_frame_repeat,
    generate_symbols,
    multi_trace_mix,
    symbol_periodicity,
    window_dataset,
)
from eqlab.metrics import evm_rms, mi_lower_bound, q_from_ber, q_from_evm
from eqlab.nn import BiLstmArch, MlpArch, TrainConfig, build_model, train
from eqlab.pitfalls import ProbeBudget, jail_window_detect, overfit_gap, prbs_learnability_test
from oracles import CONFIGS_FD, awgn, awgn_cluster, awgn_mi_quadrature, fd_worst_relative_error, line_cluster


# --- 1. complexity golden table ----------------------------------------------------

MLP_EXACT = [482_236, 482_400, 482_293, 1_028_416, 1_028_160, 1_028_542, 2_085_200, 4_087_000]
MLP_PRINTED = [4.82e5, 4.82e5, 4.82e5, 1.02e6, 1.02e6, 1.02e6, 2.08e6, 4.08e6]
BILSTM_PRINTED = [5.03e5, 5.00e5, 5.03e5, 1.04e6, 1.01e6, 1.03e6, 2.00e6, 4.02e6]


def _sig3(x, truncate):
    step = 10 ** (math.floor(math.log10(x)) - 2)
    return (math.floor(x / step) if truncate else round(x / step)) * step


def test_c01_complexity_table(criterion):
    t0 = time.perf_counter()
    values = [rmps(s) for s in reference_specs()]
    mlp, lstm = values[:8], values[8:]
    ok_mlp = mlp == MLP_EXACT and all(math.isclose(_sig3(v, True), p) for v, p in zip(mlp, MLP_PRINTED))
    ok_lstm = all(math.isclose(_sig3(v, False), p) for v, p in zip(lstm, BILSTM_PRINTED))
    dt = time.perf_counter() - t0
    ok = ok_mlp and ok_lstm and dt < 1.0
    assert criterion(1, ok, f"16/16 RMpS at printed precision: mlp {ok_mlp}, bilstm {ok_lstm}; {dt * 1e3:.1f} ms")


# --- 2. metric formulas ------------------------------------------------------------

def test_c02_metric_formulas(criterion):
    q = q_from_ber(1e-3)
    q_evm = q_from_evm(0.094, 16, 1.076)
    ok = abs(q - 9.80) <= 0.01 and abs(q_evm - 13.62) <= 0.05
    assert criterion(2, ok, f"Q(1e-3) = {q:.4f} dB (9.80 +/- 0.01); Q_EVM(9.4 %, 16, 1.076) = {q_evm:.3f} dB "
                             f"(13.62 +/- 0.05)")


# --- 3. PRBS periodicity -----------------------------------------------------------

# order -> printed symbol period as (digits, value of the last printed digit); 64-QAM
PERIODICITY_TABLE = {
    16: (10, 1e3), 18: (43, 1e3), 20: (174, 1e3), 22: (699, 1e3), 24: (279, 1e4),
    26: (1118, 1e4), 28: (447, 1e5), 30: (1789, 1e5), 32: (715, 1e6), 34: (28, 1e8),
}


def test_c03_prbs_periodicity(criterion):
    bad = []
    for order, (digits, step) in PERIODICITY_TABLE.items():
        p = symbol_periodicity(order, 6)
        if math.floor(p / step) != digits:
            bad.append((order, p))
    ok = not bad
    assert criterion(3, ok, f"{len(PERIODICITY_TABLE) - len(bad)}/{len(PERIODICITY_TABLE)} entries match the "
                             f"printed digits (order 16 -> {symbol_periodicity(16, 6)}); mismatches {bad}")


# --- 4. DAC arithmetic -------------------------------------------------------------

def test_c04_dac_periodicity(criterion):
    from eqlab.pitfalls import autocorr_period

    p = dac_effective_symbols(512 * 1024, 10, 80.0, 34.4)
    s = generate_symbols(BitSource("mersenne_twister", 3), qam(64), p)
    trace = dac_frame_repeat(s, 512 * 1024, 10, 80.0, 34.4, length=5 * p)
    found = autocorr_period(trace, max_lag=2 * p).period
    ok = 22_000 <= p < 23_000 and found == p
    assert criterion(4, ok, f"effective symbols {p} (~22k); autocorrelation period {found}")


# --- 5. channel numerics -----------------------------------------------------------

def _field(seed, n=4096, rate=137.6e9):
    g = np.random.default_rng(seed)
    x = (g.standard_normal(n) + 1j * g.standard_normal(n)) * 1e-2
    y = (g.standard_normal(n) + 1j * g.standard_normal(n)) * 1e-2
    return OpticalField(x, y, rate, rate / 4)


def test_c05_channel_numerics(criterion):
    t0 = time.perf_counter()
    energy = 0.0
    for seed, d in enumerate(np.linspace(-30, 30, 7)):
        f = _field(seed)
        out = ssfm_span(f, FiberParams(attenuation_db_per_km=0.0, dispersion_ps_nm_km=d, gamma_per_w_km=0.0), 20.0, 2.0)
        energy = max(energy, abs(out.energy.sum() - f.energy.sum()) / f.energy.sum())

    phase = 0.0
    for p_mw, split, gamma in [(0.1, 0.5, 1.3), (5.0, 1.0, 0.5), (20.0, 0.2, 3.0)]:
        px, py = p_mw * 1e-3 * split, p_mw * 1e-3 * (1 - split)
        f = OpticalField(np.full(64, np.sqrt(px), complex), np.full(64, np.sqrt(py), complex), 1e11, 2.5e10)
        out = ssfm_span(f, FiberParams(attenuation_db_per_km=0.0, dispersion_ps_nm_km=0.0, gamma_per_w_km=gamma),
                        10.0, 0.5)
        expected = 8 / 9 * gamma * (px + py) * 10.0
        ref = out.samples_x if px >= py else out.samples_y
        phase = max(phase, abs(np.angle(ref[0]) - expected) / expected)

    fast = ShapingConfig(samples_per_symbol=4)
    c = qam(16)
    tx = c.points[np.random.default_rng(0).integers(0, 16, (4096, 2))]
    rx = simulate_link(tx, FiberParams(gamma_per_w_km=0.0), LinkConfig(50.0, 2, 5.0), fast,
                       np.random.default_rng(0), ase=False)
    cd_evm = evm_rms(rx, tx)

    tx2 = tx[:2048]
    a = simulate_link(tx2, FiberParams(), LinkConfig(50.0, 1, 0.5, 4.5, 4.0), fast, np.random.default_rng(0), ase=False)
    b = simulate_link(tx2, FiberParams(), LinkConfig(50.0, 1, 0.25, 4.5, 4.0), fast, np.random.default_rng(0), ase=False)
    halving = abs(evm_rms(a, tx2) - evm_rms(b, tx2))
    dt = time.perf_counter() - t0

    ok = energy <= 1e-12 and phase <= 1e-6 and cd_evm < 0.005 and halving < 1e-3 and dt < 300
    assert criterion(5, ok, f"energy {energy:.1e} (<=1e-12), CW phase {phase:.1e} (<=1e-6), CD round trip EVM "
                             f"{100 * cd_evm:.3f} % (<0.5), step halving {100 * halving:.4f} pp (<0.1); {dt:.0f} s")


# --- 6. gradient oracle ------------------------------------------------------------

def test_c06_gradient_oracle(criterion):
    t0 = time.perf_counter()
    worst = {cfg: fd_worst_relative_error(*cfg, seed=0) for cfg in CONFIGS_FD}
    dt = time.perf_counter() - t0
    top = max(worst.values())
    ok = top < 1e-5 and dt < 120
    assert criterion(6, ok, f"{len(worst)} configs (MLP3/biLSTM x MSE/CEL x L2 on/off), worst relative error "
                             f"{top:.1e} (<1e-5); {dt:.0f} s")


# --- 7. PRBS learnability ----------------------------------------------------------

C7_BUDGET = ProbeBudget(model="bilstm", memory=3, lstm_units=32, epochs=40, batch_size=64, learning_rate=3e-3)


def _learnability(source):
    return prbs_learnability_test(source, qam(64), 1 << 15, 6.9, C7_BUDGET, test_symbols=1 << 14,
                                  val_symbols=1 << 12)


@pytest.mark.slow
def test_c07_prbs_learnability(criterion):
    t0 = time.perf_counter()
    lfsr = _learnability(BitSource("prbs_lfsr", 1, 16))
    mt = [_learnability(BitSource("mersenne_twister", s)) for s in (1, 2, 3)]
    dt = time.perf_counter() - t0
    ok = lfsr.gain_db > 0.5 and all(r.gain_db <= 0.1 for r in mt) and dt < 1800
    mt_gains = ", ".join(f"{r.gain_db:+.2f}" for r in mt)
    assert criterion(7, ok, f"LFSR-16 gain {lfsr.gain_db:+.2f} dB (>0.5); MT gains {mt_gains} dB (<=0.1); "
                             f"{dt / 60:.1f} min")


# --- 8. single-trace overfitting vs multi-trace mix --------------------------------

C8_LINK = LinkConfig(num_spans=4, launch_power_dbm=7.0, step_km=2.0)
C8_SHAPING = ShapingConfig(samples_per_symbol=4)


def _dac_traces(c, count, n, period, memory):
    out = []
    for k in range(count):
        tx = generate_symbols(BitSource("mersenne_twister", 100 + k), c, period)
        tx = dac_frame_repeat(tx, period, 1, 1.0, 1.0, length=n)
        rx = simulate_link(tx, FiberParams(), C8_LINK, C8_SHAPING, np.random.default_rng(k))
        out.append(window_dataset(tx, rx, memory, c, (1.0, 0.0, 0.0)))
    return out


def _all(ds) -> EvalSet:
    return ds.split("train")


def _smooth(x, w=5):
    return np.convolve(x, np.ones(w) / w, mode="valid")


@pytest.mark.slow
def test_c08_overfitting_single_vs_multi_trace(criterion):
    t0 = time.perf_counter()
    c, memory, n, period = qam(16), 5, 1 << 14, 2048
    traces = _dac_traces(c, 10, n, period, memory)
    val = _all(traces[8])
    held = [_all(traces[k]) for k in (8, 9)]
    test = EvalSet(*(np.concatenate([getattr(h, f) for h in held])
                     for f in ("inputs", "targets_regression", "targets_class")))
    cfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=80, patience=None)

    def run(data, train_monitor):
        model = build_model(MlpArch(memory, (128, 64)), np.random.default_rng(0))
        res = train(model, data, cfg, c, val, monitors={"fit": train_monitor, "test": test})
        return _smooth(res.trace.column("fit_q_db")), _smooth(res.trace.column("test_q_db"))

    single_tr, single_te = run(traces[0], _all(traces[0]))
    mix = multi_trace_mix(traces[:8] + [traces[9]], 8, n - 2 * memory, seed=0)
    multi_tr, multi_te = run(mix, mix._gather(np.arange(0, mix.pool_size, 8)))
    dt = time.perf_counter() - t0

    single = overfit_gap(single_tr, single_te, patience=5, min_drop_db=0.3)
    multi = overfit_gap(multi_tr, multi_te, patience=5, min_drop_db=0.3)
    co_rising = (not multi.overfit and multi_te[-1] >= multi_te[0] + 0.5
                 and multi_te[-1] >= multi_te.max() - 0.3 and multi_tr[-1] > multi_tr[0])
    ok = single.overfit and co_rising and multi_te[-1] > single_te[-1] and dt < 3600
    assert criterion(8, ok, f"single trace: test peak {single_te.max():.2f} -> final {single_te[-1]:.2f} dB while "
                             f"train {single_tr[0]:.2f} -> {single_tr[-1]:.2f} (overfit {single.overfit}); mix: test "
                             f"{multi_te[0]:.2f} -> {multi_te[-1]:.2f} dB (co-rising {co_rising}); final test "
                             f"{multi_te[-1]:.2f} > {single_te[-1]:.2f}; {dt / 60:.1f} min")


# --- 9. jail window ----------------------------------------------------------------

def test_c09_jail_window(criterion):
    t0 = time.perf_counter()
    c = qam(16)
    line = jail_window_detect(*line_cluster(c), c, kappa=1.076)
    flags = [jail_window_detect(*awgn_cluster(c, snr, seed=s), c).flag
             for snr in np.arange(10.0, 25.5, 1.0) for s in range(3)]
    dt = time.perf_counter() - t0
    ok = line.flag and line.q_gap_db >= 3.0 and not any(flags) and dt < 60
    assert criterion(9, ok, f"line cluster gap {line.q_gap_db:.2f} dB flagged {line.flag}; AWGN 10-25 dB "
                             f"false positives {sum(flags)}/{len(flags)}; {dt:.1f} s")


# --- 10. mini-batch trend ----------------------------------------------------------

C10 = dict(order=16, memory=5, hidden_units=16, epochs=150, learning_rate=5e-3, train=1 << 14, val=1 << 12,
           test=1 << 15)


def _link_windows(c, n, seed, memory):
    tx = generate_symbols(BitSource("mersenne_twister", seed), c, n + 2 * memory)
    rx = simulate_link(tx, FiberParams(), C8_LINK, C8_SHAPING, np.random.default_rng(seed))
    return tx, rx


@pytest.mark.slow
def test_c10_minibatch_trend(criterion):
    t0 = time.perf_counter()
    c, memory = qam(C10["order"]), C10["memory"]
    n = C10["train"] + C10["val"]
    ds = window_dataset(*_link_windows(c, n, 7, memory), memory, c, (C10["train"] / n, C10["val"] / n, 0.0))
    test = _all(window_dataset(*_link_windows(c, C10["test"], 8, memory), memory, c, (1.0, 0.0, 0.0)))
    q, last = {}, {}
    for bs in (1024, 8):
        model = build_model(BiLstmArch(memory, C10["hidden_units"]), np.random.default_rng(0))
        cfg = TrainConfig(batch_size=bs, learning_rate=C10["learning_rate"], max_epochs=C10["epochs"], patience=None)
        res = train(model, ds, cfg, c, ds.split("val"), monitors={"test": test})
        curve = res.trace.column("test_q_db")
        q[bs], last[bs] = curve[res.best_epoch], curve[-1]
    dt = time.perf_counter() - t0
    ok = q[1024] - q[8] >= 0.5 and dt < 7200
    assert criterion(10, ok, f"test Q at best validation epoch: batch 1024 {q[1024]:.2f} dB, batch 8 {q[8]:.2f} dB, "
                              f"difference {q[1024] - q[8]:+.2f} (>=0.5); final epoch {last[1024]:.2f} vs "
                              f"{last[8]:.2f}; {dt / 60:.1f} min")


# --- 11. MI estimator --------------------------------------------------------------

def test_c11_mi_estimator(criterion):
    t0 = time.perf_counter()
    c = qam(16)
    tx = c.points[np.random.default_rng(6).integers(0, 16, 200_000)]
    noiseless = mi_lower_bound(tx, tx, c)
    ladder = np.arange(0.0, 22.0, 4.0)
    est = np.array([mi_lower_bound(awgn(tx, snr, 7), tx, c) for snr in ladder])
    ref = np.array([awgn_mi_quadrature(c, 10 ** (-snr / 10)) for snr in ladder])
    err = float(np.max(np.abs(est - ref)))
    monotone = bool(np.all(np.diff(est) > 0))
    dt = time.perf_counter() - t0
    ok = abs(noiseless - 4.0) <= 0.01 and err <= 0.05 and monotone and dt < 120
    assert criterion(11, ok, f"noiseless {noiseless:.4f} bits (4.00 +/- 0.01); ladder 0-20 dB max error {err:.4f} "
                              f"bits (<=0.05); monotone {monotone}; {dt:.0f} s")


# --- 12. BoPs ----------------------------------------------------------------------

def test_c12_bops(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    mismatches = 0
    for _ in range(50):
        spec = TopologySpec("mlp3", 2 * int(rng.integers(0, 40)) + 1, tuple(int(v) for v in rng.integers(1, 800, 3)),
                            n_o=int(rng.integers(1, 65)))
        quant = QuantSpec(int(rng.integers(1, 17)), int(rng.integers(1, 17)), float(rng.choice([0.0, 0.25, 0.5, 0.9])))
        mismatches += bops_mlp3(spec, quant) != sum(bops_dense(n, m, quant) for m, n in spec.dense_layers())
    spec = TopologySpec("mlp3", 21, (100, 50, 30))

    def mult(b):
        q = QuantSpec(b, b)
        return bops_mlp3(spec, q) - sum(n * m * (2 * b + math.ceil(math.log2(m))) for m, n in spec.dense_layers())

    ratios = [mult(2 * b) / mult(b) for b in (4, 8)]
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and ratios == [4.0, 4.0] and dt < 1.0
    assert criterion(12, ok, f"identity mismatches {mismatches}/50; multiplicative ratios 4->8->16 bits {ratios}; "
                              f"{dt * 1e3:.0f} ms")
