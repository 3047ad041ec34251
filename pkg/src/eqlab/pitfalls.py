"""Diagnostics for performance overestimation in learned equalizers.

Covers generator-rule learnability of PRBS data, periodicity from DAC memory
reuse, grid-line ("jail window") constellations that fool Gaussian-based
metrics, and train/test divergence.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import kurtosis

from .channel import awgn_b2b
from .constellation import QamConstellation
from .data import BitSource, EvalSet, generate_symbols, window_dataset
from .metrics import ber_count, evm_rms, q_from_ber, q_from_evm
from .nn.models import BiLstmArch, MlpArch, build_model
from .nn.train import TrainConfig, evaluate, train


@dataclass(frozen=True)
class PeriodResult:
    period: int | None
    peak: float
    degenerate: bool = False


def autocorr_period(symbols: np.ndarray, max_lag: int | None = None, threshold: float = 0.5,
                    tie_fraction: float = 0.95) -> PeriodResult:
    """Detect repetition in a symbol stream from its circular autocorrelation.

    The mean-removed, energy-normalized autocorrelation magnitude is scanned
    over lags ``1..max_lag``. If its maximum exceeds ``threshold`` the smallest
    lag reaching ``tie_fraction`` of that maximum is returned, so integer
    multiples of the period never shadow the period itself. Dual-pol input
    ``(n, 2)`` sums the per-polarization correlations.
    """
    x = np.asarray(symbols, dtype=np.complex128)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    max_lag = n // 2 if max_lag is None else max_lag
    if max_lag < 1 or n < 2 * max_lag:
        raise ValueError("need at least 2 * max_lag samples")
    x = x - x.mean(axis=0)
    energy = float(np.sum(np.abs(x) ** 2))
    if energy <= 1e-20 * n:
        return PeriodResult(period=1, peak=1.0, degenerate=True)
    spec = np.fft.fft(x, axis=0)
    r = np.fft.ifft(np.abs(spec) ** 2, axis=0).sum(axis=1)
    mag = np.abs(r[1:max_lag + 1]) / energy
    peak = float(mag.max())
    if peak <= threshold:
        return PeriodResult(period=None, peak=peak)
    lag = int(np.flatnonzero(mag >= tie_fraction * peak)[0]) + 1
    return PeriodResult(period=lag, peak=float(mag[lag - 1]))


@dataclass(frozen=True)
class ProbeBudget:
    """Desk-scale training recipe shared by the learnability probes."""

    model: str = "mlp"
    memory: int = 10
    hidden: tuple[int, ...] = (64, 32)
    lstm_units: int = 16
    epochs: int = 60
    batch_size: int = 256
    learning_rate: float = 1e-3
    task: str = "classification"
    patience: int | None = None
    seed: int = 0

    def arch(self, n_out: int):
        n_out = n_out if self.task == "classification" else 2
        if self.model == "mlp":
            return MlpArch(self.memory, self.hidden, n_out, self.task)
        return BiLstmArch(self.memory, self.lstm_units, n_out, self.task)

    def train_config(self) -> TrainConfig:
        loss = "categorical_cel" if self.task == "classification" else "mse"
        return TrainConfig(loss=loss, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           max_epochs=self.epochs, patience=self.patience, seed=self.seed)


@dataclass(frozen=True)
class LearnabilityResult:
    gain_db: float
    test_q_db: float
    unequalized_q_db: float
    target_q_db: float
    threshold_db: float
    best_epoch: int

    @property
    def learned(self) -> bool:
        return self.gain_db > self.threshold_db


def prbs_learnability_test(source: BitSource, constellation: QamConstellation, train_symbols: int,
                           target_q_db: float = 6.9, budget: ProbeBudget = ProbeBudget(),
                           test_symbols: int = 1 << 16, val_symbols: int = 1 << 13,
                           noise_seed: int = 1, threshold_db: float = 0.3) -> LearnabilityResult:
    """Train an equalizer on back-to-back AWGN data and report test Q minus the target.

    On a memoryless AWGN channel no equalizer can beat the hard-decision Q
    unless it predicts the data itself, so a positive gain means the
    generator rule or its periodicity was learned.
    """
    n_total = train_symbols + val_symbols + test_symbols + 2 * budget.memory
    tx = generate_symbols(source, constellation, n_total)
    rx = awgn_b2b(tx, target_q_db, constellation, np.random.default_rng(noise_seed))
    b = n_total - 2 * budget.memory
    fractions = (train_symbols / b, val_symbols / b, test_symbols / b)
    ds = window_dataset(tx, rx, budget.memory, constellation, fractions, shuffle_seed=budget.seed)
    model = build_model(budget.arch(constellation.order), np.random.default_rng(budget.seed))
    res = train(model, ds, budget.train_config(), constellation, ds.split("val"))
    test = ds.split("test")
    q_test = evaluate(res.model, test, constellation, budget.train_config().loss).q_db
    centre = test.inputs[:, budget.memory, 0] + 1j * test.inputs[:, budget.memory, 1]
    ber, _, _ = ber_count(centre, test.target_symbols, constellation)
    return LearnabilityResult(
        gain_db=q_test - target_q_db,
        test_q_db=q_test,
        unequalized_q_db=q_from_ber(min(ber, 0.5)),
        target_q_db=target_q_db,
        threshold_db=threshold_db,
        best_epoch=res.best_epoch,
    )


@dataclass(frozen=True)
class ProbeResult:
    ser: float
    baseline: float

    @property
    def ratio(self) -> float:
        return self.ser / self.baseline


def drop_centre(split: EvalSet) -> EvalSet:
    """Copy of ``split`` with the centre symbol's features (both polarizations) zeroed."""
    x = np.array(split.inputs, copy=True)
    x[:, x.shape[1] // 2, :] = 0.0
    return replace(split, inputs=x)


class _Fixed:
    """Minimal epoch-batch provider over a materialized split."""

    def __init__(self, split: EvalSet, seed: int):
        self.split, self.seed = split, seed

    def epoch_batches(self, epoch: int, batch_size: int, shuffle: bool = True):
        n = len(self.split)
        order = np.random.default_rng([self.seed, epoch]).permutation(n) if shuffle else np.arange(n)
        for s in range(0, n, batch_size):
            sel = order[s:s + batch_size]
            yield EvalSet(self.split.inputs[sel], self.split.targets_regression[sel], self.split.targets_class[sel])


def neighbor_only_probe(train_split: EvalSet, test_split: EvalSet, constellation: QamConstellation,
                        budget: ProbeBudget = ProbeBudget(), val_split: EvalSet | None = None) -> ProbeResult:
    """Predict the centre symbol from its neighbours alone and report the test SER.

    With independent symbols nothing beats guessing, ``SER = 1 - 1/M``; a
    markedly lower SER means neighbours reveal the centre symbol.
    """
    budget = replace(budget, task="classification")
    tr, te = drop_centre(train_split), drop_centre(test_split)
    va = drop_centre(val_split) if val_split is not None else te
    model = build_model(budget.arch(constellation.order), np.random.default_rng(budget.seed))
    res = train(model, _Fixed(tr, budget.seed), budget.train_config(), constellation, va)
    pred = np.argmax(res.model.predict(te.inputs), axis=1)
    ser = float(np.mean(pred != te.targets_class))
    return ProbeResult(ser=ser, baseline=1.0 - 1.0 / constellation.order)


@dataclass(frozen=True)
class JailWindowResult:
    flag: bool
    q_gap_db: float
    q_est_db: float
    q_counted_db: float
    excess_kurtosis: float


def cluster_excess_kurtosis(rx: np.ndarray, tx: np.ndarray, constellation: QamConstellation) -> float:
    """Mean excess kurtosis of the I and Q residuals over constellation clusters."""
    rx, tx = np.asarray(rx).reshape(-1), np.asarray(tx).reshape(-1)
    labels = constellation.decide(tx)
    vals = []
    for i in range(constellation.order):
        e = rx[labels == i] - tx[labels == i]
        if e.size < 8 or np.allclose(e, 0):
            continue
        for part in (e.real, e.imag):
            if np.ptp(part) > 0:
                vals.append(kurtosis(part, fisher=True))
    return float(np.mean(vals)) if vals else 0.0


def jail_window_detect(rx_eq: np.ndarray, tx: np.ndarray, constellation: QamConstellation,
                       kappa: float = 1.0, gap_threshold_db: float = 2.0) -> JailWindowResult:
    """Flag equalized constellations whose EVM-predicted Q overstates the counted Q."""
    ber, _, _ = ber_count(rx_eq, tx, constellation)
    q_counted = q_from_ber(min(ber, 0.5))
    q_est = q_from_evm(evm_rms(rx_eq, tx), constellation.order, kappa)
    if math.isfinite(q_est) and math.isfinite(q_counted):
        gap = q_est - q_counted
    else:
        gap = math.nan
    flag = bool(math.isfinite(gap) and gap > gap_threshold_db)
    return JailWindowResult(flag=flag, q_gap_db=gap, q_est_db=q_est, q_counted_db=q_counted,
                            excess_kurtosis=cluster_excess_kurtosis(rx_eq, tx, constellation))


@dataclass(frozen=True)
class OverfitResult:
    gap_db: np.ndarray
    overfit: bool
    test_peak_epoch: int
    final_gap_db: float


def overfit_gap(train_q: np.ndarray, test_q: np.ndarray, patience: int = 5,
                min_drop_db: float = 0.1) -> OverfitResult:
    """Per-epoch train-minus-test Q gap and an overfitting verdict.

    The verdict is positive when the test Q has stayed below its peak for at
    least ``patience`` epochs, ending more than ``min_drop_db`` under it,
    while the train Q kept rising: it ends no lower than at the test peak
    and above its first value. A train Q pinned at ``inf`` (zero counted
    errors) therefore still counts as rising.
    """
    train_q, test_q = np.asarray(train_q, float), np.asarray(test_q, float)
    if train_q.shape != test_q.shape or train_q.ndim != 1:
        raise ValueError("train and test series must be aligned 1-D arrays")
    gap = train_q - test_q
    if train_q.size == 0:
        return OverfitResult(gap, False, -1, math.nan)
    peak = int(np.argmax(test_q))
    after = train_q.size - 1 - peak
    overfit = bool(
        after >= patience
        and test_q[-1] < test_q[peak] - min_drop_db
        and train_q[-1] >= train_q[peak]
        and train_q[-1] > train_q[0]
    )
    return OverfitResult(gap, overfit, peak, float(gap[-1]))


@dataclass
class AuditReport:
    detected_period_symbols: int | None = None
    prbs_gain_db: float | None = None
    jail_window: dict = field(default_factory=lambda: {"flag": False, "q_gap_db": math.nan})
    overfit_gap_db: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
