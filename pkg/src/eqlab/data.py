"""Bit sources, symbol mapping, DAC playout emulation and windowed datasets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .constellation import QamConstellation
from .lfsr import PRIMITIVE_TAPS, NonPrimitivePolynomial, is_primitive, lfsr_bits
from .mt19937 import mt_bits

BIT_SOURCE_KINDS = ("prbs_lfsr", "mersenne_twister")


@dataclass(frozen=True)
class BitSource:
    """Seeded bit generator description.

    ``prbs_order`` and ``polynomial_taps`` are only used by the LFSR kind;
    taps default to the built-in primitive table.
    """

    kind: str = "mersenne_twister"
    seed: int = 0
    prbs_order: int | None = None
    polynomial_taps: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in BIT_SOURCE_KINDS:
            raise ValueError(f"unknown bit source kind {self.kind!r}")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit non-negative integer")
        if self.kind == "prbs_lfsr":
            if self.polynomial_taps is None and self.prbs_order not in PRIMITIVE_TAPS:
                raise ValueError(f"no tap table entry for PRBS order {self.prbs_order}")
            if self.polynomial_taps is not None and self.prbs_order is not None:
                if max(self.polynomial_taps) != self.prbs_order:
                    raise ValueError("largest tap must equal the PRBS order")

    @property
    def taps(self) -> tuple[int, ...]:
        if self.polynomial_taps is not None:
            return tuple(self.polynomial_taps)
        return PRIMITIVE_TAPS[self.prbs_order]

    def bits(self, n: int) -> np.ndarray:
        if self.kind == "prbs_lfsr":
            return prbs_bits(self, n)
        return mt_bits(self.seed, n)


def prbs_bits(src: BitSource, n: int) -> np.ndarray:
    """First ``n`` bits of the LFSR stream described by ``src``.

    Raises
    ------
    NonPrimitivePolynomial
        If the tap set does not give a maximal-length sequence.
    """
    if src.kind != "prbs_lfsr":
        raise ValueError("prbs_bits needs a prbs_lfsr source")
    taps = src.taps
    if not is_primitive(taps):
        raise NonPrimitivePolynomial(f"taps {taps} are not primitive")
    return lfsr_bits(taps, src.seed, n)


def map_symbols(bits: np.ndarray, constellation: QamConstellation) -> np.ndarray:
    """Gray-map a bit stream onto dual-polarization symbols.

    Consecutive blocks of ``log2 M`` bits alternate between X and Y.

    Returns
    -------
    np.ndarray
        Complex array of shape ``(n, 2)``.
    """
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    k = constellation.bits_per_symbol
    if bits.size % (2 * k):
        raise ValueError(f"{bits.size} bits do not fill whole dual-pol {constellation.order}-QAM symbols")
    idx = constellation.bits_to_indices(bits).reshape(-1, 2)
    return constellation.points[idx]


def demap_symbols(symbols: np.ndarray, constellation: QamConstellation) -> np.ndarray:
    """Hard-decide dual-pol symbols back to the interleaved bit stream."""
    idx = constellation.decide(np.asarray(symbols).reshape(-1))
    return constellation.indices_to_bits(idx)


def generate_symbols(src: BitSource, constellation: QamConstellation, n_symbols: int) -> np.ndarray:
    """``n_symbols`` dual-pol symbols drawn from ``src``."""
    return map_symbols(src.bits(2 * constellation.bits_per_symbol * n_symbols), constellation)


def symbol_periodicity(order: int, bits_per_symbol: int) -> int:
    """Conservative symbol period bound ``floor((2**order - 1) / bits_per_symbol)``.

    When the bit period and the symbol size share no factor the true symbol
    period is ``bits_per_symbol`` times longer; the bound assumes a model may
    exploit the bit periodicity directly.
    """
    if order < 1 or bits_per_symbol < 1:
        raise ValueError("order and bits_per_symbol must be >= 1")
    return ((1 << order) - 1) // bits_per_symbol


def dac_effective_symbols(mem_samples: int, frames: int, dac_rate_gsps: float,
                          symbol_rate_gbd: float) -> int:
    """Unique symbols a DAC memory can hold: ``floor(mem / frames / (f_dac / R_s))``."""
    if mem_samples < 1 or frames < 1 or dac_rate_gsps <= 0 or symbol_rate_gbd <= 0:
        raise ValueError("memory, frames and rates must be positive")
    # tolerance guards against float noise on exact ratios
    p = math.floor(mem_samples * symbol_rate_gbd / (frames * dac_rate_gsps) + 1e-9)
    if p < 1:
        raise ValueError("DAC memory holds less than one symbol per frame")
    return p


def dac_frame_repeat(symbols: np.ndarray, mem_samples: int, frames: int,
                     dac_rate_gsps: float, symbol_rate_gbd: float,
                     length: int | None = None) -> np.ndarray:
    """Emulate cyclic DAC playout: keep the first ``P`` symbols and tile them.

    Parameters
    ----------
    symbols : np.ndarray
        Symbol stream, first axis is time.
    mem_samples, frames : int
        DAC memory depth in samples and the number of frames sharing it.
    dac_rate_gsps, symbol_rate_gbd : float
        Converter and symbol rates; their ratio is the effective oversampling.
    length : int, optional
        Output length, defaults to ``len(symbols)``.
    """
    symbols = np.asarray(symbols)
    p = dac_effective_symbols(mem_samples, frames, dac_rate_gsps, symbol_rate_gbd)
    length = symbols.shape[0] if length is None else length
    p = min(p, symbols.shape[0])
    reps = -(-length // p)
    tiled = np.concatenate([symbols[:p]] * reps, axis=0)
    return tiled[:length]


def iq_features(x: np.ndarray) -> np.ndarray:
    """``(n, 2)`` complex -> ``(n, 4)`` real as (Re X, Im X, Re Y, Im Y)."""
    x = np.asarray(x)
    return np.stack([x[:, 0].real, x[:, 0].imag, x[:, 1].real, x[:, 1].imag], axis=1)


@dataclass(frozen=True)
class EvalSet:
    """Materialized inputs and targets of one split."""

    inputs: np.ndarray  # (B, 2N+1, 4)
    targets_regression: np.ndarray  # (B, 2)
    targets_class: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def target_symbols(self) -> np.ndarray:
        return self.targets_regression[:, 0] + 1j * self.targets_regression[:, 1]


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding RX windows around each recoverable symbol.

    ``inputs`` is a read-only strided view over the RX features, so building a
    dataset costs no copy; rows are materialized per batch.
    """

    inputs: np.ndarray = field(repr=False)
    targets_regression: np.ndarray = field(repr=False)
    targets_class: np.ndarray = field(repr=False)
    memory: int
    splits: dict = field(repr=False)
    shuffle_seed: int = 0

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def window(self) -> int:
        return 2 * self.memory + 1

    def split(self, name: str) -> EvalSet:
        idx = self.splits[name]
        return EvalSet(self.inputs[idx], self.targets_regression[idx], self.targets_class[idx])

    def epoch_order(self, epoch: int, shuffle: bool = True) -> np.ndarray:
        idx = self.splits["train"]
        if not shuffle:
            return idx
        return np.random.default_rng([self.shuffle_seed, epoch]).permutation(idx)

    def epoch_batches(self, epoch: int, batch_size: int, shuffle: bool = True) -> Iterator[EvalSet]:
        order = self.epoch_order(epoch, shuffle)
        for start in range(0, order.size, batch_size):
            sel = order[start:start + batch_size]
            yield EvalSet(self.inputs[sel], self.targets_regression[sel], self.targets_class[sel])

    def train_size(self) -> int:
        return int(self.splits["train"].size)


def window_dataset(tx: np.ndarray, rx: np.ndarray, memory: int, constellation: QamConstellation,
                   splits: tuple[float, float, float] = (0.7, 0.15, 0.15), shuffle_seed: int = 0,
                   polarization: int = 0) -> WindowedDataset:
    """Build ``(B, 2N+1, 4)`` windows around each symbol with full neighbourhood.

    Parameters
    ----------
    tx, rx : np.ndarray
        Aligned ``(n, 2)`` complex TX and RX symbol streams.
    memory : int
        Neighbours ``N`` on each side.
    splits : tuple of float
        Train/val/test fractions, assigned as contiguous blocks in time order.
    polarization : int
        Which TX polarization supplies the targets.
    """
    tx, rx = np.asarray(tx), np.asarray(rx)
    if tx.shape != rx.shape or tx.ndim != 2 or tx.shape[1] != 2:
        raise ValueError("tx and rx must be aligned (n, 2) arrays")
    if memory < 0:
        raise ValueError("memory must be >= 0")
    w = 2 * memory + 1
    n = tx.shape[0]
    if n < w:
        raise ValueError(f"sequence of {n} symbols is shorter than the window {w}")
    if len(splits) != 3 or min(splits) < 0 or not np.isclose(sum(splits), 1.0):
        raise ValueError("splits must be three non-negative fractions summing to 1")
    feats = np.ascontiguousarray(iq_features(rx), dtype=np.float64)
    inputs = sliding_window_view(feats, w, axis=0).transpose(0, 2, 1)
    centre = tx[memory:n - memory, polarization]
    reg = np.stack([centre.real, centre.imag], axis=1)
    cls = constellation.decide(centre)
    b = n - 2 * memory
    n_train = int(round(splits[0] * b))
    n_val = int(round(splits[1] * b))
    n_val = min(n_val, b - n_train)
    idx = np.arange(b)
    parts = {
        "train": idx[:n_train],
        "val": idx[n_train:n_train + n_val],
        "test": idx[n_train + n_val:],
    }
    return WindowedDataset(inputs, reg, cls, memory, parts, shuffle_seed)


class MultiTraceMix:
    """Pool windows of several traces for training and hold out the rest.

    The first ``train_count`` traces form the training pool (all their
    windows, regardless of their own split tags); the remaining traces are the
    test set. Each epoch draws ``epoch_sample`` pool windows uniformly without
    replacement, freshly per epoch.
    """

    def __init__(self, traces: list[WindowedDataset], train_count: int, epoch_sample: int, seed: int = 0):
        if not 1 <= train_count < len(traces):
            raise ValueError("need 1 <= train_count < number of traces")
        self.traces = traces
        self.train_count = train_count
        self.seed = seed
        sizes = np.array([len(t) for t in traces[:train_count]])
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.pool_size = int(self._offsets[-1])
        if not 1 <= epoch_sample <= self.pool_size:
            raise ValueError(f"epoch_sample must be in [1, {self.pool_size}]")
        self.epoch_sample = epoch_sample

    @property
    def test_size(self) -> int:
        return sum(len(t) for t in self.traces[self.train_count:])

    def epoch_indices(self, epoch: int) -> np.ndarray:
        """Global pool indices for ``epoch``, in training order."""
        rng = np.random.default_rng([self.seed, epoch])
        return rng.choice(self.pool_size, self.epoch_sample, replace=False)

    def locate(self, global_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map pool indices to (trace number, window index)."""
        trace = np.searchsorted(self._offsets, global_idx, side="right") - 1
        return trace, global_idx - self._offsets[trace]

    def _gather(self, global_idx: np.ndarray) -> EvalSet:
        trace, local = self.locate(global_idx)
        first = self.traces[0]
        x = np.empty((global_idx.size,) + first.inputs.shape[1:])
        reg = np.empty((global_idx.size, 2))
        cls = np.empty(global_idx.size, dtype=np.int64)
        for t in np.unique(trace):
            sel = trace == t
            src = self.traces[t]
            x[sel] = src.inputs[local[sel]]
            reg[sel] = src.targets_regression[local[sel]]
            cls[sel] = src.targets_class[local[sel]]
        return EvalSet(x, reg, cls)

    def epoch_batches(self, epoch: int, batch_size: int, shuffle: bool = True) -> Iterator[EvalSet]:
        order = self.epoch_indices(epoch)
        for start in range(0, order.size, batch_size):
            yield self._gather(order[start:start + batch_size])

    def train_size(self) -> int:
        return self.epoch_sample

    def test_set(self) -> EvalSet:
        held = self.traces[self.train_count:]
        return EvalSet(
            np.concatenate([np.asarray(t.inputs) for t in held]),
            np.concatenate([t.targets_regression for t in held]),
            np.concatenate([t.targets_class for t in held]),
        )


def multi_trace_mix(traces: list[WindowedDataset], train_count: int, epoch_sample: int,
                    seed: int = 0) -> MultiTraceMix:
    return MultiTraceMix(traces, train_count, epoch_sample, seed)
