"""Quality-of-transmission metrics: EVM, SNR, counted BER and Q, MI bound, EVM-based BER."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc, erfcx, logsumexp

from .constellation import QamConstellation

_SQRT_PI = math.sqrt(math.pi)


def _flat(x) -> np.ndarray:
    return np.asarray(x).reshape(-1)


def evm_rms(rx: np.ndarray, tx: np.ndarray) -> float:
    """RMS error-vector magnitude ``sqrt(sum |y - x|^2 / sum |x|^2)`` as a fraction."""
    rx, tx = _flat(rx), _flat(tx)
    if rx.size == 0:
        raise ValueError("empty input")
    if rx.shape != tx.shape:
        raise ValueError("rx and tx must be aligned")
    ref = np.sum(np.abs(tx) ** 2)
    if ref == 0:
        raise ValueError("reference sequence has zero energy")
    return float(np.sqrt(np.sum(np.abs(rx - tx) ** 2) / ref))


def snr_from_evm(evm: float) -> float:
    """SNR in dB as ``20 log10(1 / EVM)``; ``inf`` for a perfect signal."""
    if evm < 0:
        raise ValueError("EVM must be >= 0")
    if evm == 0:
        return math.inf
    return -20.0 * math.log10(evm)


@dataclass(frozen=True)
class ErrorCounts:
    symbols: int
    bits: int
    bit_errors: int
    symbol_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols


def count_label_errors(pred_idx: np.ndarray, true_idx: np.ndarray,
                       constellation: QamConstellation) -> ErrorCounts:
    pred_idx, true_idx = _flat(pred_idx), _flat(true_idx)
    if pred_idx.size == 0:
        raise ValueError("empty input")
    if pred_idx.shape != true_idx.shape:
        raise ValueError("label sequences must be aligned")
    bit_err = int(np.sum(constellation.bits[pred_idx] != constellation.bits[true_idx]))
    return ErrorCounts(
        symbols=int(pred_idx.size),
        bits=int(pred_idx.size * constellation.bits_per_symbol),
        bit_errors=bit_err,
        symbol_errors=int(np.sum(pred_idx != true_idx)),
    )


def ber_count(rx: np.ndarray, tx: np.ndarray, constellation: QamConstellation) -> tuple[float, float, ErrorCounts]:
    """Hard-decision error counting against the transmitted points.

    Returns
    -------
    ber, ser : float
    counts : ErrorCounts
    """
    counts = count_label_errors(constellation.decide(_flat(rx)), constellation.decide(_flat(tx)), constellation)
    return counts.ber, counts.ser, counts


def erfcinv(y: float, tol: float = 1e-12) -> float:
    """Inverse complementary error function on ``[0, 2]``.

    Safeguarded Newton iteration on ``log erfc`` (through ``erfcx`` so the
    tail stays accurate down to the smallest doubles), bracketed by bisection.
    """
    if not 0.0 <= y <= 2.0 or math.isnan(y):
        raise ValueError("erfcinv domain is [0, 2]")
    if y == 0.0:
        return math.inf
    if y == 2.0:
        return -math.inf
    if y == 1.0:
        return 0.0
    if y > 1.0:
        return -erfcinv(2.0 - y, tol)
    log_y = math.log(y)
    lo, hi = 0.0, 30.0
    # tail asymptote as a starting guess
    x = math.sqrt(max(-math.log(y * _SQRT_PI / 2) - 0.5 * math.log(max(-math.log(y), 1.0)), 0.0))
    x = min(max(x, lo), hi)
    for _ in range(200):
        if y > 0.5:
            # near the origin the log form cancels; use erfc directly
            f = float(erfc(x)) - y
            step = f * _SQRT_PI / 2 * math.exp(x * x)
        else:
            f = math.log(erfcx(x)) - x * x - log_y  # log erfc(x) - log y, decreasing in x
            step = f * erfcx(x) * _SQRT_PI / 2  # f / |d log erfc / dx|
        if f > 0:
            lo = x
        elif f < 0:
            hi = x
        else:
            return x
        x_new = x + step
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-3 * tol * abs(x_new) or hi - lo <= 4e-16 * hi:
            return x_new
        x = x_new
    return x


def q_from_ber(ber: float) -> float:
    """Q-factor in dB, ``20 log10(sqrt(2) erfcinv(2 BER))``.

    ``BER = 0`` maps to ``+inf`` and ``BER = 0.5`` to ``-inf``.
    """
    if not 0.0 <= ber <= 0.5:
        raise ValueError(f"BER {ber} outside [0, 0.5]")
    if ber == 0.0:
        return math.inf
    q_lin = math.sqrt(2.0) * erfcinv(2.0 * ber)
    if q_lin <= 0:
        return -math.inf
    return 20.0 * math.log10(q_lin)


def ber_from_q(q_db: float) -> float:
    return 0.5 * float(erfc(10 ** (q_db / 20) / math.sqrt(2.0)))


def ber_from_evm(evm: float, order: int, kappa: float = 1.0) -> float:
    """Gaussian-assumption BER predicted from EVM for an ``order``-QAM signal."""
    if evm < 0:
        raise ValueError("EVM must be >= 0")
    prefactor = kappa * (1 - order ** -0.5) / (0.5 * math.log2(order))
    if evm == 0:
        return 0.0
    if math.isinf(evm):
        return prefactor
    return prefactor * float(erfc(math.sqrt(1.5 / ((order - 1) * evm * evm))))


def q_from_evm(evm: float, order: int, kappa: float = 1.0) -> float:
    return q_from_ber(min(ber_from_evm(evm, order, kappa), 0.5))


def kappa_calibrate(evm_ref: float, ber_ref: float, order: int) -> float:
    """Correction factor making the EVM predictor reproduce a reference BER."""
    base = ber_from_evm(evm_ref, order, 1.0)
    if ber_ref <= 0 or base <= 0:
        raise ValueError("calibration needs a nonzero reference BER and EVM")
    return ber_ref / base


def mi_lower_bound(rx: np.ndarray, tx: np.ndarray, constellation: QamConstellation,
                   reg_epsilon: float = 1e-6, min_samples: int = 50, chunk: int = 1 << 15) -> float:
    """Mutual-information lower bound under a per-point Gaussian channel model.

    Each transmitted point gets a 2-D Gaussian fitted to its received cloud
    (sample mean, sample covariance plus ``reg_epsilon * I``). The bound is the
    dataset average of ``log2 p(y|x) / sum_i p(y|x_i) / M`` with uniform
    priors, clipped to ``[0, log2 M]``.
    """
    rx, tx = _flat(rx), _flat(tx)
    if rx.size == 0 or rx.shape != tx.shape:
        raise ValueError("rx and tx must be aligned and non-empty")
    m = constellation.order
    labels = constellation.decide(tx)
    counts = np.bincount(labels, minlength=m)
    if counts.min() == 0:
        raise ValueError(f"constellation points {np.flatnonzero(counts == 0).tolist()} never transmitted")
    if counts.min() < min_samples:
        raise ValueError(f"need >= {min_samples} samples per point, got {int(counts.min())}")
    y = np.stack([rx.real, rx.imag], axis=1)
    means = np.empty((m, 2))
    inv = np.empty((m, 2, 2))
    log_norm = np.empty(m)
    for i in range(m):
        yi = y[labels == i]
        means[i] = yi.mean(axis=0)
        d = yi - means[i]
        cov = d.T @ d / yi.shape[0] + reg_epsilon * np.eye(2)
        det = np.linalg.det(cov)
        if not det > 0:
            raise ValueError(f"singular covariance for point {i}")
        inv[i] = np.linalg.inv(cov)
        log_norm[i] = -math.log(2 * math.pi) - 0.5 * math.log(det)
    total = 0.0
    for start in range(0, y.shape[0], chunk):
        yb = y[start:start + chunk]
        d = yb[:, None, :] - means[None, :, :]
        quad = np.einsum("nmi,mij,nmj->nm", d, inv, d)
        logp = log_norm[None, :] - 0.5 * quad
        own = logp[np.arange(yb.shape[0]), labels[start:start + chunk]]
        total += float(np.sum(own - (logsumexp(logp, axis=1) - math.log(m))))
    mi = total / y.shape[0] / math.log(2)
    return float(min(max(mi, 0.0), math.log2(m)))


@dataclass
class MetricsReport:
    """Full metric set of one aligned RX/TX pair, with how each was obtained."""

    ber: float
    q_db: float
    evm_fraction: float
    snr_db: float
    mi_bits: float
    counts: dict
    provenance: dict = field(default_factory=lambda: {
        "ber": "hard-decision error counting",
        "q_db": "inverse erfc of counted BER",
        "evm_fraction": "RMS error over reference energy",
        "snr_db": "20 log10(1/EVM)",
        "mi_bits": "per-point Gaussian fit, uniform priors",
    })

    @classmethod
    def from_symbols(cls, rx: np.ndarray, tx: np.ndarray, constellation: QamConstellation,
                     reg_epsilon: float = 1e-6, min_samples: int = 50) -> "MetricsReport":
        ber, _, counts = ber_count(rx, tx, constellation)
        evm = evm_rms(rx, tx)
        try:
            mi = mi_lower_bound(rx, tx, constellation, reg_epsilon, min_samples)
        except ValueError:
            mi = math.nan
        return cls(ber=ber, q_db=q_from_ber(min(ber, 0.5)), evm_fraction=evm, snr_db=snr_from_evm(evm),
                   mi_bits=mi, counts=asdict(counts))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
