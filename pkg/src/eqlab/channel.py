"""Dual-polarization single-channel coherent link.

Transmit RRC shaping, span-by-span Manakov split-step propagation with EDFA
ASE, receiver chromatic-dispersion compensation, matched filtering,
decimation and least-squares normalization against the transmitted symbols.
A calibrated back-to-back AWGN channel is provided for data-only studies.

Dual-polarization symbol streams are complex arrays of shape ``(n, 2)``
(columns X, Y). Fields carry power in W, so ``|samples|**2`` is in W.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.constants as const
from scipy.special import erfc

from .constellation import QamConstellation

logger = logging.getLogger(__name__)

MANAKOV_FACTOR = 8.0 / 9.0


class ConfigurationError(ValueError):
    pass


class PropagationError(RuntimeError):
    def __init__(self, step: int, message: str = "non-finite field"):
        super().__init__(f"{message} at split-step {step}")
        self.step = step


@dataclass(frozen=True)
class FiberParams:
    attenuation_db_per_km: float = 0.21
    dispersion_ps_nm_km: float = 16.8
    gamma_per_w_km: float = 1.2
    center_wavelength_nm: float = 1550.0
    manakov_factor: float = MANAKOV_FACTOR

    def __post_init__(self):
        if self.attenuation_db_per_km < 0:
            raise ConfigurationError("attenuation must be >= 0")
        if self.gamma_per_w_km < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.center_wavelength_nm <= 0:
            raise ConfigurationError("wavelength must be > 0")

    @property
    def alpha_per_km(self) -> float:
        """Power attenuation coefficient in 1/km."""
        return self.attenuation_db_per_km / (10.0 * np.log10(np.e))

    @property
    def beta2_s2_per_km(self) -> float:
        lam = self.center_wavelength_nm * 1e-9
        d_si = self.dispersion_ps_nm_km * 1e-3  # s/m per km
        return -d_si * lam**2 / (2 * np.pi * const.c)

    @property
    def carrier_hz(self) -> float:
        return const.c / (self.center_wavelength_nm * 1e-9)


@dataclass(frozen=True)
class LinkConfig:
    span_length_km: float = 50.0
    num_spans: int = 5
    step_km: float = 1.0
    edfa_noise_figure_db: float = 4.5
    launch_power_dbm: float = 0.0

    def __post_init__(self):
        if self.span_length_km <= 0:
            raise ConfigurationError("span_length_km must be > 0")
        if self.num_spans < 0:
            raise ConfigurationError("num_spans must be >= 0")
        if not 0 < self.step_km <= self.span_length_km:
            raise ConfigurationError("need 0 < step_km <= span_length_km")
        _steps(self.span_length_km, self.step_km)


@dataclass(frozen=True)
class ShapingConfig:
    rolloff: float = 0.1
    samples_per_symbol: int = 8
    symbol_rate_gbd: float = 34.4
    filter_span_symbols: int = 32

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigurationError(f"roll-off {self.rolloff} outside [0, 1]")
        if self.samples_per_symbol < 2:
            raise ConfigurationError("samples_per_symbol must be >= 2")
        if self.filter_span_symbols < 8:
            raise ConfigurationError("filter_span_symbols must be >= 8")

    @property
    def symbol_rate_hz(self) -> float:
        return self.symbol_rate_gbd * 1e9

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_hz * self.samples_per_symbol


@dataclass
class OpticalField:
    samples_x: np.ndarray
    samples_y: np.ndarray
    sample_rate_hz: float
    symbol_rate_hz: float

    def __post_init__(self):
        if self.samples_x.shape != self.samples_y.shape:
            raise ValueError("polarizations must have equal length")

    def __len__(self) -> int:
        return self.samples_x.size

    @property
    def power_w(self) -> float:
        return float(np.mean(np.abs(self.samples_x) ** 2 + np.abs(self.samples_y) ** 2))

    @property
    def energy(self) -> np.ndarray:
        """Per-polarization sum of |sample|^2."""
        return np.array([np.sum(np.abs(self.samples_x) ** 2), np.sum(np.abs(self.samples_y) ** 2)])

    def with_samples(self, x: np.ndarray, y: np.ndarray) -> "OpticalField":
        return replace(self, samples_x=x, samples_y=y)


def dbm_to_w(p_dbm: float) -> float:
    return 1e-3 * 10 ** (p_dbm / 10)


def _steps(span_km: float, step_km: float) -> int:
    n = int(round(span_km / step_km))
    if n < 1 or abs(n * step_km - span_km) > 1e-9 * max(span_km, 1.0):
        raise ConfigurationError(f"step {step_km} km does not divide span {span_km} km")
    return n


def rrc_taps(cfg: ShapingConfig) -> np.ndarray:
    """Root-raised-cosine impulse response, odd length, unit energy.

    Parameters
    ----------
    cfg : ShapingConfig
        Roll-off, oversampling and filter span (in symbols).

    Returns
    -------
    np.ndarray
        ``2 * filter_span_symbols * samples_per_symbol + 1`` real taps; the
        span counts symbols on each side of the centre tap.
    """
    beta, sps = cfg.rolloff, cfg.samples_per_symbol
    n = 2 * cfg.filter_span_symbols * sps
    t = (np.arange(n + 1) - n / 2) / sps
    h = np.empty_like(t)
    zero = np.isclose(t, 0.0)
    h[zero] = 1.0 - beta + 4 * beta / np.pi
    if beta > 0:
        sing = np.isclose(np.abs(t), 1 / (4 * beta))
        if sing.any():
            h[sing] = beta / np.sqrt(2) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
            )
    else:
        sing = np.zeros_like(zero)
    rest = ~(zero | sing)
    tr = t[rest]
    h[rest] = (np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))) / (
        np.pi * tr * (1 - (4 * beta * tr) ** 2)
    )
    return h / np.sqrt(np.sum(h**2))


def _circular_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-delay circular convolution of the last axis with centred taps."""
    n = x.shape[-1]
    if taps.size > n:
        raise ValueError(f"sequence of {n} samples shorter than filter ({taps.size} taps)")
    kernel = np.zeros(n)
    half = taps.size // 2
    kernel[: half + 1] = taps[half:]
    kernel[n - half:] = taps[:half]
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.fft.fft(kernel), axis=-1)


def pulse_shape(symbols: np.ndarray, cfg: ShapingConfig, power_dbm: float) -> OpticalField:
    """Upsample, RRC-filter and scale a dual-pol symbol stream to a launch power.

    The returned field satisfies ``mean(|x|^2 + |y|^2) = P`` with ``P`` the
    launch power in W; an all-zero input stays all-zero.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.ndim != 2 or symbols.shape[1] != 2:
        raise ValueError("symbols must have shape (n, 2)")
    if symbols.shape[0] == 0:
        raise ValueError("empty symbol sequence")
    sps = cfg.samples_per_symbol
    up = np.zeros((2, symbols.shape[0] * sps), dtype=np.complex128)
    up[:, ::sps] = symbols.T
    shaped = _circular_filter(up, rrc_taps(cfg))
    p_now = np.mean(np.sum(np.abs(shaped) ** 2, axis=0))
    if p_now > 0:
        shaped *= np.sqrt(dbm_to_w(power_dbm) / p_now)
    return OpticalField(shaped[0], shaped[1], cfg.sample_rate_hz, cfg.symbol_rate_hz)


def _omega(field: OpticalField) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(len(field), d=1.0 / field.sample_rate_hz)


def apply_dispersion(field: OpticalField, fiber: FiberParams, length_km: float) -> OpticalField:
    """All-linear, lossless dispersion over ``length_km`` (negative inverts it)."""
    if length_km == 0:
        return field.with_samples(field.samples_x.copy(), field.samples_y.copy())
    h = np.exp(0.5j * fiber.beta2_s2_per_km * _omega(field) ** 2 * length_km)
    x = np.fft.ifft(np.fft.fft(field.samples_x) * h)
    y = np.fft.ifft(np.fft.fft(field.samples_y) * h)
    return field.with_samples(x, y)


def cdc(field: OpticalField, fiber: FiberParams, total_km: float) -> OpticalField:
    """Frequency-domain chromatic-dispersion compensation of ``total_km`` fiber."""
    return apply_dispersion(field, fiber, -total_km)


def ssfm_span(field: OpticalField, fiber: FiberParams, span_km: float, step_km: float) -> OpticalField:
    """Propagate through one span with the symmetric split-step Fourier method.

    Each step applies half the dispersion, the Manakov nonlinear phase
    ``k * gamma * (|Ex|^2 + |Ey|^2) * L_eff(step)`` together with the step
    attenuation, then the other half of the dispersion. Consecutive half
    dispersion steps are merged.
    """
    n_steps = _steps(span_km, step_km)
    alpha = fiber.alpha_per_km
    l_eff = step_km if alpha == 0 else (1 - np.exp(-alpha * step_km)) / alpha
    loss = np.exp(-alpha * step_km / 2)
    k_nl = fiber.manakov_factor * fiber.gamma_per_w_km * l_eff
    w2 = _omega(field) ** 2
    half = np.exp(0.5j * fiber.beta2_s2_per_km * w2 * step_km / 2)
    full = half * half
    fx = np.fft.fft(field.samples_x) * half
    fy = np.fft.fft(field.samples_y) * half
    for step in range(n_steps):
        x, y = np.fft.ifft(fx), np.fft.ifft(fy)
        with np.errstate(over="ignore", invalid="ignore"):  # blow-up is reported below
            if k_nl:
                rot = np.exp(1j * k_nl * (np.abs(x) ** 2 + np.abs(y) ** 2)) * loss
            else:
                rot = loss
            x, y = x * rot, y * rot
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise PropagationError(step)
        op = half if step == n_steps - 1 else full
        fx, fy = np.fft.fft(x) * op, np.fft.fft(y) * op
    return field.with_samples(np.fft.ifft(fx), np.fft.ifft(fy))


def ase_psd(gain_db: float, noise_figure_db: float, carrier_hz: float) -> float:
    """Per-polarization ASE power spectral density in W/Hz."""
    g = 10 ** (gain_db / 10)
    f = 10 ** (noise_figure_db / 10)
    return (g - 1) * f * const.h * carrier_hz / 2


def edfa(field: OpticalField, gain_db: float, noise_figure_db: float,
         rng: np.random.Generator, carrier_hz: float = const.c / 1550e-9) -> OpticalField:
    """Amplify by ``gain_db`` and add circular Gaussian ASE over the full simulation bandwidth."""
    if gain_db < 0:
        raise ConfigurationError("EDFA gain must be >= 0 dB")
    if gain_db == 0:
        return field.with_samples(field.samples_x.copy(), field.samples_y.copy())
    g = 10 ** (gain_db / 10)
    var = ase_psd(gain_db, noise_figure_db, carrier_hz) * field.sample_rate_hz
    n = len(field)
    noise = rng.standard_normal((2, 2, n)) * np.sqrt(var / 2)
    x = np.sqrt(g) * field.samples_x + noise[0, 0] + 1j * noise[0, 1]
    y = np.sqrt(g) * field.samples_y + noise[1, 0] + 1j * noise[1, 1]
    return field.with_samples(x, y)


def rx_frontend(field: OpticalField, cfg: ShapingConfig, tx_symbols: np.ndarray) -> np.ndarray:
    """Matched filter, decimate at the highest-energy phase, LS-normalize per polarization.

    Returns an ``(n, 2)`` complex array aligned with ``tx_symbols``.
    """
    tx_symbols = np.asarray(tx_symbols)
    sps = cfg.samples_per_symbol
    mf = _circular_filter(np.vstack([field.samples_x, field.samples_y]), rrc_taps(cfg))
    energies = [np.sum(np.abs(mf[:, p::sps]) ** 2) for p in range(sps)]
    phase = int(np.argmax(energies))
    rx = mf[:, phase::sps].T
    if rx.shape != tx_symbols.shape:
        raise ValueError(f"received {rx.shape} symbols but reference has {tx_symbols.shape}")
    return normalize_to_reference(rx, tx_symbols)


def normalize_to_reference(rx: np.ndarray, tx: np.ndarray) -> np.ndarray:
    """Single complex tap per polarization minimizing ``|c*rx - tx|^2``."""
    out = np.empty_like(rx, dtype=np.complex128)
    for p in range(rx.shape[1]):
        den = np.vdot(rx[:, p], rx[:, p])
        c = np.vdot(rx[:, p], tx[:, p]) / den if den > 0 else 0.0
        out[:, p] = c * rx[:, p]
    return out


def simulate_link(tx_symbols: np.ndarray, fiber: FiberParams, link: LinkConfig,
                  shaping: ShapingConfig, rng: np.random.Generator, ase: bool = True) -> np.ndarray:
    """TX shaping -> spans (SSFM + EDFA) -> CDC -> RX front-end."""
    field = pulse_shape(tx_symbols, shaping, link.launch_power_dbm)
    gain_db = fiber.attenuation_db_per_km * link.span_length_km
    for span in range(link.num_spans):
        field = ssfm_span(field, fiber, link.span_length_km, link.step_km)
        if ase:
            field = edfa(field, gain_db, link.edfa_noise_figure_db, rng, fiber.carrier_hz)
        else:
            field = field.with_samples(field.samples_x * 10 ** (gain_db / 20),
                                       field.samples_y * 10 ** (gain_db / 20))
        logger.debug("span %d/%d done", span + 1, link.num_spans)
    field = cdc(field, fiber, link.span_length_km * link.num_spans)
    return rx_frontend(field, shaping, tx_symbols)


# largest Q the calibration accepts: enough errors to count on the block
_MIN_CAL_ERRORS = 100


def q_to_ber(q_db: float) -> float:
    q_lin = 10 ** (q_db / 20)
    return 0.5 * float(erfc(q_lin / np.sqrt(2)))


def awgn_b2b(symbols: np.ndarray, target_q_db: float, constellation: QamConstellation,
             rng: np.random.Generator, calibration_symbols: int = 1 << 17,
             return_sigma: bool = False):
    """Add complex AWGN so that the hard-decision Q-factor equals ``target_q_db``.

    The per-dimension noise standard deviation is found by bisection on the
    error-counted BER of a calibration block drawn from the same alphabet;
    the calibrated noise is then applied with a fresh draw.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    target_ber = q_to_ber(target_q_db)
    k = constellation.bits_per_symbol
    if target_ber * calibration_symbols * k < _MIN_CAL_ERRORS:
        raise ValueError(
            f"target Q {target_q_db} dB (BER {target_ber:.2e}) is not measurable on a "
            f"{calibration_symbols}-symbol calibration block"
        )
    cal_idx = rng.integers(0, constellation.order, calibration_symbols)
    cal_tx = constellation.points[cal_idx]
    cal_bits = constellation.bits[cal_idx]
    z = (rng.standard_normal(calibration_symbols) + 1j * rng.standard_normal(calibration_symbols))

    def counted(sigma: float) -> float:
        dec = constellation.decide(cal_tx + sigma * z)
        return float(np.mean(constellation.bits[dec] != cal_bits))

    lo, hi = np.log(1e-4), np.log(10.0)
    if counted(np.exp(hi)) < target_ber:
        raise ValueError(f"target Q {target_q_db} dB unreachable")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if counted(np.exp(mid)) < target_ber:
            lo = mid
        else:
            hi = mid
    sigma = float(np.exp(0.5 * (lo + hi)))
    noise = sigma * (rng.standard_normal(symbols.shape) + 1j * rng.standard_normal(symbols.shape))
    out = symbols + noise
    return (out, sigma) if return_sigma else out
