"""Gray-labelled QAM alphabets and hard-decision helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_ORDERS = (2, 4, 8, 16, 32, 64, 128)


def gray_code(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n)
    return n ^ (n >> 1)


def _int_to_bits(values: np.ndarray, k: int) -> np.ndarray:
    shifts = np.arange(k - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)


def _pam_levels(bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (levels, gray labels) of a 2**bits PAM axis, levels ascending."""
    n = 1 << bits
    idx = np.arange(n)
    return 2 * idx - (n - 1), gray_code(idx)


def _square_points(k: int) -> tuple[np.ndarray, np.ndarray]:
    # qammod-style: high bits -> in-phase (Gray, ascending), low bits -> quadrature (Gray, descending)
    half = k // 2
    lev, gl = _pam_levels(half)
    inv = np.empty_like(gl)
    inv[gl] = np.arange(len(gl))
    labels = np.arange(1 << k)
    i_lab, q_lab = labels >> half, labels & ((1 << half) - 1)
    re = lev[inv[i_lab]]
    im = -lev[inv[q_lab]]
    return re + 1j * im, labels


def _rect_points(k_i: int, k_q: int) -> tuple[np.ndarray, np.ndarray]:
    lev_i, gi = _pam_levels(k_i)
    lev_q, gq = _pam_levels(k_q)
    inv_i = np.empty_like(gi)
    inv_i[gi] = np.arange(len(gi))
    inv_q = np.empty_like(gq)
    inv_q[gq] = np.arange(len(gq))
    labels = np.arange(1 << (k_i + k_q))
    i_lab, q_lab = labels >> k_q, labels & ((1 << k_q) - 1)
    re = lev_i[inv_i[i_lab]]
    im = -lev_q[inv_q[q_lab]] if k_q else np.zeros(len(labels))
    return re + 1j * im, labels


def _cross_points(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Cross QAM (32, 128) by folding the outer columns of a Gray rectangle."""
    k_i, k_q = (k + 1) // 2, (k - 1) // 2
    pts, labels = _rect_points(k_i, k_q)
    s = 1 << (k_q - 1)  # quadrature half-levels
    re, im = pts.real.copy(), pts.imag.copy()
    i_half = (np.abs(re) - 1) // 2  # 0-based outward index
    q_half = (np.abs(im) - 1) // 2
    outer = i_half >= 3 * s // 2
    new_q_half = i_half[outer] - s // 2
    new_i_half = s - 1 - q_half[outer]
    re[outer] = np.sign(re[outer]) * (2 * new_i_half + 1)
    im[outer] = np.sign(im[outer]) * (2 * new_q_half + 1)
    return re + 1j * im, labels


@dataclass(frozen=True)
class QamConstellation:
    """Unit-energy M-ary alphabet with per-point bit labels.

    ``points[i]`` carries the label ``labels[i]``; by construction the label of
    point ``i`` equals ``i``, so class indices and integer labels coincide.
    """

    order: int
    points: np.ndarray = field(repr=False)
    bits: np.ndarray = field(repr=False)  # (M, k) uint8

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def is_square(self) -> bool:
        return self.bits_per_symbol % 2 == 0 and self.order >= 4

    def map_indices(self, idx: np.ndarray) -> np.ndarray:
        return self.points[np.asarray(idx)]

    def bits_to_indices(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return bits @ weights

    def indices_to_bits(self, idx: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(idx)].reshape(-1)

    def decide(self, rx: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        """Minimum-Euclidean-distance decision; ties go to the lowest index."""
        rx = np.asarray(rx).reshape(-1)
        out = np.empty(rx.size, dtype=np.int64)
        for start in range(0, rx.size, chunk):
            blk = rx[start:start + chunk]
            d = np.abs(blk[:, None] - self.points[None, :]) ** 2
            out[start:start + chunk] = np.argmin(d, axis=1)
        return out


def qam(order: int) -> QamConstellation:
    """Build the Gray-labelled alphabet of the given cardinality.

    Square orders follow the qammod layout (label 0 at the top-left corner),
    8-QAM is the two-row rectangle, 32/128-QAM are cross constellations.
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported constellation order {order}; choose from {SUPPORTED_ORDERS}")
    k = int(np.log2(order))
    if order == 2:
        pts, labels = np.array([-1.0 + 0j, 1.0 + 0j]), np.arange(2)
    elif order == 8:
        pts, labels = _rect_points(2, 1)
    elif k % 2 == 0:
        pts, labels = _square_points(k)
    else:
        pts, labels = _cross_points(k)
    order_idx = np.argsort(labels)
    pts = pts[order_idx].astype(np.complex128)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    bits = _int_to_bits(np.arange(order), k)
    return QamConstellation(order=order, points=pts, bits=bits)
