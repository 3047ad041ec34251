"""Fibonacci LFSR pseudo-random bit sequences with a primitive-polynomial table.

The register produces ``s[k] = XOR_{t in taps} s[k - t]``; its characteristic
polynomial ``x^n + sum x^(n - t)`` (n = max tap) is primitive for every entry
of ``PRIMITIVE_TAPS``, so the stream period is ``2**n - 1``.
"""
from __future__ import annotations

import numpy as np

# Xilinx XAPP052 maximal-length tap table, orders 2..34.
PRIMITIVE_TAPS: dict[int, tuple[int, ...]] = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
    25: (25, 22),
    26: (26, 6, 2, 1),
    27: (27, 5, 2, 1),
    28: (28, 25),
    29: (29, 27),
    30: (30, 6, 4, 1),
    31: (31, 28),
    32: (32, 22, 2, 1),
    33: (33, 20),
    34: (34, 27, 2, 1),
}


class NonPrimitivePolynomial(ValueError):
    pass


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out.append(n)
    return out


def _polymulmod(a: int, b: int, mod: int, deg: int) -> int:
    res = 0
    while b:
        if b & 1:
            res ^= a
        b >>= 1
        a <<= 1
        if (a >> deg) & 1:
            a ^= mod
    return res


def _x_pow(e: int, mod: int, deg: int) -> int:
    result, base = 1, 0b10
    while e:
        if e & 1:
            result = _polymulmod(result, base, mod, deg)
        base = _polymulmod(base, base, mod, deg)
        e >>= 1
    return result


def characteristic_polynomial(taps: tuple[int, ...]) -> int:
    """Bit-mask of x^n + sum x^(n-t) + ... for the recurrence taps."""
    n = max(taps)
    poly = 1 << n
    for t in taps:
        poly ^= 1 << (n - t)
    return poly


def is_primitive(taps: tuple[int, ...]) -> bool:
    """Algebraic check: x has multiplicative order exactly 2**n - 1 modulo p."""
    n = max(taps)
    poly = characteristic_polynomial(taps)
    if not poly & 1:
        return False
    period = (1 << n) - 1
    if _x_pow(period, poly, n) != 1:
        return False
    return all(_x_pow(period // q, poly, n) != 1 for q in _prime_factors(period))


def cycle_length(taps: tuple[int, ...], state: int = 1) -> int:
    """Brute-force period of the register state sequence (small orders only)."""
    n = max(taps)
    mask = (1 << n) - 1
    start = state & mask
    if start == 0:
        raise ValueError("all-zero state is a fixed point")
    s, k = start, 0
    tap_mask = 0
    for t in taps:
        tap_mask |= 1 << (t - 1)
    while True:
        fb = (s & tap_mask).bit_count() & 1
        s = ((s << 1) | fb) & mask
        k += 1
        if s == start:
            return k


def seed_state(order: int, seed: int) -> int:
    """Map an arbitrary integer seed onto a nonzero register state."""
    return seed % ((1 << order) - 1) + 1


def lfsr_bits(taps: tuple[int, ...], seed: int, n: int) -> np.ndarray:
    """First ``n`` bits of the m-sequence for ``taps`` starting at ``seed``.

    The register holds the last ``order`` output bits (bit ``t-1`` is
    ``s[k-t]``); the initial register contents are emitted first, oldest bit
    first.
    """
    order = max(taps)
    out = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return out
    state = seed_state(order, seed)
    init = np.array([(state >> (t - 1)) & 1 for t in range(order, 0, -1)], dtype=np.uint8)
    head = min(n, order)
    out[:head] = init[:head]
    if n <= order:
        return out
    # squaring the characteristic polynomial j times spreads the taps by 2**j,
    # which lets numpy fill whole chunks of min(taps) * 2**j bits at once
    j = 0
    while min(taps) * (1 << j) < 4096 and order * (1 << (j + 1)) < n // 4:
        j += 1
    prime = order * (1 << j)
    tap_mask = 0
    for t in taps:
        tap_mask |= 1 << (t - 1)
    s = state
    for k in range(order, min(prime, n)):
        fb = (s & tap_mask).bit_count() & 1
        out[k] = fb
        s = ((s << 1) | fb) & ((1 << order) - 1)
    spread = [t << j for t in taps]
    chunk = min(taps) << j
    k = prime
    while k < n:
        end = min(k + chunk, n)
        acc = out[k - spread[0]:end - spread[0]].copy()
        for lag in spread[1:]:
            acc ^= out[k - lag:end - lag]
        out[k:end] = acc
        k = end
    return out
