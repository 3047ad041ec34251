"""MT19937 32-bit Mersenne Twister, vectorised twist."""
from __future__ import annotations

import numpy as np

_N, _M = 624, 397
_MATRIX_A = np.uint32(0x9908B0DF)
_UPPER = np.uint32(0x80000000)
_LOWER = np.uint32(0x7FFFFFFF)


def _init_genrand(seed: int) -> np.ndarray:
    mt = [seed & 0xFFFFFFFF]
    for i in range(1, _N):
        prev = mt[-1]
        mt.append((1812433253 * (prev ^ (prev >> 30)) + i) & 0xFFFFFFFF)
    return mt


def _init_by_array(key: list[int]) -> list[int]:
    mt = _init_genrand(19650218)
    i, j = 1, 0
    for _ in range(max(_N, len(key))):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1664525)) + key[j] + j) & 0xFFFFFFFF
        i += 1
        j += 1
        if i >= _N:
            mt[0] = mt[_N - 1]
            i = 1
        if j >= len(key):
            j = 0
    for _ in range(_N - 1):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1566083941)) - i) & 0xFFFFFFFF
        i += 1
        if i >= _N:
            mt[0] = mt[_N - 1]
            i = 1
    mt[0] = 0x80000000
    return mt


def _twist_block(mt: np.ndarray, lo: int, hi: int) -> None:
    y = (mt[lo:hi] & _UPPER) | (mt[lo + 1:hi + 1] & _LOWER)
    src = np.arange(lo, hi) + _M
    src[src >= _N] -= _N
    mag = np.where(y & np.uint32(1), _MATRIX_A, np.uint32(0))
    mt[lo:hi] = mt[src] ^ (y >> np.uint32(1)) ^ mag


def _twist(mt: np.ndarray) -> None:
    # each block only reads words that are either untouched or already final
    _twist_block(mt, 0, _N - _M)
    _twist_block(mt, _N - _M, 2 * (_N - _M))
    _twist_block(mt, 2 * (_N - _M), _N - 1)
    y = (mt[_N - 1] & _UPPER) | (mt[0] & _LOWER)
    mt[_N - 1] = mt[_M - 1] ^ (y >> np.uint32(1)) ^ (_MATRIX_A if y & 1 else np.uint32(0))


def _temper(y: np.ndarray) -> np.ndarray:
    y = y ^ (y >> np.uint32(11))
    y = y ^ ((y << np.uint32(7)) & np.uint32(0x9D2C5680))
    y = y ^ ((y << np.uint32(15)) & np.uint32(0xEFC60000))
    return y ^ (y >> np.uint32(18))


class MT19937:
    """Reference-compatible generator.

    Seeds below 2**32 use ``init_genrand`` (so seed 5489 reproduces the
    canonical output stream); larger seeds are split into 32-bit words and fed
    to ``init_by_array``.
    """

    def __init__(self, seed: int = 5489):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        if seed < 1 << 32:
            state = _init_genrand(seed)
        else:
            key = []
            while seed:
                key.append(seed & 0xFFFFFFFF)
                seed >>= 32
            state = _init_by_array(key)
        self._mt = np.array(state, dtype=np.uint32)
        self._pos = _N

    @classmethod
    def from_key(cls, key: list[int]) -> "MT19937":
        gen = cls.__new__(cls)
        gen._mt = np.array(_init_by_array([k & 0xFFFFFFFF for k in key]), dtype=np.uint32)
        gen._pos = _N
        return gen

    def words(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.uint32)
        filled = 0
        while filled < n:
            if self._pos >= _N:
                _twist(self._mt)
                self._pos = 0
            take = min(n - filled, _N - self._pos)
            out[filled:filled + take] = _temper(self._mt[self._pos:self._pos + take])
            self._pos += take
            filled += take
        return out


def mt_bits(seed: int, n: int) -> np.ndarray:
    """``n`` bits from the MT19937 word stream, most significant bit first."""
    n_words = -(-n // 32)
    words = MT19937(seed).words(n_words)
    bits = np.unpackbits(words.astype(">u4").view(np.uint8))
    return bits[:n]
