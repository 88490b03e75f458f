"""Pure-Python SHA-256, independent of hashlib, used as a test oracle.

Round constants and initial state are derived from their definitions
(fractional parts of cube/square roots of the first primes) with exact
integer arithmetic, so nothing is transcribed from another implementation.
"""

from __future__ import annotations

import math

_MASK = 0xFFFFFFFF


def _first_primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def _icbrt(n: int) -> int:
    x = int(round(float(n) ** (1.0 / 3.0)))
    while x**3 > n:
        x -= 1
    while (x + 1) ** 3 <= n:
        x += 1
    return x


_H0 = [math.isqrt(p << 64) & _MASK for p in _first_primes(8)]
_K = [_icbrt(p << 96) & _MASK for p in _first_primes(64)]


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _MASK


def sha256_hex(data: bytes) -> str:
    h = list(_H0)
    bit_length = len(data) * 8
    data += b"\x80"
    data += b"\x00" * ((56 - len(data)) % 64)
    data += bit_length.to_bytes(8, "big")

    for start in range(0, len(data), 64):
        block = data[start : start + 64]
        w = [int.from_bytes(block[i * 4 : i * 4 + 4], "big") for i in range(16)]
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & _MASK)

        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            big_s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            temp1 = (hh + big_s1 + ch + _K[i] + w[i]) & _MASK
            big_s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            temp2 = (big_s0 + maj) & _MASK
            hh, g, f, e, d, c, b, a = (
                g,
                f,
                e,
                (d + temp1) & _MASK,
                c,
                b,
                a,
                (temp1 + temp2) & _MASK,
            )
        h = [(x + y) & _MASK for x, y in zip(h, (a, b, c, d, e, f, g, hh))]

    return "".join(f"{x:08x}" for x in h)
