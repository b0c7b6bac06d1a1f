"""Pairwise-independent modular hashing ``((q*i + r) mod P) mod range``."""

from __future__ import annotations

import builtins
import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .errors import HashPreconditionError

# Deterministic Miller-Rabin witnesses; correct for every n < 3.3e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_SMALL_PRIMES = _MR_BASES

# Below this prime, q*i + r stays inside uint64 for i < P.
_VECTOR_PRIME_LIMIT = 1 << 32
# Below this prime, doubling a residue stays inside uint64.
_DOUBLING_PRIME_LIMIT = 1 << 63


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    if n < 2:
        return 2
    candidate = n + 1 if n % 2 == 0 else n + 2
    while not is_prime(candidate):
        candidate += 2
    return candidate


def derive_seed(seed: int, *path: int) -> int:
    """Stable 64-bit sub-seed for a labelled sub-stream of randomness."""
    material = ":".join(str(int(x)) for x in (seed, *path)).encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class HashFunction:
    P: int
    q: int
    r: int
    range: int

    def __post_init__(self) -> None:
        if not is_prime(self.P):
            raise ValueError(f"P={self.P} is not prime")
        if not 1 <= self.q <= self.P - 1:
            raise ValueError(f"q={self.q} outside [1, P-1]")
        if not 0 <= self.r <= self.P - 1:
            raise ValueError(f"r={self.r} outside [0, P-1]")
        if self.range < 1:
            raise ValueError(f"range must be >= 1, got {self.range}")

    def __call__(self, key_int: int) -> int:
        return self.apply(key_int)

    def apply(self, key_int: int) -> int:
        if not 0 <= key_int < self.P:
            raise HashPreconditionError(
                f"key {key_int} not below prime {self.P}; the family was sized for smaller keys"
            )
        return ((self.q * key_int + self.r) % self.P) % self.range

    def residues_many(self, key_ints: np.ndarray) -> np.ndarray:
        """``(q*i + r) mod P`` for a uint64 array, before reduction to the range."""
        if key_ints.size and int(key_ints.max()) >= self.P:
            raise HashPreconditionError(f"key array contains values >= prime {self.P}")
        x = key_ints.astype(np.uint64, copy=False)
        if self.P <= _VECTOR_PRIME_LIMIT:
            return (x * np.uint64(self.q) + np.uint64(self.r)) % np.uint64(self.P)
        if self.P < _DOUBLING_PRIME_LIMIT:
            return (_mulmod(x, self.q, self.P) + np.uint64(self.r)) % np.uint64(self.P)
        out = (x.astype(object) * self.q + self.r) % self.P
        return out.astype(np.uint64)

    def apply_many(self, key_ints: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`apply` over a uint64 array; returns int64 cells."""
        return (self.residues_many(key_ints) % np.uint64(self.range)).astype(np.int64)


def _mulmod(x: np.ndarray, c: int, P: int) -> np.ndarray:
    """``(x * c) mod P`` elementwise for ``x < P < 2**63`` by double-and-add over the bits of ``c``."""
    modulus = np.uint64(P)
    acc = np.zeros_like(x)
    for bit in bin(c)[2:]:
        acc = (acc << np.uint64(1)) % modulus
        if bit == "1":
            acc = (acc + x) % modulus
    return acc


def make_family(count: int, range: int, max_key: int, seed: int) -> list[HashFunction]:
    """``count`` functions sharing ``P = next_prime(max_key)``, with (q, r) drawn from ``seed``.

    The drawn (q, r) pairs depend only on ``seed`` and ``max_key``, never on
    ``range``, so families that differ only in range share residues.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if range < 1:
        raise ValueError("range must be >= 1")
    P = next_prime(max_key)
    rng = random.Random(seed)
    return [
        HashFunction(P=P, q=rng.randint(1, P - 1), r=rng.randint(0, P - 1), range=range)
        for _ in builtins.range(count)
    ]

