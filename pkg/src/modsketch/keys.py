"""Modular keys and their mixed-radix encoding.

A key is a plain tuple of non-negative ints, one per module. The schema
carries the per-module domain sizes and knows how to turn any ordered
subset of modules into a single integer without collisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError

ModularKey = tuple[int, ...]

# Largest joint domain a schema may declare; encoded keys stay below this.
KEY_CAPACITY_LIMIT = 1 << 64


@dataclass(frozen=True)
class KeySchema:
    cardinalities: tuple[int, ...]

    def __post_init__(self) -> None:
        cards = tuple(int(c) for c in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        if not cards:
            raise SchemaError("schema needs at least one module")
        for j, c in enumerate(cards):
            if c < 2:
                raise SchemaError(f"module {j} has cardinality {c}; need >= 2")
        if math.prod(cards) > KEY_CAPACITY_LIMIT:
            raise SchemaError(
                f"joint domain {math.prod(cards)} exceeds the 2**64 key-integer width"
            )

    @classmethod
    def parse(cls, text: str) -> KeySchema:
        """Build a schema from ``"100,100"`` style text."""
        try:
            cards = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
        except ValueError as exc:
            raise SchemaError(f"bad schema {text!r}: {exc}") from None
        return cls(tuple(cards))

    @property
    def n(self) -> int:
        return len(self.cardinalities)

    @property
    def capacity(self) -> int:
        return math.prod(self.cardinalities)

    def part_capacity(self, part: Sequence[int]) -> int:
        self._check_part(part)
        return math.prod(self.cardinalities[j] for j in part)

    def validate_key(self, key: Sequence[int]) -> str | None:
        """Return ``None`` if ``key`` fits the schema, else a description of the violation."""
        if len(key) != self.n:
            return f"key has {len(key)} modules, schema expects {self.n}"
        for j, (v, c) in enumerate(zip(key, self.cardinalities)):
            if not 0 <= v < c:
                return f"module {j}: value {v} outside [0, {c - 1}]"
        return None

    def key(self, values: Iterable[int]) -> ModularKey:
        key = tuple(int(v) for v in values)
        problem = self.validate_key(key)
        if problem is not None:
            raise SchemaError(problem)
        return key

    def _check_part(self, part: Sequence[int]) -> None:
        if not part:
            raise SchemaError("part must be non-empty")
        prev = -1
        for j in part:
            if not 0 <= j < self.n:
                raise SchemaError(f"module index {j} out of range for modularity {self.n}")
            if j <= prev:
                raise SchemaError(f"part {tuple(part)} must be strictly ascending")
            prev = j

    def encode_part(self, key: Sequence[int], part: Sequence[int]) -> int:
        """Mixed-radix integer for the modules of ``key`` listed in ``part``.

        With two modules of domain 100 this reproduces decimal concatenation,
        e.g. ``(1, 12) -> 112`` and ``(11, 2) -> 1102``.
        """
        self._check_part(part)
        code = 0
        for j in part:
            v = key[j]
            c = self.cardinalities[j]
            if not 0 <= v < c:
                raise SchemaError(f"module {j}: value {v} outside [0, {c - 1}]")
            code = code * c + v
        return code

    def encode_full(self, key: Sequence[int]) -> int:
        return self.encode_part(key, range(self.n))

    def encode_part_many(self, keys: np.ndarray, part: Sequence[int]) -> np.ndarray:
        """Vectorised :meth:`encode_part` over an ``(N, n)`` uint64 key array.

        Inputs are assumed validated; the result never overflows because the
        part capacity is at most 2**64.
        """
        self._check_part(part)
        code = np.zeros(keys.shape[0], dtype=np.uint64)
        for j in part:
            code = code * np.uint64(self.cardinalities[j]) + keys[:, j]
        return code

    def validate_many(self, keys: np.ndarray) -> None:
        if keys.ndim != 2 or keys.shape[1] != self.n:
            raise SchemaError(f"key array shape {keys.shape} does not match modularity {self.n}")
        for j, c in enumerate(self.cardinalities):
            if keys.shape[0] and int(keys[:, j].max()) >= c:
                row = int(np.argmax(keys[:, j] >= np.uint64(c)))
                raise SchemaError(
                    f"row {row}, module {j}: value {int(keys[row, j])} outside [0, {c - 1}]"
                )

    def project(self, modules: Sequence[int]) -> KeySchema:
        """Schema restricted to ``modules`` (ascending)."""
        self._check_part(modules)
        return KeySchema(tuple(self.cardinalities[j] for j in modules))
