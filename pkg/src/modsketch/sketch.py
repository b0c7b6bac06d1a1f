"""Composite-hashed counter grid.

Count-Min, Equal-Sketch and MOD-Sketch are all a :class:`SketchGrid` with a
different :class:`PartitionConfig`: one part holding every module is
Count-Min, one part per module with equal ranges is Equal-Sketch.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, SchemaError, SketchOverflowError
from .hashing import HashFunction, derive_seed, make_family
from .keys import KeySchema, ModularKey
from .stream import Stream, StreamTuple, as_stream

Part = tuple[int, ...]
UINT64_MAX = (1 << 64) - 1
_FLOAT_EXACT = 1 << 53


def integer_root(value: int, k: int) -> int:
    """``floor(value ** (1/k))`` computed exactly."""
    if value < 0 or k < 1:
        raise ValueError("integer_root needs value >= 0 and k >= 1")
    if value < 2 or k == 1:
        return value
    guess = int(round(value ** (1.0 / k)))
    while guess**k > value:
        guess -= 1
    while (guess + 1) ** k <= value:
        guess += 1
    return guess


@dataclass(frozen=True)
class PartitionConfig:
    """Ordered partition of module indices with one hash range per part."""

    parts: tuple[Part, ...]
    ranges: tuple[int, ...]
    budget: int

    def __post_init__(self) -> None:
        parts = tuple(tuple(int(j) for j in p) for p in self.parts)
        ranges = tuple(int(a) for a in self.ranges)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "ranges", ranges)
        if not parts:
            raise ConfigurationError("partition needs at least one part")
        if len(parts) != len(ranges):
            raise ConfigurationError(f"{len(parts)} parts but {len(ranges)} ranges")
        seen: set[int] = set()
        for p in parts:
            if not p or list(p) != sorted(set(p)):
                raise ConfigurationError(f"part {p} must be non-empty and strictly ascending")
            if seen & set(p):
                raise ConfigurationError(f"parts overlap on modules {sorted(seen & set(p))}")
            seen |= set(p)
        if seen != set(range(len(seen))):
            raise ConfigurationError(f"parts {parts} do not cover 0..{len(seen) - 1}")
        if any(a < 1 for a in ranges):
            raise ConfigurationError(f"ranges must be positive, got {ranges}")
        if math.prod(ranges) > self.budget:
            raise ConfigurationError(f"ranges {ranges} use {math.prod(ranges)} cells > budget {self.budget}")

    @property
    def n(self) -> int:
        return sum(len(p) for p in self.parts)

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def cells_per_row(self) -> int:
        return math.prod(self.ranges)

    @classmethod
    def count_min(cls, n: int, h: int) -> PartitionConfig:
        return cls((tuple(range(n)),), (h,), h)

    @classmethod
    def equal(cls, n: int, h: int) -> PartitionConfig:
        a = integer_root(h, n)
        if a < 1:
            raise ConfigurationError(f"budget {h} too small for {n} parts")
        return cls(tuple((j,) for j in range(n)), (a,) * n, h)

    def describe(self) -> str:
        body = " | ".join(
            "{" + ",".join(map(str, p)) + "}:" + str(a) for p, a in zip(self.parts, self.ranges)
        )
        return f"[{body}] h={self.budget}"

    def to_dict(self) -> dict:
        return {"parts": [list(p) for p in self.parts], "ranges": list(self.ranges), "budget": self.budget}

    @classmethod
    def from_dict(cls, data: dict) -> PartitionConfig:
        return cls(tuple(tuple(p) for p in data["parts"]), tuple(data["ranges"]), int(data["budget"]))


_MAGIC = b"MODSKT\x00\x01"


class SketchGrid:
    """``width`` rows of ``prod(ranges)`` uint64 counters.

    Single-writer: callers serialise updates; concurrent queries are safe
    only while no update is running.
    """

    def __init__(self, schema: KeySchema, config: PartitionConfig, width: int, seed: int):
        if width < 1:
            raise ConfigurationError("width must be >= 1")
        if config.n != schema.n:
            raise ConfigurationError(
                f"partition covers {config.n} modules but schema has modularity {schema.n}"
            )
        self.schema = schema
        self.config = config
        self.width = width
        self.seed = seed
        # One independent family per part, transposed so row_functions[k][j] is row k, part j.
        families = [
            make_family(width, a, schema.part_capacity(p) - 1, derive_seed(seed, j))
            for j, (p, a) in enumerate(zip(config.parts, config.ranges))
        ]
        self.row_functions: list[list[HashFunction]] = [list(fs) for fs in zip(*families)]
        self.cells = np.zeros((width, config.cells_per_row), dtype=np.uint64)
        self.mass = 0
        self._strides = [math.prod(config.ranges[j + 1 :]) for j in range(config.m)]

    def __repr__(self) -> str:
        return f"SketchGrid({self.config.describe()}, w={self.width}, mass={self.mass})"

    def cell_index(self, row: int, key: Sequence[int]) -> int:
        idx = 0
        for fn, part, stride in zip(self.row_functions[row], self.config.parts, self._strides):
            idx += fn.apply(self.schema.encode_part(key, part)) * stride
        return idx

    def residues(self, keys: np.ndarray) -> list[list[np.ndarray]]:
        """Per row and part, hash residues before range reduction.

        They depend only on the seed, the parts and the keys, so grids that
        differ only in ranges can share them via :meth:`cell_indices`.
        """
        codes = [self.schema.encode_part_many(keys, p) for p in self.config.parts]
        return [[fn.residues_many(c) for fn, c in zip(fns, codes)] for fns in self.row_functions]

    def cell_indices(self, keys: np.ndarray, residues: list[list[np.ndarray]] | None = None) -> np.ndarray:
        """``(width, N)`` flat cell indices for an ``(N, n)`` key array."""
        if residues is None:
            residues = self.residues(keys)
        out = np.zeros((self.width, keys.shape[0]), dtype=np.int64)
        for k, row in enumerate(residues):
            for res, a, stride in zip(row, self.config.ranges, self._strides):
                out[k] += (res % np.uint64(a)).astype(np.int64) * stride
        return out

    def _reserve(self, added: int) -> None:
        if self.mass + added > UINT64_MAX:
            raise SketchOverflowError(
                f"mass {self.mass} + {added} exceeds 64-bit counters; refusing to wrap"
            )

    def update(self, key: Sequence[int], freq: int = 1) -> None:
        problem = self.schema.validate_key(key)
        if problem is not None:
            raise SchemaError(problem)
        if freq < 1:
            raise ConfigurationError(f"frequency must be >= 1, got {freq}")
        self._reserve(freq)
        f = np.uint64(freq)
        for k in range(self.width):
            self.cells[k, self.cell_index(k, key)] += f
        self.mass += freq

    def update_many(
        self, stream: Stream | Iterable[StreamTuple], residues: list[list[np.ndarray]] | None = None
    ) -> None:
        stream = as_stream(self.schema, stream)
        if not len(stream):
            return
        self.schema.validate_many(stream.keys)
        if int(stream.freqs.min()) < 1:
            raise ConfigurationError("frequencies must be >= 1")
        # Every cell is bounded by the mass, so checking the mass covers all counters.
        added = _exact_sum(stream.freqs)
        self._reserve(added)
        idx = self.cell_indices(stream.keys, residues)
        ncells = self.cells.shape[1]
        # bincount accumulates in float64, exact while every partial sum stays below 2**53.
        exact_float = added < _FLOAT_EXACT
        weights = None if added == len(stream) else stream.freqs.astype(np.float64)
        for k in range(self.width):
            if exact_float:
                self.cells[k] += np.bincount(idx[k], weights=weights, minlength=ncells).astype(np.uint64)
            else:
                np.add.at(self.cells[k], idx[k], stream.freqs)
        self.mass += added

    def query(self, key: Sequence[int]) -> int:
        problem = self.schema.validate_key(key)
        if problem is not None:
            raise SchemaError(problem)
        return min(int(self.cells[k, self.cell_index(k, key)]) for k in range(self.width))

    def query_many(
        self, keys: np.ndarray | Sequence[ModularKey], residues: list[list[np.ndarray]] | None = None
    ) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1, self.schema.n)
        self.schema.validate_many(keys)
        idx = self.cell_indices(keys, residues)
        rows = np.arange(self.width)[:, None]
        return self.cells[rows, idx].min(axis=0)

    def cell_variance(self) -> Fraction:
        """Exact population variance of all ``width * prod(ranges)`` counters."""
        count = self.cells.size
        total = self.mass * self.width
        sq = _sum_squares(self.cells)
        return Fraction(count * sq - total * total, count * count)

    def cell_stddev(self) -> float:
        return math.sqrt(self.cell_variance())

    def row_sums(self) -> list[int]:
        return [int(s) for s in self.cells.sum(axis=1, dtype=np.uint64)]

    def save(self, path: str | os.PathLike) -> None:
        """Write a versioned binary image: magic, JSON header, raw little-endian cells."""
        header = {
            "version": 1,
            "schema": list(self.schema.cardinalities),
            "config": self.config.to_dict(),
            "width": self.width,
            "seed": self.seed,
            "mass": self.mass,
            "functions": [[[f.P, f.q, f.r, f.range] for f in row] for row in self.row_functions],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(self.cells.astype("<u8", copy=False).tobytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> SketchGrid:
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ConfigurationError(f"{path}: not a sketch file (bad magic {magic!r})")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen))
            raw = fh.read()
        if header.get("version") != 1:
            raise ConfigurationError(f"{path}: unsupported sketch version {header.get('version')}")
        grid = cls(
            KeySchema(tuple(header["schema"])),
            PartitionConfig.from_dict(header["config"]),
            header["width"],
            header["seed"],
        )
        stored = [[HashFunction(*f) for f in row] for row in header["functions"]]
        if stored != grid.row_functions:
            raise ConfigurationError(f"{path}: stored hash functions do not match the seed")
        cells = np.frombuffer(raw, dtype="<u8")
        if cells.size != grid.cells.size:
            raise ConfigurationError(f"{path}: expected {grid.cells.size} cells, found {cells.size}")
        grid.cells = cells.astype(np.uint64).reshape(grid.cells.shape)
        grid.mass = int(header["mass"])
        return grid


def new_sketch(schema: KeySchema, config: PartitionConfig, width: int, seed: int) -> SketchGrid:
    return SketchGrid(schema, config, width, seed)


def _exact_sum(values: np.ndarray) -> int:
    if int(values.max()) * values.size <= UINT64_MAX:
        return int(values.sum(dtype=np.uint64))
    return sum(int(x) for x in values.tolist())


def _sum_squares(cells: np.ndarray) -> int:
    if not cells.size:
        return 0
    peak = int(cells.max())
    if peak * peak * cells.size <= UINT64_MAX:
        flat = cells.reshape(-1)
        return int(np.dot(flat, flat))
    return sum(int(x) * int(x) for x in cells.reshape(-1).tolist())
