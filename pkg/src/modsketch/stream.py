"""Stream containers, the text stream format, and a seeded synthetic generator."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, StreamParseError
from .keys import KeySchema, ModularKey


class StreamTuple(NamedTuple):
    key: ModularKey
    freq: int = 1


@dataclass
class Stream:
    """Column-oriented stream: an ``(N, n)`` uint64 key array and ``N`` frequencies."""

    schema: KeySchema
    keys: np.ndarray
    freqs: np.ndarray

    def __post_init__(self) -> None:
        self.keys = np.ascontiguousarray(self.keys, dtype=np.uint64).reshape(-1, self.schema.n)
        self.freqs = np.ascontiguousarray(self.freqs, dtype=np.uint64).reshape(-1)
        if self.keys.shape[0] != self.freqs.shape[0]:
            raise ValueError("keys and freqs differ in length")

    @classmethod
    def from_tuples(cls, schema: KeySchema, tuples: Iterable[StreamTuple | tuple]) -> Stream:
        keys: list[Sequence[int]] = []
        freqs: list[int] = []
        for t in tuples:
            key, freq = (t.key, t.freq) if isinstance(t, StreamTuple) else t
            schema.key(key)
            if freq < 1:
                raise ConfigurationError(f"frequency must be >= 1, got {freq}")
            keys.append(key)
            freqs.append(freq)
        arr = np.array(keys, dtype=np.uint64).reshape(-1, schema.n)
        return cls(schema, arr, np.array(freqs, dtype=np.uint64))

    def __len__(self) -> int:
        return int(self.freqs.shape[0])

    def __iter__(self) -> Iterator[StreamTuple]:
        for key, freq in zip(self.keys.tolist(), self.freqs.tolist()):
            yield StreamTuple(tuple(key), freq)

    def __getitem__(self, idx: slice) -> Stream:
        return Stream(self.schema, self.keys[idx], self.freqs[idx])

    @property
    def total(self) -> int:
        return int(self.freqs.sum(dtype=np.uint64))

    def prefix(self, fraction: float) -> Stream:
        """First ``ceil(fraction * len)`` tuples."""
        if not 0 < fraction <= 1:
            raise ConfigurationError(f"sample fraction must lie in (0, 1], got {fraction}")
        return self[: math.ceil(fraction * len(self))]

    def exact_counts(self) -> dict[ModularKey, int]:
        counts: dict[ModularKey, int] = {}
        for key, freq in zip(map(tuple, self.keys.tolist()), self.freqs.tolist()):
            counts[key] = counts.get(key, 0) + freq
        return counts


def as_stream(schema: KeySchema, data: Stream | Iterable[StreamTuple | tuple]) -> Stream:
    if isinstance(data, Stream):
        return data
    return Stream.from_tuples(schema, data)


def parse_stream(path: str | os.PathLike, schema: KeySchema) -> Stream:
    """Read a comma-separated stream file.

    Each non-blank line not starting with ``#`` holds ``n`` module values and
    an optional positive frequency (default 1).
    """
    keys: list[list[int]] = []
    freqs: list[int] = []
    n = schema.n
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) not in (n, n + 1):
                raise StreamParseError(
                    line_no, f"expected {n} or {n + 1} fields, got {len(fields)}", str(path)
                )
            try:
                values = [int(f) for f in fields]
            except ValueError:
                raise StreamParseError(line_no, f"non-integer field in {line!r}", str(path)) from None
            key, freq = values[:n], values[n] if len(values) > n else 1
            problem = schema.validate_key(key)
            if problem is not None:
                raise StreamParseError(line_no, problem, str(path))
            if freq < 1:
                raise StreamParseError(line_no, f"frequency must be positive, got {freq}", str(path))
            keys.append(key)
            freqs.append(freq)
    return Stream(schema, np.array(keys, dtype=np.uint64).reshape(-1, n), np.array(freqs, dtype=np.uint64))


def write_stream(path: str | os.PathLike, stream: Stream, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for key, freq in zip(stream.keys.tolist(), stream.freqs.tolist()):
            fh.write(",".join(map(str, key)))
            fh.write(f",{freq}\n" if freq != 1 else "\n")


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic stream recipe.

    Each module draws a Zipf-ranked value (exponent ``skew``) among
    ``distinct[j]`` values scattered over its domain. ``copies`` maps a
    module to an earlier module whose value it repeats, which yields
    perfectly correlated module pairs.
    """

    distinct: tuple[int, ...]
    skew: float = 1.1
    count: int = 100_000
    seed: int = 0
    cardinalities: tuple[int, ...] | None = None
    copies: tuple[tuple[int, int], ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.distinct)

    def schema(self) -> KeySchema:
        return KeySchema(self.cardinalities or tuple(max(d, 2) for d in self.distinct))

    @classmethod
    def parse(cls, text: str) -> GeneratorSpec:
        """Parse ``"distinct=10000,500;skew=1.1;count=100000;seed=7;copy=3:1"``."""
        opts: dict[str, object] = {}
        copies: list[tuple[int, int]] = []
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            name, _, value = chunk.partition("=")
            name = name.strip().lower()
            try:
                if name == "distinct":
                    opts["distinct"] = tuple(int(v) for v in value.split(","))
                elif name in ("cardinalities", "schema"):
                    opts["cardinalities"] = tuple(int(v) for v in value.split(","))
                elif name == "skew":
                    opts["skew"] = float(value)
                elif name == "count":
                    opts["count"] = int(float(value))
                elif name == "seed":
                    opts["seed"] = int(value)
                elif name == "n":
                    opts["n"] = int(value)
                elif name == "copy":
                    for pair in value.split(","):
                        dst, src = pair.split(":")
                        copies.append((int(dst), int(src)))
                else:
                    raise ConfigurationError(f"unknown generator option {name!r}")
            except ValueError as exc:
                raise ConfigurationError(f"bad generator option {chunk!r}: {exc}") from None
        if "distinct" not in opts:
            raise ConfigurationError("generator spec needs distinct=...")
        n = opts.pop("n", None)
        distinct = opts["distinct"]
        if n is not None and n != len(distinct):  # type: ignore[arg-type]
            raise ConfigurationError(f"n={n} but {len(distinct)} distinct counts given")  # type: ignore[arg-type]
        return cls(copies=tuple(copies), **opts)  # type: ignore[arg-type]


def _zipf_probs(size: int, skew: float) -> np.ndarray:
    weights = np.arange(1, size + 1, dtype=np.float64) ** -skew
    return weights / weights.sum()


def generate_stream(spec: GeneratorSpec) -> Stream:
    """Deterministic synthetic stream of unit-frequency tuples."""
    schema = spec.schema()
    if spec.count < 1:
        raise ConfigurationError("count must be >= 1")
    if len(schema.cardinalities) != spec.n:
        raise ConfigurationError("cardinalities and distinct counts differ in length")
    copy_of = dict(spec.copies)
    for dst, src in copy_of.items():
        if not 0 <= src < dst < spec.n:
            raise ConfigurationError(f"copy {dst}:{src} must reference an earlier module")
        if spec.distinct[dst] != spec.distinct[src]:
            raise ConfigurationError(f"copied modules {dst} and {src} need equal distinct counts")
    rng = np.random.default_rng(spec.seed)
    keys = np.empty((spec.count, spec.n), dtype=np.uint64)
    ranks: dict[int, np.ndarray] = {}
    for j, (d, card) in enumerate(zip(spec.distinct, schema.cardinalities)):
        if not 1 <= d <= card:
            raise ConfigurationError(f"module {j}: distinct={d} must lie in [1, {card}]")
        if j in copy_of and card == schema.cardinalities[copy_of[j]]:
            keys[:, j] = keys[:, copy_of[j]]
            continue
        # Scatter ranks over the domain so popular values are not just 0, 1, 2, ...
        values = rng.choice(card, size=d, replace=False).astype(np.uint64)
        if j in copy_of:
            ranks[j] = ranks[copy_of[j]]
        else:
            ranks[j] = rng.choice(d, size=spec.count, p=_zipf_probs(d, spec.skew))
        keys[:, j] = values[ranks[j]]
    return Stream(schema, keys, np.ones(spec.count, dtype=np.uint64))
