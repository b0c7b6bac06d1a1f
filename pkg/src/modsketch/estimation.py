"""Data-dependent sketch parameters from an exactly counted stream sample.

Range splits follow the marginal-mass ratio: for a split of the key into a
left and a right side, each sampled item contributes
``alpha = O(left fixed) / O(right fixed)`` weighted by its frequency, the
aggregate alpha gives ``beta = a / b = 1 / alpha``, and the budget is split
so that ``a * b <= h`` with ``a / b ~ beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, EstimationError
from .keys import KeySchema, ModularKey
from .sketch import Part, PartitionConfig, SketchGrid
from .stream import Stream, StreamTuple, as_stream

AGGREGATORS = ("median", "min", "max", "mean")


@dataclass
class SampleStats:
    """Exact counts over a stream prefix, with cached projections."""

    schema: KeySchema
    total: int = 0
    item_counts: dict[ModularKey, int] = field(default_factory=dict)
    _projections: dict[Part, dict[tuple[int, ...], int]] = field(default_factory=dict, repr=False)

    def add(self, key: ModularKey, freq: int) -> None:
        self.item_counts[key] = self.item_counts.get(key, 0) + freq
        self.total += freq
        self._projections.clear()

    def __len__(self) -> int:
        return len(self.item_counts)

    def projection(self, modules: Sequence[int]) -> dict[tuple[int, ...], int]:
        """Summed frequency per distinct value combination on ``modules``."""
        mods = tuple(sorted(modules))
        table = self._projections.get(mods)
        if table is None:
            table = {}
            for key, count in self.item_counts.items():
                sub = tuple(key[j] for j in mods)
                table[sub] = table.get(sub, 0) + count
            self._projections[mods] = table
        return table

    def marginal(self, fixed: Mapping[int, int]) -> int:
        """Total sampled frequency of items agreeing with every ``module -> value`` in ``fixed``."""
        for j in fixed:
            if not 0 <= j < self.schema.n:
                raise ConfigurationError(f"module index {j} out of range")
        if not fixed:
            return self.total
        mods = tuple(sorted(fixed))
        return self.projection(mods).get(tuple(fixed[j] for j in mods), 0)


def ingest_sample(sample: Stream | Iterable[StreamTuple], schema: KeySchema | None = None) -> SampleStats:
    if isinstance(sample, Stream):
        schema = sample.schema
    elif schema is None:
        raise ConfigurationError("a schema is required for a plain tuple sample")
    stream = as_stream(schema, sample)
    stats = SampleStats(schema)
    for key, freq in stream.exact_counts().items():
        stats.item_counts[key] = freq
        stats.total += freq
    return stats


def _split_modules(parts: Sequence[Sequence[int]]) -> tuple[int, ...]:
    return tuple(sorted(j for p in parts for j in p))


def item_alphas(
    stats: SampleStats, left: Sequence[int], right: Sequence[int]
) -> list[tuple[Fraction, int]]:
    """``(alpha, weight)`` for every sampled item projected onto ``left + right``.

    Items that coincide after projection are merged with summed frequency.
    """
    left, right = tuple(sorted(left)), tuple(sorted(right))
    if set(left) & set(right):
        raise ConfigurationError(f"split sides overlap: {left} vs {right}")
    both = tuple(sorted(left + right))
    pos = {j: i for i, j in enumerate(both)}
    left_tab, right_tab = stats.projection(left), stats.projection(right)
    out = []
    for sub, weight in stats.projection(both).items():
        lval = tuple(sub[pos[j]] for j in left)
        rval = tuple(sub[pos[j]] for j in right)
        out.append((Fraction(left_tab[lval], right_tab[rval]), weight))
    return out


def alpha_of_item(
    stats: SampleStats, key: Sequence[int], left: Sequence[int] = (0,), right: Sequence[int] = (1,)
) -> Fraction:
    """Marginal-mass ratio ``O(left of key, *) / O(*, right of key)`` for one sampled item."""
    left, right = tuple(sorted(left)), tuple(sorted(right))
    both = tuple(sorted(left + right))
    if tuple(key[j] for j in both) not in stats.projection(both):
        raise EstimationError(f"item {tuple(key)} does not occur in the sample")
    num = stats.marginal({j: key[j] for j in left})
    den = stats.marginal({j: key[j] for j in right})
    return Fraction(num, den)


def weighted_aggregate(values: Sequence[tuple[Fraction, int]], aggregator: str = "median") -> Fraction:
    """Frequency-weighted aggregate; ``median`` takes the lower median on even weight."""
    if not values:
        raise EstimationError("cannot aggregate over an empty sample")
    if aggregator == "min":
        return min(v for v, _ in values)
    if aggregator == "max":
        return max(v for v, _ in values)
    total = sum(w for _, w in values)
    if aggregator == "mean":
        return sum((v * w for v, w in values), Fraction(0)) / total
    if aggregator != "median":
        raise ConfigurationError(f"unknown aggregator {aggregator!r}; choose from {AGGREGATORS}")
    target = (total - 1) // 2  # 0-based position of the lower median
    seen = 0
    for v, w in sorted(values, key=lambda vw: vw[0]):
        seen += w
        if seen > target:
            return v
    raise AssertionError("unreachable")


def aggregate_alpha(
    stats: SampleStats,
    aggregator: str = "median",
    left: Sequence[int] | None = None,
    right: Sequence[int] | None = None,
) -> Fraction:
    if left is None or right is None:
        if stats.schema.n != 2:
            raise ConfigurationError("left/right sides are required beyond modularity two")
        left, right = (0,), (1,)
    if not stats.item_counts:
        raise EstimationError("cannot estimate alpha from an empty sample")
    return weighted_aggregate(item_alphas(stats, left, right), aggregator)


def ranges_from_beta(h: int, beta: Fraction | float | int) -> tuple[int, int]:
    """Split budget ``h`` into ``(a, b)`` with ``a / b ~ beta`` and ``a * b <= h``.

    ``a = floor(sqrt(h * beta))`` and ``b = floor(sqrt(h / beta))``, each
    clamped to at least 2.
    """
    beta = Fraction(beta)
    if beta <= 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    if h < 4:
        raise ConfigurationError(f"budget {h} cannot hold two ranges of at least 2")
    a = math.isqrt(math.floor(h * beta))
    b = math.isqrt(math.floor(h / beta))
    if a < 2:
        a, b = 2, min(b, h // 2)
    elif b < 2:
        a, b = min(a, h // 2), 2
    return a, b


def recursive_ranges(
    stats: SampleStats,
    parts: Sequence[Sequence[int]],
    budget: int,
    aggregator: str = "median",
    memo: dict | None = None,
) -> list[int]:
    """Ranges for ``parts`` whose product stays within ``budget``.

    The last part is split off against the merge of all earlier parts, then
    the earlier parts recurse on the range they were given.
    """
    parts = [tuple(p) for p in parts]
    m = len(parts)
    if m < 1:
        raise ConfigurationError("need at least one part")
    if m == 1:
        return [int(budget)]
    if budget < 2**m:
        raise ConfigurationError(f"budget {budget} cannot give {m} parts a range of at least 2")
    memo_key = (tuple(parts), int(budget), aggregator)
    if memo is not None and memo_key in memo:
        return list(memo[memo_key])
    left = _split_modules(parts[:-1])
    alpha = aggregate_alpha(stats, aggregator, left, parts[-1])
    left_range, last = ranges_from_beta(budget, 1 / alpha)
    # The merged side still has to give each of its m - 1 parts at least 2.
    floor_left = 2 ** (m - 1)
    if left_range < floor_left:
        left_range, last = floor_left, min(last, budget // floor_left)
    head = recursive_ranges(stats, parts[:-1], left_range, aggregator, memo)
    ranges = head + [last]
    if min(ranges) < 2:
        raise ConfigurationError(f"budget {budget} exhausted: ranges {ranges}")
    if memo is not None:
        memo[memo_key] = tuple(ranges)
    return ranges


def dims_from_error(epsilon: float, delta: float) -> tuple[int, int]:
    """``(h, w) = (ceil(e / epsilon), ceil(ln(1 / delta)))``."""
    if not 0 < epsilon < 1 or not 0 < delta < 1:
        raise ConfigurationError("epsilon and delta must lie in (0, 1)")
    return math.ceil(math.e / epsilon), max(1, math.ceil(math.log(1 / delta)))


@dataclass
class SelectionReport:
    candidates: list[PartitionConfig]
    sigmas: list[float]
    chosen: int
    tie: bool
    variances: list[Fraction] = field(repr=False, default_factory=list)

    @property
    def config(self) -> PartitionConfig:
        return self.candidates[self.chosen]

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "sigmas": self.sigmas,
            "chosen": self.chosen,
            "tie": self.tie,
        }


def choose_sketch(
    sample: Stream | Iterable[StreamTuple],
    candidates: Sequence[PartitionConfig],
    width: int,
    seed: int,
    schema: KeySchema | None = None,
) -> SelectionReport:
    """Build each candidate over the sample and keep the one with the smallest cell spread.

    Ties go to the earliest candidate.
    """
    if len(candidates) < 2:
        raise ConfigurationError("choose_sketch needs at least two candidates")
    if len({c.budget for c in candidates}) != 1:
        raise ConfigurationError("candidates must share one budget")
    if isinstance(sample, Stream):
        schema = sample.schema
    elif schema is None:
        raise ConfigurationError("a schema is required for a plain tuple sample")
    stream = as_stream(schema, sample)
    variances = []
    for config in candidates:
        grid = SketchGrid(schema, config, width, seed)
        grid.update_many(stream)
        variances.append(grid.cell_variance())
    best = min(variances)
    chosen = variances.index(best)
    return SelectionReport(
        candidates=list(candidates),
        sigmas=[math.sqrt(v) for v in variances],
        chosen=chosen,
        tie=variances.count(best) > 1,
        variances=variances,
    )
