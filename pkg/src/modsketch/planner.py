"""Search over module partitions: exact enumeration and the greedy planner."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, ResourceError
from .estimation import SampleStats, recursive_ranges
from .evaluation import build_queries, observed_error
from .keys import KeySchema
from .sketch import Part, PartitionConfig, SketchGrid, integer_root
from .stream import Stream

BELL_CAP = 20
ENUMERATION_CAP = 8
DEFAULT_RATIO_GRID = tuple(i / 10 for i in range(1, 10))


def bell_count(n: int, cap: int = BELL_CAP) -> int:
    """Number of set partitions of ``n`` modules, by ``T(n) = sum C(n-1, k) T(n-k-1)``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > cap:
        raise ResourceError(f"bell_count({n}) exceeds the cap of {cap}")
    return _bell(n)


@lru_cache(maxsize=None)
def _bell(n: int) -> int:
    if n <= 1:
        return 1
    return sum(math.comb(n - 1, k) * _bell(n - k - 1) for k in range(n))


def enumerate_partitions(n: int, cap: int = ENUMERATION_CAP) -> list[tuple[Part, ...]]:
    """All set partitions of ``{0..n-1}``, parts ordered by their smallest module.

    The list is sorted lexicographically on that canonical form.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > cap:
        raise ResourceError(f"enumerating partitions of {n} modules exceeds the cap of {cap}")
    if n == 0:
        return [()]
    return sorted(_partitions(list(range(n))))


def _partitions(items: list[int]) -> Iterator[tuple[Part, ...]]:
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    # Choose which of the remaining modules join `first`, then partition the leftovers.
    for mask in range(1 << len(rest)):
        mates = tuple(x for i, x in enumerate(rest) if mask >> i & 1)
        leftover = [x for i, x in enumerate(rest) if not mask >> i & 1]
        for tail in _partitions(leftover):
            yield ((first, *mates),) + tail


@dataclass
class StageRecord:
    """One greedy stage: candidate layouts (original module indices), their ranges and sigmas."""

    stage: int
    budget: int
    candidates: list[tuple[tuple[Part, ...], tuple[int, ...]]]
    sigmas: list[float]
    winner: int

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "budget": self.budget,
            "candidates": [
                {"parts": [list(p) for p in parts], "ranges": list(ranges)}
                for parts, ranges in self.candidates
            ],
            "sigmas": self.sigmas,
            "winner": self.winner,
        }

    @classmethod
    def from_dict(cls, data: dict) -> StageRecord:
        return cls(
            stage=data["stage"],
            budget=data["budget"],
            candidates=[
                (tuple(tuple(p) for p in c["parts"]), tuple(c["ranges"])) for c in data["candidates"]
            ],
            sigmas=list(data["sigmas"]),
            winner=data["winner"],
        )


@dataclass
class HashingStrategy:
    config: PartitionConfig
    provenance: list[StageRecord] = field(default_factory=list)
    method: str = "greedy"
    score: float | None = None
    evaluated: int = 0
    partitions: int = 0
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config.to_dict(),
            "score": self.score,
            "evaluated": self.evaluated,
            "partitions": self.partitions,
            "provenance": [s.to_dict() for s in self.provenance],
        }

    @classmethod
    def from_dict(cls, data: dict) -> HashingStrategy:
        return cls(
            config=PartitionConfig.from_dict(data["config"]),
            provenance=[StageRecord.from_dict(s) for s in data.get("provenance", [])],
            method=data.get("method", "greedy"),
            score=data.get("score"),
            evaluated=data.get("evaluated", 0),
            partitions=data.get("partitions", 0),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> HashingStrategy:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _restrict(
    sample: Stream, parts: Sequence[Part]
) -> tuple[KeySchema, Stream, tuple[Part, ...]]:
    """Project the sample onto the modules covered by ``parts`` and renumber them 0..k-1."""
    covered = tuple(sorted(j for p in parts for j in p))
    renum = {j: i for i, j in enumerate(covered)}
    schema = sample.schema.project(covered)
    sub = Stream(schema, sample.keys[:, list(covered)], sample.freqs)
    return schema, sub, tuple(tuple(renum[j] for j in p) for p in parts)


def _stage_candidates(closed: list[Part], open_part: Part, remaining: list[int]) -> list[list[Part]]:
    """Partitions reachable in one greedy step: close the open part, or grow it by one module."""
    separate = closed + [open_part, (remaining[0],)]
    merges = [closed + [tuple(sorted(open_part + (j,)))] for j in remaining]
    # Fewer parts first so that sigma ties favour merging.
    return merges + [separate]


def _sample_variance(sample: Stream, parts: Sequence[Part], ranges: Sequence[int], budget: int,
                     width: int, seed: int) -> Fraction:
    schema, sub, renumbered = _restrict(sample, parts)
    grid = SketchGrid(schema, PartitionConfig(renumbered, tuple(ranges), budget), width, seed)
    grid.update_many(sub)
    return grid.cell_variance()


def greedy_plan(
    stats: SampleStats,
    sample: Stream,
    budget: int,
    width: int,
    seed: int,
    aggregator: str = "median",
) -> HashingStrategy:
    """Depth-first greedy construction of a partition, one module per stage.

    At stage ``k`` the open part is either closed (the lowest unvisited
    module opens a new part) or absorbs one unvisited module. Each of the
    ``n - k + 1`` candidates covers ``k + 1`` modules, gets ranges for a stage
    budget of ``floor(h ** ((k + 1) / n))`` and is built over the sample
    projected onto its modules; the smallest cell standard deviation wins,
    ties going to the layout with fewer parts.
    """
    n = stats.schema.n
    if not stats.item_counts:
        raise ConfigurationError("greedy planning needs a non-empty sample")
    if n == 1:
        return HashingStrategy(PartitionConfig(((0,),), (budget,), budget), [], "greedy")
    memo: dict = {}
    closed: list[Part] = []
    open_part: Part = (0,)
    remaining = list(range(1, n))
    provenance: list[StageRecord] = []
    for k in range(1, n):
        stage_budget = integer_root(budget ** (k + 1), n)
        layouts = _stage_candidates(closed, open_part, remaining)
        scored = []
        for parts in layouts:
            ranges = tuple(recursive_ranges(stats, parts, stage_budget, aggregator, memo))
            var = _sample_variance(sample, parts, ranges, stage_budget, width, seed)
            scored.append((tuple(parts), ranges, var))
        variances = [v for _, _, v in scored]
        winner = variances.index(min(variances))
        provenance.append(
            StageRecord(
                stage=k,
                budget=stage_budget,
                candidates=[(p, r) for p, r, _ in scored],
                sigmas=[math.sqrt(v) for v in variances],
                winner=winner,
            )
        )
        chosen = layouts[winner]
        covered = {j for p in chosen for j in p}
        remaining = [j for j in range(n) if j not in covered]
        closed, open_part = list(chosen[:-1]), chosen[-1]
    final_parts = tuple(sorted(closed + [open_part], key=min))
    ranges = recursive_ranges(stats, final_parts, budget, aggregator, memo)
    return HashingStrategy(
        PartitionConfig(final_parts, tuple(ranges), budget),
        provenance,
        "greedy",
        evaluated=sum(len(s.candidates) for s in provenance),
    )


def grid_range_assignments(m: int, budget: int, ratio_grid: Sequence[float]) -> list[tuple[int, ...]]:
    """Every range vector reachable by splitting ``budget`` level by level on ``ratio_grid``.

    At each level the merged leading parts get ``floor(H ** t)`` and the last
    part gets what is left, so ``t`` spaces the splits logarithmically.
    Splits leaving any part with a range below 2 are dropped.
    """
    if m == 1:
        return [(budget,)]
    out: set[tuple[int, ...]] = set()
    for t in ratio_grid:
        if not 0 < t < 1:
            raise ConfigurationError(f"ratio grid points must lie in (0, 1), got {t}")
        left = int(math.floor(budget**t))
        if left < 2 ** (m - 1):
            continue
        last = budget // left
        if last < 2:
            continue
        for head in grid_range_assignments(m - 1, left, ratio_grid):
            out.add(head + (last,))
    return sorted(out)


def scored_error(
    stream: Stream,
    counts: dict,
    queries: list,
    config: PartitionConfig,
    width: int,
    seed: int,
    residues: tuple | None = None,
) -> float:
    """Observed error on ``queries`` of a grid built over ``stream``."""
    grid = SketchGrid(stream.schema, config, width, seed)
    stream_res, query_res = residues if residues is not None else (None, None)
    grid.update_many(stream, stream_res)
    estimates = grid.query_many(queries, query_res).tolist()
    return observed_error((counts[q], e) for q, e in zip(queries, estimates))


def exhaustive_plan(
    stats: SampleStats,
    stream: Stream,
    budget: int,
    width: int,
    seed: int,
    ratio_grid: Sequence[float] = DEFAULT_RATIO_GRID,
    top_k: int = 100,
    query_mode: str = "top",
    query_seed: int = 0,
) -> HashingStrategy:
    """Score every partition under every grid range assignment.

    Each candidate is built over ``stream`` and scored by observed error on
    a query set drawn from the exact counts of that same stream; the lowest
    error wins, ties going to fewer parts and then to enumeration order.
    Passing the planning sample makes this a sample-only search; passing
    the whole stream gives the empirical best layout on the grid.
    """
    n = stats.schema.n
    if stream.schema.n != n:
        raise ConfigurationError("scoring stream and sample stats disagree on modularity")
    partitions = enumerate_partitions(n)
    counts = stream.exact_counts()
    queries = build_queries(counts, query_mode, min(top_k, len(counts)), query_seed)
    best: tuple[float, int, PartitionConfig] | None = None
    evaluated = 0
    query_keys = np.asarray(queries, dtype=np.uint64).reshape(-1, n)
    for parts in partitions:
        # Residues depend on the parts but not on the ranges; hash each partition once.
        template = SketchGrid(stream.schema, PartitionConfig(parts, (1,) * len(parts), budget), width, seed)
        residues = (template.residues(stream.keys), template.residues(query_keys))
        for ranges in grid_range_assignments(len(parts), budget, ratio_grid):
            config = PartitionConfig(parts, ranges, budget)
            err = scored_error(stream, counts, queries, config, width, seed, residues)
            evaluated += 1
            if best is None or (err, len(parts)) < best[:2]:
                best = (err, len(parts), config)
    if best is None:
        raise ConfigurationError(f"no feasible range assignment for budget {budget}")
    return HashingStrategy(
        best[2], [], "exhaustive", score=best[0], evaluated=evaluated, partitions=len(partitions)
    )
