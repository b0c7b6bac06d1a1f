"""End-to-end run: read or generate a stream, plan, build, and evaluate queries."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TypeVar

from .errors import ConfigurationError, PipelineError
from .estimation import (
    AGGREGATORS,
    choose_sketch,
    dims_from_error,
    ingest_sample,
    recursive_ranges,
)
from .evaluation import build_queries, observed_error
from .keys import KeySchema
from .planner import (
    DEFAULT_RATIO_GRID,
    ENUMERATION_CAP,
    HashingStrategy,
    exhaustive_plan,
    greedy_plan,
)
from .sketch import PartitionConfig, SketchGrid
from .stream import GeneratorSpec, Stream, generate_stream, parse_stream

log = logging.getLogger(__name__)

STRATEGIES = ("countmin", "equal", "mod", "greedy", "exhaustive", "auto")
CHUNK = 8192
T = TypeVar("T")


@dataclass
class RunConfig:
    schema: KeySchema | None = None
    h: int | None = None
    w: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    strategy: str = "auto"
    sample_frac: float = 0.02
    aggregator: str = "median"
    seed: int = 0
    top_k: int | None = None
    random_k: int | None = None
    input: str | None = None
    generate: GeneratorSpec | None = None
    output: str | None = None
    save_sketch: str | None = None
    load_sketch: str | None = None
    save_plan: str | None = None
    load_plan: str | None = None
    ratio_grid: tuple[float, ...] = DEFAULT_RATIO_GRID

    def resolved_dims(self) -> tuple[int, int]:
        h, w = self.h, self.w
        if self.epsilon is not None or self.delta is not None:
            if self.epsilon is None or self.delta is None:
                raise ConfigurationError("--epsilon and --delta must be given together")
            eh, ew = dims_from_error(self.epsilon, self.delta)
            h = h if h is not None else eh
            w = w if w is not None else ew
        if h is None or w is None:
            raise ConfigurationError("give --h and --w, or --epsilon and --delta")
        if h < 1 or w < 1:
            raise ConfigurationError(f"h and w must be positive, got h={h}, w={w}")
        return h, w

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigurationError(f"unknown aggregator {self.aggregator!r}")
        if not 0 < self.sample_frac <= 1:
            raise ConfigurationError(f"sample fraction must lie in (0, 1], got {self.sample_frac}")
        for name in ("top_k", "random_k"):
            k = getattr(self, name)
            if k is not None and k < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.top_k is None and self.random_k is None:
            raise ConfigurationError("ask for at least one of --top-k / --random-k")
        if (self.input is None) == (self.generate is None):
            raise ConfigurationError("give exactly one of --input or --generate")
        if self.input is not None and self.schema is None:
            raise ConfigurationError("--input needs --schema")
        if self.load_sketch is None:
            self.resolved_dims()

    def to_dict(self) -> dict[str, Any]:
        gen = self.generate
        return {
            "schema": list(self.schema.cardinalities) if self.schema else None,
            "h": self.h,
            "w": self.w,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "strategy": self.strategy,
            "sample_frac": self.sample_frac,
            "aggregator": self.aggregator,
            "seed": self.seed,
            "top_k": self.top_k,
            "random_k": self.random_k,
            "input": self.input,
            "generate": None
            if gen is None
            else {
                "distinct": list(gen.distinct),
                "skew": gen.skew,
                "count": gen.count,
                "seed": gen.seed,
                "cardinalities": list(gen.cardinalities) if gen.cardinalities else None,
                "copies": [list(c) for c in gen.copies],
            },
            "load_sketch": self.load_sketch,
            "load_plan": self.load_plan,
            "ratio_grid": list(self.ratio_grid),
        }


@dataclass
class QuerySet:
    mode: str
    k: int
    items: list[tuple[tuple[int, ...], int, int]]
    observed_error: float


@dataclass
class QueryReport:
    config: dict[str, Any]
    stream: dict[str, int]
    strategy: dict[str, Any]
    queries: list[QuerySet]
    throughput: float = 0.0
    timings: dict[str, float] = field(default_factory=dict)

    def lines(self) -> list[str]:
        """Deterministic JSON-lines body; timing data lives in :meth:`timing_lines`."""
        out = [
            {"record": "run", "config": self.config},
            {"record": "stream", **self.stream},
            {"record": "strategy", **self.strategy},
        ]
        for qs in self.queries:
            for key, true, est in qs.items:
                out.append({"record": "item", "query": qs.mode, "key": list(key), "true": true, "estimate": est})
            out.append(
                {"record": "summary", "query": qs.mode, "k": qs.k, "observed_error": qs.observed_error}
            )
        return [json.dumps(rec) for rec in out]

    def timing_lines(self) -> list[str]:
        rec = {"record": "timing", "throughput_updates_per_s": self.throughput, "phases_s": self.timings}
        return [json.dumps(rec)]

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        timing_path = path.with_name(path.name + ".timings.jsonl")
        timing_path.write_text("\n".join(self.timing_lines()) + "\n", encoding="utf-8")

    def summary_table(self) -> str:
        cfg = self.strategy.get("config", {})
        rows = [
            ("strategy", str(self.strategy.get("method"))),
            ("parts", str(cfg.get("parts"))),
            ("ranges", str(cfg.get("ranges"))),
            ("tuples", str(self.stream.get("tuples"))),
            ("distinct items", str(self.stream.get("distinct"))),
            ("mass L", str(self.stream.get("mass"))),
            ("throughput (upd/s)", f"{self.throughput:,.0f}"),
        ]
        rows += [(f"observed error ({qs.mode}-{qs.k})", f"{qs.observed_error:.6f}") for qs in self.queries]
        rows += [(f"time {name} (s)", f"{secs:.3f}") for name, secs in self.timings.items()]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _phase(name: str, timings: dict[str, float], fn: Callable[[], T]) -> T:
    start = time.perf_counter()
    try:
        result = fn()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc
    timings[name] = time.perf_counter() - start
    log.debug("phase %s done in %.3fs", name, timings[name])
    return result


def plan_strategy(
    cfg: RunConfig, sample: Stream, h: int, w: int, stream: Stream | None = None
) -> tuple[PartitionConfig, dict[str, Any]]:
    """Pick a partition for ``cfg.strategy``; returns the config and a description.

    Every strategy except exhaustive looks only at ``sample``. Exhaustive
    search scores candidates on ``stream`` (the sample if not given), using
    the run's own query protocol.
    """
    plan = _plan(cfg, sample, h, w, sample if stream is None else stream)
    if cfg.save_plan:
        plan.save(cfg.save_plan)
    desc = plan.to_dict()
    desc.pop("config")
    desc.update(plan.extra)
    return plan.config, desc


def _plan(cfg: RunConfig, sample: Stream, h: int, w: int, stream: Stream) -> HashingStrategy:
    schema = sample.schema
    n = schema.n
    strategy = cfg.strategy
    if cfg.load_plan:
        loaded = HashingStrategy.load(cfg.load_plan)
        if loaded.config.n != n:
            raise ConfigurationError(f"plan covers {loaded.config.n} modules, stream has {n}")
        loaded.method = f"plan:{loaded.method}"
        return loaded
    if strategy == "countmin" or (n == 1 and strategy in ("mod", "auto", "equal")):
        return HashingStrategy(PartitionConfig.count_min(n, h), method="countmin")
    if strategy == "equal":
        return HashingStrategy(PartitionConfig.equal(n, h), method="equal")
    stats = ingest_sample(sample)
    if not stats.item_counts:
        raise ConfigurationError("the planning sample is empty")
    if strategy == "mod" or (strategy == "auto" and n == 2):
        parts = tuple((j,) for j in range(n))
        mod = PartitionConfig(parts, tuple(recursive_ranges(stats, parts, h, cfg.aggregator)), h)
        if strategy == "mod":
            return HashingStrategy(mod, method="mod")
        report = choose_sketch(sample, [PartitionConfig.count_min(n, h), mod], w, cfg.seed)
        return HashingStrategy(report.config, method="auto", extra={"selection": report.to_dict()})
    if strategy == "greedy" or strategy == "auto":
        plan = greedy_plan(stats, sample, h, w, cfg.seed, cfg.aggregator)
        if strategy == "auto":
            plan.method = "auto:greedy"
        return plan
    if n > ENUMERATION_CAP:
        raise ConfigurationError(f"exhaustive search is capped at modularity {ENUMERATION_CAP}")
    mode, k = ("top", cfg.top_k) if cfg.top_k is not None else ("random", cfg.random_k or 100)
    return exhaustive_plan(
        stats, stream, h, w, cfg.seed, cfg.ratio_grid, k, query_mode=mode, query_seed=cfg.seed
    )


def _load_stream(cfg: RunConfig) -> Stream:
    if cfg.generate is not None:
        stream = generate_stream(cfg.generate)
        if cfg.schema is not None and cfg.schema != stream.schema:
            raise ConfigurationError(
                f"--schema {cfg.schema.cardinalities} disagrees with generator domain {stream.schema.cardinalities}"
            )
        return stream
    assert cfg.input is not None and cfg.schema is not None
    return parse_stream(cfg.input, cfg.schema)


def _build(grid: SketchGrid, stream: Stream) -> float:
    start = time.perf_counter()
    for lo in range(0, len(stream), CHUNK):
        grid.update_many(stream[lo : lo + CHUNK])
    elapsed = time.perf_counter() - start
    return len(stream) / elapsed if elapsed > 0 else float("inf")


def run_pipeline(cfg: RunConfig) -> QueryReport:
    try:
        cfg.validate()
    except ConfigurationError as exc:
        raise PipelineError("config", exc) from exc
    timings: dict[str, float] = {}
    stream = _phase("read", timings, lambda: _load_stream(cfg))
    schema = stream.schema
    if cfg.load_sketch:
        grid = _phase("load", timings, lambda: SketchGrid.load(cfg.load_sketch))  # type: ignore[arg-type]
        if grid.schema != schema:
            raise PipelineError("load", ConfigurationError("sketch schema differs from the stream schema"))
        strategy_desc: dict[str, Any] = {"method": "loaded", "source": cfg.load_sketch}
        throughput = 0.0
    else:
        h, w = cfg.resolved_dims()
        sample = _phase("sample", timings, lambda: stream.prefix(cfg.sample_frac))
        config, strategy_desc = _phase("plan", timings, lambda: plan_strategy(cfg, sample, h, w, stream))
        grid = SketchGrid(schema, config, w, cfg.seed)
        throughput = _phase("build", timings, lambda: _build(grid, stream))
        if cfg.save_sketch:
            _phase("save", timings, lambda: grid.save(cfg.save_sketch))  # type: ignore[arg-type]
    strategy_desc["config"] = grid.config.to_dict()
    strategy_desc["width"] = grid.width
    strategy_desc["sigma"] = grid.cell_stddev()
    counts = _phase("truth", timings, stream.exact_counts)

    def evaluate() -> list[QuerySet]:
        sets = []
        for mode, k in (("top", cfg.top_k), ("random", cfg.random_k)):
            if k is None:
                continue
            keys = build_queries(counts, mode, k, cfg.seed)
            estimates = grid.query_many(keys).tolist()
            items = [(key, counts[key], int(est)) for key, est in zip(keys, estimates)]
            err = observed_error((t, e) for _, t, e in items)
            sets.append(QuerySet(mode, k, items, err))
        return sets

    queries = _phase("query", timings, evaluate)
    return QueryReport(
        config=cfg.to_dict(),
        stream={"tuples": len(stream), "mass": stream.total, "distinct": len(counts)},
        strategy=strategy_desc,
        queries=queries,
        throughput=throughput,
        timings=timings,
    )
