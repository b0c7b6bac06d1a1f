"""Composite-hashing frequency sketches for modular keys."""

from .errors import (
    ConfigurationError,
    EstimationError,
    HashPreconditionError,
    MetricError,
    ModSketchError,
    PipelineError,
    ResourceError,
    SchemaError,
    SketchOverflowError,
    StreamParseError,
)
from .estimation import (
    SampleStats,
    SelectionReport,
    aggregate_alpha,
    alpha_of_item,
    choose_sketch,
    ingest_sample,
    ranges_from_beta,
    recursive_ranges,
)
from .evaluation import build_queries, observed_error
from .hashing import HashFunction, make_family, next_prime
from .keys import KeySchema, ModularKey
from .pipeline import QueryReport, RunConfig, run_pipeline
from .planner import HashingStrategy, bell_count, enumerate_partitions, exhaustive_plan, greedy_plan
from .sketch import PartitionConfig, SketchGrid, new_sketch
from .stream import GeneratorSpec, Stream, StreamTuple, generate_stream, parse_stream

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "EstimationError",
    "GeneratorSpec",
    "HashFunction",
    "HashPreconditionError",
    "HashingStrategy",
    "KeySchema",
    "MetricError",
    "ModSketchError",
    "ModularKey",
    "PartitionConfig",
    "PipelineError",
    "QueryReport",
    "ResourceError",
    "RunConfig",
    "SampleStats",
    "SchemaError",
    "SelectionReport",
    "SketchGrid",
    "SketchOverflowError",
    "Stream",
    "StreamParseError",
    "StreamTuple",
    "aggregate_alpha",
    "alpha_of_item",
    "bell_count",
    "build_queries",
    "choose_sketch",
    "enumerate_partitions",
    "exhaustive_plan",
    "generate_stream",
    "greedy_plan",
    "ingest_sample",
    "make_family",
    "new_sketch",
    "next_prime",
    "observed_error",
    "parse_stream",
    "ranges_from_beta",
    "recursive_ranges",
    "run_pipeline",
]
