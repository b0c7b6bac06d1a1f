"""Accuracy metric and query-set construction."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, MetricError
from .keys import ModularKey

QUERY_MODES = ("top", "random")


def observed_error(items: Iterable[tuple[int, int]]) -> float:
    """``sum |estimate - true| / sum true`` over ``(true, estimate)`` pairs."""
    abs_err = 0
    truth = 0
    count = 0
    for true, est in items:
        if true <= 0:
            raise MetricError(f"true frequency must be positive, got {true}")
        abs_err += abs(int(est) - int(true))
        truth += int(true)
        count += 1
    if not count:
        raise MetricError("observed error over an empty query set")
    return float(Fraction(abs_err, truth))


def build_queries(
    counts: Mapping[ModularKey, int], mode: str, k: int, seed: int = 0
) -> list[ModularKey]:
    """Top-k by exact frequency, or k distinct items sampled without replacement.

    Frequency ties rank the smaller key first; lexicographic tuple order is
    the same as the mixed-radix encoding order.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if k > len(counts):
        raise ConfigurationError(f"k={k} exceeds the {len(counts)} distinct items")
    if mode == "top":
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [key for key, _ in ranked[:k]]
    if mode == "random":
        return random.Random(seed).sample(sorted(counts), k)
    raise ConfigurationError(f"unknown query mode {mode!r}; choose from {QUERY_MODES}")


def report_items(
    keys: Sequence[ModularKey], counts: Mapping[ModularKey, int], estimates: Sequence[int]
) -> list[tuple[ModularKey, int, int]]:
    return [(key, counts[key], int(est)) for key, est in zip(keys, estimates)]
