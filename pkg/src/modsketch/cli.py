"""Command-line front end: ``modsketch run | generate | query``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .errors import ModSketchError, PipelineError
from .estimation import AGGREGATORS
from .keys import KeySchema
from .pipeline import STRATEGIES, RunConfig, run_pipeline
from .sketch import SketchGrid
from .stream import GeneratorSpec, generate_stream, write_stream

log = logging.getLogger("modsketch")


def _schema(text: str) -> KeySchema:
    try:
        return KeySchema.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _generator(text: str) -> GeneratorSpec:
    try:
        return GeneratorSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ratio_grid(text: str) -> tuple[float, ...]:
    """``N`` gives ``N`` evenly spaced exponents ``i / (N + 1)``; a comma list is taken literally."""
    try:
        if "," in text:
            points = tuple(float(x) for x in text.split(","))
        else:
            size = int(text)
            if size < 1:
                raise ValueError("grid size must be >= 1")
            points = tuple(i / (size + 1) for i in range(1, size + 1))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ratio grid {text!r}: {exc}") from exc
    if not all(0 < t < 1 for t in points):
        raise argparse.ArgumentTypeError("ratio grid points must lie in (0, 1)")
    return points


def _key(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad key {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modsketch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log phase progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="plan, build and evaluate a sketch over a stream")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="stream file: comma-separated modules and optional frequency per line")
    src.add_argument("--generate", type=_generator, help='synthetic stream, e.g. "distinct=10000,500;skew=1.1;count=100000;seed=7"')
    run.add_argument("--schema", type=_schema, help="per-module cardinalities, e.g. 100,100")
    run.add_argument("--h", type=int, help="cells per row (range budget)")
    run.add_argument("--w", type=int, help="number of rows")
    run.add_argument("--epsilon", type=float, help="derive h = ceil(e / epsilon)")
    run.add_argument("--delta", type=float, help="derive w = ceil(ln(1 / delta))")
    run.add_argument("--strategy", choices=STRATEGIES, default="auto")
    run.add_argument("--sample-frac", type=float, default=0.02, help="stream prefix used for planning")
    run.add_argument("--aggregator", choices=AGGREGATORS, default="median")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--top-k", type=int)
    run.add_argument("--random-k", type=int)
    run.add_argument("--output", help="JSON-lines report path (default: stdout)")
    run.add_argument("--save-sketch")
    run.add_argument("--load-sketch")
    run.add_argument("--save-plan")
    run.add_argument("--load-plan")
    run.add_argument("--ratio-grid", type=_ratio_grid, default=_ratio_grid("9"),
                     help="exhaustive split grid: a size N, or explicit exponents in (0, 1)")
    run.add_argument("--summary", action="store_true", help="print a summary table to stderr")

    gen = sub.add_parser("generate", help="write a synthetic stream file")
    gen.add_argument("spec", type=_generator)
    gen.add_argument("--output", required=True)

    query = sub.add_parser("query", help="point queries against a saved sketch")
    query.add_argument("--load-sketch", required=True)
    query.add_argument("keys", nargs="+", type=_key, metavar="KEY", help="comma-separated modules")
    return parser


def _run(args: argparse.Namespace) -> int:
    cfg = RunConfig(
        schema=args.schema,
        h=args.h,
        w=args.w,
        epsilon=args.epsilon,
        delta=args.delta,
        strategy=args.strategy,
        sample_frac=args.sample_frac,
        aggregator=args.aggregator,
        seed=args.seed,
        top_k=args.top_k,
        random_k=args.random_k,
        input=args.input,
        generate=args.generate,
        output=args.output,
        save_sketch=args.save_sketch,
        load_sketch=args.load_sketch,
        save_plan=args.save_plan,
        load_plan=args.load_plan,
        ratio_grid=args.ratio_grid,
    )
    report = run_pipeline(cfg)
    if args.output:
        try:
            report.write(args.output)
        except OSError as exc:
            raise PipelineError("report", exc) from exc
    else:
        sys.stdout.write("\n".join(report.lines()) + "\n")
    if args.summary:
        print(report.summary_table(), file=sys.stderr)
    return 0


def _generate(args: argparse.Namespace) -> int:
    stream = generate_stream(args.spec)
    write_stream(args.output, stream, header="schema " + ",".join(map(str, stream.schema.cardinalities)))
    log.info("wrote %d tuples over schema %s", len(stream), stream.schema.cardinalities)
    return 0


def _query(args: argparse.Namespace) -> int:
    grid = SketchGrid.load(args.load_sketch)
    for key in args.keys:
        print(json.dumps({"key": list(key), "estimate": grid.query(key)}))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": _run, "generate": _generate, "query": _query}[args.command]
    try:
        return handler(args)
    except PipelineError as exc:
        print(f"modsketch: error {exc}", file=sys.stderr)
        return 1
    except (ModSketchError, OSError, ValueError) as exc:
        print(f"modsketch: error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
