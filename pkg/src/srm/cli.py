"""Command-line client: build an index, run engines, compare them, sweep parameters.

Usage errors exit with 2, runtime failures with 1.
"""

from __future__ import annotations

import json
import sys
from functools import wraps

import click
from pydantic import ValidationError

from .harness.data import DataError, load_objects, synthetic_objects
from .harness.experiment import SWEEPABLE, WorkloadConfig, run_experiment, sweep, thread_cap
from .irf import IndexFormatError, build_index
from .partition import PartitionConfig

ENGINES = {"exact": ("exact",), "approx": ("approx",), "both": ("exact", "approx")}


class _Out:
    """JSON-lines destination: a file path or stdout for ``-``."""

    def __init__(self, path: str):
        self.path = path
        self.fh = None

    def __enter__(self):
        self.fh = sys.stdout if self.path == "-" else open(self.path, "w")
        return self

    def write(self, payload: str):
        self.fh.write(payload + "\n")

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _source_options(f):
    f = click.option("--objects", type=click.Path(dir_okay=False), help="Object CSV with header id,x,y.")(f)
    f = click.option("--synthetic", type=click.IntRange(min=1), metavar="N",
                     help="Generate N synthetic objects instead of reading a file.")(f)
    f = click.option("--distribution", type=click.Choice(["uniform", "city"]), default="city",
                     show_default=True, help="Layout of synthetic objects.")(f)
    return f


def _index_options(f):
    f = click.option("--epsilon", type=float, default=3.0, show_default=True)(f)
    f = click.option("--block-size", type=int, default=128, show_default=True)(f)
    return f


def _workload_options(f):
    f = _index_options(f)
    f = click.option("--index", "index_path", type=click.Path(dir_okay=False),
                     help="Saved index (replaces --objects/--synthetic).")(f)
    f = click.option("--queries", type=click.Path(dir_okay=False),
                     help="Query CSV with header x,y,radius,seq (replaces the generator).")(f)
    f = click.option("--window", type=int, default=400, show_default=True)(f)
    f = click.option("--m", type=int, default=10, show_default=True)(f)
    f = click.option("--radius-pct", type=float, default=4.0, show_default=True,
                     help="Query radius as a percentage of the dataspace diagonal.")(f)
    f = click.option("--shifts", type=int, default=10_000, show_default=True)(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--generator", type=click.Choice(["uniform", "skewed", "centroid"]),
                     default="uniform", show_default=True)(f)
    f = click.option("--bounds", type=click.Choice(["regional", "global"]), default="regional",
                     show_default=True, help="Outsider bound kept by the approximate engine.")(f)
    f = click.option("--out", default="-", show_default=True, help="JSON-lines output path.")(f)
    return _source_options(f)


def _config(kw) -> WorkloadConfig:
    sources = [s for s in ("objects", "synthetic", "index_path") if kw.get(s) is not None]
    if not sources:
        raise click.UsageError("no objects: pass --objects, --synthetic N or --index")
    if len(sources) > 1:
        raise click.UsageError("pass only one of --objects, --synthetic, --index")
    try:
        return WorkloadConfig(
            window=kw["window"], m=kw["m"], radius_pct=kw["radius_pct"], epsilon=kw["epsilon"],
            block_size=kw["block_size"], shifts=kw["shifts"], seed=kw["seed"],
            generator=kw["generator"], objects=kw["objects"], n=kw["synthetic"] or 10_000,
            distribution=kw["distribution"], queries=kw["queries"], index=kw["index_path"],
            bounds=kw["bounds"])
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc'])) or 'config'}: {e['msg']}"
                             for e in exc.errors())
        raise click.UsageError(problems) from None


def _runtime_errors(f):
    """Map expected failures to exit code 1 with a one-line message."""

    @wraps(f)
    def inner(*a, **kw):
        try:
            return f(*a, **kw)
        except (click.UsageError, click.exceptions.Exit, click.Abort):
            raise
        except (DataError, IndexFormatError, OSError, ValueError, MemoryError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return inner


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Top-m spatial rank popularity over a sliding window of range queries."""


@cli.command("build-index")
@_source_options
@_index_options
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Index file to write.")
@_runtime_errors
def build_index_cmd(objects, synthetic, distribution, epsilon, block_size, seed, out):
    """Partition the dataspace and save the index."""
    if (objects is None) == (synthetic is None):
        raise click.UsageError("pass exactly one of --objects or --synthetic N")
    try:
        part = PartitionConfig(epsilon=epsilon, block_size=block_size)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    objs = load_objects(objects) if objects else synthetic_objects(synthetic, distribution, seed)
    index = build_index(objs, part)
    index.save(out)
    leaves = sum(1 for _ in index.tree.leaves())
    click.echo(json.dumps({"path": out, "n": objs.n, "leaves": leaves,
                           "epsilon": epsilon, "block_size": block_size}))


@cli.command()
@_workload_options
@click.option("--engine", type=click.Choice(list(ENGINES)), default="both", show_default=True)
@_runtime_errors
def run(engine, out, **kw):
    """Emit one JSON line per engine and shift."""
    config = _config(kw)
    with _Out(out) as sink:
        report = run_experiment(config, sink=lambda r: sink.write(r.model_dump_json()),
                                engines=ENGINES[engine])
    click.echo(json.dumps({"summary": {k: v.model_dump() for k, v in report.summary.items()}}),
               err=True)


@cli.command()
@_workload_options
@_runtime_errors
def compare(out, **kw):
    """Run both engines and report OPQ, RPQ, approximation ratio and overlap."""
    config = _config(kw)
    report = run_experiment(config)
    with _Out(out) as sink:
        sink.write(report.model_dump_json())


@cli.command("sweep")
@_workload_options
@click.option("--param", required=True, type=click.Choice(SWEEPABLE))
@click.option("--values", required=True, help="Comma-separated values, e.g. 1,2,3,4,5.")
@click.option("--repetitions", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--engine", type=click.Choice(list(ENGINES)), default="both", show_default=True)
@_runtime_errors
def sweep_cmd(param, values, repetitions, engine, out, **kw):
    """One result group per parameter value (parallelism capped by SRM_THREADS)."""
    config = _config(kw)
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"--values must be numbers, got {values!r}") from None
    if not vals:
        raise click.UsageError("--values is empty")
    try:
        threads = thread_cap()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    try:
        groups = sweep(config, param, vals, repetitions, ENGINES[engine], threads)
    except ValidationError as exc:
        raise click.UsageError(f"invalid {param} value: {exc.errors()[0]['msg']}") from None
    with _Out(out) as sink:
        for g in groups:
            sink.write(g.model_dump_json())


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP monitoring service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    """Entry point returning the exit code instead of raising SystemExit."""
    try:
        cli.main(args=argv, prog_name="srm", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
