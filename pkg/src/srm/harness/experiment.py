"""Drive the engines over one query stream and collect per-shift metrics."""

from __future__ import annotations

import itertools
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from ..approx import ApproxEngine
from ..exact import ExactEngine, RangeSearcher
from ..geometry import ObjectSet
from ..irf import IrfIndex, build_index, load
from ..partition import PartitionConfig
from ..window import RangeQuery
from .data import QueryGenerator, load_objects, load_queries, synthetic_objects

Engine = Literal["exact", "approx"]
OVERLAP_KS = tuple(range(10, 201, 10))
SWEEPABLE = ("window", "m", "radius_pct", "epsilon", "block_size")


class WorkloadConfig(BaseModel):
    """Everything that determines one experiment run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window: PositiveInt = 400
    m: PositiveInt = 10
    radius_pct: float = Field(4.0, gt=0, le=100)
    epsilon: float = Field(3.0, gt=0)
    block_size: PositiveInt = 128
    shifts: PositiveInt = 10_000
    seed: int = Field(0, ge=0)
    generator: Literal["uniform", "skewed", "centroid"] = "uniform"
    zipf_s: float = Field(1.0, gt=0)
    objects: str | None = None
    n: PositiveInt = 10_000
    distribution: Literal["uniform", "city"] = "city"
    queries: str | None = None
    index: str | None = None
    bounds: Literal["regional", "global"] = "regional"

    @model_validator(mode="after")
    def _sources(self):
        if self.objects is not None and self.index is not None:
            raise ValueError("give either an object file or an index, not both")
        return self


class MetricsRecord(BaseModel):
    """One engine's measurements for one shift."""

    shift: int
    engine: Engine
    opq: int = Field(ge=0)
    rpq_ns: int = Field(ge=0)
    tier: str | None = None
    vo: int | None = None
    index_ns: int | None = None
    warmup: bool
    result: list[tuple[int, float]]


class OverlapReport(BaseModel):
    m: int
    ks: list[int]
    overlap_pct: list[float]
    shifts: int


class RatioStats(BaseModel):
    """Approximation ratio, averaged two ways (they differ only when pairs are skipped)."""

    mean_of_shift_means: float | None
    pooled: float | None
    worst: float | None
    pairs: int
    undefined_pairs: int


class EngineSummary(BaseModel):
    shifts: int
    mean_opq: float
    mean_rpq_ns: float
    tiers: dict[str, int] = {}


class ExperimentReport(BaseModel):
    config: WorkloadConfig
    n: int
    summary: dict[str, EngineSummary]
    ratio: RatioStats | None = None
    overlap: OverlapReport | None = None


# -- setup -------------------------------------------------------------------


def prepare(config: WorkloadConfig) -> tuple[ObjectSet, IrfIndex]:
    """Objects and index for ``config`` (loaded, read from CSV or synthesised)."""
    if config.index is not None:
        index = load(config.index)
        if (index.config.epsilon, index.config.block_size) != (config.epsilon, config.block_size):
            raise ValueError(
                f"index was built with epsilon={index.config.epsilon}, "
                f"block size={index.config.block_size}; the run asks for "
                f"epsilon={config.epsilon}, block size={config.block_size}")
        return index.objects, index
    if config.objects is not None:
        objects = load_objects(config.objects)
    else:
        objects = synthetic_objects(config.n, config.distribution, config.seed)
    part = PartitionConfig(epsilon=config.epsilon, block_size=config.block_size)
    return objects, build_index(objects, part)


def query_stream(config: WorkloadConfig, objects: ObjectSet) -> list[RangeQuery]:
    if config.queries is not None:
        return load_queries(config.queries)[: config.shifts]
    gen = QueryGenerator(objects, config.generator, config.radius_pct, config.seed,
                         zipf_s=config.zipf_s)
    return gen.take(config.shifts)


# -- metrics -----------------------------------------------------------------


def ratio_terms(exact: list[tuple[int, float]], approx: list[tuple[int, float]]) -> tuple[list[float], int]:
    """Position-wise max(a/e, e/a) of popularities; zero/nonzero pairs are skipped."""
    out, skipped = [], 0
    for (_, e), (_, a) in zip(exact, approx):
        if e == 0 and a == 0:
            out.append(1.0)
        elif e == 0 or a == 0:
            skipped += 1
        else:
            out.append(max(a / e, e / a))
    return out, skipped


def overlap_row(scores: np.ndarray, approx_ids: list[int], ks=OVERLAP_KS) -> list[float]:
    """Share of ``approx_ids`` inside the exact top-k for each k.

    Objects tied with the k-th exact score count as inside the top-k.
    """
    kmax = min(max(ks), len(scores))
    top = -np.sort(-np.partition(scores, len(scores) - kmax)[len(scores) - kmax:])
    mine = scores[np.asarray(approx_ids, dtype=np.int64)]
    row = []
    for k in ks:
        cut = top[min(k, kmax) - 1]
        row.append(100.0 * np.count_nonzero(mine >= cut) / len(approx_ids))
    return row


class _Aggregate:
    def __init__(self):
        self.opq = []
        self.rpq = []
        self.tiers = Counter()

    def add(self, rec: MetricsRecord):
        if rec.warmup:
            return
        self.opq.append(rec.opq)
        self.rpq.append(rec.rpq_ns)
        if rec.tier is not None:
            self.tiers[rec.tier] += 1

    def summary(self) -> EngineSummary:
        k = len(self.opq)
        return EngineSummary(shifts=k, mean_opq=float(np.mean(self.opq)) if k else 0.0,
                             mean_rpq_ns=float(np.mean(self.rpq)) if k else 0.0,
                             tiers=dict(sorted(self.tiers.items())))


# -- driver ------------------------------------------------------------------


def run_experiment(config: WorkloadConfig,
                   sink: Callable[[MetricsRecord], None] | None = None,
                   engines: Iterable[Engine] = ("exact", "approx"),
                   prepared: tuple[ObjectSet, IrfIndex] | None = None,
                   queries: list[RangeQuery] | None = None) -> ExperimentReport:
    """Run the selected engines shift by shift over the same stream.

    Records go to ``sink`` as they are produced; the report aggregates
    post-warm-up shifts only.  Ratio and overlap need both engines.
    """
    engines = tuple(dict.fromkeys(engines))
    objects, index = prepared or prepare(config)
    if queries is None:
        queries = query_stream(config, objects)
    searcher = RangeSearcher(objects)
    exact = ExactEngine(objects, config.window, config.m, searcher) if "exact" in engines else None
    approx = (ApproxEngine(index, config.window, config.m, searcher, bounds=config.bounds)
              if "approx" in engines else None)
    both = exact is not None and approx is not None
    agg = {e: _Aggregate() for e in engines}
    shift_means, pooled, skipped = [], [], 0
    overlap_rows = []

    for shift, q in enumerate(queries):
        ex_rec = ap_rec = None
        if exact is not None:
            t0 = time.perf_counter_ns()
            st = exact.step(q)
            dt = time.perf_counter_ns() - t0
            ex_rec = MetricsRecord(shift=shift, engine="exact", opq=st.opq, rpq_ns=dt,
                                   warmup=st.warmup, result=[(o, float(p)) for o, p in st.result])
        if approx is not None:
            b0 = index.build_ns
            t0 = time.perf_counter_ns()
            st = approx.step(q)
            dt = time.perf_counter_ns() - t0
            built = index.build_ns - b0
            ap_rec = MetricsRecord(shift=shift, engine="approx", opq=st.stats.opq,
                                   rpq_ns=max(0, dt - built), index_ns=built,
                                   tier=st.stats.tier.value, vo=st.stats.vo,
                                   warmup=st.warmup, result=[(o, float(p)) for o, p in st.result])
        for rec in (ex_rec, ap_rec):
            if rec is not None:
                agg[rec.engine].add(rec)
                if sink is not None:
                    sink(rec)
        if both and not ex_rec.warmup:
            terms, bad = ratio_terms(ex_rec.result, ap_rec.result)
            skipped += bad
            pooled.extend(terms)
            if terms:
                shift_means.append(float(np.mean(terms)))
            overlap_rows.append(overlap_row(exact.scores, [o for o, _ in ap_rec.result]))

    report = ExperimentReport(config=config, n=objects.n,
                              summary={e: a.summary() for e, a in agg.items()})
    if both:
        report.ratio = RatioStats(
            mean_of_shift_means=float(np.mean(shift_means)) if shift_means else None,
            pooled=float(np.mean(pooled)) if pooled else None,
            worst=float(np.max(pooled)) if pooled else None,
            pairs=len(pooled), undefined_pairs=skipped)
        pct = np.mean(overlap_rows, axis=0).tolist() if overlap_rows else [0.0] * len(OVERLAP_KS)
        report.overlap = OverlapReport(m=config.m, ks=list(OVERLAP_KS), overlap_pct=pct,
                                       shifts=len(overlap_rows))
    return report


# -- sweeps ------------------------------------------------------------------


def thread_cap(default: int | None = None) -> int:
    """Parallelism allowed by ``SRM_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("SRM_THREADS")
    if raw is None:
        return max(1, default or os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"SRM_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"SRM_THREADS must be a positive integer, got {raw!r}")
    return value


class SweepGroup(BaseModel):
    param: str
    value: int | float
    repetitions: list[ExperimentReport]


def _sweep_point(args) -> ExperimentReport:
    config, engines = args
    return run_experiment(config, engines=engines)


def sweep(config: WorkloadConfig, param: str, values: list[float], repetitions: int = 3,
          engines: Iterable[Engine] = ("exact", "approx"), threads: int | None = None) -> list[SweepGroup]:
    """Run ``config`` once per value of ``param`` and repetition (seed, seed+1, ...)."""
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose from {', '.join(SWEEPABLE)}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    engines = tuple(engines)
    cast = float if param in ("radius_pct", "epsilon") else int
    jobs = []
    for v, r in itertools.product(values, range(repetitions)):
        jobs.append((config.model_copy(update={param: cast(v), "seed": config.seed + r}), engines))
    # validate every point before spending time on any of them
    jobs = [(WorkloadConfig.model_validate(c.model_dump()), e) for c, e in jobs]
    workers = min(threads or thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    out = []
    for i, v in enumerate(values):
        out.append(SweepGroup(param=param, value=cast(v),
                              repetitions=reports[i * repetitions:(i + 1) * repetitions]))
    return out
