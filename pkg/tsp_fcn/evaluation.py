"""
metrics, end-to-end pipeline evaluation, sweeps and the solver timing benchmark
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pyarrow as pa
from pyarrow import csv as pa_csv

from .decode import DecodeConfig, decode_timing, post_process
from .exceptions import ConfigError, DatasetError, DimensionMismatchError, EmptySetError
from .instance import TspInstance, normalize, pixel_collisions, validate_tour
from .jobs import map_jobs
from .net import FcnModel, predict
from .raster import (
    RenderConfig,
    Sample,
    image_to_array,
    label_to_path_mask,
    mask_from_image,
    probs_to_image,
    render_sample,
)
from .solvers import ALGORITHMS, HEURISTIC, SIZE_LIMITS, AcoConfig, GaConfig, solve, solve_dp
from .store import generate_samples

logger = logging.getLogger(__name__)

THRESHOLDS = (0, 1, 2, 5, 10)
REL_TOL = 1e-9


##########################################################################################
# METRICS
##########################################################################################
@dataclass(frozen=True)
class MetricsReport:
    """
    e0..e10: fraction of samples within (1 + k / 100) of the optimum
    r_aver: mean produced / optimal over valid tours
    """

    e0: float
    e1: float
    e2: float
    e5: float
    e10: float
    r_aver: float
    count: int
    invalid: int = 0
    predict_ms: float = 0.0
    decode_ms: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(solutions: Sequence[Tuple[float, float, bool]], predict_ms=0.0, decode_ms=0.0) -> MetricsReport:
    """
    solutions: (produced length, optimal length, valid) per sample; invalid tours
    fail every e_k and stay out of r_aver

    Errors:
        EmptySetError
        DatasetError
    """
    if not solutions:
        raise EmptySetError("Cannot compute metrics of an empty solution set")
    produced = np.array([s[0] for s in solutions], dtype=np.float64)
    optimal = np.array([s[1] for s in solutions], dtype=np.float64)
    valid = np.array([bool(s[2]) for s in solutions])
    if np.any(optimal <= 0):
        raise DatasetError("Optimal lengths must be positive")
    rates = [
        float(np.mean(valid & (produced <= (1.0 + k / 100.0) * optimal * (1.0 + REL_TOL)))) for k in THRESHOLDS
    ]
    r_aver = float(np.mean(produced[valid] / optimal[valid])) if valid.any() else float("nan")
    return MetricsReport(*rates, r_aver, len(solutions), int((~valid).sum()), float(predict_ms), float(decode_ms))


def corrupt_mask(mask: np.ndarray, fraction: float, seed: int = 0) -> np.ndarray:
    """copy of mask with round(fraction * path pixels) path pixels turned to background"""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"Corruption fraction must be in [0, 1], got {fraction}")
    mask = np.array(mask, dtype=bool)
    path = np.flatnonzero(mask)
    count = int(round(fraction * len(path)))
    if count:
        flipped = np.random.default_rng(seed).choice(path, size=count, replace=False)
        mask.flat[flipped] = False
    return mask


##########################################################################################
# PREDICTORS
##########################################################################################
class ModelPredictor:
    """binarized network output: black where the path channel wins"""

    def __init__(self, model: FcnModel):
        self.model = model

    def predict_mask(self, sample: Sample) -> np.ndarray:
        s = self.model.arch.input_size
        if (sample.image.w, sample.image.h) != (s, s):
            raise DimensionMismatchError(
                f"Image {sample.instance.id} is {sample.image.w}x{sample.image.h}, model expects {s}x{s}"
            )
        probs = predict(self.model, image_to_array(sample.image, self.model.dtype))
        return mask_from_image(probs_to_image(probs))


class OraclePredictor:
    """label passthrough: the ground-truth path mask stands in for the network"""

    def predict_mask(self, sample: Sample) -> np.ndarray:
        if sample.label is None:
            raise DatasetError(f"Oracle passthrough needs a label for {sample.instance.id}")
        return label_to_path_mask(sample.label)


def as_predictor(model_or_predictor):
    if isinstance(model_or_predictor, FcnModel):
        return ModelPredictor(model_or_predictor)
    if model_or_predictor is None:
        return OraclePredictor()
    return model_or_predictor


##########################################################################################
# PIPELINE
##########################################################################################
@dataclass(frozen=True)
class EvalConfig:
    """render: re-render inputs from the instances (e.g. scatter mode) before predicting"""

    decode: DecodeConfig = DecodeConfig()
    render: Optional[RenderConfig] = None
    jobs: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "decode": self.decode.to_dict(),
            "render": self.render.to_dict() if self.render else None,
            "jobs": self.jobs,
        }


@dataclass(frozen=True)
class SampleResult:
    id: str
    produced: float
    optimal: float
    valid: bool
    collisions: int
    predict_ms: float
    decode_ms: float
    order: Tuple[int, ...] = ()


def _optimal_length(instance: TspInstance) -> float:
    if instance.length is not None:
        return float(instance.length)
    return solve_dp(instance).length


def _evaluate_one(sample: Sample, predictor, cfg: EvalConfig) -> SampleResult:
    if cfg.render is not None:
        tour = sample.instance.solution() or solve_dp(sample.instance)
        image, label = render_sample(sample.instance, tour, cfg.render)
        sample = Sample(sample.instance, image, label)
    start = time.perf_counter()
    mask = predictor.predict_mask(sample)
    predicted = time.perf_counter()
    solution = post_process(mask, sample.instance, cfg.decode)
    decoded = time.perf_counter()
    return SampleResult(
        sample.instance.id,
        solution.length,
        _optimal_length(sample.instance),
        bool(validate_tour(sample.instance, solution.order)),
        len(pixel_collisions(normalize(sample.instance, sample.image.w, sample.image.h))),
        1000.0 * (predicted - start),
        1000.0 * (decoded - predicted),
        solution.order,
    )


def evaluate_samples(model_or_predictor, samples: Sequence[Sample], cfg: EvalConfig = EvalConfig()):
    """
    predict -> binarize -> decode -> metrics; returns (report, per-sample results)

    Errors:
        EmptySetError
        DimensionMismatchError
    """
    samples = samples.samples() if hasattr(samples, "samples") else list(samples)
    if not samples:
        raise EmptySetError("Evaluation set is empty")
    predictor = as_predictor(model_or_predictor)
    results = map_jobs(partial(_evaluate_one, predictor=predictor, cfg=cfg), samples, cfg.jobs)
    report = compute_metrics(
        [(r.produced, r.optimal, r.valid) for r in results],
        np.mean([r.predict_ms for r in results]),
        np.mean([r.decode_ms for r in results]),
    )
    logger.info("Evaluated %d samples: e0 %.4f, R_aver %.6f", report.count, report.e0, report.r_aver)
    return report, results


def run_pipeline_eval(model_or_predictor, samples, cfg: EvalConfig = EvalConfig()) -> MetricsReport:
    """
    metrics of the full image-to-tour pipeline against stored optimal lengths;
    None or an OraclePredictor evaluates with label passthrough
    """
    report, _ = evaluate_samples(model_or_predictor, samples, cfg)
    return report


def resolution_warning(n: int, cfg: RenderConfig) -> bool:
    """true when n city squares would cover more than a quarter of the image"""
    return n * (2 * cfg.city_halfwidth + 1) ** 2 > 0.25 * cfg.w * cfg.h


def generalization_sweep(
    model_or_predictor,
    n_values: Sequence[int] = range(4, 13),
    samples_per_n: int = 480,
    seed: int = 0,
    render: RenderConfig = RenderConfig(),
    cfg: EvalConfig = EvalConfig(),
) -> Dict[int, MetricsReport]:
    """fresh DP-labeled samples per city count, full pipeline on each"""
    reports = {}
    for n in n_values:
        if resolution_warning(n, render):
            logger.warning("%d cities crowd a %dx%d image; results may degrade", n, render.w, render.h)
        samples = generate_samples(n, samples_per_n, seed + n, render, jobs=cfg.jobs)
        reports[n] = run_pipeline_eval(model_or_predictor, samples, cfg)
    return reports


@dataclass(frozen=True)
class SweepRow:
    m: int
    report: MetricsReport
    mean_ms: float
    evaluations: float


def departure_sweep(
    masks: Sequence[np.ndarray],
    instances: Sequence[TspInstance],
    optimal_lengths: Sequence[float],
    m_values: Sequence[int],
    seed: int = 0,
    departure: int = 0,
) -> List[SweepRow]:
    """
    accuracy and decode time as the departure count grows; m = 1 decodes from the
    fixed departure city, larger m from seeded random departures
    """
    rows = []
    for m in m_values:
        cfg = DecodeConfig(m=m, seed=seed, departure=departure if m == 1 else None)
        solutions = []
        start = time.perf_counter()
        evaluations = 0
        for mask, instance, optimal in zip(masks, instances, optimal_lengths):
            solution = post_process(mask, instance, cfg)
            evaluations += solution.density_evaluations
            solutions.append((solution.length, optimal, bool(validate_tour(instance, solution.order))))
        count = max(len(instances), 1)
        elapsed = 1000.0 * (time.perf_counter() - start) / count
        rows.append(SweepRow(m, compute_metrics(solutions, decode_ms=elapsed), elapsed, evaluations / count))
        logger.info("m=%d: e0 %.4f, %.3f ms per decode", m, rows[-1].report.e0, elapsed)
    return rows


##########################################################################################
# BENCHMARK
##########################################################################################
@dataclass(frozen=True)
class BenchConfig:
    n_values: Tuple[int, ...] = tuple(range(4, 13))
    instances_per_n: int = 20
    repeats: int = 20
    warmup: int = 3
    seed: int = 0
    algorithms: Tuple[str, ...] = ALGORITHMS
    ga: GaConfig = GaConfig()
    aco: AcoConfig = AcoConfig()
    decode: DecodeConfig = DecodeConfig()
    render: RenderConfig = RenderConfig()

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"Unknown algorithms {sorted(unknown)}")
        if self.instances_per_n < 1 or self.repeats < 1 or self.warmup < 0:
            raise ConfigError("instances_per_n and repeats must be >= 1, warmup >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_values"], d["algorithms"] = list(self.n_values), list(self.algorithms)
        return d


@dataclass
class BenchRow:
    n: int
    times_ms: Dict[str, Optional[float]] = field(default_factory=dict)
    e0: Dict[str, float] = field(default_factory=dict)
    fcn_ms: Optional[float] = None
    decode_ms: Optional[float] = None
    pipeline_e0: Optional[float] = None
    decode_evaluations: Optional[float] = None
    skipped: List[str] = field(default_factory=list)

    def to_record(self, algorithms=ALGORITHMS) -> dict:
        record = {"n": self.n}
        for algo in algorithms:
            record[f"{algo}_ms"] = self.times_ms.get(algo)
            if algo in HEURISTIC:
                record[f"{algo}_e0"] = self.e0.get(algo)
        record.update(
            fcn_ms=self.fcn_ms,
            decode_ms=self.decode_ms,
            pipeline_e0=self.pipeline_e0,
            decode_evaluations=self.decode_evaluations,
            skipped=";".join(self.skipped),
        )
        return record


def _median_ms(fn, items: Sequence, warmup: int, repeats: int) -> float:
    """warm up, then time repeats calls cycling over items; median in ms"""
    for k in range(warmup):
        fn(items[k % len(items)])
    samples = []
    for k in range(repeats):
        start = time.perf_counter()
        fn(items[k % len(items)])
        samples.append(time.perf_counter() - start)
    return 1000.0 * float(np.median(samples))


def benchmark_solvers(cfg: BenchConfig = BenchConfig(), model_or_predictor=False) -> List[BenchRow]:
    """
    median wall time per solver per n, heuristic e0 against DP optima, and, when a
    model or predictor is given (None means oracle), the image pipeline's timings

    cells beyond a solver's size guard are skipped and listed in the row
    """
    rows = []
    for n in cfg.n_values:
        samples = generate_samples(n, cfg.instances_per_n, cfg.seed + n, cfg.render)
        instances = [s.instance for s in samples]
        row = BenchRow(n)
        for algo in cfg.algorithms:
            if algo in SIZE_LIMITS and n > SIZE_LIMITS[algo]:
                logger.warning("Skipping %s at n=%d (limit %d)", algo, n, SIZE_LIMITS[algo])
                row.times_ms[algo] = None
                row.skipped.append(algo)
                continue
            run = partial(solve, algo=algo, ga=cfg.ga, aco=cfg.aco)
            row.times_ms[algo] = _median_ms(run, instances, cfg.warmup, cfg.repeats)
            if algo in HEURISTIC:
                row.e0[algo] = compute_metrics([(run(x).length, x.length, True) for x in instances]).e0
        if model_or_predictor is not False:
            predictor = as_predictor(model_or_predictor)
            row.fcn_ms = _median_ms(predictor.predict_mask, samples, cfg.warmup, cfg.repeats)
            masks = [predictor.predict_mask(s) for s in samples]
            pairs = list(zip(masks, instances))
            row.decode_ms = _median_ms(lambda p: post_process(p[0], p[1], cfg.decode), pairs, cfg.warmup, cfg.repeats)
            report = run_pipeline_eval(predictor, samples, EvalConfig(decode=cfg.decode))
            row.pipeline_e0 = report.e0
            row.decode_evaluations = decode_timing(masks, instances, [cfg.decode.m or n], cfg.decode.seed)[0].evaluations
        logger.info("n=%d: %s", n, {k: v for k, v in row.times_ms.items()})
        rows.append(row)
    return rows


def monotone_times(rows: Sequence[BenchRow]) -> Dict[str, bool]:
    """per solver, whether its measured time strictly increases with n"""
    out = {}
    algorithms = {a for r in rows for a in r.times_ms}
    for algo in sorted(algorithms):
        times = [r.times_ms[algo] for r in sorted(rows, key=lambda r: r.n) if r.times_ms.get(algo) is not None]
        out[algo] = all(b > a for a, b in zip(times, times[1:]))
    return out


##########################################################################################
# REPORTS
##########################################################################################
def write_csv(records: Sequence[dict], path) -> None:
    """records as CSV; all-missing columns are written as empty float cells"""
    table = pa.Table.from_pylist(list(records))
    for i, f in enumerate(table.schema):
        if pa.types.is_null(f.type):
            table = table.set_column(i, f.name, table.column(i).cast(pa.float64()))
    pa_csv.write_csv(table, str(path))


def write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def report_records(reports: Dict[int, MetricsReport], key: str = "n") -> List[dict]:
    return [{key: k, **r.to_dict()} for k, r in reports.items()]


def sweep_records(rows: Sequence[SweepRow]) -> List[dict]:
    return [{"m": r.m, "mean_ms": r.mean_ms, "evaluations": r.evaluations, **r.report.to_dict()} for r in rows]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_departure_sweep(rows: Sequence[SweepRow], path) -> None:
    """accuracy bars per departure count, decode time on the secondary axis"""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    ms = [r.m for r in rows]
    ax.bar(ms, [r.report.e0 for r in rows], color="tab:blue", alpha=0.7, label="e0")
    ax.set_xlabel("departure cities m")
    ax.set_ylabel("accuracy ratio")
    ax.set_ylim(0, 1)
    twin = ax.twinx()
    twin.plot(ms, [r.mean_ms for r in rows], color="tab:red", marker="o", label="time")
    twin.set_ylabel("time per decode (ms)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_generalization(reports: Dict[int, MetricsReport], path) -> None:
    """e0 bars per city count, R_aver (percent) on the secondary axis"""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    ns = list(reports)
    ax.bar(ns, [reports[n].e0 for n in ns], color="tab:blue", alpha=0.7)
    ax.set_xlabel("number of cities")
    ax.set_ylabel("accuracy ratio (e0)")
    ax.set_ylim(0, 1)
    twin = ax.twinx()
    twin.plot(ns, [100.0 * reports[n].r_aver for n in ns], color="tab:red", marker="o")
    twin.set_ylabel("R_aver (%)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
