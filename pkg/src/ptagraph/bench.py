"""Multi-seed experiment harness: runs, aggregates, statistics, serialization."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .equivalence import CHECKS, VerificationReport
from .graph_core import Dataset, labelset_from_split, make_split, normalize_adjacency
from .noise import NoiseSpec, SbmSpec, generate_sbm, inject_label_noise, inject_structure_noise
from .predictor import MLPConfig
from .propagation import PropagationConfig
from .training import Mode, TrainConfig, TrainingDiverged, predict, train

log = logging.getLogger(__name__)

__all__ = [
    "RunResult",
    "AggregateResult",
    "BenchmarkResult",
    "TTestResult",
    "TIMING_FIELDS",
    "bootstrap_ci",
    "paired_t_test",
    "aggregate",
    "run_benchmark",
    "run_noise_sweep",
    "run_verifications",
    "write_results",
]

TIMING_FIELDS = ("per_epoch_ms", "total_s", "preprocess_s", "mean_per_epoch_ms", "mean_total_s")
APPNP_FAMILY = (Mode.DGCN, Mode.DGCN_NOE, Mode.DGCN_UNIFORM)


@dataclass
class RunResult:
    mode: str
    dataset: str
    seed: int
    split_seed: int
    test_accuracy: float
    early_stop_accuracy: float
    epochs: int
    best_epoch: int
    per_epoch_ms: float
    total_s: float
    preprocess_s: float
    structure_noise: float | None = None
    label_noise: float | None = None


@dataclass
class AggregateResult:
    mode: str
    mean_accuracy: float
    ci95_low: float
    ci95_high: float
    n_runs: int
    bootstrap_resamples: int
    n_failed: int = 0
    std_accuracy: float = 0.0
    mean_per_epoch_ms: float = 0.0
    mean_total_s: float = 0.0


class TTestResult(NamedTuple):
    statistic: float
    p_value: float
    degenerate: bool


@dataclass
class BenchmarkResult:
    runs: list
    aggregates: dict
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    t_tests: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "config": self.config,
            "aggregates": {k: asdict(v) for k, v in self.aggregates.items()},
            "failures": self.failures,
            "paired_t_tests": self.t_tests,
        }


def bootstrap_ci(values: Sequence[float], resamples: int = 1000, seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, x.size, size=(resamples, x.size))].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    m = x.mean()
    return float(min(low, m)), float(max(high, m))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test of ``a`` against ``b``.

    When the differences have (numerically) zero spread the t statistic is
    undefined; the result is flagged ``degenerate`` with p = 1 for a zero
    mean difference and p = 0 otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length lists with at least 2 entries")
    d = a - b
    mean = float(d.mean())
    if float(d.std(ddof=1)) <= 1e-12 * max(1.0, abs(mean)):
        if abs(mean) <= 1e-12:
            return TTestResult(0.0, 1.0, True)
        return TTestResult(float(np.copysign(np.inf, mean)), 0.0, True)
    res = stats.ttest_rel(a, b)
    return TTestResult(float(res.statistic), float(res.pvalue), False)


def aggregate(runs: Sequence[RunResult], mode: str, resamples: int = 1000, seed: int = 0, n_failed: int = 0) -> AggregateResult:
    """Aggregate statistics of one mode; a pure function of the run records."""
    accs = [r.test_accuracy for r in runs if r.mode == mode]
    if not accs:
        return AggregateResult(mode, float("nan"), float("nan"), float("nan"), 0, resamples, n_failed)
    low, high = bootstrap_ci(accs, resamples, seed)
    mine = [r for r in runs if r.mode == mode]
    return AggregateResult(
        mode=mode,
        mean_accuracy=float(np.mean(accs)),
        ci95_low=low,
        ci95_high=high,
        n_runs=len(accs),
        bootstrap_resamples=resamples,
        n_failed=n_failed,
        std_accuracy=float(np.std(accs)),
        mean_per_epoch_ms=float(np.mean([r.per_epoch_ms for r in mine])),
        mean_total_s=float(np.mean([r.total_s for r in mine])),
    )


@dataclass(frozen=True)
class _RunPlan:
    source: object  # Dataset or SbmSpec
    modes: tuple
    base_seed: int
    per_class: int
    early_stop_size: int
    train_kwargs: dict
    mlp_kwargs: dict
    structure_rate: float | None = None
    label_rate: float | None = None
    sparse_k: int | None = None


def _dataset_for_run(plan: _RunPlan, seed: int) -> Dataset:
    if isinstance(plan.source, SbmSpec):
        ds = generate_sbm(replace(plan.source, seed=seed))
    else:
        ds = plan.source
    if plan.structure_rate is not None:
        ds = inject_structure_noise(ds, NoiseSpec("structure", plan.structure_rate, seed=seed))
    return ds


def _mode_configs(plan: _RunPlan, mode: Mode, ds: Dataset, seed: int):
    tk = dict(plan.train_kwargs)
    prop = tk.pop("prop", PropagationConfig())
    if plan.sparse_k is not None:
        prop = replace(prop, K=plan.sparse_k)
    cfg = TrainConfig(mode=mode, prop=prop, seed=seed, **tk)
    mk = dict(plan.mlp_kwargs)
    if mk.get("dropout") is None:
        mk["dropout"] = 0.5 if mode in APPNP_FAMILY else 0.0
    return MLPConfig(in_dim=ds.f, out_dim=ds.C, init_seed=seed, **mk), cfg


def _execute_run(plan: _RunPlan, r: int):
    seed = plan.base_seed + r
    ds = _dataset_for_run(plan, seed)
    split = make_split(ds, plan.per_class, plan.early_stop_size, seed=seed)
    labels = labelset_from_split(ds, split)
    if plan.label_rate is not None:
        labels = inject_label_noise(labels, ds, NoiseSpec("label", plan.label_rate, seed=seed))
    norm = plan.train_kwargs.get("normalization", "sym_selfloop")
    a_hat = normalize_adjacency(ds.adjacency, norm)

    results, failures = [], []
    for mode in plan.modes:
        mlp_cfg, cfg = _mode_configs(plan, mode, ds, seed)
        try:
            model = train(ds, split, mlp_cfg, cfg, labels=labels, a_hat=a_hat)
        except TrainingDiverged as exc:
            log.warning("run %d %s diverged: %s", r, mode.value, exc)
            failures.append({"mode": mode.value, "seed": seed, "error": str(exc)})
            continue
        pred = predict(model, ds, a_hat=a_hat)
        results.append(
            RunResult(
                mode=mode.value,
                dataset=ds.name,
                seed=seed,
                split_seed=seed,
                test_accuracy=float(np.mean(pred[split.test] == ds.labels[split.test])),
                early_stop_accuracy=float(model.history[model.best_epoch - 1][1]),
                epochs=model.epochs_run,
                best_epoch=model.best_epoch,
                per_epoch_ms=1e3 * model.wall_time_per_epoch,
                total_s=model.wall_time_total,
                preprocess_s=model.preprocess_time,
                structure_noise=plan.structure_rate,
                label_noise=plan.label_rate,
            )
        )
    return results, failures


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(1)


def _execute_plan(plan: _RunPlan, n_runs: int, workers: int, deterministic: bool):
    if deterministic or workers <= 1:
        limiter = _limit_threads() if deterministic else None
        try:
            outputs = [_execute_run(plan, r) for r in range(n_runs)]
        finally:
            if limiter is not None:
                limiter.unregister()
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_execute_run, [plan] * n_runs, range(n_runs)))
    runs = [res for out in outputs for res in out[0]]
    failures = [fail for out in outputs for fail in out[1]]
    return runs, failures


def _t_tests(runs, modes) -> dict:
    if Mode.PTA not in modes:
        return {}
    by_mode = {m.value: {r.seed: r.test_accuracy for r in runs if r.mode == m.value} for m in modes}
    out = {}
    for other in modes:
        if other is Mode.PTA:
            continue
        seeds = sorted(set(by_mode["pta"]) & set(by_mode[other.value]))
        if len(seeds) < 2:
            continue
        res = paired_t_test([by_mode["pta"][s] for s in seeds], [by_mode[other.value][s] for s in seeds])
        out[f"pta_vs_{other.value}"] = res._asdict() | {"n_pairs": len(seeds)}
    return out


def run_benchmark(
    dataset: Dataset | SbmSpec,
    modes: Sequence[str | Mode] = ("pta",),
    n_runs: int = 20,
    base_seed: int = 0,
    train_overrides: dict | None = None,
    mlp_overrides: dict | None = None,
    per_class: int = 20,
    early_stop_size: int = 500,
    workers: int = 1,
    deterministic: bool = False,
    bootstrap_resamples: int = 1000,
    structure_rate: float | None = None,
    label_rate: float | None = None,
    structure_k: int | None = None,
) -> BenchmarkResult:
    """Train every mode on ``n_runs`` paired (split, initialization) seeds.

    Run ``r`` uses seed ``base_seed + r`` for the split, the initialization,
    the dropout masks and any injected noise; an :class:`SbmSpec` source is
    also resampled with that seed. Diverged runs are excluded from the
    aggregates and listed under ``failures``.

    ``train_overrides`` go to :class:`TrainConfig` (``prop`` included);
    ``mlp_overrides`` to :class:`MLPConfig`. A ``dropout`` of ``None`` means
    0.5 for the APPNP-style modes and 0.0 for the rest.
    """
    modes = tuple(Mode(m) for m in modes)
    plan = _RunPlan(
        source=dataset,
        modes=modes,
        base_seed=base_seed,
        per_class=per_class,
        early_stop_size=early_stop_size,
        train_kwargs=dict(train_overrides or {}),
        mlp_kwargs=dict(mlp_overrides or {}),
        structure_rate=structure_rate,
        label_rate=label_rate,
        sparse_k=structure_k,
    )
    runs, failures = _execute_plan(plan, n_runs, workers, deterministic)
    aggregates = {
        m.value: aggregate(
            runs, m.value, bootstrap_resamples, base_seed, n_failed=sum(f["mode"] == m.value for f in failures)
        )
        for m in modes
    }
    config = {
        "dataset": dataset.name if isinstance(dataset, Dataset) else asdict(dataset),
        "modes": [m.value for m in modes],
        "n_runs": n_runs,
        "base_seed": base_seed,
        "per_class": per_class,
        "early_stop_size": early_stop_size,
        "train_overrides": _jsonable(plan.train_kwargs),
        "mlp_overrides": _jsonable(plan.mlp_kwargs),
        "structure_rate": structure_rate,
        "label_rate": label_rate,
        "structure_k": structure_k,
        "defaults": _jsonable(asdict(TrainConfig())),
    }
    return BenchmarkResult(runs, aggregates, failures, config, _t_tests(runs, modes))


def run_noise_sweep(
    dataset: Dataset | SbmSpec,
    kind: str,
    rates: Sequence[float],
    modes: Sequence[str | Mode] = ("mlp", "pts", "pta", "dgcn"),
    n_runs: int = 10,
    structure_k: int | None = 2,
    **bench_kwargs,
) -> dict[float, BenchmarkResult]:
    """Benchmark every mode at each noise rate.

    Structure sweeps use ``structure_k`` propagation steps (2 by default, to
    match a two-layer GCN); label sweeps keep the configured K.
    """
    if list(rates) != sorted(rates):
        raise ValueError("rates must be sorted ascending")
    if kind not in ("structure", "label"):
        raise ValueError(f"kind must be 'structure' or 'label', got {kind!r}")
    out = {}
    for rate in rates:
        if kind == "structure":
            out[rate] = run_benchmark(dataset, modes, n_runs, structure_rate=rate, structure_k=structure_k, **bench_kwargs)
        else:
            out[rate] = run_benchmark(dataset, modes, n_runs, label_rate=rate, **bench_kwargs)
    return out


def run_verifications(seed: int = 0, trials: int = 50, tol: float | None = None) -> list[VerificationReport]:
    """Run every identity check; ``tol`` overrides all default tolerances."""
    return [fn(trials, seed, default if tol is None else tol) for fn, default in CHECKS.values()]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def strip_timing(record: dict) -> dict:
    """Copy of a result record without wall-clock fields (recursively)."""
    if isinstance(record, dict):
        return {k: strip_timing(v) for k, v in record.items() if k not in TIMING_FIELDS}
    if isinstance(record, list):
        return [strip_timing(v) for v in record]
    return record


def write_results(result: BenchmarkResult, out_dir, csv_export: bool = False, extra: dict | None = None) -> Path:
    """Write ``runs.jsonl`` and ``summary.json`` (and ``runs.csv``) to ``out_dir``."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    with (root / "runs.jsonl").open("w") as fh:
        for run in result.runs:
            fh.write(json.dumps(asdict(run), sort_keys=True) + "\n")
    summary = result.summary() | (extra or {})
    (root / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if csv_export and result.runs:
        with (root / "runs.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(asdict(result.runs[0])))
            writer.writeheader()
            for run in result.runs:
                writer.writerow(asdict(run))
    return root
