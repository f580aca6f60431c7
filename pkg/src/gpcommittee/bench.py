"""End-to-end experiment harness: train once, aggregate per method, score, time.

One repetition builds a dataset and partition from the repetition seed,
trains the committee once (training is shared by every aggregation method),
then times each method's prediction separately and scores SMSE/MSLL.
Results are written as CSV (one row per method and repetition), JSON (full
records plus config echo) and the partition documents.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregate
from .aggregate import AggregationMethod, PriorVariance
from .data import (Dataset, TOY_NOISE_VAR, TOY_TRAIN_RANGE, denormalize_inputs,
                   denormalize_predictions, load_csv, toy_generate)
from .ensemble import ExpertEnsemble, experts_predict, prepare_grbcm, train
from .errors import GPCommitteeError
from .kernel import Hyperparams
from .metrics import msll as msll_metric
from .metrics import smse as smse_metric
from .optimize import OptimizerConfig
from .partition import (Partition, PartitionKind, disjoint_partition,
                        grbcm_partition, random_partition)

SCHEMA_VERSION = 1
METHOD_CHOICES = ("poe", "gpoe", "bcm", "rbcm", "npae", "grbcm")
PARTITION_CHOICES = ("random", "disjoint", "grbcm")

_CSV_COLUMNS = ("method", "repetition", "seed", "smse", "msll",
                "train_time_seconds", "predict_time_seconds",
                "degeneracy_count", "beta_mean", "beta_min", "beta_max", "error")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    dataset: str = "toy"                  # "toy" or "csv"
    n: int = 1000                         # toy training size
    n_test: int | None = None             # toy test size (default max(200, n // 10))
    csv_path: str | None = None
    target_column: int | str = -1
    test_fraction: float | None = 0.2
    split_files: tuple[str, str] | None = None
    partition_kind: str = "disjoint"
    M: int | None = None
    m0: int | None = None
    methods: tuple[str, ...] = ("poe", "gpoe", "bcm", "rbcm", "grbcm")
    gpoe_mode: str = "uniform"
    max_evals: int = 500
    grad_tolerance: float = 1e-6
    opt_method: str = "cg"
    seed: int = 0
    repetitions: int = 1
    rebalance: bool = True
    workers: int = 1
    normalized_metrics: bool = False
    out_dir: str | None = None

    def validate(self) -> None:
        if self.dataset not in ("toy", "csv"):
            raise ValueError(f"dataset must be 'toy' or 'csv', got {self.dataset!r}")
        if self.dataset == "csv" and not self.csv_path:
            raise ValueError("csv dataset requires csv_path")
        if (self.M is None) == (self.m0 is None):
            raise ValueError("give exactly one of M (experts) or m0 (subset size)")
        if self.partition_kind not in PARTITION_CHOICES:
            raise ValueError(f"partition_kind must be one of {PARTITION_CHOICES}")
        unknown = [m for m in self.methods if m not in METHOD_CHOICES]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHOD_CHOICES}")
        if self.gpoe_mode not in ("uniform", "entropy"):
            raise ValueError("gpoe_mode must be 'uniform' or 'entropy'")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """Scores and timings for one (method, repetition) cell."""

    method: str
    repetition: int
    seed: int
    smse: float
    msll: float
    train_time_seconds: float
    predict_time_seconds: float
    degeneracy_count: int
    beta_mean: float | None = None
    beta_min: float | None = None
    beta_max: float | None = None
    error: str | None = None


@dataclass
class RepArtifacts:
    """Raw per-repetition material kept for sweep-level diagnostics."""

    repetition: int
    seed: int
    hp_vector: np.ndarray
    y_mean: float
    y_std: float
    y_test: np.ndarray
    interior_mask: np.ndarray
    f_test: np.ndarray | None
    predictions: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    partitions: list[Partition]
    artifacts: list[RepArtifacts] | None = None


def _build_dataset(config: ExperimentConfig, rep_seed: int) -> Dataset:
    if config.dataset == "toy":
        n_test = config.n_test if config.n_test else max(200, config.n // 10)
        return toy_generate(config.n, n_test, rep_seed)
    return load_csv(config.csv_path, config.target_column,
                    test_fraction=config.test_fraction,
                    split_files=config.split_files, seed=rep_seed)


def _resolve_M(config: ExperimentConfig, n: int) -> int:
    M = config.M if config.M is not None else max(1, round(n / config.m0))
    if M > n:
        raise ValueError(f"M={M} exceeds n={n}")
    return M


def _build_partition(config: ExperimentConfig, dataset: Dataset, M: int,
                     rep_seed: int) -> Partition:
    kind = config.partition_kind
    wants_grbcm = "grbcm" in config.methods and M >= 2
    if kind == "grbcm" or (kind == "disjoint" and wants_grbcm):
        # the hybrid scheme: every method shares the partition, whose first
        # subset is the random communication subset
        return grbcm_partition(dataset.X_train, M, rep_seed, rebalance=config.rebalance)
    if kind == "disjoint":
        return disjoint_partition(dataset.X_train, M, rep_seed, rebalance=config.rebalance)
    part = random_partition(dataset.n_train, M, rep_seed)
    if wants_grbcm:
        # any block of a random partition is itself a uniform random subset
        part = part.with_communication(0)
    return part


def _predict_method(method: str, ensemble: ExpertEnsemble, Xstar: np.ndarray,
                    config: ExperimentConfig) -> aggregate.AggregatedPrediction:
    if method in ("poe", "gpoe", "bcm", "rbcm"):
        means, variances = experts_predict(ensemble, Xstar, workers=config.workers)
        prior = PriorVariance.from_hyperparams(ensemble.hp)
        if method == "poe":
            return aggregate.poe(means, variances)
        if method == "gpoe":
            return aggregate.gpoe(means, variances, prior, mode=config.gpoe_mode)
        if method == "bcm":
            return aggregate.bcm(means, variances, prior)
        return aggregate.rbcm(means, variances, prior)
    if method == "npae":
        return aggregate.npae(ensemble, Xstar, workers=config.workers)
    # augmented experts are part of the prediction phase by the committee's
    # complexity accounting, so they are fitted inside the timed region
    prepared = prepare_grbcm(ensemble, workers=config.workers)
    return aggregate.grbcm(prepared, Xstar, workers=config.workers)


def _interior_mask(config: ExperimentConfig, dataset: Dataset) -> np.ndarray:
    if config.dataset != "toy":
        return np.ones(dataset.n_test, dtype=bool)
    x = denormalize_inputs(dataset.X_test, dataset.norm_stats)[:, 0]
    lo, hi = TOY_TRAIN_RANGE
    return (x >= lo) & (x <= hi)


def run_experiment(config: ExperimentConfig,
                   collect_predictions: bool = False) -> ExperimentResult:
    """Run all repetitions of one experiment; optionally keep raw predictions.

    Numerical failures of individual methods are recorded on their RunRecord
    (NaN scores plus the error message); remaining methods still run.
    """
    config.validate()
    records: list[RunRecord] = []
    partitions: list[Partition] = []
    artifacts: list[RepArtifacts] = []
    for rep in range(config.repetitions):
        rep_seed = config.seed + rep
        dataset = _build_dataset(config, rep_seed)
        M = _resolve_M(config, dataset.n_train)
        part = _build_partition(config, dataset, M, rep_seed)
        partitions.append(part)
        opt = OptimizerConfig(max_evals=config.max_evals,
                              grad_tolerance=config.grad_tolerance,
                              initial_hp=Hyperparams.default(dataset.input_dim),
                              seed=rep_seed, method=config.opt_method)
        committee = train(dataset.X_train, dataset.y_train, part, opt,
                          workers=config.workers)
        art = RepArtifacts(repetition=rep, seed=rep_seed,
                           hp_vector=committee.hp.to_vector(),
                           y_mean=dataset.norm_stats.y_mean,
                           y_std=dataset.norm_stats.y_std,
                           y_test=dataset.y_test,
                           interior_mask=_interior_mask(config, dataset),
                           f_test=dataset.f_test)
        for method in config.methods:
            records.append(_score_method(method, committee, dataset, config, rep,
                                         rep_seed, art if collect_predictions else None))
        if collect_predictions:
            artifacts.append(art)
    result = ExperimentResult(config=config, records=records, partitions=partitions,
                              artifacts=artifacts if collect_predictions else None)
    if config.out_dir:
        write_outputs(result, config.out_dir)
    return result


def _score_method(method, committee, dataset, config, rep, rep_seed, art):
    label = f"gpoe_{config.gpoe_mode}" if method == "gpoe" else method
    try:
        t0 = time.perf_counter()
        agg = _predict_method(method, committee, dataset.X_test, config)
        predict_time = time.perf_counter() - t0
    except GPCommitteeError as exc:
        return RunRecord(method=label, repetition=rep, seed=rep_seed,
                         smse=math.nan, msll=math.nan,
                         train_time_seconds=committee.train_time_seconds,
                         predict_time_seconds=math.nan, degeneracy_count=0,
                         error=f"{type(exc).__name__}: {exc}")
    if art is not None:
        art.predictions[label] = (agg.means, agg.variances)
    stats = dataset.norm_stats
    if config.normalized_metrics:
        means_eval, vars_eval, y_eval = agg.means, agg.variances, dataset.y_test
        train_mean, train_var = 0.0, 1.0
    else:
        means_eval, vars_eval = denormalize_predictions(agg.means, agg.variances, stats)
        y_eval = dataset.y_test * stats.y_std + stats.y_mean
        train_mean, train_var = stats.y_mean, stats.y_std ** 2
    betas = agg.betas
    return RunRecord(
        method=label,
        repetition=rep, seed=rep_seed,
        smse=smse_metric(means_eval, y_eval),
        msll=msll_metric(means_eval, vars_eval, y_eval, train_mean, train_var),
        train_time_seconds=committee.train_time_seconds,
        predict_time_seconds=predict_time,
        degeneracy_count=agg.degeneracy_count,
        beta_mean=None if betas is None else float(np.mean(betas)),
        beta_min=None if betas is None else float(np.min(betas)),
        beta_max=None if betas is None else float(np.max(betas)),
    )


# ---------------------------------------------------------------------------
# serialization

def _record_to_row(rec: RunRecord) -> list[str]:
    row = []
    for col in _CSV_COLUMNS:
        val = getattr(rec, col)
        if val is None:
            row.append("")
        elif isinstance(val, float):
            row.append(repr(val))
        else:
            row.append(str(val))
    return row


def write_results_csv(records: list[RunRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for rec in records:
            writer.writerow(_record_to_row(rec))


def read_results_csv(path: str) -> list[RunRecord]:
    """Parse a results CSV back into RunRecords (exact float round trip)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _CSV_COLUMNS:
            raise ValueError(f"unexpected results header {header}")
        for row in reader:
            kv = dict(zip(_CSV_COLUMNS, row))
            records.append(RunRecord(
                method=kv["method"],
                repetition=int(kv["repetition"]),
                seed=int(kv["seed"]),
                smse=float(kv["smse"]),
                msll=float(kv["msll"]),
                train_time_seconds=float(kv["train_time_seconds"]),
                predict_time_seconds=float(kv["predict_time_seconds"]),
                degeneracy_count=int(kv["degeneracy_count"]),
                beta_mean=float(kv["beta_mean"]) if kv["beta_mean"] else None,
                beta_min=float(kv["beta_min"]) if kv["beta_min"] else None,
                beta_max=float(kv["beta_max"]) if kv["beta_max"] else None,
                error=kv["error"] or None,
            ))
    return records


def write_outputs(result: ExperimentResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_results_csv(result.records, os.path.join(out_dir, "results.csv"))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": dataclasses.asdict(result.config),
        "records": [dataclasses.asdict(r) for r in result.records],
    }
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
    partition_doc = {
        "schema_version": SCHEMA_VERSION,
        "repetitions": [p.to_json_dict() for p in result.partitions],
    }
    with open(os.path.join(out_dir, "partition.json"), "w") as fh:
        json.dump(partition_doc, fh)


# ---------------------------------------------------------------------------
# consistency sweep

def _strictly_decreasing(series: list[float]) -> bool:
    return all(b < a for a, b in zip(series, series[1:]))


def _per_rep_series(per_n: dict, method: str, key: str, rep: int) -> list[float]:
    return [per_n[n][method][key][rep] for n in sorted(per_n)]


def consistency_sweep(base_config: ExperimentConfig, n_list: list[int],
                      out_dir: str | None = None) -> dict:
    """Run the experiment at each n with m0 held fixed and report trends.

    The report carries per-method SMSE/MSLL and median interior predictive
    variance (original units) for every repetition and n, plus pass/fail
    flags for the monotone consistency trends.
    """
    if list(n_list) != sorted(n_list) or len(n_list) < 2:
        raise ValueError("n_list must be increasing with at least two sizes")
    if base_config.m0 is None:
        raise ValueError("sweep requires m0 (fixed subset size)")
    base_config.validate()
    reps = base_config.repetitions
    noise_var = TOY_NOISE_VAR if base_config.dataset == "toy" else None

    per_n: dict[int, dict] = {}
    inflation: dict[int, dict] = {}
    for n in n_list:
        cfg = replace(base_config, n=n, out_dir=None)
        res = run_experiment(cfg, collect_predictions=True)
        summary: dict[str, dict] = {}
        for method in {r.method for r in res.records}:
            recs = sorted((r for r in res.records if r.method == method),
                          key=lambda r: r.repetition)
            med_vars = []
            for art, rec in zip(res.artifacts, recs):
                if rec.error or method not in art.predictions:
                    med_vars.append(math.nan)
                    continue
                _, variances = art.predictions[method]
                denorm = variances * art.y_std ** 2
                med_vars.append(float(np.median(denorm[art.interior_mask])))
            summary[method] = {
                "smse": [r.smse for r in recs],
                "msll": [r.msll for r in recs],
                "median_interior_variance": med_vars,
                "degeneracy_count": [r.degeneracy_count for r in recs],
            }
        per_n[n] = summary
        if "bcm" in summary and base_config.dataset == "toy":
            inflation[n] = _bcm_inflation(res)

    methods = set()
    for summary in per_n.values():
        methods.update(summary.keys())
    flags: dict[str, bool] = {}
    for method in sorted(methods):
        if any(method not in per_n[n] for n in n_list):
            continue
        smse_ok, msll_ok, var_ok = [], [], []
        for rep in range(reps):
            smse_ok.append(_strictly_decreasing(_per_rep_series(per_n, method, "smse", rep)))
            msll_ok.append(_strictly_decreasing(_per_rep_series(per_n, method, "msll", rep)))
            var_ok.append(_strictly_decreasing(
                _per_rep_series(per_n, method, "median_interior_variance", rep)))
        flags[f"{method}_smse_strictly_decreasing"] = all(smse_ok)
        flags[f"{method}_msll_strictly_decreasing"] = all(msll_ok)
        flags[f"{method}_variance_strictly_decreasing"] = all(var_ok)
        if noise_var is not None:
            final = per_n[n_list[-1]][method]["median_interior_variance"]
            flags[f"{method}_overconfident_at_max_n"] = all(
                v < 0.8 * noise_var for v in final)
            conservative = all(
                v >= noise_var
                for n in n_list for v in per_n[n][method]["median_interior_variance"])
            flags[f"{method}_conservative_all_n"] = conservative
    if "poe" in methods:
        flags["poe_msll_nondecreasing"] = all(
            all(b >= a for a, b in zip(s, s[1:]))
            for s in (_per_rep_series(per_n, "poe", "msll", rep) for rep in range(reps))
        )

    report = {
        "schema_version": SCHEMA_VERSION,
        "m0": base_config.m0,
        "n_list": list(n_list),
        "repetitions": reps,
        "true_noise_variance": noise_var,
        "partition_kind": base_config.partition_kind,
        "methods": {str(n): per_n[n] for n in n_list},
        "bcm_inflation": {str(n): inflation[n] for n in inflation},
        "flags": flags,
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
            json.dump(report, fh, indent=2)
    return report


def _bcm_inflation(res: ExperimentResult) -> dict:
    """Least-squares slope of BCM means against the noiseless target, and the
    asymptotic inflation factor implied by the trained hyperparameters."""
    slopes, factors = [], []
    for art in res.artifacts:
        if "bcm" not in art.predictions or art.f_test is None:
            continue
        means, _ = art.predictions["bcm"]
        f = art.f_test[art.interior_mask]
        m = means[art.interior_mask]
        slopes.append(float(np.dot(m, f) / np.dot(f, f)))
        hp = Hyperparams.from_vector(art.hp_vector)
        noise_prec = 1.0 / hp.noise_variance
        prior_prec = 1.0 / (hp.output_variance + hp.noise_variance)
        factors.append(float(noise_prec / (noise_prec - prior_prec)))
    return {"slope": slopes, "a_factor": factors}
