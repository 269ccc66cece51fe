"""Benchmark orchestration: manifests, method roster, outer CV, reports.

Runs every (dataset, method) cell of a manifest under an outer k-fold
protocol, persists one canonical JSON file per cell plus an index, and
turns a finished store into the analysis tables (scores, ranks, paired
tests, win-tie-loss, weight allocations, task/size breakdown). An audit
mode re-runs each cell against label-corrupted test folds to demonstrate
the held-out labels never leak into training, and re-asserts that every
soft-learner solve beat its best single specialist on the inner objective.

Wall-clock timings are real and therefore vary between runs; they live in
a ``timings.json`` sidecar so the canonical files (``index.json`` and
``results/*.json``) stay byte-identical for a fixed config and seed, at
any parallelism degree.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    SoftlearnError,
    TaskKind,
    apply_standardizer,
    argmax_rows,
    fit_standardizer,
    make_classification_dataset,
    make_regression_dataset,
)
from .cv import _subset_dataset, make_folds
from .datasets import SyntheticSpec, generate, load_manifest, save_manifest, write_csv
from .ensemble import diversity_report, fit_soft_learner, uncertainty
from .specialists import (
    ExternalPredictions,
    SpecialistConfig,
    default_library,
    derive_seed,
    family_of,
    fit,
    supports_task,
)
from .stats import (
    DegenerateDataError,
    ScoreMatrix,
    accuracy,
    friedman_test,
    nemenyi_cd,
    r_squared,
    rank_methods,
    wilcoxon_signed_rank,
    win_tie_loss,
)

STORE_FORMAT_VERSION = 1
EXTERNAL_SCHEMA_VERSION = 1

SMALL_MAX = 500
MEDIUM_MAX = 5000

SOFT_LEARNING = "soft_learning"
BEST_OF_3 = "best_of_3"


class StoreError(SoftlearnError):
    """Result store misuse: duplicate cells, missing cells, bad layout."""


# ---------------------------------------------------------------------------
# configuration


def _default_baselines(task: TaskKind) -> tuple:
    return tuple(c.variant for c in default_library(task))


@dataclass(frozen=True)
class BenchConfig:
    """Everything a benchmark run depends on, JSON round-trippable.

    ``manifest`` is a path to a manifest JSON, or one of the built-in
    tokens "default" (12 desk-scale datasets) and "full" (28 slots,
    slow). Baseline ids must name registry variants that support their
    task; the best-of-3 member lists must be empty or exactly three ids
    drawn from the matching baseline roster.
    """

    manifest: str = "default"
    library: str = "default"
    classification_baselines: tuple = field(
        default_factory=lambda: _default_baselines(TaskKind.CLASSIFICATION)
    )
    regression_baselines: tuple = field(
        default_factory=lambda: _default_baselines(TaskKind.REGRESSION)
    )
    best_of_3_classification: tuple = ("logistic_c1", "random_forest", "hist_gb")
    best_of_3_regression: tuple = ("ridge", "random_forest", "hist_gb")
    outer_folds: int = 5
    seed: int = 42
    out_dir: str = "bench_out"
    jobs: int = 1

    def __post_init__(self):
        for name in (
            "classification_baselines",
            "regression_baselines",
            "best_of_3_classification",
            "best_of_3_regression",
        ):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.library != "default":
            raise ConfigError(f"unknown library id {self.library!r}")
        if self.outer_folds < 2:
            raise ConfigError("outer_folds must be at least 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")
        for task, ids in (
            (TaskKind.CLASSIFICATION, self.classification_baselines),
            (TaskKind.REGRESSION, self.regression_baselines),
        ):
            for variant in ids:
                if not supports_task(variant, task):
                    raise ConfigError(
                        f"baseline {variant!r} does not exist for {task.value}"
                    )
        for members, pool, label in (
            (self.best_of_3_classification, self.classification_baselines, "classification"),
            (self.best_of_3_regression, self.regression_baselines, "regression"),
        ):
            if len(members) not in (0, 3):
                raise ConfigError(f"best-of-3 for {label} needs exactly 3 members")
            for m in members:
                if m not in pool:
                    raise ConfigError(
                        f"best-of-3 member {m!r} is not in the {label} baselines"
                    )

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "library": self.library,
            "classification_baselines": list(self.classification_baselines),
            "regression_baselines": list(self.regression_baselines),
            "best_of_3_classification": list(self.best_of_3_classification),
            "best_of_3_regression": list(self.best_of_3_regression),
            "outer_folds": self.outer_folds,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "jobs": self.jobs,
        }

    @staticmethod
    def from_dict(record: dict) -> "BenchConfig":
        allowed = set(BenchConfig.__dataclass_fields__)
        unknown = set(record) - allowed
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return BenchConfig(**record)

    def methods_for(self, task: TaskKind) -> list:
        baselines = (
            self.classification_baselines
            if task is TaskKind.CLASSIFICATION
            else self.regression_baselines
        )
        members = (
            self.best_of_3_classification
            if task is TaskKind.CLASSIFICATION
            else self.best_of_3_regression
        )
        out = [SOFT_LEARNING, *baselines]
        if members:
            out.append(BEST_OF_3)
        return out


def load_config(path) -> BenchConfig:
    try:
        record = json.loads(Path(path).read_text("utf8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(record, dict):
        raise ConfigError("config file must hold a JSON object")
    return BenchConfig.from_dict(record)


def resolve_manifest(token: str) -> list:
    """Turn a manifest token or path into the list of dataset specs."""
    if token in ("default", "full"):
        ref = resources.files("softlearn").joinpath("data", f"{token}_manifest.json")
        records = json.loads(ref.read_text("utf8"))
        return [SyntheticSpec.from_dict(r) for r in records]
    return load_manifest(token)


# ---------------------------------------------------------------------------
# run results and the store


@dataclass(frozen=True)
class RunResult:
    """One (dataset, method) cell: per-fold scores plus diagnostics.

    ``detail`` carries the soft-learning extras (per-fold weights, solve
    summaries, diversity, uncertainty split) or the best-of-3 provenance.
    ``wall_clock_seconds`` is measurement, not identity; it is excluded
    from the canonical record.
    """

    dataset: str
    method: str
    task: str
    n_samples: int
    n_features: int
    fold_scores: tuple
    mean: float | None
    std: float | None
    status: str
    error: str | None = None
    detail: dict | None = None
    wall_clock_seconds: float = 0.0

    def __post_init__(self):
        if self.status not in ("ok", "error"):
            raise ConfigError(f"unknown cell status {self.status!r}")
        object.__setattr__(self, "fold_scores", tuple(float(s) for s in self.fold_scores))
        if self.status == "ok":
            if not self.fold_scores:
                raise ConfigError("an ok cell needs fold scores")
            if abs(self.mean - float(np.mean(self.fold_scores))) > 1e-12:
                raise ConfigError("cell mean is not recomputable from its folds")

    def key(self) -> tuple:
        return (self.dataset, self.method)

    def to_record(self) -> dict:
        return _jsonable(
            {
                "schema_version": STORE_FORMAT_VERSION,
                "dataset": self.dataset,
                "method": self.method,
                "task": self.task,
                "n_samples": self.n_samples,
                "n_features": self.n_features,
                "fold_scores": list(self.fold_scores),
                "mean": self.mean,
                "std": self.std,
                "status": self.status,
                "error": self.error,
                "detail": self.detail,
            }
        )

    @staticmethod
    def from_record(record: dict) -> "RunResult":
        if record.get("schema_version") != STORE_FORMAT_VERSION:
            raise StoreError(
                f"unsupported result schema {record.get('schema_version')!r}"
            )
        return RunResult(
            dataset=record["dataset"],
            method=record["method"],
            task=record["task"],
            n_samples=record["n_samples"],
            n_features=record["n_features"],
            fold_scores=tuple(record["fold_scores"]),
            mean=record["mean"],
            std=record["std"],
            status=record["status"],
            error=record.get("error"),
            detail=record.get("detail"),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


class ResultStore:
    """Append-only collection of RunResults keyed by (dataset, method)."""

    def __init__(self, seed, outer_folds, manifest, datasets, tasks,
                 methods_classification, methods_regression):
        self.format_version = STORE_FORMAT_VERSION
        self.seed = int(seed)
        self.outer_folds = int(outer_folds)
        self.manifest = manifest
        self.datasets = list(datasets)
        self.tasks = dict(tasks)
        self.methods_classification = list(methods_classification)
        self.methods_regression = list(methods_regression)
        self._cells = {}

    def add(self, result: RunResult) -> None:
        if result.key() in self._cells:
            raise StoreError(f"duplicate cell {result.key()}")
        if result.status == "ok" and len(result.fold_scores) != self.outer_folds:
            raise StoreError(
                f"cell {result.key()} has {len(result.fold_scores)} fold scores, "
                f"config says {self.outer_folds}"
            )
        self._cells[result.key()] = result

    def get(self, dataset: str, method: str) -> RunResult:
        return self._cells[(dataset, method)]

    def has(self, dataset: str, method: str) -> bool:
        return (dataset, method) in self._cells

    def cells(self) -> list:
        return [self._cells[k] for k in sorted(self._cells)]

    def methods_for(self, dataset: str) -> list:
        task = self.tasks[dataset]
        return (
            self.methods_classification
            if task == TaskKind.CLASSIFICATION.value
            else self.methods_regression
        )

    def display_methods(self) -> list:
        merged = list(self.methods_classification)
        for m in self.methods_regression:
            if m not in merged:
                merged.append(m)
        # best_of_3 reads better as the last column
        if BEST_OF_3 in merged:
            merged.remove(BEST_OF_3)
            merged.append(BEST_OF_3)
        return merged

    def missing(self) -> list:
        gaps = []
        for ds in self.datasets:
            for m in self.methods_for(ds):
                if (ds, m) not in self._cells:
                    gaps.append((ds, m))
        return gaps

    def failed(self) -> list:
        return [r for r in self.cells() if r.status == "error"]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "results").mkdir(parents=True, exist_ok=True)
        cells = []
        timings = {}
        for result in self.cells():
            name = f"{result.dataset}__{result.method}.json"
            (out / "results" / name).write_text(
                _canonical_json(result.to_record()), "utf8"
            )
            cells.append(
                {
                    "dataset": result.dataset,
                    "method": result.method,
                    "file": f"results/{name}",
                    "status": result.status,
                }
            )
            timings[f"{result.dataset}::{result.method}"] = result.wall_clock_seconds
        index = {
            "format_version": self.format_version,
            "seed": self.seed,
            "outer_folds": self.outer_folds,
            "manifest": self.manifest,
            "datasets": self.datasets,
            "tasks": self.tasks,
            "methods_classification": self.methods_classification,
            "methods_regression": self.methods_regression,
            "cells": cells,
        }
        (out / "index.json").write_text(_canonical_json(index), "utf8")
        (out / "timings.json").write_text(_canonical_json(timings), "utf8")

    @classmethod
    def load(cls, out_dir) -> "ResultStore":
        out = Path(out_dir)
        index_path = out / "index.json"
        if not index_path.is_file():
            raise StoreError(f"no result store at {out_dir} (missing index.json)")
        index = json.loads(index_path.read_text("utf8"))
        if index.get("format_version") != STORE_FORMAT_VERSION:
            raise StoreError(f"unsupported store version {index.get('format_version')!r}")
        store = cls(
            index["seed"],
            index["outer_folds"],
            index["manifest"],
            index["datasets"],
            index["tasks"],
            index["methods_classification"],
            index["methods_regression"],
        )
        timings_path = out / "timings.json"
        timings = (
            json.loads(timings_path.read_text("utf8")) if timings_path.is_file() else {}
        )
        for cell in index["cells"]:
            record = json.loads((out / cell["file"]).read_text("utf8"))
            result = RunResult.from_record(record)
            seconds = timings.get(f"{result.dataset}::{result.method}", 0.0)
            store.add(replace(result, wall_clock_seconds=seconds))
        return store


# ---------------------------------------------------------------------------
# cell execution


def _name_key(name: str) -> int:
    # stable across runs and platforms, unlike hash()
    return zlib.crc32(name.encode("utf8"))


def _score(task: TaskKind, predicted, truth) -> float:
    if task is TaskKind.CLASSIFICATION:
        return accuracy(predicted, truth)
    return r_squared(predicted, truth)


def _outer_folds(data: Dataset, config: BenchConfig):
    seed = derive_seed(config.seed, _name_key(data.name), 0xB0)
    return make_folds(data, config.outer_folds, seed)


def _fit_fold_baseline(data, folds, v, variant, config):
    """Standardize on the training partition, fit, predict held-out rows."""
    tr = folds.complement_indices(v)
    te = folds.fold_indices(v)
    scaler = fit_standardizer(data.features[tr])
    xtr = apply_standardizer(scaler, data.features[tr])
    xte = apply_standardizer(scaler, data.features[te])
    seed = derive_seed(config.seed, _name_key(data.name), _name_key(variant), v)
    cfg = SpecialistConfig(family_of(variant), variant, seed=seed)
    model = fit(cfg, _subset_dataset(data, tr, xtr))
    if data.task is TaskKind.CLASSIFICATION:
        return argmax_rows(model.predict_proba(xte)), te
    return model.predict(xte), te


def _fit_fold_soft(data, folds, v, config):
    """Run the full three-phase fit inside one outer training partition."""
    tr = folds.complement_indices(v)
    te = folds.fold_indices(v)
    train = _subset_dataset(data, tr, data.features[tr])
    library = default_library(
        data.task, derive_seed(config.seed, _name_key(data.name), 0x51B)
    )
    master = derive_seed(
        config.seed, _name_key(data.name), _name_key(SOFT_LEARNING), v
    )
    model = fit_soft_learner(library, train, master_seed=master, keep_oof=False)
    return model, model.predict(data.features[te]), te


def _soft_fold_detail(model, data, te, predicted) -> dict:
    xte = data.features[te]
    yte = data.y()[te]
    div = diversity_report(model, xte, yte)
    v_vals = uncertainty(model, xte)
    entry = {
        "weights": list(model.weights.alpha),
        "solve": {
            "objective": model.solve_report.objective,
            "iterations": model.solve_report.iterations,
            "converged": model.solve_report.converged,
            "rank_deficient": model.solve_report.rank_deficient,
            "vertex_objectives": list(model.solve_report.vertex_objectives),
            "per_init_objectives": list(model.solve_report.per_init_objectives),
            "per_init_solutions": [list(s) for s in model.solve_report.per_init_solutions],
        },
        "diversity": {
            "mean_individual_error": div.mean_individual_error,
            "ambiguity": div.ambiguity,
            "ensemble_error": div.ensemble_error,
            "mean_disagreement": (
                None
                if div.disagreement is None
                else float(
                    div.disagreement[np.triu_indices_from(div.disagreement, k=1)].mean()
                )
            ),
        },
    }
    unc = {"overall_mean": float(v_vals.mean()), "correct_mean": None, "incorrect_mean": None}
    if data.task is TaskKind.CLASSIFICATION:
        correct = predicted == yte
        if correct.any():
            unc["correct_mean"] = float(v_vals[correct].mean())
        if (~correct).any():
            unc["incorrect_mean"] = float(v_vals[~correct].mean())
    entry["uncertainty"] = unc
    return entry


def run_cell(data: Dataset, method: str, config: BenchConfig) -> RunResult:
    """Evaluate one (dataset, method) cell; failures become error cells."""
    started = time.perf_counter()
    base = dict(
        dataset=data.name,
        method=method,
        task=data.task.value,
        n_samples=data.n_samples,
        n_features=data.n_features,
    )
    try:
        folds = _outer_folds(data, config)
        scores = []
        detail = None
        if method == SOFT_LEARNING:
            fold_entries = []
            variants = None
            for v in range(folds.V):
                model, predicted, te = _fit_fold_soft(data, folds, v, config)
                scores.append(_score(data.task, predicted, data.y()[te]))
                entry = _soft_fold_detail(model, data, te, predicted)
                entry["fold"] = v
                fold_entries.append(entry)
                variants = model.variants()
            weights = np.array([e["weights"] for e in fold_entries])
            detail = {
                "variants": variants,
                "folds": fold_entries,
                "mean_weights": list(weights.mean(axis=0)),
            }
        else:
            for v in range(folds.V):
                predicted, te = _fit_fold_baseline(data, folds, v, method, config)
                scores.append(_score(data.task, predicted, data.y()[te]))
        return RunResult(
            **base,
            fold_scores=tuple(scores),
            mean=float(np.mean(scores)),
            std=float(np.std(scores)),
            status="ok",
            detail=detail,
            wall_clock_seconds=time.perf_counter() - started,
        )
    except Exception as exc:
        return RunResult(
            **base,
            fold_scores=(),
            mean=None,
            std=None,
            status="error",
            error=f"{type(exc).__name__}: {exc}",
            wall_clock_seconds=time.perf_counter() - started,
        )


def _cell_worker(payload: tuple) -> RunResult:
    spec_record, method, config = payload
    data = generate(SyntheticSpec.from_dict(spec_record))
    return run_cell(data, method, config)


def _compose_best_of_3(config, store, spec, data_task) -> RunResult:
    members = (
        config.best_of_3_classification
        if data_task is TaskKind.CLASSIFICATION
        else config.best_of_3_regression
    )
    candidates = [
        store.get(spec.name, m)
        for m in members
        if store.has(spec.name, m) and store.get(spec.name, m).status == "ok"
    ]
    # every dataset has a soft_learning cell; reuse its shape metadata
    anchor = store.get(spec.name, SOFT_LEARNING)
    base = dict(dataset=spec.name, method=BEST_OF_3, task=data_task.value,
                n_samples=anchor.n_samples, n_features=anchor.n_features)
    if not candidates:
        return RunResult(
            **base, fold_scores=(), mean=None, std=None, status="error",
            error="no best-of-3 member finished",
        )
    winner = max(candidates, key=lambda r: r.mean)
    detail = {
        "members": list(members),
        "member_means": {r.method: r.mean for r in candidates},
        "winner": winner.method,
    }
    return RunResult(
        **base,
        fold_scores=winner.fold_scores,
        mean=winner.mean,
        std=winner.std,
        status="ok",
        detail=detail,
    )


def run_benchmark(config: BenchConfig) -> ResultStore:
    """Execute every cell of the configured benchmark.

    Deterministic for a fixed (config, seed) at any ``jobs`` degree: each
    cell derives all of its randomness from the master seed and the
    dataset/method names, and cells never share state. Per-cell failures
    are recorded in the store instead of aborting the run.
    """
    specs = resolve_manifest(config.manifest)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("manifest has duplicate dataset names")
    store = ResultStore(
        seed=config.seed,
        outer_folds=config.outer_folds,
        manifest=config.manifest,
        datasets=names,
        tasks={s.name: s.task.value for s in specs},
        methods_classification=config.methods_for(TaskKind.CLASSIFICATION),
        methods_regression=config.methods_for(TaskKind.REGRESSION),
    )
    jobs = []
    for spec in specs:
        for method in store.methods_for(spec.name):
            if method != BEST_OF_3:
                jobs.append((spec.to_dict(), method, config))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for result in pool.map(_cell_worker, jobs):
                store.add(result)
    else:
        for payload in jobs:
            store.add(_cell_worker(payload))

    for spec in specs:
        if BEST_OF_3 in store.methods_for(spec.name):
            store.add(_compose_best_of_3(config, store, spec, spec.task))
    return store


# ---------------------------------------------------------------------------
# audit mode


@dataclass(frozen=True)
class AuditReport:
    """Outcome of the leakage and vertex-dominance audits."""

    cells_checked: int
    leakage_failures: tuple
    dominance_failures: tuple

    @property
    def passed(self) -> bool:
        return not self.leakage_failures and not self.dominance_failures


def _corrupt_fold(data: Dataset, te, seed: int) -> Dataset:
    """Shuffle the held-out labels in place; training rows stay untouched."""
    y = data.y().copy()
    rng = np.random.default_rng(seed)
    y[te] = y[te][rng.permutation(te.size)]
    if data.task is TaskKind.CLASSIFICATION:
        return make_classification_dataset(
            data.features, y, n_classes=data.n_classes, name=data.name
        )
    return make_regression_dataset(data.features, y, name=data.name)


def _audit_cell(data: Dataset, method: str, config: BenchConfig) -> tuple:
    """Return (leakage failures, dominance failures) for one cell."""
    leakage = []
    dominance = []
    folds = _outer_folds(data, config)
    for v in range(folds.V):
        te = folds.fold_indices(v)
        corrupted = _corrupt_fold(
            data, te, derive_seed(config.seed, _name_key(data.name), 0xC0AB, v)
        )
        if method == SOFT_LEARNING:
            clean_model, clean_pred, _ = _fit_fold_soft(data, folds, v, config)
            corr_model, corr_pred, _ = _fit_fold_soft(corrupted, folds, v, config)
            same = np.array_equal(clean_pred, corr_pred) and np.array_equal(
                clean_model.weights.alpha, corr_model.weights.alpha
            )
            report = clean_model.solve_report
            if report.objective > min(report.vertex_objectives):
                gap = report.objective - min(report.vertex_objectives)
                dominance.append((data.name, v, gap))
        else:
            clean_pred, _ = _fit_fold_baseline(data, folds, v, method, config)
            corr_pred, _ = _fit_fold_baseline(corrupted, folds, v, method, config)
            same = np.array_equal(clean_pred, corr_pred)
        if not same:
            leakage.append((data.name, method, v))
    return leakage, dominance


def _audit_worker(payload: tuple) -> tuple:
    spec_record, method, config = payload
    data = generate(SyntheticSpec.from_dict(spec_record))
    return _audit_cell(data, method, config)


def audit(config: BenchConfig) -> AuditReport:
    """Leakage and empirical-oracle audits over the whole manifest.

    Leakage: for every trainable cell and fold, refitting after shuffling
    the held-out labels must reproduce the predictions (and the ensemble
    weights) bit for bit, because training never reads them. Dominance:
    every soft-learner solve must hold its inner objective at or below
    the best single specialist's, exactly.
    """
    specs = resolve_manifest(config.manifest)
    jobs = []
    for spec in specs:
        for method in config.methods_for(spec.task):
            if method != BEST_OF_3:
                jobs.append((spec.to_dict(), method, config))
    leakage = []
    dominance = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_audit_worker, jobs))
    else:
        outcomes = [_audit_worker(p) for p in jobs]
    for leak, dom in outcomes:
        leakage.extend(leak)
        dominance.extend(dom)
    return AuditReport(len(jobs), tuple(leakage), tuple(dominance))


# ---------------------------------------------------------------------------
# reports


def _write_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf8") as handle:
        csv.writer(handle, lineterminator="\n").writerows(rows)


def _common_ok_methods(store: ResultStore) -> list:
    out = []
    for m in store.display_methods():
        usable = True
        for ds in store.datasets:
            if m not in store.methods_for(ds):
                usable = False
                break
            if store.get(ds, m).status != "ok":
                usable = False
                break
        if usable:
            out.append(m)
    return out


def _bucket(n: int) -> str:
    if n < SMALL_MAX:
        return "small"
    if n <= MEDIUM_MAX:
        return "medium"
    return "large"


def emit_report(store: ResultStore, out_dir) -> list:
    """Write the analysis CSVs; returns the paths written.

    Comparison tables (ranks, paired tests, win-tie-loss) cover the
    methods that finished on every dataset; task-specific baselines
    appear in the score matrix and the breakdown only. A store whose
    roster has gaps raises StoreError naming the missing cells.
    """
    missing = store.missing()
    if missing:
        raise StoreError(
            "store is missing cells: "
            + ", ".join(f"{d}/{m}" for d, m in missing[:20])
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    methods = store.display_methods()
    datasets = store.datasets

    def cell_mean(ds, m):
        if m not in store.methods_for(ds):
            return ""
        r = store.get(ds, m)
        return r.mean if r.status == "ok" else ""

    rows = [["dataset", "task", "n_samples", *methods]]
    for ds in datasets:
        first = store.get(ds, store.methods_for(ds)[0])
        rows.append(
            [ds, first.task, first.n_samples, *[cell_mean(ds, m) for m in methods]]
        )
    path = out / "score_matrix.csv"
    _write_csv(path, rows)
    written.append(path)

    common = _common_ok_methods(store)
    if len(common) >= 2 and len(datasets) >= 2:
        matrix = np.array(
            [[store.get(ds, m).mean for ds in datasets] for m in common]
        )
        scores = ScoreMatrix(matrix, tuple(common), tuple(datasets))
        table = rank_methods(scores)

        rows = [["method", *datasets, "mean_rank"]]
        for i, m in enumerate(common):
            rows.append([m, *table.ranks[i].tolist(), float(table.mean_ranks[i])])
        if len(common) >= 3:
            fr = friedman_test(table)
            rows.append(["friedman_chi2", fr.statistic])
            rows.append(["friedman_dof", fr.dof])
            rows.append(["friedman_p_value", fr.p_value])
            for alpha in (0.05, 0.10):
                rows.append(
                    [f"nemenyi_cd_alpha_{alpha}", nemenyi_cd(len(common), len(datasets), alpha)]
                )
        path = out / "ranks.csv"
        _write_csv(path, rows)
        written.append(path)

        rows = [["method_a", "method_b", "n_effective", "w_statistic",
                 "p_two_sided", "p_greater"]]
        for i, a in enumerate(common):
            for j in range(i + 1, len(common)):
                b = common[j]
                sa = scores.scores[i]
                sb = scores.scores[j]
                try:
                    two = wilcoxon_signed_rank(sa, sb, "two-sided")
                    one = wilcoxon_signed_rank(sa, sb, "greater")
                    rows.append([a, b, two.n_effective, two.W, two.p_value, one.p_value])
                except DegenerateDataError:
                    rows.append([a, b, 0, "", "", ""])
        path = out / "wilcoxon.csv"
        _write_csv(path, rows)
        written.append(path)

        rows = [["method", *common]]
        for i, a in enumerate(common):
            line = [a]
            for j, b in enumerate(common):
                if i == j:
                    line.append("0-0-0")
                else:
                    w, t, l = win_tie_loss(scores.scores[i], scores.scores[j])
                    line.append(f"{w}-{t}-{l}")
            rows.append(line)
        path = out / "win_tie_loss.csv"
        _write_csv(path, rows)
        written.append(path)

    sl_datasets = [
        ds
        for ds in datasets
        if SOFT_LEARNING in store.methods_for(ds)
        and store.get(ds, SOFT_LEARNING).status == "ok"
    ]
    if sl_datasets:
        families = []
        per_ds = {}
        for ds in sl_datasets:
            detail = store.get(ds, SOFT_LEARNING).detail
            sums = {}
            for variant, w in zip(detail["variants"], detail["mean_weights"]):
                fam = family_of(variant)
                sums[fam] = sums.get(fam, 0.0) + w
                if fam not in families:
                    families.append(fam)
            per_ds[ds] = sums
        rows = [["dataset", *families]]
        for ds in sl_datasets:
            rows.append([ds, *[per_ds[ds].get(f, "") for f in families]])
        path = out / "weights_by_family.csv"
        _write_csv(path, rows)
        written.append(path)

    groups = []
    for task in (TaskKind.CLASSIFICATION.value, TaskKind.REGRESSION.value):
        members = [ds for ds in datasets if store.tasks[ds] == task]
        if members:
            groups.append((f"task:{task}", members))
    for bucket in ("small", "medium", "large"):
        members = [
            ds
            for ds in datasets
            if _bucket(store.get(ds, store.methods_for(ds)[0]).n_samples) == bucket
        ]
        if members:
            groups.append((f"size:{bucket}", members))
    rows = [["group", "datasets", *methods]]
    for label, members in groups:
        line = [label, len(members)]
        for m in methods:
            vals = [
                store.get(ds, m).mean
                for ds in members
                if m in store.methods_for(ds) and store.get(ds, m).status == "ok"
            ]
            line.append(float(np.mean(vals)) if vals else "")
        rows.append(line)
    path = out / "breakdown.csv"
    _write_csv(path, rows)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# external prediction files


def save_external_predictions(
    pred: ExternalPredictions, dataset: str, folds_of_rows: dict, path
) -> None:
    """Persist an external specialist's predictions for later splicing.

    ``folds_of_rows`` maps fold index -> row indices whose oof entries
    were produced while that fold was held out; together the folds must
    cover every dataset row exactly once.
    """
    oof = np.asarray(pred.oof, dtype=np.float64)
    if oof.ndim == 1:
        oof = oof[:, None]
    seen = np.zeros(oof.shape[0], dtype=int)
    fold_blocks = []
    for v in sorted(folds_of_rows):
        idx = np.asarray(folds_of_rows[v], dtype=int)
        seen[idx] += 1
        block = {"fold": int(v), "oof_indices": idx.tolist(), "oof": oof[idx].tolist()}
        if pred.test_by_fold and v in pred.test_by_fold:
            block["test"] = np.asarray(pred.test_by_fold[v]).tolist()
        fold_blocks.append(block)
    if not np.all(seen == 1):
        raise ConfigError("fold row indices must cover each dataset row exactly once")
    record = {
        "schema_version": EXTERNAL_SCHEMA_VERSION,
        "dataset": dataset,
        "variant": pred.variant,
        "task": pred.task.value,
        "n_samples": int(oof.shape[0]),
        "n_columns": int(oof.shape[1]),
        "folds": fold_blocks,
    }
    Path(path).write_text(_canonical_json(record), "utf8")


def load_external_predictions(path) -> tuple:
    """Read an external-prediction file; returns (dataset, predictions)."""
    try:
        record = json.loads(Path(path).read_text("utf8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read external predictions {path}: {exc}") from exc
    if record.get("schema_version") != EXTERNAL_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported external schema {record.get('schema_version')!r}"
        )
    n = int(record["n_samples"])
    c = int(record["n_columns"])
    oof = np.full((n, c), np.nan)
    test_by_fold = {}
    for block in record["folds"]:
        idx = np.asarray(block["oof_indices"], dtype=int)
        oof[idx] = np.asarray(block["oof"], dtype=np.float64).reshape(idx.size, c)
        if "test" in block:
            test_by_fold[int(block["fold"])] = np.asarray(block["test"], dtype=np.float64)
    if np.isnan(oof).any():
        raise ConfigError("external folds do not cover every dataset row")
    pred = ExternalPredictions(
        variant=record["variant"],
        task=TaskKind(record["task"]),
        oof=oof,
        test_by_fold=test_by_fold or None,
    )
    return record["dataset"], pred


# ---------------------------------------------------------------------------
# command line


def materialize_datasets(config: BenchConfig, out_dir) -> list:
    """Write each manifest dataset to CSV; returns the paths written."""
    out = Path(out_dir) / "datasets"
    out.mkdir(parents=True, exist_ok=True)
    specs = resolve_manifest(config.manifest)
    save_manifest(specs, out / "manifest.json")
    written = [out / "manifest.json"]
    for spec in specs:
        data = generate(spec)
        path = out / f"{spec.name}.csv"
        write_csv(data, path)
        written.append(path)
    return written


def _config_from_args(args) -> BenchConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = BenchConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.folds is not None:
        overrides["outer_folds"] = args.folds
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = BenchConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _add_common_flags(sub) -> None:
    sub.add_argument("--config", help="path to a JSON benchmark config")
    sub.add_argument("--seed", type=int, help="master seed (overrides config)")
    sub.add_argument("--folds", type=int, help="outer fold count (overrides config)")
    sub.add_argument("--jobs", type=int, help="parallel cell workers (overrides config)")
    sub.add_argument("--out", help="output directory (overrides config)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="softlearn-bench",
        description="run and analyze the soft-learning benchmark",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("gen", "materialize the manifest datasets to CSV"),
        ("run", "execute the benchmark and persist the result store"),
        ("report", "emit analysis CSVs from a finished store"),
        ("audit", "run the leakage and vertex-dominance audits"),
    ):
        _add_common_flags(commands.add_parser(name, help=doc))
    args = parser.parse_args(argv)

    try:
        config = _config_from_args(args)
        if args.command == "gen":
            written = materialize_datasets(config, config.out_dir)
            print(f"wrote {len(written)} files under {config.out_dir}/datasets")
            return 0
        if args.command == "run":
            store = run_benchmark(config)
            store.write(config.out_dir)
            failed = store.failed()
            print(
                f"ran {len(store.cells())} cells "
                f"({len(failed)} failed) -> {config.out_dir}"
            )
            for result in failed:
                print(f"  FAILED {result.dataset}/{result.method}: {result.error}")
            return 2 if failed else 0
        if args.command == "report":
            store = ResultStore.load(config.out_dir)
            written = emit_report(store, Path(config.out_dir) / "report")
            for path in written:
                print(f"wrote {path}")
            return 0
        if args.command == "audit":
            report = audit(config)
            print(
                f"audited {report.cells_checked} cells: "
                f"{len(report.leakage_failures)} leakage, "
                f"{len(report.dominance_failures)} dominance failures"
            )
            for ds, method, v in report.leakage_failures:
                print(f"  LEAK {ds}/{method} fold {v}")
            for ds, v, gap in report.dominance_failures:
                print(f"  DOMINANCE {ds} fold {v}: gap {gap}")
            return 0 if report.passed else 2
        raise ConfigError(f"unknown command {args.command!r}")
    except SoftlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
