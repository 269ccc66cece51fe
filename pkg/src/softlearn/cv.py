"""Fold construction and honest out-of-fold prediction assembly.

For each fold v, every specialist is trained on the complement of v with a
standardizer fitted on that complement only, then predicts the held-out
rows. The result is an n x K x C tensor in which row i was produced by
models that never saw sample i, which is what makes the downstream weight
solve honest.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    DimensionError,
    LabelVector,
    SoftlearnError,
    TaskKind,
    apply_standardizer,
    fit_standardizer,
    make_classification_dataset,
    make_regression_dataset,
)
from .specialists import (
    SpecialistLibrary,
    derive_seed,
    fit,
    predict_scores,
)


class AssemblyError(SoftlearnError):
    """A specialist failed during out-of-fold assembly; names (specialist, fold)."""


class CoverageError(SoftlearnError):
    """An out-of-fold tensor is missing cells required downstream."""


def inner_fold_count(n_train: int) -> int:
    """Default inner-CV fold rule: 5 folds up to n=2000, 3 beyond."""
    return 5 if n_train <= 2000 else 3


@dataclass(frozen=True)
class FoldAssignment:
    """Maps each sample to exactly one of V folds."""

    V: int
    fold_of: np.ndarray
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.fold_of, dtype=np.int64).copy()
        if self.V < 2:
            raise ConfigError("V must be at least 2")
        if arr.ndim != 1:
            raise DimensionError("fold_of must be 1-d")
        counts = np.bincount(arr, minlength=self.V)
        if arr.size and (arr.min() < 0 or arr.max() >= self.V):
            raise ConfigError("fold indices out of range")
        if np.any(counts == 0):
            raise ConfigError("every fold must be non-empty")
        arr.flags.writeable = False
        object.__setattr__(self, "fold_of", arr)

    @property
    def n(self) -> int:
        return self.fold_of.shape[0]

    def fold_indices(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == v)

    def complement_indices(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != v)


def kfold(n: int, V: int, seed: int) -> FoldAssignment:
    """Seeded permutation split into V folds with sizes differing by <= 1."""
    if V < 2:
        raise ConfigError("V must be at least 2")
    if n < V:
        raise ConfigError(f"cannot split {n} samples into {V} non-empty folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    sizes = np.full(V, n // V)
    sizes[: n % V] += 1
    start = 0
    for v, size in enumerate(sizes):
        fold_of[perm[start:start + size]] = v
        start += size
    return FoldAssignment(V, fold_of, seed)


def stratified_kfold(labels: LabelVector, V: int, seed: int) -> FoldAssignment:
    """Class-proportional folds: per-fold class counts within 1 of the share.

    A class with fewer than V samples is placed round-robin and reported
    via a warning rather than failing.
    """
    if labels.task is not TaskKind.CLASSIFICATION:
        raise ConfigError("stratified folds need classification labels")
    if V < 2:
        raise ConfigError("V must be at least 2")
    y = labels.values
    n = y.shape[0]
    if n < V:
        raise ConfigError(f"cannot split {n} samples into {V} non-empty folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    fold_of = np.empty(n, dtype=np.int64)
    start = 0
    for c in range(labels.n_classes):
        idx = np.flatnonzero(y == c)
        if idx.size == 0:
            continue
        if idx.size < V:
            warnings.warn(
                f"class {c} has {idx.size} samples, fewer than V={V}; "
                "placing round-robin", UserWarning, stacklevel=2,
            )
        idx = idx[rng.permutation(idx.size)]
        # Deal round-robin from a rotating start so remainder samples
        # spread evenly over folds across classes.
        fold_of[idx] = (start + np.arange(idx.size)) % V
        start = (start + idx.size) % V
    return FoldAssignment(V, fold_of, seed)


def make_folds(data: Dataset, V: int, seed: int) -> FoldAssignment:
    if data.task is TaskKind.CLASSIFICATION:
        return stratified_kfold(data.labels, V, seed)
    return kfold(data.n_samples, V, seed)


@dataclass(frozen=True)
class OofPredictionTensor:
    """n x K x C out-of-fold predictions (regression: C = 1)."""

    values: np.ndarray
    coverage: np.ndarray
    variants: tuple
    task: TaskKind
    fold_scalers: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).copy()
        cov = np.asarray(self.coverage, dtype=bool).copy()
        if vals.ndim != 3:
            raise DimensionError("tensor must be n x K x C")
        vals.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "coverage", cov)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def C(self) -> int:
        return self.values.shape[2]


def _subset_dataset(data: Dataset, idx: np.ndarray, features: np.ndarray) -> Dataset:
    if data.task is TaskKind.CLASSIFICATION:
        sub = make_classification_dataset(
            features, data.y()[idx], n_classes=data.n_classes, name=data.name
        )
    else:
        sub = make_regression_dataset(features, data.y()[idx], name=data.name)
    return sub


def assemble_oof(
    library: SpecialistLibrary,
    data: Dataset,
    folds: FoldAssignment,
    external: dict | None = None,
    n_jobs: int = 1,
) -> OofPredictionTensor:
    """Run Phase-1 cross-validated prediction generation.

    ``external`` maps variant ids of family-External configs to
    ``ExternalPredictions`` whose oof rows (aligned with dataset order)
    are copied through instead of training anything. Execution order never
    affects the result: each fit seeds its stream from
    (specialist seed, fold seed, fold index) alone.
    """
    if folds.n != data.n_samples:
        raise DimensionError("fold assignment does not cover the dataset")
    external = external or {}
    n = data.n_samples
    K = library.K
    C = data.n_classes if data.task is TaskKind.CLASSIFICATION else 1
    P = np.zeros((n, K, C))
    covered = np.zeros((n, K), dtype=bool)

    scalers = []
    fold_train = []
    for v in range(folds.V):
        tr = folds.complement_indices(v)
        te = folds.fold_indices(v)
        scaler = fit_standardizer(data.features[tr])
        scalers.append(scaler)
        fold_train.append(
            (tr, te, apply_standardizer(scaler, data.features[tr]),
             apply_standardizer(scaler, data.features[te]))
        )

    def external_rows(k: int, variant: str) -> None:
        src = external.get(variant)
        if src is None:
            raise ConfigError(
                f"library names external specialist {variant!r} but no "
                "predictions were supplied for it"
            )
        rows = np.asarray(src.oof, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.shape != (n, C):
            raise DimensionError(
                f"external oof for {variant!r} has shape {rows.shape}, expected {(n, C)}"
            )
        if data.task is TaskKind.CLASSIFICATION:
            if np.any(rows < -1e-9) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-6):
                raise ConfigError(
                    f"external oof rows for {variant!r} must be probability vectors"
                )
        P[:, k, :] = rows
        covered[:, k] = True

    def run_cell(k: int, v: int) -> None:
        config = library.configs[k]
        tr, te, xtr, xte = fold_train[v]
        seed = derive_seed(config.seed, folds.seed % (2**32), v)
        try:
            model = fit(replace(config, seed=seed), _subset_dataset(data, tr, xtr))
            scores = predict_scores(model, xte)
        except SoftlearnError as exc:
            raise AssemblyError(
                f"specialist {config.variant!r} failed on fold {v}: {exc}"
            ) from exc
        P[te, k, :] = scores
        covered[te, k] = True

    cells = []
    for k, config in enumerate(library.configs):
        if config.family == "External":
            external_rows(k, config.variant)
        else:
            cells.extend((k, v) for v in range(folds.V))

    if n_jobs > 1 and cells:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_cell, k, v) for k, v in cells]
            for fut in futures:
                fut.result()
    else:
        for k, v in cells:
            run_cell(k, v)

    if not covered.all():
        raise AssemblyError("incomplete coverage after assembly")
    return OofPredictionTensor(P, covered, tuple(library.variants()), data.task, tuple(scalers))
