"""Shared numeric containers, label encoding, and per-fold standardization.

Everything downstream (fold assembly, weight solving, benchmarking) moves
data around as the types defined here. All containers are immutable after
construction and safe to share across threads; the operations are pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class SoftlearnError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SoftlearnError):
    """Array shape or size does not match what the operation requires."""


class TaskMismatchError(SoftlearnError):
    """Classification-only operation handed regression data, or vice versa."""


class DataValidationError(SoftlearnError):
    """Values violate a container invariant (non-finite, bad label range...)."""


class ConfigError(SoftlearnError):
    """Unknown or inconsistent configuration."""


class TaskKind(enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


def _as_float_matrix(values, name: str = "features") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LabelVector:
    """Targets for one dataset: integer classes in {0..C-1} or real values.

    ``n_classes`` is None for regression. Class labels are 0-based; CSV
    ingestion (see ``datasets``) maps arbitrary label strings onto this
    encoding by sorted order.
    """

    values: np.ndarray
    task: TaskKind
    n_classes: int | None = None

    def __post_init__(self):
        if self.task is TaskKind.CLASSIFICATION:
            vals = np.asarray(self.values)
            if vals.ndim != 1:
                raise DimensionError("labels must be 1-d")
            if vals.size and not np.all(vals == np.floor(vals)):
                raise DataValidationError("classification labels must be integers")
            vals = vals.astype(np.int64)
            if self.n_classes is None:
                object.__setattr__(self, "n_classes", int(vals.max()) + 1 if vals.size else 0)
            if vals.size and (vals.min() < 0 or vals.max() >= self.n_classes):
                raise DataValidationError(
                    f"labels must lie in [0, {self.n_classes}), got range "
                    f"[{vals.min()}, {vals.max()}]"
                )
            vals = vals.copy()
            vals.flags.writeable = False
            object.__setattr__(self, "values", vals)
        else:
            vals = np.asarray(self.values, dtype=np.float64)
            if vals.ndim != 1:
                raise DimensionError("targets must be 1-d")
            if not np.all(np.isfinite(vals)):
                raise DataValidationError("regression targets must be finite")
            if self.n_classes is not None:
                raise TaskMismatchError("regression labels carry no class count")
            vals = vals.copy()
            vals.flags.writeable = False
            object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus targets; the unit of every experiment."""

    features: np.ndarray
    labels: LabelVector
    name: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        feats = _as_float_matrix(self.features)
        object.__setattr__(self, "features", feats)
        if feats.shape[0] != len(self.labels):
            raise DimensionError(
                f"feature rows ({feats.shape[0]}) != label count ({len(self.labels)})"
            )
        if feats.shape[0] < 2:
            raise DataValidationError("a dataset needs at least 2 samples")
        if feats.shape[1] < 1:
            raise DataValidationError("a dataset needs at least 1 feature")

    @property
    def task(self) -> TaskKind:
        return self.labels.task

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int | None:
        return self.labels.n_classes

    def y(self) -> np.ndarray:
        return self.labels.values


def make_classification_dataset(features, labels, n_classes=None, name="") -> Dataset:
    lv = LabelVector(np.asarray(labels), TaskKind.CLASSIFICATION, n_classes)
    return Dataset(features, lv, name=name)


def make_regression_dataset(features, targets, name="") -> Dataset:
    lv = LabelVector(np.asarray(targets), TaskKind.REGRESSION)
    return Dataset(features, lv, name=name)


def one_hot(labels: LabelVector) -> np.ndarray:
    """Encode integer classes as an n x C indicator matrix.

    Row i is 1.0 at column y_i and 0.0 elsewhere, so every row sums to
    exactly 1. Regression labels are refused.
    """
    if labels.task is not TaskKind.CLASSIFICATION:
        raise TaskMismatchError("one_hot requires classification labels")
    if labels.n_classes < 2:
        raise DataValidationError("one_hot needs at least 2 classes")
    n = len(labels)
    out = np.zeros((n, labels.n_classes), dtype=np.float64)
    out[np.arange(n), labels.values] = 1.0
    return out


@dataclass(frozen=True)
class StandardizerParams:
    """Per-feature mean and scale fitted on a training partition only."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        scale = np.asarray(self.scale, dtype=np.float64).copy()
        if mean.shape != scale.shape or mean.ndim != 1:
            raise DimensionError("mean and scale must be 1-d arrays of equal length")
        if np.any(scale <= 0):
            raise DataValidationError("scale entries must be strictly positive")
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)


def fit_standardizer(train_features: np.ndarray) -> StandardizerParams:
    """Column means and population standard deviations of a training matrix.

    Population (not sample) sigma, matching the usual standard-scaling
    convention. Columns whose sigma falls below 1e-12 are treated as
    constant and get scale 1.0, which leaves them unchanged rather than
    producing NaN.
    """
    feats = _as_float_matrix(train_features)
    if feats.shape[0] < 1:
        raise DimensionError("cannot fit a standardizer on an empty matrix")
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return StandardizerParams(mean, scale)


def apply_standardizer(params: StandardizerParams, features: np.ndarray) -> np.ndarray:
    feats = _as_float_matrix(features)
    if feats.shape[1] != params.mean.shape[0]:
        raise DimensionError(
            f"feature count {feats.shape[1]} != standardizer length {params.mean.shape[0]}"
        )
    return (feats - params.mean) / params.scale


def invert_standardizer(params: StandardizerParams, standardized: np.ndarray) -> np.ndarray:
    feats = _as_float_matrix(standardized, "standardized")
    if feats.shape[1] != params.mean.shape[0]:
        raise DimensionError("column count mismatch")
    return feats * params.scale + params.mean


def argmax_class(probabilities: np.ndarray) -> int:
    """Index of the largest entry; ties broken by lowest index."""
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise DimensionError("probabilities must be a non-empty 1-d vector")
    if not np.all(np.isfinite(probs)):
        raise DataValidationError("probabilities must be finite")
    return int(np.argmax(probs))


def argmax_rows(probabilities: np.ndarray) -> np.ndarray:
    """Row-wise argmax with the same lowest-index tie rule."""
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2:
        raise DimensionError("expected an n x C matrix")
    return np.argmax(probs, axis=1)
