"""The heterogeneous specialist library.

Twelve classification and twelve regression learners drawn from seven
algorithmic families (linear, instance, tree, kernel-feature, neural,
generative, spline), each behind one fit/predict interface with fixed
hyperparameters. Estimators are scikit-learn under the hood; this module
owns the contract: deterministic seeding, full-C probability rows clipped
to [1e-12, 1] and renormalized, piecewise-constant flags, and an adapter
for splicing in externally computed prediction matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.dummy import DummyRegressor
from sklearn.ensemble import (
    ExtraTreesClassifier,
    ExtraTreesRegressor,
    HistGradientBoostingClassifier,
    HistGradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)
from sklearn.kernel_approximation import RBFSampler
from sklearn.linear_model import Lasso, LogisticRegression, Ridge
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier, KNeighborsRegressor
from sklearn.neural_network import MLPClassifier, MLPRegressor
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import SplineTransformer
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from .core import (
    ConfigError,
    Dataset,
    DimensionError,
    SoftlearnError,
    TaskKind,
    TaskMismatchError,
)

FAMILIES = ("Linear", "Instance", "Tree", "KernelFeature", "Neural", "Generative", "Spline", "External")

PROBABILITY_FLOOR = 1e-12


class DegenerateTrainingError(SoftlearnError):
    """Training data cannot support the requested fit (e.g. one class)."""


class ExternalSpecialistError(SoftlearnError):
    """An external specialist was asked for predictions it does not carry."""


def derive_seed(master: int, *key: int) -> int:
    """Deterministic 64-bit child seed for a (specialist, fold, ...) slot.

    Stream-splitting goes through SeedSequence spawn keys, so the derived
    value depends only on the indices, never on execution order.
    """
    ss = np.random.SeedSequence(master, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _sklearn_seed(seed: int) -> int:
    # scikit-learn wants a seed in [0, 2**32).
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def inverse_distance_weights(distances: np.ndarray) -> np.ndarray:
    """k-NN vote weights 1/(d + 1e-12); an exact-zero distance dominates."""
    return 1.0 / (distances + 1e-12)


@dataclass(frozen=True)
class SpecialistConfig:
    """Declarative description of one specialist."""

    family: str
    variant: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        p = dict(self.params)
        if "k" in p and p["k"] < 1:
            raise ConfigError("k must be >= 1")
        if "max_depth" in p and p["max_depth"] < 1:
            raise ConfigError("max_depth must be >= 1")
        if "learning_rate" in p and p["learning_rate"] <= 0:
            raise ConfigError("learning_rate must be > 0")
        if "C" in p and p["C"] <= 0:
            raise ConfigError("C must be > 0")
        if "alpha" in p and p["alpha"] < 0:
            raise ConfigError("alpha must be >= 0")
        # Plain dict copy: configs must pickle cleanly for process pools.
        object.__setattr__(self, "params", p)


@dataclass(frozen=True)
class SpecialistLibrary:
    """Ordered specialist roster; the order defines weight indexing."""

    configs: tuple

    def __post_init__(self):
        cfgs = tuple(self.configs)
        if len(cfgs) < 2:
            raise ConfigError("a library needs at least 2 specialists")
        variants = [c.variant for c in cfgs]
        if len(set(variants)) != len(variants):
            raise ConfigError("variant ids must be unique within a library")
        object.__setattr__(self, "configs", cfgs)

    @property
    def K(self) -> int:
        return len(self.configs)

    def variants(self) -> list:
        return [c.variant for c in self.configs]

    def __iter__(self):
        return iter(self.configs)


@dataclass(frozen=True)
class ExternalPredictions:
    """Precomputed predictions standing in for an untrainable specialist.

    ``oof`` holds one row per dataset sample, aligned with dataset order,
    produced out-of-fold by the external system under the same fold
    assignment. ``test_by_fold`` optionally carries held-out-partition
    predictions keyed by outer-fold index for benchmark splicing.
    """

    variant: str
    task: TaskKind
    oof: np.ndarray
    test_by_fold: dict | None = None

    def __post_init__(self):
        arr = np.asarray(self.oof, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ConfigError("external predictions must be finite")
        object.__setattr__(self, "oof", arr)

    def config(self) -> SpecialistConfig:
        return SpecialistConfig("External", self.variant)


# ---------------------------------------------------------------------------
# Builders. One entry per variant id: (family, classification builder,
# regression builder, piecewise_constant). A None builder means the variant
# does not exist for that task.

def _logistic(c_value):
    def build(d, n, seed, x):
        return LogisticRegression(C=c_value, solver="lbfgs", max_iter=1000, tol=1e-4,
                                  random_state=_sklearn_seed(seed))
    return build


def _knn_clf(k):
    def build(d, n, seed, x):
        return KNeighborsClassifier(n_neighbors=min(k, n), weights=inverse_distance_weights)
    return build


def _knn_reg(k):
    def build(d, n, seed, x):
        return KNeighborsRegressor(n_neighbors=min(k, n), weights=inverse_distance_weights)
    return build


def _tree_clf(d, n, seed, x):
    return DecisionTreeClassifier(criterion="gini", max_depth=10, min_samples_leaf=5,
                                  random_state=_sklearn_seed(seed))


def _tree_reg(d, n, seed, x):
    return DecisionTreeRegressor(max_depth=10, min_samples_leaf=5,
                                 random_state=_sklearn_seed(seed))


def _forest_clf(d, n, seed, x):
    return RandomForestClassifier(n_estimators=100, max_features="sqrt",
                                  random_state=_sklearn_seed(seed), n_jobs=1)


def _forest_reg(d, n, seed, x):
    return RandomForestRegressor(n_estimators=100, max_features="sqrt",
                                 random_state=_sklearn_seed(seed), n_jobs=1)


def _extra_clf(d, n, seed, x):
    return ExtraTreesClassifier(n_estimators=100, max_features="sqrt",
                                random_state=_sklearn_seed(seed), n_jobs=1)


def _extra_reg(d, n, seed, x):
    return ExtraTreesRegressor(n_estimators=100, max_features="sqrt",
                               random_state=_sklearn_seed(seed), n_jobs=1)


def _hgb_clf(d, n, seed, x):
    return HistGradientBoostingClassifier(max_iter=100, max_depth=6, learning_rate=0.1,
                                          max_bins=255, early_stopping=False,
                                          random_state=_sklearn_seed(seed))


def _hgb_reg(d, n, seed, x):
    return HistGradientBoostingRegressor(max_iter=100, max_depth=6, learning_rate=0.1,
                                         max_bins=255, early_stopping=False,
                                         random_state=_sklearn_seed(seed))


def _rff_gamma(d, x):
    # RBF bandwidth rule gamma = 1/(d * Var(X)) on the training matrix.
    var = float(np.asarray(x).var())
    if var < 1e-12:
        var = 1.0
    return 1.0 / (d * var)


def _rff_clf(d, n, seed, x):
    return Pipeline([
        ("rff", RBFSampler(gamma=_rff_gamma(d, x), n_components=200,
                           random_state=_sklearn_seed(seed))),
        ("logistic", LogisticRegression(C=1.0, solver="lbfgs", max_iter=1000, tol=1e-4,
                                        random_state=_sklearn_seed(seed))),
    ])


def _rff_reg(d, n, seed, x):
    return Pipeline([
        ("rff", RBFSampler(gamma=_rff_gamma(d, x), n_components=200,
                           random_state=_sklearn_seed(seed))),
        ("ridge", Ridge(alpha=1.0)),
    ])


def _mlp_clf(d, n, seed, x):
    return MLPClassifier(hidden_layer_sizes=(64, 32), activation="relu", solver="adam",
                         learning_rate_init=1e-3, batch_size=min(32, n), max_iter=200,
                         early_stopping=True, validation_fraction=0.15, n_iter_no_change=10,
                         random_state=_sklearn_seed(seed))


def _mlp_reg(d, n, seed, x):
    return MLPRegressor(hidden_layer_sizes=(64, 32), activation="relu", solver="adam",
                        learning_rate_init=1e-3, batch_size=min(32, n), max_iter=200,
                        early_stopping=True, validation_fraction=0.15, n_iter_no_change=10,
                        random_state=_sklearn_seed(seed))


def _nb_clf(d, n, seed, x):
    return GaussianNB(var_smoothing=1e-9)


def _spline_clf(d, n, seed, x):
    return Pipeline([
        ("spline", SplineTransformer(n_knots=4, degree=3)),
        ("logistic", LogisticRegression(C=1.0, solver="lbfgs", max_iter=1000, tol=1e-4,
                                        random_state=_sklearn_seed(seed))),
    ])


def _spline_reg(d, n, seed, x):
    return Pipeline([
        ("spline", SplineTransformer(n_knots=4, degree=3)),
        ("ridge", Ridge(alpha=1.0)),
    ])


def _ridge_reg(d, n, seed, x):
    return Ridge(alpha=1.0)


def _lasso_reg(d, n, seed, x):
    return Lasso(alpha=0.01, max_iter=10000)


def _mean_reg(d, n, seed, x):
    return DummyRegressor(strategy="mean")


_REGISTRY = {
    # variant: (family, clf builder, reg builder, piecewise_constant)
    "logistic_c1": ("Linear", _logistic(1.0), None, False),
    "logistic_c01": ("Linear", _logistic(0.1), None, False),
    "ridge": ("Linear", None, _ridge_reg, False),
    "lasso": ("Linear", None, _lasso_reg, False),
    "mean_baseline": ("Linear", None, _mean_reg, False),
    "knn_5": ("Instance", _knn_clf(5), _knn_reg(5), True),
    "knn_15": ("Instance", _knn_clf(15), _knn_reg(15), True),
    "tree_gini": ("Tree", _tree_clf, _tree_reg, True),
    "random_forest": ("Tree", _forest_clf, _forest_reg, True),
    "extra_trees": ("Tree", _extra_clf, _extra_reg, True),
    "hist_gb": ("Tree", _hgb_clf, _hgb_reg, True),
    "rff_linear": ("KernelFeature", _rff_clf, _rff_reg, False),
    "mlp_64_32": ("Neural", _mlp_clf, _mlp_reg, False),
    "gaussian_nb": ("Generative", _nb_clf, None, False),
    "spline_linear": ("Spline", _spline_clf, _spline_reg, False),
}

_CLF_ROSTER = (
    "logistic_c1", "logistic_c01", "knn_5", "knn_15", "tree_gini", "random_forest",
    "extra_trees", "hist_gb", "rff_linear", "mlp_64_32", "gaussian_nb", "spline_linear",
)
_REG_ROSTER = (
    "ridge", "lasso", "knn_5", "knn_15", "tree_gini", "random_forest",
    "extra_trees", "hist_gb", "rff_linear", "mlp_64_32", "spline_linear", "mean_baseline",
)


def default_library(task: TaskKind, master_seed: int = 0) -> SpecialistLibrary:
    """The twelve-specialist roster for the given task."""
    roster = _CLF_ROSTER if task is TaskKind.CLASSIFICATION else _REG_ROSTER
    configs = []
    for idx, variant in enumerate(roster):
        family = _REGISTRY[variant][0]
        configs.append(SpecialistConfig(family, variant, seed=derive_seed(master_seed, idx)))
    return SpecialistLibrary(tuple(configs))


def family_of(variant: str) -> str:
    if variant not in _REGISTRY:
        return "External"
    return _REGISTRY[variant][0]


def supports_task(variant: str, task: TaskKind) -> bool:
    """Whether a built-in variant can be trained for the given task."""
    entry = _REGISTRY.get(variant)
    if entry is None:
        return False
    builder = entry[1] if task is TaskKind.CLASSIFICATION else entry[2]
    return builder is not None


def is_piecewise_constant(variant: str) -> bool:
    if variant not in _REGISTRY:
        return False
    return _REGISTRY[variant][3]


@dataclass(frozen=True)
class TrainedSpecialist:
    """A fitted, immutable specialist behind one prediction interface."""

    config: SpecialistConfig
    task: TaskKind
    n_features: int
    n_classes: int | None
    piecewise_constant: bool
    estimator: object
    diagnostics: dict = field(default_factory=dict, compare=False)

    def predict_proba(self, features) -> np.ndarray:
        return predict_proba(self, features)

    def predict(self, features) -> np.ndarray:
        return predict(self, features)


def _check_features(model: TrainedSpecialist, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("query features must be 2-d")
    if x.shape[1] != model.n_features:
        raise DimensionError(
            f"query has {x.shape[1]} features, model expects {model.n_features}"
        )
    return x


def fit(config: SpecialistConfig, train: Dataset) -> TrainedSpecialist:
    """Train one specialist; bit-identical output for identical inputs."""
    if config.family == "External":
        raise ConfigError(
            "external specialists carry precomputed predictions and are not trainable; "
            "pass them through the external mapping instead"
        )
    if config.variant not in _REGISTRY:
        raise ConfigError(f"unknown specialist variant {config.variant!r}")
    family, clf_builder, reg_builder, pc = _REGISTRY[config.variant]
    x = train.features
    n, d = x.shape
    y = train.y()
    diagnostics = {}
    if train.task is TaskKind.CLASSIFICATION:
        if np.unique(y).size < 2:
            raise DegenerateTrainingError(
                f"{config.variant}: training data holds a single class"
            )
        if clf_builder is None:
            raise ConfigError(f"{config.variant} has no classification form")
        est = clf_builder(d, n, config.seed, x)
        try:
            est.fit(x, y)
        except ValueError:
            if isinstance(est, MLPClassifier):
                # Early stopping needs an internal stratified split; tiny
                # classes can make that impossible. Fall back to the same
                # budget without the split.
                est = clf_builder(d, n, config.seed, x)
                est.set_params(early_stopping=False)
                est.fit(x, y)
                diagnostics["mlp_early_stopping_disabled"] = True
            else:
                raise
        n_classes = train.n_classes
    else:
        if reg_builder is None:
            raise ConfigError(f"{config.variant} has no regression form")
        est = reg_builder(d, n, config.seed, x)
        est.fit(x, y)
        n_classes = None
    return TrainedSpecialist(config, train.task, d, n_classes, pc, est, diagnostics)


def predict_proba(model: TrainedSpecialist, features) -> np.ndarray:
    """Probability rows on the full class set, clipped and renormalized.

    The fitted estimator may know fewer classes than the dataset (a tiny
    class can be absent from a training fold); its columns are re-aligned
    into the full 0..C-1 range, then every row is clipped to
    [1e-12, 1] and renormalized to sum exactly 1.
    """
    if model.task is not TaskKind.CLASSIFICATION:
        raise TaskMismatchError("predict_proba requires a classification model")
    x = _check_features(model, features)
    raw = model.estimator.predict_proba(x)
    known = np.asarray(model.estimator.classes_, dtype=int)
    full = np.zeros((x.shape[0], model.n_classes))
    full[:, known] = raw
    clipped = np.clip(full, PROBABILITY_FLOOR, 1.0)
    return clipped / clipped.sum(axis=1, keepdims=True)


def predict(model: TrainedSpecialist, features) -> np.ndarray:
    if model.task is not TaskKind.REGRESSION:
        raise TaskMismatchError("predict requires a regression model")
    x = _check_features(model, features)
    out = np.asarray(model.estimator.predict(x), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise SoftlearnError(f"{model.config.variant} produced non-finite predictions")
    return out


def predict_scores(model: TrainedSpecialist, features) -> np.ndarray:
    """Uniform prediction surface: (m, C) probabilities or (m, 1) values."""
    if model.task is TaskKind.CLASSIFICATION:
        return predict_proba(model, features)
    return predict(model, features)[:, None]


def reseed(config: SpecialistConfig, seed: int) -> SpecialistConfig:
    return replace(config, seed=seed)
