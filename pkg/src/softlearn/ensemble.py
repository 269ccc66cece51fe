"""The SoftLearner estimator and its analytics.

Training runs three phases: honest out-of-fold prediction assembly, a
simplex least-squares solve for the combination weights, and a full-data
refit of every specialist. Prediction is the convex combination
sum_k alpha_k * f_k(x). On top of the estimator sit the diversity
decomposition (ensemble error = weighted individual error - ambiguity),
weighted-variance uncertainty scores, selective classification, and an
adversarial-immunity probe for the piecewise-constant weight mass.
"""

from __future__ import annotations

import io
import json
import pickle
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    DimensionError,
    SoftlearnError,
    StandardizerParams,
    TaskKind,
    apply_standardizer,
    argmax_rows,
    fit_standardizer,
    one_hot,
)
from .cv import FoldAssignment, OofPredictionTensor, assemble_oof, inner_fold_count, make_folds
from .simplexopt import (
    SolveReport,
    WeightVector,
    flatten,
    solve_simplex_ls,
)
from .specialists import (
    ExternalSpecialistError,
    SpecialistConfig,
    SpecialistLibrary,
    TrainedSpecialist,
    derive_seed,
    fit,
    predict_scores,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SoftLearner:
    """A fitted convex combination of specialists."""

    configs: tuple
    specialists: tuple
    weights: WeightVector
    task: TaskKind
    standardizer: StandardizerParams
    solve_report: SolveReport
    folds: FoldAssignment | None
    oof: OofPredictionTensor | None
    n_classes: int | None
    n_features: int
    master_seed: int

    @property
    def K(self) -> int:
        return len(self.configs)

    def variants(self) -> list:
        return [c.variant for c in self.configs]

    def predict_proba(self, features) -> np.ndarray:
        return predict_proba(self, features)

    def predict(self, features) -> np.ndarray:
        return predict(self, features)


def slim(model: SoftLearner) -> SoftLearner:
    """Drop the retained OOF tensor and folds for deployment."""
    return replace(model, oof=None, folds=None)


def _as_configs(library) -> tuple:
    if isinstance(library, SpecialistLibrary):
        return tuple(library.configs)
    configs = tuple(library)
    for c in configs:
        if not isinstance(c, SpecialistConfig):
            raise ConfigError("library must contain SpecialistConfig entries")
    if not configs:
        raise ConfigError("library must not be empty")
    return configs


@dataclass(frozen=True)
class _SoloRoster:
    """Single-config roster for assembly when the library floor (K >= 2)
    does not apply."""

    configs: tuple

    @property
    def K(self) -> int:
        return 1

    def variants(self) -> list:
        return [self.configs[0].variant]


def fit_soft_learner(
    library,
    data: Dataset,
    V: int | None = None,
    master_seed: int = 0,
    external: dict | None = None,
    n_jobs: int = 1,
    keep_oof: bool = True,
) -> SoftLearner:
    """Run the three training phases and return the fitted ensemble.

    ``library`` is a SpecialistLibrary or any sequence of SpecialistConfig
    (a single config is permitted and gets weight 1 trivially).
    ``external`` maps External-family variant ids to ExternalPredictions.
    Deterministic under ``master_seed``: folds, every specialist stream,
    and therefore weights and predictions repeat bit-identically.
    """
    configs = _as_configs(library)
    mini_library = SpecialistLibrary(configs) if len(configs) >= 2 else None
    if V is None:
        V = inner_fold_count(data.n_samples)

    folds = make_folds(data, V, derive_seed(master_seed, 0xF01D))
    try:
        # K=1: the simplex is a single point, but assembly still runs so the
        # report carries an honest objective. SpecialistLibrary itself
        # enforces K >= 2, so a solo roster stands in for it.
        roster = mini_library if mini_library is not None else _SoloRoster(configs)
        oof = assemble_oof(roster, data, folds, external=external, n_jobs=n_jobs)
    except SoftlearnError as exc:
        raise type(exc)(f"phase 1 (oof assembly): {exc}") from exc

    try:
        problem = flatten(oof, data.labels)
        report = solve_simplex_ls(problem)
    except SoftlearnError as exc:
        raise type(exc)(f"phase 2 (weight solve): {exc}") from exc

    try:
        scaler = fit_standardizer(data.features)
        x_std = apply_standardizer(scaler, data.features)
        full = _subset_full(data, x_std)
        fitted = []
        for k, config in enumerate(configs):
            if config.family == "External":
                fitted.append(None)
                continue
            seed = derive_seed(config.seed, master_seed % (2**32), folds.V)
            fitted.append(fit(replace(config, seed=seed), full))
    except SoftlearnError as exc:
        raise type(exc)(f"phase 3 (full-data refit): {exc}") from exc

    return SoftLearner(
        configs=configs,
        specialists=tuple(fitted),
        weights=report.solution,
        task=data.task,
        standardizer=scaler,
        solve_report=report,
        folds=folds if keep_oof else None,
        oof=oof if keep_oof else None,
        n_classes=data.n_classes,
        n_features=data.n_features,
        master_seed=master_seed,
    )


def _subset_full(data: Dataset, x_std: np.ndarray) -> Dataset:
    from .core import make_classification_dataset, make_regression_dataset

    if data.task is TaskKind.CLASSIFICATION:
        return make_classification_dataset(x_std, data.y(), n_classes=data.n_classes,
                                           name=data.name)
    return make_regression_dataset(x_std, data.y(), name=data.name)


def _specialist_scores(model: SoftLearner, features) -> np.ndarray:
    """Per-specialist predictions on standardized queries: (m, K, C)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("query features must be 2-d")
    if x.shape[1] != model.n_features:
        raise DimensionError(
            f"query has {x.shape[1]} features, model expects {model.n_features}"
        )
    x_std = apply_standardizer(model.standardizer, x)
    c = model.n_classes if model.task is TaskKind.CLASSIFICATION else 1
    out = np.empty((x.shape[0], model.K, c))
    for k, spec in enumerate(model.specialists):
        if spec is None:
            if model.weights.alpha[k] > 0:
                raise ExternalSpecialistError(
                    f"external specialist {model.configs[k].variant!r} carries weight "
                    f"{model.weights.alpha[k]:.3g} but has no prediction source for "
                    "new queries"
                )
            out[:, k, :] = 1.0 / c if model.task is TaskKind.CLASSIFICATION else 0.0
            continue
        out[:, k, :] = predict_scores(spec, x_std)
    return out


def predict_proba(model: SoftLearner, features) -> np.ndarray:
    """Ensemble probability rows: convex combination of specialist rows."""
    if model.task is not TaskKind.CLASSIFICATION:
        raise ConfigError("predict_proba requires a classification ensemble")
    scores = _specialist_scores(model, features)
    return np.einsum("mkc,k->mc", scores, model.weights.alpha)


def predict(model: SoftLearner, features) -> np.ndarray:
    """Hard labels (classification) or real predictions (regression)."""
    if model.task is TaskKind.CLASSIFICATION:
        return argmax_rows(predict_proba(model, features))
    scores = _specialist_scores(model, features)
    return np.einsum("mkc,k->mc", scores, model.weights.alpha)[:, 0]


def uncertainty(model: SoftLearner, features) -> np.ndarray:
    """Weighted prediction variance V(x) = sum_k alpha_k ||f_k - f_SL||^2.

    For regression the scalar analogue (weighted variance of point
    predictions) is used.
    """
    scores = _specialist_scores(model, features)
    mean = np.einsum("mkc,k->mc", scores, model.weights.alpha)
    dev = scores - mean[:, None, :]
    return np.einsum("mkc,k->m", dev * dev, model.weights.alpha)


@dataclass(frozen=True)
class SelectivePrediction:
    """Per-query prediction or abstention under an uncertainty ceiling."""

    predictions: np.ndarray
    abstained: np.ndarray
    tau: float
    coverage: float


def selective_predict(model: SoftLearner, features, tau: float) -> SelectivePrediction:
    """Predict where V(x) <= tau, abstain elsewhere."""
    if not tau >= 0:
        raise ConfigError("tau must be non-negative")
    v = uncertainty(model, features)
    preds = predict(model, features)
    abstained = v > tau
    coverage = float(1.0 - abstained.mean()) if v.size else 0.0
    return SelectivePrediction(preds, abstained, float(tau), coverage)


def uncertainty_deciles(v_values) -> np.ndarray:
    """The tau grid: deciles of observed uncertainty scores."""
    v = np.asarray(v_values, dtype=np.float64)
    return np.quantile(v, np.arange(1, 10) / 10.0)


def selective_sweep(model: SoftLearner, features, labels) -> list:
    """Selective accuracy/coverage at each decile threshold of V.

    Returns records {tau, coverage, accuracy} (accuracy over non-abstained
    queries; None when everything is abstained).
    """
    y = np.asarray(labels)
    v = uncertainty(model, features)
    preds = predict(model, features)
    records = []
    for tau in uncertainty_deciles(v):
        keep = v <= tau
        acc = float((preds[keep] == y[keep]).mean()) if keep.any() else None
        records.append({"tau": float(tau), "coverage": float(keep.mean()), "accuracy": acc})
    return records


@dataclass(frozen=True)
class DiversityReport:
    """Krogh-Vedelsby decomposition plus hard-label disagreement."""

    mean_individual_error: float
    ambiguity: float
    ensemble_error: float
    disagreement: np.ndarray | None = None


def kv_decomposition(predictions, weights, targets) -> DiversityReport:
    """Exact decomposition: ensemble error = weighted mean error - ambiguity.

    ``predictions``: (n, K, C) or (n, K) specialist outputs on an
    evaluation set; ``targets``: (n, C) or (n,) matching; ``weights`` on
    the simplex. All errors are mean squared norms over the set. The
    identity E_ens = E_bar - A is algebraic and holds to 1e-10 relative.
    """
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim == 2:
        P = P[:, :, None]
    if P.ndim != 3:
        raise DimensionError("predictions must be (n, K, C)")
    a = weights.alpha if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    if a.shape[0] != P.shape[1]:
        raise DimensionError("weights length must match K")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (P.shape[0], P.shape[2]):
        raise DimensionError(
            f"targets shape {y.shape} incompatible with predictions {P.shape}"
        )
    ens = np.einsum("nkc,k->nc", P, a)
    per_spec_err = ((P - y[:, None, :]) ** 2).sum(axis=2).mean(axis=0)
    e_bar = float(per_spec_err @ a)
    per_spec_amb = ((P - ens[:, None, :]) ** 2).sum(axis=2).mean(axis=0)
    ambiguity = float(per_spec_amb @ a)
    e_ens = float(((ens - y) ** 2).sum(axis=1).mean())
    return DiversityReport(e_bar, ambiguity, e_ens)


def pairwise_ambiguity(predictions, weights) -> float:
    """The pairwise form (1/2) sum_kj a_k a_j ||f_k - f_j||^2, mean over rows."""
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim == 2:
        P = P[:, :, None]
    a = weights.alpha if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    sq = ((P[:, :, None, :] - P[:, None, :, :]) ** 2).sum(axis=3).mean(axis=0)
    return float(0.5 * a @ sq @ a)


def disagreement_from_labels(hard_labels) -> np.ndarray:
    """rho[k, j] = fraction of rows where specialists k and j disagree."""
    L = np.asarray(hard_labels)
    if L.ndim != 2:
        raise DimensionError("hard labels must be (m, K)")
    diff = L[:, :, None] != L[:, None, :]
    return diff.mean(axis=0)


def pairwise_disagreement(model: SoftLearner, features) -> np.ndarray:
    """Hard-label disagreement matrix over an evaluation feature set."""
    if model.task is not TaskKind.CLASSIFICATION:
        raise ConfigError("pairwise disagreement needs a classification ensemble")
    scores = _specialist_scores(model, features)
    labels = scores.argmax(axis=2)
    return disagreement_from_labels(labels)


def diversity_report(model: SoftLearner, features, labels) -> DiversityReport:
    """KV decomposition of a fitted model on an evaluation set."""
    scores = _specialist_scores(model, features)
    if model.task is TaskKind.CLASSIFICATION:
        from .core import LabelVector

        lv = LabelVector(np.asarray(labels), TaskKind.CLASSIFICATION, model.n_classes)
        targets = one_hot(lv)
        rho = disagreement_from_labels(scores.argmax(axis=2))
    else:
        targets = np.asarray(labels, dtype=np.float64)
        rho = None
    base = kv_decomposition(scores, model.weights, targets)
    return DiversityReport(
        base.mean_individual_error, base.ambiguity, base.ensemble_error, rho
    )


@dataclass(frozen=True)
class ImmunityReport:
    """Outcome of the random-perturbation immunity probe."""

    immune_indices: tuple
    w_immune: float
    eligible: np.ndarray
    ensemble_flipped: np.ndarray
    immune_output_changed: np.ndarray
    violation_fraction: float


def immunity_probe(
    model: SoftLearner, features, epsilon: float, trials: int = 100, seed: int = 0
) -> ImmunityReport:
    """Probe label stability under sup-norm perturbations of size epsilon.

    A query is eligible when the piecewise-constant (immune) specialists
    hold majority weight and unanimously predict the ensemble's label
    there. The reported violation fraction counts eligible queries whose
    ensemble label flipped under any of ``trials`` random perturbations;
    with epsilon inside each query's cell margin this is 0.
    """
    if model.task is not TaskKind.CLASSIFICATION:
        raise ConfigError("the immunity probe needs a classification ensemble")
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    x = np.asarray(features, dtype=np.float64)
    immune = tuple(
        k for k, s in enumerate(model.specialists) if s is not None and s.piecewise_constant
    )
    alpha = model.weights.alpha
    w_immune = float(alpha[list(immune)].sum()) if immune else 0.0

    base_scores = _specialist_scores(model, x)
    base_ens = np.einsum("mkc,k->mc", base_scores, alpha).argmax(axis=1)
    if immune:
        immune_labels = base_scores[:, list(immune), :].argmax(axis=2)
        unanimous = np.all(immune_labels == base_ens[:, None], axis=1)
    else:
        unanimous = np.zeros(x.shape[0], dtype=bool)
    eligible = unanimous & (w_immune > 0.5)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0x1ABE,))))
    flipped = np.zeros(x.shape[0], dtype=bool)
    changed = np.zeros(x.shape[0], dtype=bool)
    for _ in range(trials):
        eta = rng.uniform(-epsilon, epsilon, size=x.shape)
        scores = _specialist_scores(model, x + eta)
        ens = np.einsum("mkc,k->mc", scores, alpha).argmax(axis=1)
        flipped |= ens != base_ens
        if immune:
            changed |= np.any(
                scores[:, list(immune), :] != base_scores[:, list(immune), :], axis=(1, 2)
            )
    violations = eligible & flipped
    frac = float(violations.mean()) if x.shape[0] else 0.0
    return ImmunityReport(immune, w_immune, eligible, flipped, changed, frac)


# ---------------------------------------------------------------------------
# Serialization: zip container with a JSON header and pickled specialist
# state blobs. Round trips reproduce predictions bit-identically.

def save_soft_learner(model: SoftLearner, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "task": model.task.value,
        "weights": [float(w) for w in model.weights.alpha],
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "master_seed": model.master_seed,
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "scale": model.standardizer.scale.tolist(),
        },
        "configs": [
            {"family": c.family, "variant": c.variant, "params": dict(c.params),
             "seed": c.seed}
            for c in model.configs
        ],
        "solve": {
            "objective": model.solve_report.objective,
            "converged": model.solve_report.converged,
            "rank_deficient": model.solve_report.rank_deficient,
            "vertex_objectives": list(model.solve_report.vertex_objectives),
            "iterations": model.solve_report.iterations,
        },
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=2, sort_keys=True))
        for k, spec in enumerate(model.specialists):
            if spec is not None:
                zf.writestr(f"specialist_{k:02d}.pkl", pickle.dumps(spec, protocol=4))


def load_soft_learner(path) -> SoftLearner:
    with zipfile.ZipFile(path, "r") as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigError(
                f"unsupported model format version {header.get('format_version')!r}"
            )
        configs = tuple(
            SpecialistConfig(c["family"], c["variant"], c.get("params", {}), c["seed"])
            for c in header["configs"]
        )
        specialists = []
        for k in range(len(configs)):
            name = f"specialist_{k:02d}.pkl"
            if name in zf.namelist():
                specialists.append(pickle.loads(zf.read(name)))
            else:
                specialists.append(None)
    task = TaskKind(header["task"])
    solve = header["solve"]
    weights = WeightVector(np.asarray(header["weights"], dtype=np.float64))
    report = SolveReport(
        solution=weights,
        objective=float(solve["objective"]),
        per_init_solutions=(weights,),
        per_init_objectives=(float(solve["objective"]),),
        iterations=int(solve["iterations"]),
        converged=bool(solve["converged"]),
        rank_deficient=bool(solve["rank_deficient"]),
        vertex_objectives=tuple(solve["vertex_objectives"]),
    )
    return SoftLearner(
        configs=configs,
        specialists=tuple(specialists),
        weights=weights,
        task=task,
        standardizer=StandardizerParams(
            np.asarray(header["standardizer"]["mean"]),
            np.asarray(header["standardizer"]["scale"]),
        ),
        solve_report=report,
        folds=None,
        oof=None,
        n_classes=header["n_classes"],
        n_features=header["n_features"],
        master_seed=header["master_seed"],
    )
