import numpy as np
import pytest

from softlearn.core import ConfigError, DimensionError, TaskKind, make_classification_dataset
from softlearn.cv import (
    AssemblyError,
    FoldAssignment,
    OofPredictionTensor,
    assemble_oof,
    inner_fold_count,
    kfold,
    make_folds,
    stratified_kfold,
)
from softlearn.datasets import SyntheticSpec, generate, inject_label_noise
from softlearn.specialists import (
    ExternalPredictions,
    SpecialistConfig,
    SpecialistLibrary,
    fit,
    predict_proba,
)


def test_inner_fold_rule():
    assert inner_fold_count(50) == 5
    assert inner_fold_count(2000) == 5
    assert inner_fold_count(2001) == 3


def test_kfold_partitions_everything():
    folds = kfold(103, 5, seed=3)
    seen = np.zeros(103, dtype=int)
    sizes = []
    for v in range(5):
        idx = folds.fold_indices(v)
        seen[idx] += 1
        sizes.append(idx.size)
        comp = folds.complement_indices(v)
        assert np.intersect1d(idx, comp).size == 0
        assert idx.size + comp.size == 103
    np.testing.assert_array_equal(seen, np.ones(103, dtype=int))
    assert max(sizes) - min(sizes) <= 1


def test_kfold_is_seed_deterministic():
    a = kfold(60, 4, seed=9)
    b = kfold(60, 4, seed=9)
    c = kfold(60, 4, seed=10)
    np.testing.assert_array_equal(a.fold_of, b.fold_of)
    assert not np.array_equal(a.fold_of, c.fold_of)


def test_kfold_rejects_too_many_folds():
    with pytest.raises(ConfigError):
        kfold(3, 4, seed=0)


def test_stratified_fold_class_balance():
    """Each fold's class count stays within 1 of the proportional share."""
    rng = np.random.default_rng(5)
    y = rng.choice(3, size=299, p=[0.5, 0.3, 0.2])
    data = make_classification_dataset(rng.normal(size=(299, 2)), y)
    folds = stratified_kfold(data.labels, 5, seed=1)
    for c in range(3):
        per_fold = np.array([
            np.sum(y[folds.fold_indices(v)] == c) for v in range(5)
        ])
        assert per_fold.max() - per_fold.min() <= 1


def test_stratified_fold_warns_on_tiny_class():
    y = np.array([0] * 50 + [1] * 3)
    data = make_classification_dataset(np.zeros((53, 1)), y)
    with pytest.warns(UserWarning):
        folds = stratified_kfold(data.labels, 5, seed=0)
    # the tiny class still lands in three distinct folds
    assert len({int(folds.fold_of[i]) for i in range(50, 53)}) == 3


def test_stratified_rejects_regression_labels():
    from softlearn.core import LabelVector

    lv = LabelVector(np.arange(10.0), TaskKind.REGRESSION)
    with pytest.raises(ConfigError):
        stratified_kfold(lv, 5, seed=0)


def test_make_folds_dispatches_by_task():
    clf = generate(SyntheticSpec("moons", n=80, d=2, noise=0.1, seed=0, n_classes=2))
    reg = generate(SyntheticSpec("friedman1", n=80, d=5, noise=0.1, seed=0))
    assert make_folds(clf, 4, seed=1).V == 4
    assert make_folds(reg, 4, seed=1).V == 4


def test_fold_assignment_validation():
    with pytest.raises(ConfigError):
        FoldAssignment(3, np.array([0, 1, 3]), seed=0)
    with pytest.raises(ConfigError):
        FoldAssignment(2, np.array([0, 0, 0]), seed=0)


@pytest.fixture(scope="module")
def noisy_clf():
    clean = generate(SyntheticSpec("gaussian_classes", n=180, d=3, noise=0.6, seed=2, n_classes=3))
    return inject_label_noise(clean, 0.2, seed=7)


def test_assemble_oof_shapes_and_coverage(noisy_clf):
    lib = SpecialistLibrary((
        SpecialistConfig("Tree", "tree_gini", seed=1),
        SpecialistConfig("Linear", "logistic_c1", seed=2),
    ))
    folds = make_folds(noisy_clf, 5, seed=4)
    oof = assemble_oof(lib, noisy_clf, folds)
    assert oof.values.shape == (180, 2, 3)
    assert oof.coverage.all()
    np.testing.assert_allclose(oof.values.sum(axis=2), 1.0, atol=1e-9)
    assert len(oof.fold_scalers) == 5


def test_assemble_oof_is_honest(noisy_clf):
    """Inverse-distance knn memorizes seen points exactly (the self vote
    carries ~1e12 weight), so it reproduces flipped labels if and only if
    the flipped point was in its training partition. Out-of-fold rows must
    therefore score clearly below the full-data refit, or the folds leaked.
    """
    config = SpecialistConfig("Instance", "knn_5", seed=1)
    lib = SpecialistLibrary((config, SpecialistConfig("Linear", "logistic_c1", seed=2)))
    folds = make_folds(noisy_clf, 5, seed=4)
    oof = assemble_oof(lib, noisy_clf, folds)
    oof_acc = (oof.values[:, 0, :].argmax(axis=1) == noisy_clf.y()).mean()

    full_model = fit(config, noisy_clf)
    full_acc = (predict_proba(full_model, noisy_clf.features).argmax(axis=1) == noisy_clf.y()).mean()
    assert full_acc > 0.99
    assert oof_acc < full_acc - 0.1


def test_assemble_oof_deterministic_across_thread_counts(noisy_clf):
    lib = SpecialistLibrary((
        SpecialistConfig("Tree", "random_forest", seed=3),
        SpecialistConfig("Neural", "mlp_64_32", seed=4),
    ))
    folds = make_folds(noisy_clf, 4, seed=11)
    a = assemble_oof(lib, noisy_clf, folds, n_jobs=1)
    b = assemble_oof(lib, noisy_clf, folds, n_jobs=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_assemble_oof_fold_scalers_fit_on_train_only(noisy_clf):
    lib = SpecialistLibrary((
        SpecialistConfig("Linear", "logistic_c1", seed=1),
        SpecialistConfig("Instance", "knn_5", seed=2),
    ))
    folds = make_folds(noisy_clf, 5, seed=4)
    oof = assemble_oof(lib, noisy_clf, folds)
    for v in range(5):
        tr = folds.complement_indices(v)
        np.testing.assert_allclose(
            oof.fold_scalers[v].mean, noisy_clf.features[tr].mean(axis=0), atol=1e-12
        )


def test_external_predictions_pass_through(noisy_clf):
    rows = np.full((180, 3), 1.0 / 3.0)
    rows[:, 0] = 0.5
    rows[:, 1:] = 0.25
    ext = ExternalPredictions("oracle_feed", TaskKind.CLASSIFICATION, rows)
    lib = SpecialistLibrary((
        SpecialistConfig("Instance", "knn_5", seed=2),
        SpecialistConfig("External", "oracle_feed"),
    ))
    folds = make_folds(noisy_clf, 4, seed=3)
    oof = assemble_oof(lib, noisy_clf, folds, external={"oracle_feed": ext})
    np.testing.assert_array_equal(oof.values[:, 1, :], rows)


def test_external_predictions_missing_mapping(noisy_clf):
    lib = SpecialistLibrary((
        SpecialistConfig("Instance", "knn_5", seed=2),
        SpecialistConfig("External", "oracle_feed"),
    ))
    folds = make_folds(noisy_clf, 4, seed=3)
    with pytest.raises(ConfigError):
        assemble_oof(lib, noisy_clf, folds, external={})


def test_external_predictions_shape_mismatch(noisy_clf):
    ext = ExternalPredictions("oracle_feed", TaskKind.CLASSIFICATION, np.ones((10, 3)) / 3)
    lib = SpecialistLibrary((
        SpecialistConfig("Instance", "knn_5", seed=2),
        SpecialistConfig("External", "oracle_feed"),
    ))
    folds = make_folds(noisy_clf, 4, seed=3)
    with pytest.raises(DimensionError):
        assemble_oof(lib, noisy_clf, folds, external={"oracle_feed": ext})


def test_assembly_failure_names_the_specialist():
    """A fold whose training partition holds one class fails as AssemblyError."""
    rng = np.random.default_rng(0)
    data = make_classification_dataset(
        rng.normal(size=(9, 2)), np.array([0] * 8 + [1]), n_classes=2
    )
    lib = SpecialistLibrary((
        SpecialistConfig("Instance", "knn_5", seed=1),
        SpecialistConfig("Tree", "tree_gini", seed=2),
    ))
    with pytest.warns(UserWarning):
        folds = make_folds(data, 2, seed=0)
    with pytest.raises(AssemblyError, match="knn_5|tree_gini"):
        assemble_oof(lib, data, folds)


def test_oof_tensor_validation():
    values = np.ones((4, 2, 1))
    cov = np.ones((4, 2), dtype=bool)
    t = OofPredictionTensor(values, cov, ("a", "b"), TaskKind.REGRESSION, ())
    assert (t.n, t.K, t.C) == (4, 2, 1)
    with pytest.raises(DimensionError):
        OofPredictionTensor(np.ones((4, 2)), cov, ("a", "b"), TaskKind.REGRESSION, ())
