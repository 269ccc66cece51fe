"""Fit the convex ensemble on a small problem and read its weights.

The learner cross-validates every specialist in the default library,
solves for the simplex weights that minimize the pooled out-of-fold
squared error, then refits everything on the full data. Run it:

    python3 demos/quickstart.py
"""

import numpy as np

from softlearn.core import TaskKind
from softlearn.datasets import SyntheticSpec, generate
from softlearn.ensemble import fit_soft_learner, predict
from softlearn.specialists import default_library

train = generate(SyntheticSpec("moons", n=600, d=2, noise=0.25, seed=7, name="train"))
test = generate(SyntheticSpec("moons", n=2000, d=2, noise=0.25, seed=8, name="test"))

library = default_library(TaskKind.CLASSIFICATION, master_seed=42)
model = fit_soft_learner(library, train, master_seed=42)

print("specialist weights (zeros pruned by the simplex solution):")
for variant, weight in zip(model.variants(), model.weights.alpha):
    marker = "*" if weight > 0.01 else " "
    print(f"  {marker} {variant:<14} {weight:.4f}")

ens_acc = float((predict(model, test.features) == test.y()).mean())
print(f"\nensemble test accuracy: {ens_acc:.4f}")

# each specialist alone, fitted on the same data, for contrast
from softlearn.core import (
    apply_standardizer, argmax_rows, fit_standardizer, make_classification_dataset,
)
from softlearn.specialists import fit

scaler = fit_standardizer(train.features)
xtr = apply_standardizer(scaler, train.features)
xte = apply_standardizer(scaler, test.features)
std_train = make_classification_dataset(xtr, train.y(), n_classes=2, name="std")
best = ("", 0.0)
for config in library:
    single = fit(config, std_train)
    acc = float((argmax_rows(single.predict_proba(xte)) == test.y()).mean())
    if acc > best[1]:
        best = (config.variant, acc)
print(f"best single specialist:  {best[1]:.4f} ({best[0]})")
print(f"inner-CV objective {model.solve_report.objective:.5f} vs best vertex "
      f"{min(model.solve_report.vertex_objectives):.5f}")
