"""Disagreement as a confidence signal, and what abstention buys.

The ensemble's uncertainty score V(x) is the weighted spread of the
specialists around the blended prediction. Where the specialists agree,
V is near zero; where they split, V is large, and that is where the
mistakes cluster. Refusing to answer above a V threshold then trades
coverage for accuracy.
"""

import numpy as np

from softlearn.core import TaskKind
from softlearn.datasets import SyntheticSpec, generate
from softlearn.ensemble import fit_soft_learner, predict, selective_sweep, uncertainty
from softlearn.specialists import default_library

train = generate(SyntheticSpec("moons", n=500, d=2, noise=0.3, seed=21))
held = generate(SyntheticSpec("moons", n=1500, d=2, noise=0.3, seed=22))

model = fit_soft_learner(
    default_library(TaskKind.CLASSIFICATION, master_seed=1), train, master_seed=1
)

v = uncertainty(model, held.features)
hits = predict(model, held.features) == held.y()
print(f"full accuracy        {hits.mean():.4f}")
print(f"mean V on correct    {v[hits].mean():.5f}")
print(f"mean V on mistakes   {v[~hits].mean():.5f}")

print("\ncoverage/accuracy along the V-decile threshold grid:")
print(f"  {'tau':>9}  {'coverage':>8}  {'accuracy':>8}")
for row in selective_sweep(model, held.features, held.y()):
    acc = "-" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
    print(f"  {row['tau']:>9.5f}  {row['coverage']:>8.2f}  {acc:>8}")
