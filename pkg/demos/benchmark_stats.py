"""A miniature benchmark run, end to end, with the rank statistics.

Runs a two-dataset manifest under the same orchestration as the full
benchmark (outer 5-fold CV per cell, canonical JSON store, analysis
CSVs), then walks through the comparison statistics on the score
matrix. The full 12-dataset run is the same thing at scale:

    softlearn-bench run   --seed 42 --out bench_out
    softlearn-bench report --out bench_out
    softlearn-bench audit | tail -1
"""

import tempfile
from pathlib import Path

from softlearn.bench import BenchConfig, emit_report, run_benchmark
from softlearn.datasets import SyntheticSpec, save_manifest
from softlearn.stats import (
    ScoreMatrix, friedman_test, nemenyi_cd, rank_methods, wilcoxon_signed_rank,
)

root = Path(tempfile.mkdtemp(prefix="softlearn_demo_"))
save_manifest(
    [
        SyntheticSpec("gaussian_classes", n=240, d=6, n_classes=3, noise=1.2,
                      seed=5, name="blobs", params={"separation": 2.2}),
        SyntheticSpec("friedman1", n=240, d=10, noise=1.0, seed=6, name="friedman"),
    ],
    root / "manifest.json",
)
config = BenchConfig(
    manifest=str(root / "manifest.json"),
    classification_baselines=("logistic_c1", "random_forest", "hist_gb"),
    regression_baselines=("ridge", "random_forest", "hist_gb"),
    best_of_3_classification=(),
    best_of_3_regression=(),
    outer_folds=5,
    seed=42,
    out_dir=str(root / "store"),
)

print("running 10 cells (2 datasets x 5 methods)...")
store = run_benchmark(config)
store.write(config.out_dir)
for path in emit_report(store, root / "report"):
    print(f"  wrote {path.name}")

print("\nscore matrix (mean over the 5 outer folds):")
for ds in store.datasets:
    cells = {m: store.get(ds, m).mean for m in store.methods_for(ds)}
    print(f"  {ds}: " + "  ".join(f"{m}={v:.3f}" for m, v in cells.items()))

# rank-based comparison over the methods present on both tasks
common = ["soft_learning", "random_forest", "hist_gb"]
matrix = [[store.get(ds, m).mean for ds in store.datasets] for m in common]
table = rank_methods(ScoreMatrix(matrix, tuple(common), tuple(store.datasets)))
print("\nmean ranks:", dict(zip(common, table.mean_ranks.round(2))))

fr = friedman_test(table)
print(f"Friedman chi2={fr.statistic:.3f} dof={fr.dof} p={fr.p_value:.3f} "
      "(two datasets is far too few to reject anything)")
print(f"Nemenyi critical difference at k=3, N=2: {nemenyi_cd(3, 2):.2f}")

a = [store.get(ds, "soft_learning").mean for ds in store.datasets]
b = [store.get(ds, "hist_gb").mean for ds in store.datasets]
w = wilcoxon_signed_rank(a, b, "two-sided")
print(f"Wilcoxon soft_learning vs hist_gb: W={w.W} p={w.p_value:.3f}")
print(f"\nstore and CSVs under {root}")
