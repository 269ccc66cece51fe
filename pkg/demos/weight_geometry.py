"""How the simplex solution moves as the candidate pool changes.

Three small least-squares problems, solved exactly the same way the
ensemble solves its out-of-fold problem:

  1. two complementary columns -> an interior blend beats both vertices
  2. a duplicated column -> flat valley, flagged rank-deficient
  3. appending a strong column -> the optimum can only improve
"""

import numpy as np

from softlearn.core import TaskKind
from softlearn.simplexopt import FlattenedLS, solve_simplex_ls

rng = np.random.default_rng(3)
n = 200
signal = rng.normal(size=n)

def solve(columns, label):
    design = np.column_stack(columns)
    problem = FlattenedLS(design, signal, (n, design.shape[1], 1), TaskKind.REGRESSION)
    report = solve_simplex_ls(problem)
    weights = ", ".join(f"{w:.3f}" for w in report.solution.alpha)
    print(f"{label}:")
    print(f"  weights   [{weights}]")
    print(f"  objective {report.objective:.5f}   "
          f"vertices {[round(v, 5) for v in report.vertex_objectives]}   "
          f"rank_deficient={report.rank_deficient}")
    return report

# two half-informed specialists: each sees the signal plus its own noise
a = signal + 0.8 * rng.normal(size=n)
b = signal + 0.8 * rng.normal(size=n)
first = solve([a, b], "complementary pair")

# the same specialist twice: any split of weight between the copies is
# optimal, so the solver reports the degeneracy instead of pretending
# the returned split is meaningful
solve([a, a.copy()], "duplicated column")

# a third, better specialist joins the pool
c = signal + 0.3 * rng.normal(size=n)
grown = solve([a, b, c], "after adding a stronger column")

drop = first.objective - grown.objective
print(f"\nobjective improved by {drop:.5f} when the pool grew "
      "(it can never get worse).")
