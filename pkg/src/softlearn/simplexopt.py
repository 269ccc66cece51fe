"""Simplex-constrained least squares for specialist combination weights.

Minimizes (1/n) * ||target - design @ alpha||^2 over the probability
simplex. The method is projected gradient descent (Euclidean projection by
the sorted-threshold rule) with exact line search for the quadratic and an
active-set polish that solves the equality-constrained system on the
current support. Any method reaching the unique optimum would do; the
contract is the KKT certificate: every carried weight's partial derivative
equals the minimum gradient entry within 1e-6, every zeroed weight's sits
no more than 1e-6 below it.

The objective divides by n (the sample count), not n*C; the argmin is
unaffected and reported objectives follow this convention everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelVector, SoftlearnError, TaskKind, one_hot
from .cv import CoverageError, OofPredictionTensor

ITERATION_BUDGET = 10_000
KKT_EXIT_TOL = 1e-8
KKT_CERT_TOL = 1e-6
ACTIVITY_TOL = 1e-8
WEIGHT_FLOOR = 1e-10
RANK_TOL = 1e-8
CURVATURE_TOL = 1e-6


class NumericError(SoftlearnError):
    """Non-finite values where finite numerics are required."""


class NonConvergenceError(SoftlearnError):
    """KKT certificate unmet within the iteration budget; carries the best iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class WeightVector:
    """A point on the probability simplex."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha, dtype=np.float64).copy()
        if arr.ndim != 1 or arr.size < 1:
            raise NumericError("weights must form a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise NumericError("weights must be finite")
        if arr.min() < -1e-12:
            raise NumericError(f"negative weight {arr.min()} below the -1e-12 clamp")
        arr[arr < 0] = 0.0
        if abs(arr.sum() - 1.0) > 1e-9:
            raise NumericError(f"weights sum to {arr.sum()}, not 1")
        arr.flags.writeable = False
        object.__setattr__(self, "alpha", arr)

    def __len__(self):
        return self.alpha.shape[0]

    def __iter__(self):
        return iter(self.alpha)


@dataclass(frozen=True)
class FlattenedLS:
    """The (n*C) x K least-squares view of an out-of-fold tensor."""

    design: np.ndarray
    target: np.ndarray
    provenance: tuple
    task: TaskKind

    def __post_init__(self):
        d = np.asarray(self.design, dtype=np.float64).copy()
        t = np.asarray(self.target, dtype=np.float64).copy()
        if d.ndim != 2 or t.ndim != 1 or d.shape[0] != t.shape[0]:
            raise NumericError("design must be (n*C) x K with matching target length")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(t))):
            raise NumericError("flattened problem contains non-finite entries")
        n, k, c = self.provenance
        if d.shape != (n * c, k):
            raise NumericError("provenance does not match design shape")
        if self.task is TaskKind.CLASSIFICATION:
            if d.min() < -1e-9 or d.max() > 1 + 1e-9:
                raise NumericError("classification design entries must lie in [0, 1]")
            if not np.all((t == 0.0) | (t == 1.0)):
                raise NumericError("classification targets must be 0/1 indicators")
        d.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "design", d)
        object.__setattr__(self, "target", t)

    @property
    def n(self) -> int:
        return self.provenance[0]

    @property
    def K(self) -> int:
        return self.provenance[1]


@dataclass(frozen=True)
class SolveReport:
    """Solution plus per-initialization trail for uniqueness verification."""

    solution: WeightVector
    objective: float
    per_init_solutions: tuple
    per_init_objectives: tuple
    iterations: int
    converged: bool
    rank_deficient: bool
    vertex_objectives: tuple


def flatten(tensor: OofPredictionTensor, labels: LabelVector) -> FlattenedLS:
    """Reshape an n x K x C tensor into the (n*C) x K design, one-hot target.

    Row (i*C + c) of the design holds P[i][k][c] across k. Regression keeps
    C = 1 with the raw targets.
    """
    if not tensor.coverage.all():
        raise CoverageError("tensor has unwritten cells; cannot flatten")
    if tensor.n != len(labels):
        raise NumericError("tensor and labels disagree on n")
    n, k, c = tensor.n, tensor.K, tensor.C
    design = tensor.values.transpose(0, 2, 1).reshape(n * c, k)
    if labels.task is TaskKind.CLASSIFICATION:
        if labels.n_classes != c:
            raise NumericError("tensor class count does not match labels")
        target = one_hot(labels).reshape(-1)
    else:
        if c != 1:
            raise NumericError("regression tensors must have C = 1")
        target = labels.values.copy()
    return FlattenedLS(design, target, (n, k, c), labels.task)


def objective_value(problem: FlattenedLS, alpha) -> float:
    """(1/n) * sum of squared residuals of the convex combination."""
    a = alpha.alpha if isinstance(alpha, WeightVector) else np.asarray(alpha, dtype=np.float64)
    if a.shape[0] != problem.K:
        raise NumericError(f"alpha has length {a.shape[0]}, expected {problem.K}")
    resid = problem.target - problem.design @ a
    return float(resid @ resid) / problem.n


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorted threshold)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho_candidates = u + (1.0 - css) / np.arange(1, v.size + 1)
    rho = np.max(np.flatnonzero(rho_candidates > 0)) + 1
    theta = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def default_initializations(K: int, vertex_objectives) -> list:
    """Uniform, K concentrated (0.9 / spread), and one accuracy-proportional.

    Exact duplicates collapse, so K=1 yields a single point.
    """
    if K < 1:
        raise NumericError("K must be at least 1")
    vo = np.asarray(vertex_objectives, dtype=np.float64)
    if vo.shape != (K,):
        raise NumericError(f"need {K} vertex objectives, got shape {vo.shape}")
    points = [np.full(K, 1.0 / K)]
    for k in range(K):
        p = np.full(K, 0.1 / (K - 1)) if K > 1 else np.zeros(K)
        p[k] = 0.9 if K > 1 else 1.0
        points.append(p)
    inv = 1.0 / (vo + 1e-12)
    points.append(inv / inv.sum())
    out = []
    for p in points:
        if not any(np.array_equal(p, q.alpha) for q in out):
            out.append(WeightVector(p))
    return out


def _kkt_ok(alpha: np.ndarray, grad: np.ndarray, tol: float) -> bool:
    mu = grad.min()
    active = alpha > ACTIVITY_TOL
    return bool(np.all(np.abs(grad[active] - mu) <= tol))


def _polish(alpha, gram, lin, K):
    """Active-set refinement: exact equality-constrained solve on the support.

    Drops negative entries, re-adds zero-weight coordinates whose gradient
    dips below the support's, and repeats until the global KKT conditions
    hold in exact form. Returns the refined point (never worse in exact
    arithmetic).
    """
    support = set(np.flatnonzero(alpha > WEIGHT_FLOOR).tolist()) or {int(np.argmin(lin))}
    for _ in range(4 * K + 8):
        s = sorted(support)
        gs = gram[np.ix_(s, s)]
        size = len(s)
        kkt = np.zeros((size + 1, size + 1))
        kkt[:size, :size] = gs
        kkt[:size, size] = 1.0
        kkt[size, :size] = 1.0
        rhs = np.append(lin[s], 1.0)
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        w = sol[:size]
        if w.min() < -1e-12:
            support.discard(s[int(np.argmin(w))])
            if not support:
                support = {int(np.argmin(lin))}
            continue
        cand = np.zeros(K)
        cand[s] = np.maximum(w, 0.0)
        total = cand.sum()
        if total <= 0:
            break
        cand /= total
        grad = gram @ cand - lin
        mu_support = grad[s].min()
        outside = [k for k in range(K) if k not in support]
        if outside:
            worst = min(outside, key=lambda k: grad[k])
            if grad[worst] < mu_support - 1e-12:
                support.add(worst)
                continue
        return cand
    return None


def _solve_single(init, gram, lin, step, obj_fn, budget):
    """PGD with exact line search from one initialization; polish periodically."""
    alpha = project_simplex(init)
    iterations = 0
    while iterations < budget:
        for _ in range(50):
            if iterations >= budget:
                break
            grad = gram @ alpha - lin
            if _kkt_ok(alpha, grad, KKT_EXIT_TOL):
                return alpha, iterations, True
            z = project_simplex(alpha - step * grad)
            d = z - alpha
            if np.abs(d).max() < 1e-17:
                break
            denom = d @ (gram @ d)
            beta = 1.0 if denom <= 0 else min(1.0, max(0.0, -(grad @ d) / denom))
            alpha = alpha + beta * d
            iterations += 1
        polished = _polish(alpha, gram, lin, alpha.shape[0])
        if polished is not None and obj_fn(polished) <= obj_fn(alpha) + 1e-15:
            alpha = polished
        grad = gram @ alpha - lin
        if _kkt_ok(alpha, grad, KKT_EXIT_TOL):
            return alpha, iterations, True
        iterations += 1
    return alpha, iterations, False


def solve_simplex_ls(problem: FlattenedLS, initializations=None) -> SolveReport:
    """Solve for the optimal convex combination with a KKT certificate.

    Runs every initialization (the K+2 default recipe when none are given),
    keeps the best objective (ties broken by lowest initialization index),
    snaps weights below 1e-10 to zero with renormalization, and verifies
    the certificate on the returned point. Vertex dominance is enforced
    exactly: if some vertex e_k were to edge out the polished solution
    numerically, the solution becomes that vertex.
    """
    D = problem.design
    t = problem.target
    n = problem.n
    K = problem.K
    if K == 0:
        raise NumericError("cannot solve with zero specialists")

    scale = 2.0 / n
    gram = scale * (D.T @ D)
    lin = scale * (D.T @ t)
    vertex_obj = np.array([objective_value(problem, np.eye(K)[k]) for k in range(K)])

    if initializations is None:
        initializations = default_initializations(K, vertex_obj)
    if not initializations:
        raise NumericError("need at least one initialization")

    # Weight uniqueness needs more than nonzero singular values: when the
    # per-sample curvature along the weakest direction falls under
    # CURVATURE_TOL, distinct supports can tie in objective to machine
    # precision, so the weights are reported as non-unique.
    sing = np.linalg.svd(D, compute_uv=False) if min(D.shape) else np.zeros(1)
    curvature = scale * float(sing.min()) ** 2
    rank_deficient = bool(
        D.shape[1] > np.sum(sing > RANK_TOL) or curvature <= CURVATURE_TOL
    )

    eigmax = float(np.linalg.eigvalsh(gram)[-1]) if K > 1 else float(gram[0, 0])
    step = 1.0 / eigmax if eigmax > 1e-300 else 1.0

    obj_fn = lambda a: objective_value(problem, a)
    solutions, objectives, iter_counts, flags = [], [], [], []
    for w in initializations:
        a0 = w.alpha if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
        if a0.shape[0] != K:
            raise NumericError("initialization length mismatch")
        alpha, its, ok = _solve_single(a0, gram, lin, step, obj_fn, ITERATION_BUDGET)
        solutions.append(alpha)
        objectives.append(obj_fn(alpha))
        iter_counts.append(its)
        flags.append(ok)

    # argmin returns the first minimizer, which is the tie rule: lowest index.
    best_idx = int(np.argmin(objectives))
    best = solutions[best_idx]

    # Weight floor: snap dust to zero and renormalize.
    snapped = best.copy()
    snapped[snapped < WEIGHT_FLOOR] = 0.0
    total = snapped.sum()
    if total <= 0:
        snapped = best.copy()
    else:
        snapped /= total
    snapped_obj = obj_fn(snapped)

    # Exact vertex dominance: a vertex is a feasible point, so the returned
    # objective must not exceed any vertex objective as floats.
    v_best = int(np.argmin(vertex_obj))
    if snapped_obj > vertex_obj[v_best]:
        snapped = np.eye(K)[v_best]
        snapped_obj = vertex_obj[v_best]

    grad = gram @ snapped - lin
    certified = _kkt_ok(snapped, grad, KKT_CERT_TOL)
    report = SolveReport(
        solution=WeightVector(snapped),
        objective=snapped_obj,
        per_init_solutions=tuple(WeightVector(project_simplex(s)) for s in solutions),
        per_init_objectives=tuple(objectives),
        iterations=int(sum(iter_counts)),
        converged=bool(certified),
        rank_deficient=rank_deficient,
        vertex_objectives=tuple(vertex_obj.tolist()),
    )
    if not certified:
        raise NonConvergenceError(
            "KKT certificate unmet within the iteration budget", report=report
        )
    return report
