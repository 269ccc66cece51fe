"""Metrics and the nonparametric model-comparison protocol.

Scores become per-dataset ranks (average ranks on ties), ranks feed the
Friedman chi-square test, significant omnibus results get a Nemenyi
critical difference, and per-pair comparisons use the Wilcoxon signed-rank
test (exact sign enumeration up to 20 effective samples, normal
approximation with tie and continuity corrections beyond) plus win-tie-loss
counts at a 0.001 score margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .core import DimensionError, SoftlearnError


class DegenerateDataError(SoftlearnError):
    """Inputs carry no usable signal (constant truth, all-zero differences)."""


class ProtocolError(SoftlearnError):
    """The requested test does not apply (e.g. Friedman below 3 methods)."""


def accuracy(predicted, truth) -> float:
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1 or p.size < 1:
        raise DimensionError("predicted and truth must be equal-length vectors")
    return float((p == t).mean())


def r_squared(predicted, truth) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or p.size < 1:
        raise DimensionError("predicted and truth must be equal-length vectors")
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot < 1e-300:
        raise DegenerateDataError("R^2 is undefined for constant truth")
    ss_res = float(((t - p) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class ScoreMatrix:
    """methods x datasets score matrix; complete by construction."""

    scores: np.ndarray
    method_names: tuple
    dataset_names: tuple
    higher_is_better: bool = True

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64).copy()
        if arr.ndim != 2:
            raise DimensionError("scores must be methods x datasets")
        if arr.shape != (len(self.method_names), len(self.dataset_names)):
            raise DimensionError("score matrix shape does not match the names")
        if not np.all(np.isfinite(arr)):
            raise DegenerateDataError("score matrix has missing or non-finite cells")
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "method_names", tuple(self.method_names))
        object.__setattr__(self, "dataset_names", tuple(self.dataset_names))

    @property
    def k(self) -> int:
        return self.scores.shape[0]

    @property
    def N(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class RankTable:
    """Per-dataset ranks (1 = best) and mean rank per method."""

    ranks: np.ndarray
    mean_ranks: np.ndarray
    method_names: tuple

    def __post_init__(self):
        r = np.asarray(self.ranks, dtype=np.float64).copy()
        m = np.asarray(self.mean_ranks, dtype=np.float64).copy()
        k = r.shape[0]
        expected = k * (k + 1) / 2.0
        if not np.allclose(r.sum(axis=0), expected, atol=1e-9):
            raise ProtocolError("each dataset's ranks must sum to k(k+1)/2")
        r.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "ranks", r)
        object.__setattr__(self, "mean_ranks", m)
        object.__setattr__(self, "method_names", tuple(self.method_names))

    @property
    def k(self) -> int:
        return self.ranks.shape[0]

    @property
    def N(self) -> int:
        return self.ranks.shape[1]


def rank_methods(scores: ScoreMatrix) -> RankTable:
    """Rank methods per dataset, best = 1, ties averaged."""
    s = scores.scores
    oriented = -s if scores.higher_is_better else s
    ranks = np.empty_like(s)
    for j in range(scores.N):
        ranks[:, j] = rankdata(oriented[:, j], method="average")
    return RankTable(ranks, ranks.mean(axis=1), scores.method_names)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    dof: int
    p_value: float


def friedman_test(ranks: RankTable) -> FriedmanResult:
    """Friedman chi-square from mean ranks (the classical statistic).

    chi2_F = 12N/(k(k+1)) * [sum_j Rbar_j^2 - k(k+1)^2/4], p from the
    chi-square upper tail with k-1 degrees of freedom. No tie correction;
    matches the protocol computed from published mean ranks.
    """
    k = ranks.k
    n = ranks.N
    if k < 3:
        raise ProtocolError("Friedman needs at least 3 methods; use Wilcoxon for 2")
    if n < 2:
        raise ProtocolError("Friedman needs at least 2 datasets")
    rbar = ranks.mean_ranks
    stat = 12.0 * n / (k * (k + 1)) * (float(rbar @ rbar) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    return FriedmanResult(stat, k - 1, float(chi2.sf(stat, k - 1)))


# Studentized range upper quantiles at infinite dof divided by sqrt(2),
# k = 2..20. The usual critical-difference table for the Nemenyi test.
_NEMENYI_Q = {
    0.05: (
        1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878,
        3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
        3.426041, 3.458425, 3.488685, 3.517073, 3.543799,
    ),
    0.10: (
        1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884,
        2.854606, 2.919889, 2.977768, 3.029694, 3.076733, 3.119693, 3.159199,
        3.195743, 3.229723, 3.261461, 3.291224, 3.319233,
    ),
}


def nemenyi_cd(k: int, N: int, alpha: float = 0.05) -> float:
    """Critical difference q_alpha * sqrt(k(k+1)/(6N)) for mean-rank gaps."""
    if not 2 <= k <= 20:
        raise ProtocolError("the embedded q table covers k in [2, 20]")
    key = round(alpha, 2)
    if key not in _NEMENYI_Q:
        raise ProtocolError("alpha must be 0.05 or 0.10")
    q = _NEMENYI_Q[key][k - 2]
    return float(q * np.sqrt(k * (k + 1) / (6.0 * N)))


@dataclass(frozen=True)
class WilcoxonResult:
    W: float
    n_effective: int
    p_value: float
    sidedness: str


def _exact_tail_counts(double_ranks: np.ndarray) -> np.ndarray:
    """Counts of sign assignments by doubled positive-rank sum (DP)."""
    total = int(double_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in double_ranks:
        r = int(r)
        counts[r:] += counts[: counts.size - r].copy()
    return counts


def wilcoxon_signed_rank(a, b, sidedness: str = "two-sided") -> WilcoxonResult:
    """Paired signed-rank test of a against b.

    Zero differences are dropped; |differences| get average ranks; W is the
    sum of ranks where a > b. With 20 or fewer effective pairs the p-value
    enumerates all sign assignments exactly; beyond that a normal
    approximation with tie correction and a 0.5 continuity correction is
    used. ``sidedness``: "greater" (a tends above b), "less", "two-sided".
    """
    if sidedness not in ("greater", "less", "two-sided"):
        raise ProtocolError(f"unknown sidedness {sidedness!r}")
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionError("paired score vectors must have equal length")
    d = av - bv
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateDataError("all paired differences are zero")
    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())

    if n <= 20:
        double = np.round(2.0 * ranks).astype(np.int64)
        counts = _exact_tail_counts(double)
        total = counts.sum()
        obs = int(round(2.0 * w_plus))
        p_greater = float(counts[obs:].sum() / total)
        p_less = float(counts[: obs + 1].sum() / total)
        if sidedness == "greater":
            p = p_greater
        elif sidedness == "less":
            p = p_less
        else:
            p = min(1.0, 2.0 * min(p_greater, p_less))
    else:
        mu = n * (n + 1) / 4.0
        tie_counts = np.unique(ranks, return_counts=True)[1]
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - float(
            ((tie_counts**3 - tie_counts) / 48.0).sum()
        )
        sigma = np.sqrt(sigma2)
        if sidedness == "greater":
            p = float(norm.sf((w_plus - mu - 0.5) / sigma))
        elif sidedness == "less":
            p = float(norm.cdf((w_plus - mu + 0.5) / sigma))
        else:
            shift = 0.5 if w_plus > mu else -0.5 if w_plus < mu else 0.0
            z = (w_plus - mu - shift) / sigma
            p = min(1.0, 2.0 * float(norm.sf(abs(z))))
    return WilcoxonResult(w_plus, n, p, sidedness)


def win_tie_loss(a, b, tie_margin: float = 0.001) -> tuple:
    """Counts of a beating b, tying within the margin, and losing."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionError("paired score vectors must have equal length")
    diff = av - bv
    ties = int((np.abs(diff) <= tie_margin).sum())
    wins = int((diff > tie_margin).sum())
    losses = int((diff < -tie_margin).sum())
    return wins, ties, losses
