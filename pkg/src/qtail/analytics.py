"""Evaluation statistics: per-label and mean AUROC, paired t-tests across
seeds, percent difference in AUROC, and volcano-plot data emission.

AUROC uses the rank-based (Mann-Whitney) computation with half-credit for
ties. The t-distribution survival function is evaluated through the
regularized incomplete beta function (Lentz continued fraction, documented
tolerance 1e-10), so no external statistics package is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTestError, UndefinedMetricError

SIGNIFICANCE_LEVEL = 0.05

_BETACF_TOL = 1e-10
_BETACF_MAX_ITER = 500


@dataclass
class ScoredLabelSet:
    scores: np.ndarray
    truths: np.ndarray
    label: str = ""


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties receiving the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, truths, label: str = "") -> float:
    """Rank-based AUROC with tie correction: (concordant + tied/2)/(pos*neg)."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths)
    if scores.shape != truths.shape or scores.ndim != 1:
        raise ValueError("scores and truths must be equal-length vectors")
    pos = truths == 1
    n_pos = int(pos.sum())
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        name = f" for label {label!r}" if label else ""
        raise UndefinedMetricError(
            f"AUROC undefined{name}: needs at least one positive and one negative"
        )
    ranks = _average_ranks(scores)
    r_pos = ranks[pos].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc_of(set_: ScoredLabelSet) -> float:
    return auroc(set_.scores, set_.truths, label=set_.label)


def mean_auroc(per_label) -> float:
    """Unweighted mean; propagates undefined labels by name.

    Accepts a mapping label -> AUROC or a plain sequence.
    """
    if hasattr(per_label, "items"):
        items = list(per_label.items())
    else:
        items = [(str(i), v) for i, v in enumerate(per_label)]
    if not items:
        raise UndefinedMetricError("mean AUROC of an empty label set")
    for name, value in items:
        if value is None or not np.isfinite(value):
            raise UndefinedMetricError(f"AUROC undefined for label {name!r}")
    return float(np.mean([v for _, v in items]))


def pct_diff_auroc(a_cdl: float, a_dqc: float) -> float:
    """2 * (a_cdl - a_dqc) / (a_cdl + a_dqc)."""
    if a_cdl == 0 and a_dqc == 0:
        raise UndefinedMetricError("percent difference undefined for two zero AUROCs")
    for name, v in (("a_cdl", a_cdl), ("a_dqc", a_dqc)):
        if not 0 < v <= 1:
            raise ValueError(f"{name}={v} outside (0, 1]")
    return 2.0 * (a_cdl - a_dqc) / (a_cdl + a_dqc)


# ---------------------------------------------------------------------------
# t distribution via the regularized incomplete beta function
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_TOL:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: int) -> float:
    """P(|T_df| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(x, y) -> tuple:
    """Two-sided paired t-test on x - y; returns (t, p) with k-1 dof."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    k = len(x)
    if k < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = x - y
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateTestError(
            "zero-variance differences: paired t statistic undefined"
        )
    t = float(d.mean() / (sd / math.sqrt(k)))
    return t, t_two_sided_p(t, k - 1)


# ---------------------------------------------------------------------------
# Comparisons and volcano data
# ---------------------------------------------------------------------------


@dataclass
class PairedComparison:
    label: str
    task: str
    auroc_cdl: np.ndarray  # per-seed
    auroc_dqc: np.ndarray  # per-seed, paired by position
    t_stat: float
    p_value: float
    pct_diff: float

    @classmethod
    def compute(cls, label, task, auroc_cdl, auroc_dqc) -> "PairedComparison":
        a = np.asarray(auroc_cdl, dtype=np.float64)
        b = np.asarray(auroc_dqc, dtype=np.float64)
        if a.shape != b.shape or len(a) < 2:
            raise ValueError("need equal-length per-seed AUROC lists (k >= 2)")
        t, p = paired_t_test(a, b)
        return cls(
            label=label,
            task=task,
            auroc_cdl=a,
            auroc_dqc=b,
            t_stat=t,
            p_value=p,
            pct_diff=pct_diff_auroc(float(a.mean()), float(b.mean())),
        )


def volcano_data(comparisons) -> tuple:
    """Rows for a volcano plot plus the significance threshold metadata.

    Each row: label, task, pct_diff, p_value, log2_pct_diff (None when the
    diff is not positive, flagged rather than dropped), neg_log10_p.
    """
    rows = []
    for comp in comparisons:
        p = comp.p_value
        if not 0.0 < p <= 1.0:
            raise ValueError(f"invalid p-value {p} for label {comp.label!r}")
        transformable = comp.pct_diff > 0
        rows.append(
            {
                "label": comp.label,
                "task": comp.task,
                "pct_diff": comp.pct_diff,
                "p_value": p,
                "log2_pct_diff": math.log2(comp.pct_diff) if transformable else None,
                "neg_log10_p": -math.log10(p),
                "transformable": transformable,
            }
        )
    threshold = -math.log10(SIGNIFICANCE_LEVEL)
    return rows, threshold
