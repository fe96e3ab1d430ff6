import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from qtail.analytics import (
    PairedComparison,
    auroc,
    mean_auroc,
    paired_t_test,
    pct_diff_auroc,
    regularized_incomplete_beta,
    t_two_sided_p,
    volcano_data,
)
from qtail.errors import DegenerateTestError, UndefinedMetricError


def auroc_pair_counting(scores, truths):
    """Exhaustive pair-counting oracle in exact rational arithmetic."""
    pos = [Fraction(s) for s, t in zip(scores, truths) if t == 1]
    neg = [Fraction(s) for s, t in zip(scores, truths) if t == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                total += 1
            elif p == n:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


def t_pdf(x, df):
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(
        df * math.pi
    )
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def t_two_sided_p_quadrature(t, df):
    tail, _ = integrate.quad(lambda x: t_pdf(x, df), abs(t), np.inf)
    return 2 * tail


class TestAuroc:
    def test_worked_example(self):
        scores = [0.1, 0.4, 0.35, 0.8]
        truths = [0, 0, 1, 1]
        expected = float(auroc_pair_counting(scores, truths))
        assert expected == 0.75
        assert auroc(scores, truths) == expected

    def test_perfect_separation(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_tied(self):
        assert auroc([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1]) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(UndefinedMetricError, match="positive"):
            auroc([0.1, 0.2], [1, 1], label="effusionish")

    def test_matches_pair_counting_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(2, 13))
            # Quantized scores force plenty of ties.
            scores = (rng.integers(0, 5, size=n) / 4).tolist()
            truths = rng.integers(0, 2, size=n).tolist()
            if sum(truths) in (0, n):
                continue
            assert auroc(scores, truths) == float(auroc_pair_counting(scores, truths))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(4, 13))
            scores = rng.normal(size=n)
            truths = rng.integers(0, 2, size=n)
            if truths.sum() in (0, n):
                continue
            base = auroc(scores, truths)
            assert auroc(np.exp(scores), truths) == base
            assert auroc(3.0 * scores + 11.0, truths) == base
            assert auroc(np.arctan(scores), truths) == base


class TestMeanAuroc:
    def test_two_labels(self):
        assert mean_auroc({"a": 1.0, "b": 0.5}) == 0.75

    def test_single_label(self):
        assert mean_auroc([0.62]) == 0.62

    def test_uniform(self):
        assert mean_auroc([0.7] * 8) == pytest.approx(0.7, abs=1e-15)

    def test_undefined_label_propagates_name(self):
        with pytest.raises(UndefinedMetricError, match="hernia"):
            mean_auroc({"infiltration": 0.8, "hernia": float("nan")})


class TestPctDiff:
    def test_reported_values(self):
        assert abs(pct_diff_auroc(0.77, 0.70) - 0.095) < 1e-3
        assert abs(pct_diff_auroc(0.80, 0.74) - 0.078) < 1e-3
        assert abs(pct_diff_auroc(0.78, 0.73) - 0.066) < 1e-3

    def test_equal_inputs_zero(self):
        assert pct_diff_auroc(0.5, 0.5) == 0.0

    def test_antisymmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b = rng.uniform(0.1, 1.0, size=2)
            assert pct_diff_auroc(a, b) == -pct_diff_auroc(b, a)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            pct_diff_auroc(1.2, 0.5)


class TestPairedTTest:
    def test_worked_example_vs_quadrature(self):
        x = [0.77, 0.78, 0.76, 0.77, 0.77]
        y = [0.70, 0.68, 0.72, 0.71, 0.69]
        t, p = paired_t_test(x, y)
        assert abs(t - 7.0) < 1e-12
        assert abs(p - t_two_sided_p_quadrature(t, 4)) < 1e-6

    def test_random_cases_vs_quadrature(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            k = int(rng.integers(2, 9))
            x = rng.normal(0.7, 0.05, size=k)
            y = x - rng.normal(0.03, 0.02, size=k)
            t, p = paired_t_test(x, y)
            assert abs(p - t_two_sided_p_quadrature(t, k - 1)) < 1e-6

    def test_df4_critical_value(self):
        assert abs(t_two_sided_p(2.776, 4) - 0.05) < 1e-3

    def test_zero_variance_degenerate(self):
        # Exactly representable values so x - y is a jitter-free constant.
        y = np.array([0.5, 0.25, 0.75, 0.125, 0.625])
        with pytest.raises(DegenerateTestError):
            paired_t_test(y + 0.5, y)

    def test_df1_arctangent_form(self):
        # For df=1 (k=2), the two-sided p is 1 - (2/pi) * arctan(|t|).
        t, p = paired_t_test([0.1, 0.1 + 1e-6], [0.0, 0.0])
        assert 0 < p < 1e-5
        assert abs(p - (1 - (2 / math.pi) * math.atan(abs(t)))) < 1e-12

    def test_beta_function_edges(self):
        assert regularized_incomplete_beta(2.0, 0.5, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 0.5, 1.0) == 1.0


class TestVolcano:
    def comp(self, label="nodule", task="labels-8", p=0.005, pct=0.095):
        return PairedComparison(
            label=label, task=task,
            auroc_cdl=np.array([0.7, 0.71]), auroc_dqc=np.array([0.6, 0.62]),
            t_stat=3.0, p_value=p, pct_diff=pct,
        )

    def test_worked_example(self):
        rows, threshold = volcano_data([self.comp()])
        assert abs(rows[0]["log2_pct_diff"] - math.log2(0.095)) < 1e-12
        assert abs(rows[0]["log2_pct_diff"] + 3.3963) < 1e-3
        assert abs(rows[0]["neg_log10_p"] - 2.301) < 1e-3
        assert abs(threshold - 1.30103) < 1e-5

    def test_threshold_boundary(self):
        rows, threshold = volcano_data([self.comp(p=0.05)])
        assert abs(rows[0]["neg_log10_p"] - threshold) < 1e-12

    def test_negative_diff_flagged_not_dropped(self):
        rows, _ = volcano_data([self.comp(pct=-0.02)])
        assert len(rows) == 1
        assert rows[0]["log2_pct_diff"] is None
        assert rows[0]["transformable"] is False
        assert rows[0]["pct_diff"] == -0.02

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            volcano_data([self.comp(p=0.0)])

    def test_threshold_consistency(self):
        rng = np.random.default_rng(4)
        ps = rng.uniform(1e-4, 1.0, size=100)
        rows, threshold = volcano_data([self.comp(p=float(p)) for p in ps])
        for row in rows:
            assert (row["p_value"] < 0.05) == (row["neg_log10_p"] > threshold)


class TestPairedComparison:
    def test_compute(self):
        comp = PairedComparison.compute(
            "mean", "labels-8",
            [0.77, 0.78, 0.76, 0.77, 0.77],
            [0.70, 0.68, 0.72, 0.71, 0.69],
        )
        assert abs(comp.pct_diff - pct_diff_auroc(0.77, 0.70)) < 1e-12
        assert comp.p_value < 0.01

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            PairedComparison.compute("a", "t", [0.7, 0.8], [0.6])
