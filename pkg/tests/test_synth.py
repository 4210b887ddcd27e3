"""Synthetic generators: determinism, closed-form oracle, imbalance shape."""
import math

import numpy as np
import pytest

from scorecal import (
    ImbalancedConfig,
    InvalidInputError,
    ToyConfig,
    analytic_pmax,
    gen_imbalanced_scores,
    gen_toy,
)


def pmax_via_pdf_ratio(x, sep=3.0):
    """Independent oracle: max class-conditional mass over total mass."""
    a = math.exp(-0.5 * x * x)
    b = math.exp(-0.5 * (x - sep) ** 2)
    return max(a, b) / (a + b)


class TestGenToy:
    def test_deterministic(self):
        xa, la = gen_toy(ToyConfig(n=1000, seed=4))
        xb, lb = gen_toy(ToyConfig(n=1000, seed=4))
        np.testing.assert_array_equal(xa, xb)
        np.testing.assert_array_equal(la, lb)
        xc, _ = gen_toy(ToyConfig(n=1000, seed=5))
        assert (xa != xc).any()

    def test_class_conditional_means(self):
        x, labels = gen_toy(ToyConfig(n=60_000, seed=0))
        assert labels.mean() == pytest.approx(0.5, abs=0.02)
        assert x[labels == 0].mean() == pytest.approx(0.0, abs=0.03)
        assert x[labels == 1].mean() == pytest.approx(3.0, abs=0.03)
        assert x[labels == 1].std() == pytest.approx(1.0, abs=0.03)

    def test_separation_knob(self):
        x, labels = gen_toy(ToyConfig(n=40_000, separation=7.0, seed=1))
        assert x[labels == 1].mean() == pytest.approx(7.0, abs=0.05)


class TestAnalyticPmax:
    def test_frozen_values(self):
        # expit(|3 (x - 1.5)|)
        assert analytic_pmax(0.0) == pytest.approx(0.9890130573694068, rel=1e-14)
        assert analytic_pmax(1.5) == 0.5
        assert analytic_pmax(3.0) == pytest.approx(0.9890130573694068, rel=1e-14)
        assert analytic_pmax(-2.0) == pytest.approx(0.9999724643088854, rel=1e-12)

    def test_matches_pdf_ratio_oracle(self):
        for x in np.linspace(-4.0, 7.0, 61):
            assert analytic_pmax(float(x)) == pytest.approx(
                pmax_via_pdf_ratio(float(x)), rel=1e-12)

    def test_symmetric_about_midpoint(self):
        for t in [0.1, 0.7, 2.0]:
            assert analytic_pmax(1.5 + t) == pytest.approx(
                analytic_pmax(1.5 - t), rel=1e-14)

    def test_array_and_scalar_forms(self):
        xs = np.array([0.0, 1.5, 3.0])
        out = analytic_pmax(xs)
        assert out.shape == (3,)
        assert isinstance(analytic_pmax(0.0), float)
        assert out[1] == 0.5

    def test_never_below_half(self):
        x = np.linspace(-10, 13, 200)
        assert np.all(analytic_pmax(x) >= 0.5)

    def test_custom_separation(self):
        # expit(|5 (2 - 2.5)|) = expit(2.5)
        want = 1.0 / (1.0 + math.exp(-2.5))
        assert analytic_pmax(2.0, separation=5.0) == pytest.approx(want, rel=1e-14)


class TestImbalanced:
    def test_prevalence_vector(self):
        prev = ImbalancedConfig().resolved_prevalences()
        assert prev.shape == (5,)
        assert prev.sum() == pytest.approx(1.0, rel=1e-12)
        assert prev[0] / prev[-1] == pytest.approx(200.0, rel=1e-9)
        assert (np.diff(prev) < 0).all()

    def test_custom_prevalences_normalized(self):
        cfg = ImbalancedConfig(prevalences=(2.0, 1.0, 1.0, 1.0, 1.0))
        prev = cfg.resolved_prevalences()
        assert prev.sum() == pytest.approx(1.0, rel=1e-12)
        assert prev[0] == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_deterministic(self):
        a = gen_imbalanced_scores(ImbalancedConfig(n=2000, seed=3))
        b = gen_imbalanced_scores(ImbalancedConfig(n=2000, seed=3))
        np.testing.assert_array_equal(a.scores, b.scores)
        np.testing.assert_array_equal(a.true_class, b.true_class)

    def test_empirical_imbalance_near_requested(self):
        ds = gen_imbalanced_scores(ImbalancedConfig(n=120_000, seed=0))
        counts = np.bincount(ds.true_class, minlength=5)
        assert counts.min() > 0
        ratio = counts.max() / counts.min()
        assert 140.0 < ratio < 280.0  # 200:1 up to sampling noise

    def test_scores_are_valid_softmax(self):
        ds = gen_imbalanced_scores(ImbalancedConfig(n=500, seed=1))
        np.testing.assert_allclose(ds.scores.sum(axis=1), 1.0, atol=1e-9)
        assert ds.class_count == 5

    def test_classifier_is_accurate_but_imperfect(self):
        ds = gen_imbalanced_scores(ImbalancedConfig(n=50_000, seed=2))
        acc = float(ds.is_correct.mean())
        assert 0.9 < acc < 1.0

    def test_confusion_is_neighbor_heavy(self):
        # Chain-coupled centers confuse adjacent classes most, so rare
        # classes are not crushed by the majority's decision boundary.
        ds = gen_imbalanced_scores(ImbalancedConfig(n=200_000, seed=4))
        wrong = ~ds.is_correct
        gap = np.abs(ds.predicted_class[wrong] - ds.true_class[wrong])
        assert (gap == 1).mean() > 0.8

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            gen_imbalanced_scores(ImbalancedConfig(n=0))
        with pytest.raises(InvalidInputError):
            gen_imbalanced_scores(ImbalancedConfig(class_count=1))
        with pytest.raises(InvalidInputError):
            gen_imbalanced_scores(ImbalancedConfig(imbalance_ratio=0.5))
