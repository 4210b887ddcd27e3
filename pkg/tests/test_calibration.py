"""Calibrator behavior: exact cell ratios, fallbacks, invariances, persistence."""
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scorecal import (
    Calibrator,
    Dataset,
    DensityConfig,
    HISTOGRAM,
    InvalidInputError,
    INVERSE_PREVALENCE,
    KNN,
    LOGIT,
    ScoreVector,
    SOFTMAX,
    calibrate_batch,
    calibrated_score,
    fit_calibrator,
    inverse_prevalence_weights,
)
from scorecal.calibration import ALL_CORRECT, ALL_INCORRECT


def softmax_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mixed_dataset(seed=0, n=400, d=2):
    """Scores spread over the simplex with both correct and wrong labels."""
    rng = np.random.default_rng(seed)
    scores = softmax_rows(rng, n, d)
    predicted = np.argmax(scores, axis=1)
    # Labels agree with the prediction with probability ~ max score.
    agree = rng.random(n) < scores[np.arange(n), predicted]
    labels = np.where(agree, predicted, (predicted + 1) % d)
    return Dataset(scores, labels)


class TestInversePrevalenceWeights:
    def test_hand_case(self):
        # labels [0,0,0,1]: raw (4/3,4/3,4/3,4), rescaled to sum 4.
        w = inverse_prevalence_weights([0, 0, 0, 1])
        np.testing.assert_allclose(w, [2 / 3, 2 / 3, 2 / 3, 2.0], rtol=1e-14)
        assert w.sum() == pytest.approx(4.0, rel=1e-14)

    def test_balanced_labels_give_unit_weights(self):
        np.testing.assert_allclose(inverse_prevalence_weights([0, 1, 0, 1]),
                                   np.ones(4), rtol=1e-14)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            inverse_prevalence_weights([])

    @given(st.lists(st.integers(0, 4), min_size=1, max_size=200))
    @settings(max_examples=50, deadline=None)
    def test_sums_to_n_and_rare_weighs_more(self, labels):
        w = inverse_prevalence_weights(labels)
        assert w.sum() == pytest.approx(len(labels), rel=1e-9)
        labels = np.asarray(labels)
        _, counts = np.unique(labels, return_counts=True)
        if counts.min() != counts.max():
            rare = labels == np.unique(labels)[np.argmin(counts)]
            assert w[rare].max() > w[~rare].min()


class TestExactCellRatio:
    def test_seven_of_ten_in_one_cell(self):
        # All scores identical: one histogram cell holds everything, so
        # the ratio must equal the raw correct fraction exactly.
        scores = np.tile([0.6, 0.4], (10, 1))
        labels = np.array([0] * 7 + [1] * 3)
        cal = fit_calibrator(Dataset(scores, labels),
                             DensityConfig(HISTOGRAM, bins_per_dim=10))
        p, flag = cal.batch(scores)
        assert (p == 0.7).all()
        assert not flag.any()

    def test_two_cells_two_ratios(self):
        scores = np.vstack([np.tile([0.9, 0.1], (4, 1)), np.tile([0.2, 0.8], (4, 1))])
        labels = np.array([0, 0, 0, 1] + [1, 1, 0, 0])
        cal = fit_calibrator(Dataset(scores, labels),
                             DensityConfig(HISTOGRAM, bins_per_dim=4))
        p, _ = cal.batch(scores)
        assert (p[:4] == 0.75).all()
        assert (p[4:] == 0.5).all()

    def test_knn_ceilings_cancel_at_coincident_points(self):
        # Correct and overall estimators both hit the coincident-point
        # ceiling with the same population, so the ratio is exactly 1.
        scores = np.tile([0.6, 0.4], (10, 1))
        labels = np.array([0] * 7 + [1] * 3)
        cal = fit_calibrator(Dataset(scores, labels),
                             DensityConfig(KNN, k=3))
        p, flag = cal.batch(scores)
        assert (p == 1.0).all()
        assert not flag.any()

    def test_probability_matches_batch(self):
        ds = mixed_dataset(3)
        cal = fit_calibrator(ds, DensityConfig(HISTOGRAM, bins_per_dim=10))
        p, flags = cal.batch(ds.scores)
        for i in [0, 5, 17]:
            got_p, got_f = cal.probability_and_flag(ds.scores[i])
            assert got_p == p[i] and got_f == flags[i]
            assert calibrated_score(cal, ds.scores[i]) == p[i]
        sv = ScoreVector(ds.scores[0])
        assert cal.probability(sv) == p[0]


class TestFallback:
    def test_unsupported_cell_uses_prior_and_flags(self):
        # Fit mass sits near (0.9, 0.1); query the far corner.
        rng = np.random.default_rng(1)
        p0 = rng.uniform(0.8, 1.0, size=200)
        scores = np.column_stack([p0, 1.0 - p0])
        labels = (rng.random(200) < 0.75).astype(int)
        labels = np.where(labels == 1, 0, 1)  # ~75% correct (argmax is 0)
        ds = Dataset(scores, labels)
        cal = fit_calibrator(ds, DensityConfig(HISTOGRAM, bins_per_dim=10),
                             fallback_prior=0.42)
        p, flag = cal.batch(np.array([[0.05, 0.95]]))
        assert flag[0]
        assert p[0] == 0.42

    def test_default_prior_is_fit_accuracy(self):
        ds = mixed_dataset(5)
        cal = fit_calibrator(ds, DensityConfig(HISTOGRAM, bins_per_dim=10))
        assert cal.fallback_prior == pytest.approx(float(ds.is_correct.mean()), rel=1e-14)

    def test_prior_bounds_checked(self):
        ds = mixed_dataset(6)
        with pytest.raises(InvalidInputError, match="fallback_prior"):
            fit_calibrator(ds, DensityConfig(HISTOGRAM), fallback_prior=1.5)


class TestDegenerate:
    def test_all_correct_constant_one(self):
        scores = np.tile([0.9, 0.1], (5, 1))
        ds = Dataset(scores, np.zeros(5, dtype=int))
        with pytest.warns(UserWarning, match="correct"):
            cal = fit_calibrator(ds, DensityConfig(HISTOGRAM))
        assert cal.degenerate == ALL_CORRECT
        p, flag = cal.batch(np.array([[0.5, 0.5], [0.1, 0.9]]))
        assert (p == 1.0).all() and not flag.any()

    def test_all_incorrect_constant_zero(self):
        scores = np.tile([0.9, 0.1], (5, 1))
        ds = Dataset(scores, np.ones(5, dtype=int))
        with pytest.warns(UserWarning, match="no prediction"):
            cal = fit_calibrator(ds, DensityConfig(KNN, k=2))
        assert cal.degenerate == ALL_INCORRECT
        p, _ = cal.batch(np.array([[0.9, 0.1]]))
        assert (p == 0.0).all()

    def test_degenerate_round_trips(self):
        scores = np.tile([0.9, 0.1], (5, 1))
        with pytest.warns(UserWarning):
            cal = fit_calibrator(Dataset(scores, np.zeros(5, dtype=int)),
                                 DensityConfig(HISTOGRAM))
        loaded = Calibrator.from_dict(json.loads(json.dumps(cal.to_dict())))
        p, _ = loaded.batch(np.array([[0.4, 0.6]]))
        assert p[0] == 1.0


class TestInvariances:
    def test_histogram_duplication_invariance(self):
        # Duplicating every sample m times changes neither cell fractions
        # nor the shared population ratio.
        ds = mixed_dataset(7, n=300)
        cfg = DensityConfig(HISTOGRAM, bins_per_dim=10)
        cal = fit_calibrator(ds, cfg)
        dup = Dataset(np.repeat(ds.scores, 3, axis=0), np.repeat(ds.true_class, 3))
        cal_dup = fit_calibrator(dup, cfg)
        q = softmax_rows(np.random.default_rng(8), 50, 2)
        np.testing.assert_array_equal(cal.batch(q)[0], cal_dup.batch(q)[0])

    def test_knn_duplication_invariance_with_scaled_k(self):
        # At fixed k duplication shifts the neighbor radius, so k scales
        # with the duplication factor; the ratio then cancels exactly.
        m = 2
        ds = mixed_dataset(9, n=200)
        cal = fit_calibrator(ds, DensityConfig(KNN, k=5))
        dup = Dataset(np.repeat(ds.scores, m, axis=0), np.repeat(ds.true_class, m))
        cal_dup = fit_calibrator(dup, DensityConfig(KNN, k=5 * m))
        q = softmax_rows(np.random.default_rng(10), 40, 2)
        np.testing.assert_allclose(cal.batch(q)[0], cal_dup.batch(q)[0], rtol=1e-9)

    @pytest.mark.parametrize("kind,kw", [(HISTOGRAM, dict(bins_per_dim=8)),
                                         (KNN, dict(k=4))])
    def test_class_relabeling_invariance_unreduced(self, kind, kw):
        # Permuting class indices permutes score columns and labels; with
        # reduction disabled the fitted geometry is permuted identically.
        rng = np.random.default_rng(11)
        scores = softmax_rows(rng, 300, 3)
        labels = rng.integers(0, 3, 300)
        perm = np.array([2, 0, 1])
        inv = np.argsort(perm)
        cal = fit_calibrator(Dataset(scores, labels), DensityConfig(kind, **kw),
                             reduce_softmax=False)
        cal_p = fit_calibrator(Dataset(scores[:, perm], inv[labels]),
                               DensityConfig(kind, **kw), reduce_softmax=False)
        q = softmax_rows(rng, 40, 3)
        np.testing.assert_allclose(cal.batch(q)[0], cal_p.batch(q[:, perm])[0],
                                   rtol=1e-12)

    def test_two_class_relabeling_reduced_histogram(self):
        # With d=2 the reduced coordinate mirrors around 0.5 under the
        # swap; a [0,1]-ranged histogram mirrors its cells exactly.
        ds = mixed_dataset(12, n=500)
        cfg = DensityConfig(HISTOGRAM, bins_per_dim=10)
        cal = fit_calibrator(ds, cfg)
        swapped = Dataset(ds.scores[:, ::-1], 1 - ds.true_class)
        cal_s = fit_calibrator(swapped, cfg)
        q = softmax_rows(np.random.default_rng(13), 60, 2)
        np.testing.assert_allclose(cal.batch(q)[0], cal_s.batch(q[:, ::-1])[0],
                                   rtol=1e-12)


class TestPersistence:
    @pytest.mark.parametrize("cfg", [DensityConfig(HISTOGRAM, bins_per_dim=12),
                                     DensityConfig(KNN, k=6)])
    def test_round_trip_reproduces_batch(self, cfg):
        ds = mixed_dataset(15, n=250)
        cal = fit_calibrator(ds, cfg)
        loaded = Calibrator.from_dict(json.loads(json.dumps(cal.to_dict())))
        q = softmax_rows(np.random.default_rng(16), 80, 2)
        p0, f0 = cal.batch(q)
        p1, f1 = loaded.batch(q)
        np.testing.assert_array_equal(p0, p1)
        np.testing.assert_array_equal(f0, f1)
        assert loaded.fallback_prior == cal.fallback_prior
        assert loaded.reduce_softmax == cal.reduce_softmax

    def test_non_calibrator_artifact_rejected(self):
        with pytest.raises(InvalidInputError, match="calibrator"):
            Calibrator.from_dict({"version": 1, "kind": "mlp"})


class TestFitValidation:
    def test_empty_dataset(self):
        ds = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(InvalidInputError, match="empty"):
            fit_calibrator(ds)

    def test_space_mismatch_on_batch(self):
        cal = fit_calibrator(mixed_dataset(17), DensityConfig(HISTOGRAM))
        logit_ds = Dataset(np.array([[1.0, -2.0]]), [0], LOGIT)
        with pytest.raises(InvalidInputError, match="space"):
            cal.batch(logit_ds)

    def test_class_count_mismatch(self):
        cal = fit_calibrator(mixed_dataset(18, d=2), DensityConfig(HISTOGRAM))
        with pytest.raises(InvalidInputError, match="classes"):
            cal.batch(np.array([[0.2, 0.3, 0.5]]))

    def test_logit_space_histogram_autorange(self):
        rng = np.random.default_rng(19)
        z = rng.normal(size=(300, 2)) * 3
        labels = (rng.random(300) < 0.6).astype(int)
        ds = Dataset(z, np.where(labels, np.argmax(z, axis=1),
                                 1 - np.argmax(z, axis=1)), LOGIT)
        cal = fit_calibrator(ds, DensityConfig(HISTOGRAM, bins_per_dim=8))
        p, flags = cal.batch(ds)
        assert not flags.any()
        assert np.all((p >= 0.0) & (p <= 1.0))

    def test_weighted_fit_runs_and_bounds_hold(self):
        rng = np.random.default_rng(20)
        ds = mixed_dataset(20, n=600, d=3)
        cal = fit_calibrator(ds, DensityConfig(KNN, k=10,
                                               weighting=INVERSE_PREVALENCE))
        p, _ = cal.batch(softmax_rows(rng, 50, 3))
        assert np.all((p >= 0.0) & (p <= 1.0))


@given(st.integers(0, 10_000), st.sampled_from([HISTOGRAM, KNN]))
@settings(max_examples=30, deadline=None)
def test_probabilities_always_in_unit_interval(seed, kind):
    rng = np.random.default_rng(seed)
    n = 80
    scores = softmax_rows(rng, n, 2)
    labels = rng.integers(0, 2, n)
    ds = Dataset(scores, labels)
    cfg = DensityConfig(kind, bins_per_dim=6, k=min(5, n))
    import warnings as w
    with w.catch_warnings():
        w.simplefilter("ignore")
        cal = fit_calibrator(ds, cfg)
    p, flags = calibrate_batch(cal, softmax_rows(rng, 30, 2))
    assert np.all((p >= 0.0) & (p <= 1.0))
    if cal.degenerate is None and kind == HISTOGRAM:
        assert np.all(p[flags] == cal.fallback_prior)
