"""Density-ratio calibration: turn score vectors into correctness probabilities.

A calibrator holds two density estimates over score space, one fitted
on the scores of correctly predicted samples and one on all scores,
both normalized by the same population total.  The calibrated
probability of a new score is the ratio of the two densities, clamped
to [0, 1]; where the reference density gives no support the calibrator
falls back to a prior and flags the result as extrapolated.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict

import numpy as np

from .core import Dataset, InvalidInputError, ScoreVector, SOFTMAX, reduce_simplex
from .density import (
    DensityConfig,
    HISTOGRAM,
    INVERSE_PREVALENCE,
    KNN,
    ARTIFACT_VERSION,
    estimator_from_dict,
    fit_histogram,
    fit_knn,
)

ALL_CORRECT = "all_correct"
ALL_INCORRECT = "all_incorrect"


def inverse_prevalence_weights(labels) -> np.ndarray:
    """Per-sample weights proportional to 1 / class prevalence, summing to n.

    Rare classes get large weights so they are not swamped by the
    majority class when a density is fitted on heavily imbalanced data.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidInputError("cannot weight an empty label set")
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    raw = labels.size / counts[inverse].astype(np.float64)
    return raw * (labels.size / raw.sum())


class Calibrator:
    """Pair of density estimates exposing a calibrated correctness probability."""

    def __init__(self, correct_density, overall_density, config: DensityConfig,
                 class_count: int, dims_used: int, space_tag: str,
                 reduce_softmax: bool, fallback_prior: float,
                 degenerate: str | None = None):
        if not 0.0 <= fallback_prior <= 1.0:
            raise InvalidInputError(f"fallback_prior {fallback_prior} outside [0, 1]")
        self.correct_density = correct_density
        self.overall_density = overall_density
        self.config = config
        self.class_count = class_count
        self.dims_used = dims_used
        self.space_tag = space_tag
        self.reduce_softmax = reduce_softmax
        self.fallback_prior = float(fallback_prior)
        self.degenerate = degenerate

    def _query_points(self, scores) -> np.ndarray:
        arr = np.asarray(scores, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.shape[1] != self.class_count:
            raise InvalidInputError(
                f"scores have {arr.shape[1]} classes, calibrator expects {self.class_count}"
            )
        if self.space_tag == SOFTMAX and self.reduce_softmax:
            return reduce_simplex(arr, SOFTMAX)
        return arr

    def batch(self, scores, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Calibrated probabilities and extrapolation flags, input order preserved.

        ``scores`` is an (n, class_count) array in the calibrator's
        score space (a Dataset's ``.scores`` works directly).
        """
        if isinstance(scores, Dataset):
            if scores.space_tag != self.space_tag:
                raise InvalidInputError(
                    f"dataset space {scores.space_tag!r} != calibrator space {self.space_tag!r}"
                )
            scores = scores.scores
        q = self._query_points(scores)
        n = q.shape[0]
        if self.degenerate == ALL_CORRECT:
            return np.ones(n), np.zeros(n, dtype=bool)
        if self.degenerate == ALL_INCORRECT:
            return np.zeros(n), np.zeros(n, dtype=bool)
        if self.config.estimator_kind == HISTOGRAM:
            rho_c, _ = self.correct_density.evaluate(q)
            rho_a, ok = self.overall_density.evaluate(q)
            supported = ok & (rho_a > 0.0)
            p = np.full(n, self.fallback_prior)
            p[supported] = np.clip(rho_c[supported] / rho_a[supported], 0.0, 1.0)
            return p, ~supported
        rho_c = self.correct_density.evaluate(q, workers=workers)
        rho_a = self.overall_density.evaluate(q, workers=workers)
        return np.clip(rho_c / rho_a, 0.0, 1.0), np.zeros(n, dtype=bool)

    def probability(self, score) -> float:
        """Calibrated probability for a single score vector."""
        p, _ = self.probability_and_flag(score)
        return p

    def probability_and_flag(self, score) -> tuple[float, bool]:
        if isinstance(score, ScoreVector):
            if score.space_tag != self.space_tag:
                raise InvalidInputError(
                    f"score space {score.space_tag!r} != calibrator space {self.space_tag!r}"
                )
            score = score.components
        p, flag = self.batch(np.asarray(score, dtype=np.float64)[None, :])
        return float(p[0]), bool(flag[0])

    def to_dict(self) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "kind": "calibrator",
            "config": asdict(self.config),
            "class_count": self.class_count,
            "dims_used": self.dims_used,
            "space_tag": self.space_tag,
            "reduce_softmax": self.reduce_softmax,
            "fallback_prior": self.fallback_prior,
            "degenerate": self.degenerate,
            "correct": None if self.degenerate else self.correct_density.to_dict(),
            "overall": None if self.degenerate else self.overall_density.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calibrator":
        if d.get("version") != ARTIFACT_VERSION or d.get("kind") != "calibrator":
            raise InvalidInputError("not a calibrator artifact of a supported version")
        cfg = dict(d["config"])
        if cfg.get("range_per_dim") is not None:
            cfg["range_per_dim"] = tuple(tuple(r) for r in cfg["range_per_dim"])
        degenerate = d["degenerate"]
        correct = overall = None
        if not degenerate:
            correct = estimator_from_dict(d["correct"])
            overall = estimator_from_dict(d["overall"])
        return cls(correct, overall, DensityConfig(**cfg), d["class_count"],
                   d["dims_used"], d["space_tag"], d["reduce_softmax"],
                   d["fallback_prior"], degenerate)


def fit_calibrator(ds: Dataset, config: DensityConfig | None = None, *,
                   reduce_softmax: bool = True,
                   fallback_prior: float | None = None) -> Calibrator:
    """Fit a calibrator on a scored dataset (the val-train split).

    Parameters
    ----------
    ds : Dataset
        Scores with true classes.  Pass the val-train subset; scores
        calibrated later must come from data disjoint from this fit
        (caller's contract, not checkable here).
    config : DensityConfig, optional
        Estimator kind and knobs.  Defaults to a 100-bin histogram.
        With softmax scores the histogram range defaults to [0, 1] per
        dimension; logit-space fits derive the range from the data.
    reduce_softmax : bool
        Fit in the d-1 free simplex coordinates instead of all d
        (softmax scores only).  Default True.
    fallback_prior : float, optional
        Probability reported outside the supported region.  Defaults
        to the overall accuracy of ``ds``.

    Notes
    -----
    A dataset with no incorrect (or no correct) predictions yields a
    degenerate constant calibrator and a warning: there is no second
    density to take a ratio against.
    """
    config = config or DensityConfig()
    config.validate()
    if len(ds) == 0:
        raise InvalidInputError("cannot fit a calibrator on an empty dataset")
    reduce = bool(reduce_softmax) and ds.space_tag == SOFTMAX and ds.class_count >= 2
    points = reduce_simplex(ds.scores, SOFTMAX) if reduce else ds.scores
    dims_used = points.shape[1]

    correct = ds.is_correct
    accuracy = float(correct.mean())
    prior = accuracy if fallback_prior is None else float(fallback_prior)

    if config.weighting == INVERSE_PREVALENCE:
        weights = inverse_prevalence_weights(ds.true_class)
    else:
        weights = np.ones(len(ds))

    degenerate = None
    if correct.all():
        degenerate = ALL_CORRECT
        warnings.warn("every prediction is correct; calibrator is the constant 1.0")
    elif not correct.any():
        degenerate = ALL_INCORRECT
        warnings.warn("no prediction is correct; calibrator is the constant 0.0")
    if degenerate:
        return Calibrator(None, None, config, ds.class_count, dims_used,
                          ds.space_tag, reduce, prior, degenerate)

    if config.estimator_kind == HISTOGRAM:
        ranges = config.range_per_dim
        if ranges is None and ds.space_tag == SOFTMAX:
            ranges = tuple((0.0, 1.0) for _ in range(dims_used))
        cfg = DensityConfig(HISTOGRAM, config.bins_per_dim, config.k,
                            config.weighting, ranges)
        overall = fit_histogram(points, weights, cfg)
        # Share the fitted range and the population total so the ratio
        # reduces to the per-cell weighted correct fraction.
        cfg_fit = overall.config
        correct_est = fit_histogram(points[correct], weights[correct], cfg_fit,
                                    population=overall.total_weight)
    elif config.estimator_kind == KNN:
        cfg = DensityConfig(KNN, config.bins_per_dim, config.k, config.weighting, None)
        overall = fit_knn(points, weights, cfg)
        correct_est = fit_knn(points[correct], weights[correct], cfg,
                              population=overall.total_weight)
    else:
        raise InvalidInputError(f"unknown estimator_kind {config.estimator_kind!r}")

    return Calibrator(correct_est, overall, overall.config, ds.class_count,
                      dims_used, ds.space_tag, reduce, prior)


def calibrated_score(cal: Calibrator, score) -> float:
    """Calibrated correctness probability of one score vector, in [0, 1]."""
    return cal.probability(score)


def calibrate_batch(cal: Calibrator, ds, workers: int = 1):
    """Batch form of :func:`calibrated_score`; returns (probabilities, extrapolated)."""
    return cal.batch(ds, workers=workers)
