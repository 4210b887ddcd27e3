"""Calibration quality metrics: reliability bins, ECE, MAPD, accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, InvalidInputError

DEFAULT_BIN_COUNT = 100


@dataclass(frozen=True)
class ReliabilityBin:
    """One equal-width probability bin of a reliability diagram."""

    bin_lo: float
    bin_hi: float
    count: int
    mean_confidence: float
    empirical_accuracy: float

    @property
    def residual(self) -> float:
        """Empirical accuracy minus mean confidence; 0 when calibrated."""
        if self.count == 0:
            return float("nan")
        return self.empirical_accuracy - self.mean_confidence


def reliability_bins(probs, correct, bin_count: int = DEFAULT_BIN_COUNT) -> list[ReliabilityBin]:
    """Group (probability, correct) pairs into equal-width bins over [0, 1].

    Bins are half-open [lo, hi) except the last, which also takes
    probability exactly 1.0.  Empty bins are retained with zero count
    and NaN statistics so the diagram always has ``bin_count`` rows.
    """
    if bin_count < 1:
        raise InvalidInputError("bin_count must be >= 1")
    p = np.asarray(probs, dtype=np.float64)
    c = np.asarray(correct, dtype=bool)
    if p.ndim != 1 or c.shape != p.shape:
        raise InvalidInputError("probs and correct must be matching 1-D arrays")
    if p.size and (p.min() < 0.0 or p.max() > 1.0 or not np.all(np.isfinite(p))):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    idx = np.searchsorted(edges, p, side="right") - 1
    idx[p == 1.0] = bin_count - 1
    idx = np.clip(idx, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    conf_sum = np.bincount(idx, weights=p, minlength=bin_count)
    acc_sum = np.bincount(idx, weights=c.astype(np.float64), minlength=bin_count)
    bins = []
    for b in range(bin_count):
        n = int(counts[b])
        bins.append(ReliabilityBin(
            float(edges[b]), float(edges[b + 1]), n,
            conf_sum[b] / n if n else float("nan"),
            acc_sum[b] / n if n else float("nan"),
        ))
    return bins


def expected_calibration_error(bins: list[ReliabilityBin]) -> float:
    """Count-weighted mean absolute gap between accuracy and confidence.

    ECE = sum_b (count_b / N) * |accuracy_b - confidence_b| over the
    populated bins.  Undefined (raises) when every bin is empty.
    """
    total = sum(b.count for b in bins)
    if total == 0:
        raise InvalidInputError("ECE is undefined with no samples")
    return float(sum(
        b.count * abs(b.empirical_accuracy - b.mean_confidence)
        for b in bins if b.count
    ) / total)


def ece(probs, correct, bin_count: int = DEFAULT_BIN_COUNT) -> float:
    """Expected calibration error straight from (probability, correct) pairs."""
    return expected_calibration_error(reliability_bins(probs, correct, bin_count))


def mapd(predicted, reference) -> float:
    """Mean absolute percentage deviation of predicted from reference.

    mean(|predicted - reference| / reference), as a fraction.  Any
    zero reference value makes the metric undefined.
    """
    pred = np.asarray(predicted, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if pred.shape != ref.shape or pred.ndim != 1 or pred.size == 0:
        raise InvalidInputError("predicted and reference must be matching nonempty 1-D arrays")
    if np.any(ref == 0.0):
        raise InvalidInputError("MAPD is undefined for zero reference values")
    return float(np.mean(np.abs(pred - ref) / np.abs(ref)))


def accuracy(ds: Dataset) -> float:
    """Fraction of samples whose argmax prediction equals the true class."""
    if len(ds) == 0:
        raise InvalidInputError("accuracy is undefined on an empty dataset")
    return float(ds.is_correct.mean())


def binned_mean(x, values, edges) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``values`` within consecutive [edges] bins over x.

    Returns (means, counts); empty bins get NaN means.  Used to compare
    a binned probability curve against an analytic reference.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if x.shape != v.shape:
        raise InvalidInputError("x and values must match")
    nb = edges.size - 1
    inside = (x >= edges[0]) & (x <= edges[-1])
    idx = np.clip(np.searchsorted(edges, x[inside], side="right") - 1, 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    sums = np.bincount(idx, weights=v[inside], minlength=nb)
    means = np.full(nb, np.nan)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz]
    return means, counts
