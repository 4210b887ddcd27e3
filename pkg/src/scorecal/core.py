"""Core types for classifier score vectors and labeled score datasets.

A score vector is the per-class output of a classifier for one input,
either free-form logits or a softmax distribution over classes.  A
dataset holds many scored samples with their true classes and an
optional train / val-train / val-val split assignment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOFTMAX = "softmax"
LOGIT = "logit"
SPACE_TAGS = (SOFTMAX, LOGIT)

TRAIN = "train"
VAL_TRAIN = "val-train"
VAL_VAL = "val-val"
SPLIT_LABELS = (TRAIN, VAL_TRAIN, VAL_VAL)

# Softmax components must sum to 1 within this absolute tolerance.
SOFTMAX_SUM_TOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when scores, labels, or configuration violate a contract."""


def _as_score_matrix(scores, space_tag: str) -> np.ndarray:
    """Validate and return scores as an (n, d) float64 matrix."""
    if space_tag not in SPACE_TAGS:
        raise InvalidInputError(f"unknown space_tag {space_tag!r}")
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidInputError(f"scores must be (n, d) with d >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InvalidInputError(f"non-finite score at row {bad[0]}, component {bad[1]}")
    if space_tag == SOFTMAX:
        if np.any(arr < 0.0):
            bad = np.argwhere(arr < 0.0)[0]
            raise InvalidInputError(
                f"negative softmax component at row {bad[0]}, component {bad[1]}"
            )
        sums = arr.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > SOFTMAX_SUM_TOL):
            row = int(np.argmax(off))
            raise InvalidInputError(
                f"softmax components at row {row} sum to {sums[row]!r}, not 1"
            )
    return arr


@dataclass(frozen=True)
class ScoreVector:
    """One classifier output: per-class components plus the space they live in."""

    components: np.ndarray
    space_tag: str = SOFTMAX

    def __post_init__(self):
        arr = _as_score_matrix(np.atleast_1d(np.asarray(self.components)), self.space_tag)[0]
        arr.flags.writeable = False
        object.__setattr__(self, "components", arr)

    @property
    def dims(self) -> int:
        return self.components.shape[0]

    def argmax_class(self) -> int:
        return int(np.argmax(self.components))


@dataclass(frozen=True)
class LabeledSample:
    """A score vector with its true class; the prediction is always derived."""

    score: ScoreVector
    true_class: int

    def __post_init__(self):
        if not 0 <= self.true_class < self.score.dims:
            raise InvalidInputError(
                f"true_class {self.true_class} outside [0, {self.score.dims})"
            )

    @property
    def predicted_class(self) -> int:
        # Recomputed from the score, never stored, so it cannot go stale.
        return self.score.argmax_class()

    @property
    def is_correct(self) -> bool:
        return self.predicted_class == self.true_class


def argmax_class(scores) -> np.ndarray | int:
    """Predicted class = index of the largest component, ties to the lowest index.

    Accepts a single vector (returns int) or an (n, d) matrix (returns (n,) ints).
    """
    if isinstance(scores, ScoreVector):
        return scores.argmax_class()
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim == 1:
        return int(np.argmax(arr))
    return np.argmax(arr, axis=1)


def reduce_simplex(scores, space_tag: str = SOFTMAX) -> np.ndarray:
    """Drop the last (redundant) coordinate of softmax vectors.

    A d-class softmax vector has d - 1 free coordinates; the dropped
    component is recoverable as 1 minus the rest.  Logit-space scores
    carry no sum constraint and are rejected.
    """
    if space_tag != SOFTMAX:
        raise InvalidInputError("simplex reduction applies to softmax-space scores only")
    arr = _as_score_matrix(scores, SOFTMAX)
    if arr.shape[1] < 2:
        raise InvalidInputError("simplex reduction needs at least 2 classes")
    out = arr[:, :-1]
    if np.asarray(scores).ndim == 1:
        return out[0]
    return out


class Dataset:
    """Scored samples with true classes, stored as arrays.

    Parameters
    ----------
    scores : array-like, shape (n, d)
        Per-sample score vectors.
    true_class : array-like, shape (n,)
        True class indices in [0, d).
    space_tag : str
        "softmax" or "logit".
    split_labels : array-like of str, optional
        Per-sample assignment among "train", "val-train", "val-val".
    """

    def __init__(self, scores, true_class, space_tag: str = SOFTMAX, split_labels=None):
        self.scores = _as_score_matrix(scores, space_tag)
        self.space_tag = space_tag
        labels = np.asarray(true_class)
        if labels.shape != (self.scores.shape[0],):
            raise InvalidInputError(
                f"true_class shape {labels.shape} does not match {self.scores.shape[0]} samples"
            )
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if np.any(as_int != labels):
                raise InvalidInputError("true_class must be integers")
            labels = as_int
        self.true_class = labels.astype(np.int64)
        d = self.scores.shape[1]
        if labels.size and (labels.min() < 0 or labels.max() >= d):
            row = int(np.argmax((labels < 0) | (labels >= d)))
            raise InvalidInputError(
                f"true_class {labels[row]} at row {row} outside [0, {d})"
            )
        if split_labels is not None:
            split_labels = np.asarray(split_labels, dtype=object)
            if split_labels.shape != (self.scores.shape[0],):
                raise InvalidInputError("split_labels length does not match samples")
            bad = set(split_labels) - set(SPLIT_LABELS)
            if bad:
                raise InvalidInputError(f"unknown split labels {sorted(map(str, bad))}")
        self.split_labels = split_labels
        self._predicted = None

    @property
    def class_count(self) -> int:
        return self.scores.shape[1]

    @property
    def predicted_class(self) -> np.ndarray:
        if self._predicted is None:
            self._predicted = np.argmax(self.scores, axis=1)
        return self._predicted

    @property
    def is_correct(self) -> np.ndarray:
        return self.predicted_class == self.true_class

    def __len__(self) -> int:
        return self.scores.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(
            ScoreVector(self.scores[i], self.space_tag), int(self.true_class[i])
        )

    def samples(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, split_label: str) -> "Dataset":
        """Samples carrying the given split label, order preserved."""
        if self.split_labels is None:
            raise InvalidInputError("dataset has no split labels")
        if split_label not in SPLIT_LABELS:
            raise InvalidInputError(f"unknown split label {split_label!r}")
        mask = self.split_labels == split_label
        return Dataset(self.scores[mask], self.true_class[mask], self.space_tag)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        split = None if self.split_labels is None else self.split_labels[idx]
        return Dataset(self.scores[idx], self.true_class[idx], self.space_tag, split)


def split_dataset(ds: Dataset, fractions: tuple[float, float], seed: int) -> Dataset:
    """Assign every sample to train / val-train / val-val, reproducibly.

    ``fractions`` gives the (val-train, val-val) shares; the remainder,
    if any, is labeled "train".  A seeded shuffle is followed by
    contiguous slicing, so equal seeds give identical assignments and
    proportions land within one sample of the request.
    """
    f_vt, f_vv = float(fractions[0]), float(fractions[1])
    if f_vt < 0 or f_vv < 0 or f_vt + f_vv > 1.0 + 1e-12:
        raise InvalidInputError(f"fractions {fractions} must be nonnegative and sum <= 1")
    n = len(ds)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_vt = int(round(n * f_vt))
    n_vv = min(int(round(n * f_vv)), n - n_vt)
    labels = np.empty(n, dtype=object)
    labels[order[:n_vt]] = VAL_TRAIN
    labels[order[n_vt:n_vt + n_vv]] = VAL_VAL
    labels[order[n_vt + n_vv:]] = TRAIN
    return Dataset(ds.scores, ds.true_class, ds.space_tag, labels)
