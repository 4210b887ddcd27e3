"""Synthetic experiment data: a 1-D two-class toy task, a closed-form
probability oracle for it, and an imbalanced five-class score generator.

The toy task draws a class C uniformly from {0, 1} and an input
x ~ N(separation * C, 1).  Because both class-conditional densities
are known, the best achievable correctness probability at any x is
available in closed form and serves as the reference curve that
calibrated scores are judged against.

The imbalanced generator emits five-class softmax score vectors
directly (no model in the loop): class-conditional Gaussian clusters
in logit space whose chain-coupled centers make each class confusable
mostly with its neighbors in prevalence order, at a roughly 200:1
majority-to-minority ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import Dataset, InvalidInputError, SOFTMAX


@dataclass
class ToyConfig:
    n: int = 50000
    separation: float = 3.0
    seed: int = 0


def gen_toy(config: ToyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x, true_class) pairs: C ~ uniform{0,1}, x ~ N(separation*C, 1)."""
    if config.n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(config.seed)
    labels = rng.integers(0, 2, size=config.n)
    x = rng.normal(0.0, 1.0, size=config.n) + config.separation * labels
    return x, labels


def analytic_pmax(x, separation: float = 3.0):
    """Highest correctness probability any classifier can reach at x.

    With equal priors the class posterior follows a logistic in x; the
    best decision takes the larger class mass, so
    pmax(x) = max_c N(x; c*separation, 1) / sum_c N(x; c*separation, 1),
    which is 0.5 exactly on the decision boundary and approaches 1 in
    the tails.
    """
    x = np.asarray(x, dtype=np.float64)
    t = separation * (x - 0.5 * separation)
    out = expit(np.abs(t))
    return float(out) if out.ndim == 0 else out


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _geometric_prevalences(class_count: int, ratio: float) -> tuple[float, ...]:
    raw = ratio ** (-np.arange(class_count) / (class_count - 1))
    return tuple(raw / raw.sum())


@dataclass
class ImbalancedConfig:
    """Five-class cluster generator knobs.

    ``prevalences`` defaults to a geometric ladder with the majority
    class ``imbalance_ratio`` times as frequent as the rarest one.
    Cluster centers sit at center_scale along each class's own logit
    axis plus neighbor_coupling along the adjacent classes' axes, so
    boundary scores are ambiguous mostly between prevalence-adjacent
    classes.
    """

    n: int = 1000000
    class_count: int = 5
    imbalance_ratio: float = 200.0
    prevalences: tuple[float, ...] | None = None
    center_scale: float = 6.3
    neighbor_coupling: float = 2.5
    sigma: float = 1.35
    seed: int = 0

    def resolved_prevalences(self) -> np.ndarray:
        if self.prevalences is not None:
            p = np.asarray(self.prevalences, dtype=np.float64)
            if p.shape != (self.class_count,) or np.any(p <= 0):
                raise InvalidInputError("prevalences must be positive, one per class")
            return p / p.sum()
        return np.asarray(_geometric_prevalences(self.class_count, self.imbalance_ratio))


def gen_imbalanced_scores(config: ImbalancedConfig) -> Dataset:
    """Softmax score vectors from imbalanced Gaussian logit clusters.

    Returns a Dataset whose predicted class is the argmax of each
    generated score vector; no trained model is involved.
    """
    if config.n < 1:
        raise InvalidInputError("n must be >= 1")
    if config.class_count < 2:
        raise InvalidInputError("need at least 2 classes")
    if config.imbalance_ratio < 1.0:
        raise InvalidInputError("imbalance_ratio is majority/minority, must be >= 1")
    if config.sigma <= 0.0:
        raise InvalidInputError("sigma must be > 0")
    prev = config.resolved_prevalences()
    rng = np.random.default_rng(config.seed)
    labels = rng.choice(config.class_count, size=config.n, p=prev)
    d = config.class_count
    centers = np.zeros((d, d))
    for c in range(d):
        centers[c, c] = config.center_scale
        if c > 0:
            centers[c, c - 1] = config.neighbor_coupling
        if c < d - 1:
            centers[c, c + 1] = config.neighbor_coupling
    z = centers[labels] + rng.normal(0.0, config.sigma, size=(config.n, d))
    return Dataset(_softmax_rows(z), labels, SOFTMAX)
