"""Fusing repeated stochastic trials into one hypothesis and probability.

A trial block holds T score vectors for the same input (for example
T forward passes of a dropout network).  Fusion picks a single
hypothesis class, maps each trial's calibrated probability onto that
hypothesis, and combines the per-trial values by one of three rules:
a frequentist geometric mean computed in log space, a sequential
Bayesian update, or a variance-based baseline that ignores
calibration entirely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import InvalidInputError, SOFTMAX, _as_score_matrix

FREQUENTIST = "frequentist"
BAYESIAN = "bayesian"
BASELINE_VARIANCE = "baseline-variance"
METHODS = (FREQUENTIST, BAYESIAN, BASELINE_VARIANCE)

SCORE_MASS = "score-mass"
CALIBRATED_MASS = "calibrated-mass"

# Smallest positive normalized float32; log sums historically ran in
# single precision, so this is where a vanishing product truncates.
LOG_FLOOR_F32 = math.log(2.0 ** -126)

# Probabilities are pulled this far off 0 and 1 before forming
# likelihood ratios, keeping every update finite.
PROB_CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class TrialBlock:
    """T score vectors for one input, with an optional true class."""

    sample_id: int
    trials: np.ndarray
    true_class: int | None = None
    space_tag: str = SOFTMAX

    def __post_init__(self):
        arr = _as_score_matrix(self.trials, self.space_tag)
        arr.flags.writeable = False
        object.__setattr__(self, "trials", arr)
        if self.true_class is not None and not 0 <= self.true_class < arr.shape[1]:
            raise InvalidInputError(
                f"true_class {self.true_class} outside [0, {arr.shape[1]})"
            )

    @property
    def trial_count(self) -> int:
        return self.trials.shape[0]

    @property
    def class_count(self) -> int:
        return self.trials.shape[1]


@dataclass
class FusionConfig:
    method: str = FREQUENTIST
    prior: float | None = None  # None -> 1 / class_count
    log_floor: float = LOG_FLOOR_F32
    hypothesis_mode: str = SCORE_MASS

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown fusion method {self.method!r}")
        if self.hypothesis_mode not in (SCORE_MASS, CALIBRATED_MASS):
            raise InvalidInputError(f"unknown hypothesis mode {self.hypothesis_mode!r}")
        if self.prior is not None and not 0.0 < self.prior < 1.0:
            raise InvalidInputError(f"prior {self.prior} outside (0, 1)")
        if self.log_floor >= 0.0:
            raise InvalidInputError("log_floor must be negative")


@dataclass(frozen=True)
class FusedResult:
    sample_id: int
    hypothesis: int
    probability: float
    method: str
    trial_count: int


def hypothesis(trials, mode: str = SCORE_MASS, trial_probs=None) -> int:
    """Fused hypothesis class for a block of trials.

    The default reading sums each class's softmax mass across trials
    and takes the argmax (ties to the lowest index).  The alternative
    ``calibrated-mass`` reading sums the per-trial calibrated
    probabilities grouped by each trial's own argmax class; it needs
    ``trial_probs``.
    """
    arr = np.asarray(trials, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InvalidInputError("trials must be a nonempty (T, d) array")
    if mode == SCORE_MASS:
        return int(np.argmax(arr.sum(axis=0)))
    if mode == CALIBRATED_MASS:
        if trial_probs is None:
            raise InvalidInputError("calibrated-mass hypothesis needs trial_probs")
        p = np.asarray(trial_probs, dtype=np.float64)
        if p.shape != (arr.shape[0],):
            raise InvalidInputError("trial_probs length does not match trials")
        mass = np.zeros(arr.shape[1])
        np.add.at(mass, np.argmax(arr, axis=1), p)
        return int(np.argmax(mass))
    raise InvalidInputError(f"unknown hypothesis mode {mode!r}")


def p_matching_hypothesis(p, trial_class, hyp: int):
    """Probability that the hypothesis is correct, seen from one trial.

    A trial whose argmax agrees with the hypothesis contributes its
    calibrated probability p; a disagreeing trial contributes 1 - p.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    out = np.where(np.asarray(trial_class) == hyp, p, 1.0 - p)
    return float(out) if out.ndim == 0 else out


def _check_probs(probs) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidInputError("need a nonempty 1-D array of probabilities")
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    return arr


def fuse_frequentist(probs, log_floor: float = LOG_FLOOR_F32) -> float:
    """Geometric mean of per-trial probabilities, computed in log space.

    Each log term is clamped from below at ``log_floor`` so a single
    zero cannot annihilate the product, mirroring the truncation a
    single-precision log sum would apply.
    """
    arr = _check_probs(probs)
    with np.errstate(divide="ignore"):
        logs = np.maximum(np.log(arr), log_floor)
    return float(np.exp(logs.mean()))


def fuse_bayesian(probs, prior: float) -> float:
    """Sequential Bayesian update of the hypothesis probability.

    Starting from ``prior``, each trial multiplies the running odds by
    the trial's likelihood ratio p / (1 - p), with p clamped to
    [1e-7, 1 - 1e-7].  The state is kept as a matched/unmatched
    likelihood pair and renormalized every step, which is algebraically
    the same update but never overflows, and an even-prior single
    trial reproduces its input exactly.
    """
    arr = _check_probs(probs)
    if not 0.0 < prior < 1.0:
        raise InvalidInputError(f"prior {prior} outside (0, 1)")
    arr = np.clip(arr, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
    num = float(prior)
    den = 1.0 - float(prior)
    for p in arr:
        num *= p
        den *= 1.0 - p
        s = num + den
        num /= s
        den /= s
    return float(num)


def fuse_baseline_variance(trials) -> tuple[int, float]:
    """Variance-of-trials baseline for two-class blocks.

    Fits a normal to the class-1 scores across trials (sample standard
    deviation, T - 1 divisor) and reports the mass on the chosen side
    of the 0.5 decision boundary.  Returns (hypothesis, probability).
    A zero spread means every trial agreed; the mass degenerates to 1.
    """
    arr = np.asarray(trials, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError("variance baseline is defined for 2-class trials only")
    if arr.shape[0] < 2:
        raise InvalidInputError("variance baseline needs at least 2 trials")
    x = arr[:, 1]
    mu = float(x.mean())
    sigma = float(x.std(ddof=1))
    hyp = 1 if mu > 0.5 else 0
    if sigma == 0.0:
        return hyp, 1.0
    cdf_at_boundary = float(norm.cdf(0.5, loc=mu, scale=sigma))
    return hyp, (1.0 - cdf_at_boundary) if hyp == 1 else cdf_at_boundary


def chain_blocks_geometric(block_probs, log_floor: float = LOG_FLOOR_F32) -> float:
    """Geometric-mean chaining of per-block probabilities.

    For combining fused results of independent blocks of the same
    hypothesis; same math as :func:`fuse_frequentist`.
    """
    return fuse_frequentist(block_probs, log_floor=log_floor)


def fuse_block(block: TrialBlock, calibrator, config: FusionConfig | None = None) -> FusedResult:
    """Calibrate each trial in a block and fuse into one result.

    The baseline-variance method derives both hypothesis and
    probability from the raw trials and ignores the calibrator.
    """
    config = config or FusionConfig()
    config.validate()
    if config.method == BASELINE_VARIANCE:
        hyp, prob = fuse_baseline_variance(block.trials)
        return FusedResult(block.sample_id, hyp, prob, config.method, block.trial_count)
    trial_probs, _ = calibrator.batch(block.trials)
    trial_class = np.argmax(block.trials, axis=1)
    if config.hypothesis_mode == CALIBRATED_MASS:
        hyp = hypothesis(block.trials, CALIBRATED_MASS, trial_probs)
    else:
        hyp = hypothesis(block.trials, SCORE_MASS)
    p_h = p_matching_hypothesis(trial_probs, trial_class, hyp)
    if config.method == FREQUENTIST:
        prob = fuse_frequentist(p_h, log_floor=config.log_floor)
    else:
        prior = config.prior if config.prior is not None else 1.0 / block.class_count
        prob = fuse_bayesian(p_h, prior)
    return FusedResult(block.sample_id, hyp, prob, config.method, block.trial_count)
