"""Calibrated correctness probabilities for classifier score vectors.

The calibrated probability of a prediction being correct is the ratio
of two densities over score space: the density of scores the model got
right, over the density of all scores, both normalized by the overall
population so the ratio is a per-region correct fraction.  Repeated
stochastic trials of one sample fuse into a single hypothesis
probability.
"""
from .calibration import (
    Calibrator,
    calibrate_batch,
    calibrated_score,
    fit_calibrator,
    inverse_prevalence_weights,
)
from .core import (
    Dataset,
    InvalidInputError,
    LabeledSample,
    LOGIT,
    ScoreVector,
    SOFTMAX,
    TRAIN,
    VAL_TRAIN,
    VAL_VAL,
    argmax_class,
    reduce_simplex,
    split_dataset,
)
from .density import (
    DensityConfig,
    HISTOGRAM,
    HistogramDensity,
    INVERSE_PREVALENCE,
    KNN,
    KnnDensity,
    OutOfSupportError,
    UNIFORM,
    estimator_from_dict,
    fit_histogram,
    fit_knn,
    histogram_density,
    knn_density,
    unit_ball_volume,
)
from .fusion import (
    BASELINE_VARIANCE,
    BAYESIAN,
    CALIBRATED_MASS,
    FREQUENTIST,
    FusedResult,
    FusionConfig,
    SCORE_MASS,
    TrialBlock,
    chain_blocks_geometric,
    fuse_baseline_variance,
    fuse_bayesian,
    fuse_block,
    fuse_frequentist,
    hypothesis,
    p_matching_hypothesis,
)
from .metrics import (
    ReliabilityBin,
    accuracy,
    binned_mean,
    ece,
    expected_calibration_error,
    mapd,
    reliability_bins,
)
from .mlp import Mlp, MlpConfig, TrainingDivergedError, train_mlp
from .synth import (
    ImbalancedConfig,
    ToyConfig,
    analytic_pmax,
    gen_imbalanced_scores,
    gen_toy,
)

__version__ = "0.1.0"

__all__ = [
    "Calibrator",
    "calibrate_batch",
    "calibrated_score",
    "fit_calibrator",
    "inverse_prevalence_weights",
    "Dataset",
    "InvalidInputError",
    "LabeledSample",
    "LOGIT",
    "ScoreVector",
    "SOFTMAX",
    "TRAIN",
    "VAL_TRAIN",
    "VAL_VAL",
    "argmax_class",
    "reduce_simplex",
    "split_dataset",
    "DensityConfig",
    "HISTOGRAM",
    "HistogramDensity",
    "INVERSE_PREVALENCE",
    "KNN",
    "KnnDensity",
    "OutOfSupportError",
    "UNIFORM",
    "estimator_from_dict",
    "fit_histogram",
    "fit_knn",
    "histogram_density",
    "knn_density",
    "unit_ball_volume",
    "BASELINE_VARIANCE",
    "BAYESIAN",
    "CALIBRATED_MASS",
    "FREQUENTIST",
    "FusedResult",
    "FusionConfig",
    "SCORE_MASS",
    "TrialBlock",
    "chain_blocks_geometric",
    "fuse_baseline_variance",
    "fuse_bayesian",
    "fuse_block",
    "fuse_frequentist",
    "hypothesis",
    "p_matching_hypothesis",
    "ReliabilityBin",
    "accuracy",
    "binned_mean",
    "ece",
    "expected_calibration_error",
    "mapd",
    "reliability_bins",
    "Mlp",
    "MlpConfig",
    "TrainingDivergedError",
    "train_mlp",
    "ImbalancedConfig",
    "ToyConfig",
    "analytic_pmax",
    "gen_imbalanced_scores",
    "gen_toy",
]
