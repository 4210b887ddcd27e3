"""Fusing repeated dropout trials into one calibrated probability.

A dropout-enabled model scores the same input T times, giving T
softmax vectors per input.  Each trial is calibrated on its own and
the per-trial probabilities are fused into a single probability for
the block's hypothesis class, either as a geometric mean or as a
sequential Bayesian update.  The comparison baseline reads a
probability off the spread of the class-1 scores alone; it tracks
the closed-form ceiling far less faithfully and overshoots it.
Runs in roughly half a minute on one core.
"""
import numpy as np

from scorecal import (
    BASELINE_VARIANCE,
    BAYESIAN,
    Dataset,
    DensityConfig,
    FREQUENTIST,
    FusionConfig,
    HISTOGRAM,
    Mlp,
    MlpConfig,
    ToyConfig,
    TrialBlock,
    analytic_pmax,
    binned_mean,
    fit_calibrator,
    fuse_block,
    gen_toy,
    mapd,
    train_mlp,
)

TRIALS = 25


def main():
    # Train with 20% dropout so repeated forward passes disagree.
    x_train, y_train = gen_toy(ToyConfig(n=100_000, seed=0))
    model = Mlp(MlpConfig(dropout_rate=0.2), seed=1)
    train_mlp(model, x_train, y_train, epochs=20, seed=2)

    # The calibrator is fit on trials, not on deterministic scores:
    # every trial of every val-train input lands in the pool, so the
    # density ratio describes exactly the score population that fusion
    # will draw from.
    x_vt, y_vt = gen_toy(ToyConfig(n=100_000, seed=10))
    pool = model.trial_scores(x_vt, TRIALS, seed=20)
    cal = fit_calibrator(Dataset(pool.reshape(-1, 2), np.tile(y_vt, TRIALS)),
                         DensityConfig(HISTOGRAM, bins_per_dim=100))
    print(f"calibrator fit on {pool.shape[0] * pool.shape[1]} pooled trials")

    # Held-out blocks.
    x_vv, y_vv = gen_toy(ToyConfig(n=50_000, seed=11))
    trials = model.trial_scores(x_vv, TRIALS, seed=21)

    # One block up close.
    i = int(np.argmin(np.abs(x_vv - 1.4)))  # near the decision boundary
    block = TrialBlock(i, trials[:, i, :], true_class=int(y_vv[i]))
    per_trial, _ = cal.batch(block.trials)
    print(f"\nblock at x={x_vv[i]:+.3f} (true class {y_vv[i]}):")
    print(f"  class-1 score over {TRIALS} trials: "
          f"min {block.trials[:, 1].min():.3f}, "
          f"mean {block.trials[:, 1].mean():.3f}, "
          f"max {block.trials[:, 1].max():.3f}")
    print(f"  per-trial calibrated p: min {per_trial.min():.3f}, "
          f"max {per_trial.max():.3f}")
    for method in (FREQUENTIST, BAYESIAN, BASELINE_VARIANCE):
        res = fuse_block(block, cal, FusionConfig(method=method))
        print(f"  {method:<17} -> class {res.hypothesis}, p={res.probability:.4f}")
    print(f"  closed-form ceiling at this x: {analytic_pmax(x_vv[i]):.4f}")

    # Fuse every block under each method and compare the binned mean
    # probability with the closed-form ceiling.
    n = x_vv.shape[0]
    fused = {m: np.empty(n) for m in (FREQUENTIST, BAYESIAN, BASELINE_VARIANCE)}
    for i in range(n):
        block = TrialBlock(i, trials[:, i, :])
        for method, out in fused.items():
            out[i] = fuse_block(block, cal, FusionConfig(method=method)).probability

    edges = np.linspace(-2.0, 5.0, 71)
    ceiling, counts = binned_mean(x_vv, analytic_pmax(x_vv), edges)
    m = counts > 0
    print(f"\nfused probability vs ceiling over {int(m.sum())} x bins:")
    print(f"{'method':<17} {'mapd':>8} {'bins above ceiling+0.02':>24}")
    for method, out in fused.items():
        curve, _ = binned_mean(x_vv, out, edges)
        above = int(np.sum(curve[m] > ceiling[m] + 0.02))
        print(f"{method:<17} {mapd(curve[m], ceiling[m]):>8.4f} {above:>24}")
    print("\nthe geometric-mean fusion answers the question the ceiling")
    print("bounds (how often is one pass at this x right), so it hugs the")
    print("ceiling.  the bayesian update compounds evidence across the 25")
    print("trials and moves past the single-pass ceiling by design.  the")
    print("variance baseline also sits above it, but from score spread")
    print("alone, with no grounding in labeled data.")


if __name__ == "__main__":
    main()
