"""Walkthrough: density-ratio calibration of a small classifier.

Generates the two-Gaussian toy task, trains the bundled MLP on it,
fits a histogram calibrator on one half of a validation draw, and
checks the calibrated scores on the other half: against held-out
accuracy bin by bin, and against the closed-form confidence ceiling
the task admits.  Runs in a few seconds on one core.
"""
import numpy as np

from scorecal import (
    Dataset,
    DensityConfig,
    HISTOGRAM,
    Mlp,
    MlpConfig,
    ToyConfig,
    VAL_TRAIN,
    VAL_VAL,
    analytic_pmax,
    binned_mean,
    ece,
    fit_calibrator,
    gen_toy,
    reliability_bins,
    split_dataset,
    train_mlp,
)


def main():
    # The task: x ~ N(0, 1) under class 0 and x ~ N(3, 1) under class 1.
    # Because the class-conditional densities are known, the probability
    # that the argmax class is correct has a closed form, which makes the
    # calibrator's output directly checkable.
    x_train, y_train = gen_toy(ToyConfig(n=100_000, seed=0))
    model = Mlp(MlpConfig(), seed=1)
    trace = train_mlp(model, x_train, y_train, epochs=20, seed=2)
    print(f"trained 20 epochs, mean loss {trace[0]:.4f} -> {trace[-1]:.4f}")

    # A fresh validation draw, split into the half that fits the
    # calibrator (val-train) and the half it never sees (val-val).
    x_val, y_val = gen_toy(ToyConfig(n=400_000, seed=10))
    ds = split_dataset(Dataset(model.forward(x_val), y_val), (0.5, 0.5), seed=3)
    vt = ds.subset(VAL_TRAIN)
    vv = ds.subset(VAL_VAL)
    x_vv = x_val[ds.split_labels == VAL_VAL]

    # The calibrator is a ratio of two histogram densities over score
    # space: mass of correctly-predicted samples over mass of all
    # samples, cell by cell.
    cal = fit_calibrator(vt, DensityConfig(HISTOGRAM, bins_per_dim=100))
    p, extrapolated = cal.batch(vv.scores)
    print(f"calibrated {len(vv)} held-out samples, "
          f"{int(extrapolated.sum())} fell outside fitted support")

    # Raw confidence (the max softmax entry) versus the calibrated score.
    confidence = vv.scores.max(axis=1)
    correct = vv.is_correct
    print(f"held-out accuracy       {correct.mean():.4f}")
    print(f"ece of raw confidence   {ece(confidence, correct, 100):.4f}")
    print(f"ece after calibration   {ece(p, correct, 100):.4f}")

    # Reliability: within each score bin, the mean calibrated score
    # should match the empirical accuracy of the bin's members.
    print("\nreliability (bins holding at least 2000 samples):")
    print(f"{'bin':>12} {'n':>7} {'mean p':>8} {'accuracy':>9} {'gap':>8}")
    for b in reliability_bins(p, correct, 10):
        if b.count >= 2000:
            print(f"[{b.bin_lo:.2f}, {b.bin_hi:.2f}) {b.count:>7} "
                  f"{b.mean_confidence:>8.4f} {b.empirical_accuracy:>9.4f} "
                  f"{b.residual:>+8.4f}")

    # Against the closed form: bin the input axis and compare the mean
    # calibrated score with the analytic ceiling in each bin.
    edges = np.linspace(-2.0, 5.0, 15)
    ours, counts = binned_mean(x_vv, p, edges)
    ceiling, _ = binned_mean(x_vv, analytic_pmax(x_vv), edges)
    print("\ncalibrated score vs closed-form ceiling, binned over x:")
    print(f"{'x range':>16} {'n':>7} {'mean p':>8} {'ceiling':>8}")
    for i in range(len(counts)):
        if counts[i] > 0:
            print(f"[{edges[i]:+.2f}, {edges[i + 1]:+.2f}) {int(counts[i]):>7} "
                  f"{ours[i]:>8.4f} {ceiling[i]:>8.4f}")


if __name__ == "__main__":
    main()
