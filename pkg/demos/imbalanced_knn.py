"""kNN calibration when one class outnumbers another 200 to 1.

Five softmax classes are drawn with geometrically decaying
prevalences, so the rarest class contributes one sample for every
two hundred of the most common one.  A kNN density ratio is fit
twice, once weighting every sample equally and once weighting each
sample by the inverse of its class prevalence, and the two
calibrators are compared per class on held-out data.  Count-weighted
summaries are ruled by the majority class; the per-class view is
where the weighting choice shows.  Runs in a few seconds.
"""
import numpy as np

from scorecal import (
    DensityConfig,
    ImbalancedConfig,
    INVERSE_PREVALENCE,
    KNN,
    UNIFORM,
    VAL_TRAIN,
    VAL_VAL,
    ece,
    fit_calibrator,
    gen_imbalanced_scores,
    split_dataset,
)


def main():
    config = ImbalancedConfig(n=200_000, seed=0)
    ds = gen_imbalanced_scores(config)
    prevalences = config.resolved_prevalences()
    counts = np.bincount(ds.true_class, minlength=5)
    print("class prevalences (requested -> drawn):")
    for c in range(5):
        print(f"  class {c}: {prevalences[c]:.5f} -> {counts[c]:6d} samples")
    print(f"  majority/minority ratio: {counts[0] / counts[4]:.0f}")

    labeled = split_dataset(ds, (0.75, 0.25), seed=1)
    vt = labeled.subset(VAL_TRAIN)
    vv = labeled.subset(VAL_VAL)

    # Same k, same points, different mass: inverse-prevalence weighting
    # lets the handful of rare-class samples carry as much total weight
    # in the density ratio as the majority crowd.
    probs = {}
    for weighting in (UNIFORM, INVERSE_PREVALENCE):
        cal = fit_calibrator(vt, DensityConfig(KNN, k=25, weighting=weighting))
        probs[weighting], _ = cal.batch(vv.scores, workers=-1)

    print(f"\nper-class calibration gap (mean p - accuracy) on {len(vv)} "
          f"held-out samples:")
    print(f"{'class':>5} {'n':>6} {'accuracy':>9} {'uniform':>9} "
          f"{'weighted':>9}")
    macro = {w: [] for w in probs}
    for c in range(5):
        m = vv.true_class == c
        acc = float(vv.is_correct[m].mean())
        row = [f"{c:>5} {int(m.sum()):>6} {acc:>9.4f}"]
        for w, p in probs.items():
            gap = float(p[m].mean()) - acc
            macro[w].append(abs(gap))
            row.append(f"{gap:>+9.4f}")
        print(" ".join(row))

    print("\nsummary:")
    for w, p in probs.items():
        print(f"  {w:<24} count-weighted ece {ece(p, vv.is_correct, 100):.4f}, "
              f"mean per-class gap {np.mean(macro[w]):.4f}")
    print("\nthe count-weighted ece stays small either way because the")
    print("majority class owns most of the count; the equal-vote per-class")
    print("gap roughly halves, which is what the rare classes experience.")


if __name__ == "__main__":
    main()
