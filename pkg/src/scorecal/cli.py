"""Command line pipeline: gen -> train -> infer -> calibrate -> fuse -> eval.

Every stage reads and writes files, emits a JSON run manifest next to
its primary output, and is deterministic given its seed (the
CALIB_SEED environment variable supplies the root seed when --seed is
absent).  Exit codes: 0 success, 1 internal error, 2 usage or path
errors, 3 metric assertion violations.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import Calibrator, calibrate_batch, fit_calibrator
from .core import Dataset, InvalidInputError, LOGIT, SOFTMAX, split_dataset, VAL_TRAIN, VAL_VAL
from .density import DensityConfig, HISTOGRAM, INVERSE_PREVALENCE, KNN, UNIFORM
from .fusion import (
    BASELINE_VARIANCE,
    CALIBRATED_MASS,
    FusionConfig,
    LOG_FLOOR_F32,
    SCORE_MASS,
    TrialBlock,
    fuse_block,
)
from .io import (
    CsvFormatError,
    flatten_trial_blocks,
    load_json,
    read_calibrated_csv,
    read_fused_csv,
    read_score_csv,
    read_toy_csv,
    read_trial_csv,
    save_json,
    write_calibrated_csv,
    write_fused_csv,
    write_reliability_csv,
    write_score_csv,
    write_toy_csv,
    write_trial_csv,
)
from .metrics import binned_mean, expected_calibration_error, mapd, reliability_bins
from .mlp import Mlp, MlpConfig, train_mlp
from .synth import ImbalancedConfig, ToyConfig, analytic_pmax, gen_imbalanced_scores, gen_toy


class UsageError(Exception):
    pass


class AssertionFailure(Exception):
    pass


def _root_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("CALIB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise UsageError(f"CALIB_SEED must be an integer, got {env!r}") from e
    return 0


def _require_parent(path: Path) -> None:
    if not path.parent.exists():
        raise UsageError(f"output directory does not exist: {path.parent}")


def _check_overwrite(paths, force: bool) -> None:
    for p in paths:
        p = Path(p)
        _require_parent(p)
        if p.exists() and not force:
            raise UsageError(f"refusing to overwrite {p}; pass --force")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(primary_out, command: str, args, seed, inputs, outputs, t0) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    payload = {
        "tool": "scorecal",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:] if sys.argv else [],
        "params": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "root_seed": seed,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "duration_s": round(time.perf_counter() - t0, 3),
    }
    Path(str(primary_out) + ".manifest.json").write_text(json.dumps(payload, sort_keys=True, indent=1))


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    _check_overwrite([out], args.force)
    if args.kind == "toy":
        x, labels = gen_toy(ToyConfig(n=args.n, separation=args.separation, seed=seed))
        write_toy_csv(out, x, labels)
    else:
        cfg = ImbalancedConfig(n=args.n, class_count=args.classes,
                               imbalance_ratio=args.ratio, seed=seed)
        write_score_csv(out, gen_imbalanced_scores(cfg))
    _write_manifest(out, f"gen {args.kind}", args, seed, [], [out], t0)
    print(f"wrote {args.n} rows to {out}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    _check_overwrite([out], args.force)
    x, labels = read_toy_csv(args.data)
    model = Mlp(MlpConfig(hidden_dim=args.hidden, dropout_rate=args.dropout), seed=seed)
    trace = train_mlp(model, x, labels, epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, seed=seed + 1)
    save_json(out, model.to_dict())
    _write_manifest(out, "train", args, seed, [args.data], [out], t0)
    print(f"trained {args.epochs} epochs; loss {trace[0]:.6f} -> {trace[-1]:.6f}; wrote {out}")
    return 0


def cmd_infer(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    _check_overwrite([out], args.force)
    model = Mlp.from_dict(load_json(args.model))
    x, labels = read_toy_csv(args.data)
    if args.trials:
        if model.config.dropout_rate == 0.0:
            warnings.warn("model has no dropout; trials will be identical")
        stacked = model.trial_scores(x, args.trials, seed=seed)
        blocks = [TrialBlock(i, stacked[:, i, :], int(labels[i])) for i in range(x.shape[0])]
        write_trial_csv(out, blocks)
    else:
        write_score_csv(out, Dataset(model.forward(x), labels, SOFTMAX))
    _write_manifest(out, "infer", args, seed, [args.model, args.data], [out], t0)
    print(f"wrote {out}")
    return 0


def _density_config(args) -> DensityConfig:
    return DensityConfig(estimator_kind=args.estimator, bins_per_dim=args.bins,
                         k=args.k, weighting=args.weighting)


def cmd_calibrate_fit(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    outputs = [out]
    if (args.val_split is None) != (args.val_out is None):
        raise UsageError("--val-split and --val-out must be passed together")
    if args.val_out:
        outputs.append(Path(args.val_out))
    _check_overwrite(outputs, args.force)
    if pd_columns(args.scores)[:2] == ["sample_id", "trial_id"]:
        if args.val_split:
            raise UsageError("--val-split only applies to score CSVs; "
                             "split trial data before inference instead")
        ds = flatten_trial_blocks(read_trial_csv(args.scores, space_tag=args.space),
                                  space_tag=args.space)
    else:
        ds = read_score_csv(args.scores, space_tag=args.space)
    if args.val_split:
        try:
            f_vt, f_vv = (float(v) for v in args.val_split.split("/"))
        except ValueError as e:
            raise UsageError(f"--val-split must look like 0.8/0.2, got {args.val_split!r}") from e
        labeled = split_dataset(ds, (f_vt, f_vv), seed)
        fit_ds = labeled.subset(VAL_TRAIN)
        write_score_csv(args.val_out, labeled.subset(VAL_VAL))
    else:
        fit_ds = ds
    cal = fit_calibrator(fit_ds, _density_config(args),
                         reduce_softmax=not args.no_reduce,
                         fallback_prior=args.fallback_prior)
    save_json(out, cal.to_dict())
    _write_manifest(out, "calibrate fit", args, seed, [args.scores], outputs, t0)
    print(f"fitted {args.estimator} calibrator on {len(fit_ds)} samples; wrote {out}")
    return 0


def cmd_calibrate_apply(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    _check_overwrite([out], args.force)
    cal = Calibrator.from_dict(load_json(args.calibrator))
    ds = read_score_csv(args.scores, space_tag=cal.space_tag)
    probs, extrapolated = calibrate_batch(cal, ds, workers=args.threads)
    write_calibrated_csv(out, ds, probs, extrapolated)
    _write_manifest(out, "calibrate apply", args, seed, [args.calibrator, args.scores], [out], t0)
    print(f"calibrated {len(ds)} samples; wrote {out}")
    return 0


def cmd_fuse(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    out = Path(args.out)
    _check_overwrite([out], args.force)
    cfg = FusionConfig(method=args.method, prior=args.prior,
                       log_floor=args.log_floor, hypothesis_mode=args.hypothesis_mode)
    cfg.validate()
    cal = None
    inputs = [args.trials]
    if args.method != BASELINE_VARIANCE:
        if not args.calibrator:
            raise UsageError(f"--calibrator is required for method {args.method!r}")
        cal = Calibrator.from_dict(load_json(args.calibrator))
        inputs.append(args.calibrator)
    blocks = read_trial_csv(args.trials)
    results = [fuse_block(b, cal, cfg) for b in blocks]
    write_fused_csv(out, results)
    _write_manifest(out, "fuse", args, seed, inputs, [out], t0)
    print(f"fused {len(results)} blocks with {args.method}; wrote {out}")
    return 0


def _read_truth_map(path):
    """true_class per sample_id from a trial, score, or toy CSV."""
    head = pd_columns(path)
    if head[:2] == ["sample_id", "trial_id"]:
        blocks = read_trial_csv(path)
        return {b.sample_id: b.true_class for b in blocks}
    if head == ["x", "true_class"]:
        _, labels = read_toy_csv(path)
        return {i: int(c) for i, c in enumerate(labels)}
    ds = read_score_csv(path)
    return {i: int(c) for i, c in enumerate(ds.true_class)}


def pd_columns(path) -> list[str]:
    import pandas as pd
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return list(pd.read_csv(path, nrows=0).columns)


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    outputs = []
    if args.reliability_out:
        outputs.append(Path(args.reliability_out))
        _check_overwrite(outputs, args.force)
    inputs = [args.probs]
    head = pd_columns(args.probs)
    if head == ["sample_id", "hypothesis", "probability", "method", "T"]:
        fused = read_fused_csv(args.probs)
        if not args.truth:
            raise UsageError("fused results carry no true classes; pass --truth")
        truth = _read_truth_map(args.truth)
        inputs.append(args.truth)
        missing = [r.sample_id for r in fused if r.sample_id not in truth]
        if missing:
            raise UsageError(f"--truth lacks sample_ids {missing[:5]}")
        sample_id = np.array([r.sample_id for r in fused])
        probs = np.array([r.probability for r in fused])
        correct = np.array([truth[r.sample_id] == r.hypothesis for r in fused])
    else:
        table = read_calibrated_csv(args.probs)
        sample_id = table["sample_id"]
        probs = table["probability"]
        correct = table["predicted_class"] == table["true_class"]

    metrics = {"n": int(probs.size), "accuracy": float(correct.mean())}
    bins = reliability_bins(probs, correct, args.bins)
    metrics["ece"] = expected_calibration_error(bins)
    if args.reliability_out:
        write_reliability_csv(args.reliability_out, bins)

    if args.inputs:
        x, _ = read_toy_csv(args.inputs)
        inputs.append(args.inputs)
        if sample_id.max() >= x.shape[0]:
            raise UsageError("--inputs has fewer rows than the largest sample_id")
        xs = x[sample_id]
        lo, hi = args.pmax_range
        edges = np.linspace(lo, hi, args.pmax_bins + 1)
        ours, counts = binned_mean(xs, probs, edges)
        ref, _ = binned_mean(xs, analytic_pmax(xs, args.separation), edges)
        ok = counts > 0
        metrics["pmax_mapd"] = mapd(ours[ok], ref[ok])
        metrics["pmax_max_excess"] = float(np.max(ours[ok] - ref[ok]))
        metrics["pmax_bins_used"] = int(ok.sum())

    for k in sorted(metrics):
        print(f"{k}={metrics[k]}")
    if args.metrics_out:
        save_json(args.metrics_out, metrics)
        outputs.append(Path(args.metrics_out))

    if args.reliability_out or args.metrics_out:
        primary = args.reliability_out or args.metrics_out
    else:
        # No file outputs: pick a name that cannot clobber the manifest
        # of the stage that produced --probs.
        primary = str(args.probs) + ".eval"
    _write_manifest(primary, "eval", args, seed, inputs, outputs, t0)

    failures = []
    if args.assert_ece is not None and metrics["ece"] > args.assert_ece:
        failures.append(f"ece {metrics['ece']:.6f} > {args.assert_ece}")
    if args.assert_mapd is not None:
        if "pmax_mapd" not in metrics:
            raise UsageError("--assert-mapd needs --inputs to compute pmax_mapd")
        if metrics["pmax_mapd"] > args.assert_mapd:
            failures.append(f"pmax_mapd {metrics['pmax_mapd']:.6f} > {args.assert_mapd}")
    if args.assert_bin_gap is not None:
        worst = max((abs(b.residual) for b in bins if b.count >= args.bin_min_count),
                    default=0.0)
        if worst > args.assert_bin_gap:
            failures.append(
                f"worst |accuracy-confidence| {worst:.6f} > {args.assert_bin_gap} "
                f"among bins with >= {args.bin_min_count} samples"
            )
    if failures:
        raise AssertionFailure("; ".join(failures))
    return 0


def cmd_oracle(args) -> int:
    t0 = time.perf_counter()
    seed = _root_seed(args)
    if (args.x is None) == (args.grid is None):
        raise UsageError("pass exactly one of --x or --grid")
    if args.x is not None:
        print(f"{analytic_pmax(args.x, args.separation)!r}")
        return 0
    if not args.out:
        raise UsageError("--grid needs --out")
    try:
        lo, hi, count = args.grid.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as e:
        raise UsageError(f"--grid must look like -2:5:71, got {args.grid!r}") from e
    out = Path(args.out)
    _check_overwrite([out], args.force)
    xs = np.linspace(lo, hi, count)
    import pandas as pd
    pd.DataFrame({"x": xs, "pmax": analytic_pmax(xs, args.separation)}).to_csv(out, index=False)
    _write_manifest(out, "oracle pmax", args, seed, [], [out], t0)
    print(f"wrote {count} oracle rows to {out}")
    return 0


def _add_common(p, seed_help="root seed (default: CALIB_SEED env var, else 0)"):
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scorecal",
                                 description="score calibration pipeline")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic data")
    g.add_argument("kind", choices=["toy", "imbalanced"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--separation", type=float, default=3.0, help="toy class separation")
    g.add_argument("--classes", type=int, default=5, help="imbalanced class count")
    g.add_argument("--ratio", type=float, default=200.0, help="majority/minority prevalence ratio")
    _add_common(g)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the toy MLP")
    t.add_argument("--data", required=True, help="toy input CSV (x,true_class)")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--dropout", type=float, default=0.0)
    _add_common(t)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="score inputs with a trained model")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True, help="toy input CSV (x,true_class)")
    i.add_argument("--out", required=True)
    i.add_argument("--trials", type=int, default=0,
                   help="emit a trial CSV with this many dropout trials per input")
    _add_common(i)
    i.set_defaults(func=cmd_infer)

    c = sub.add_parser("calibrate", help="fit or apply a calibrator")
    csub = c.add_subparsers(dest="subcommand", required=True)
    cf = csub.add_parser("fit")
    cf.add_argument("--scores", required=True, help="score CSV to fit on")
    cf.add_argument("--out", required=True, help="calibrator JSON path")
    cf.add_argument("--estimator", choices=[HISTOGRAM, KNN], default=HISTOGRAM)
    cf.add_argument("--bins", type=int, default=100)
    cf.add_argument("--k", type=int, default=25)
    cf.add_argument("--weighting", choices=[UNIFORM, INVERSE_PREVALENCE], default=UNIFORM)
    cf.add_argument("--space", choices=[SOFTMAX, LOGIT], default=SOFTMAX)
    cf.add_argument("--no-reduce", action="store_true",
                    help="fit in all d dims instead of the d-1 simplex coordinates")
    cf.add_argument("--fallback-prior", type=float, default=None)
    cf.add_argument("--val-split", default=None,
                    help="fractions like 0.8/0.2: fit on the first share, write the second to --val-out")
    cf.add_argument("--val-out", default=None)
    _add_common(cf)
    cf.set_defaults(func=cmd_calibrate_fit)
    ca = csub.add_parser("apply")
    ca.add_argument("--calibrator", required=True)
    ca.add_argument("--scores", required=True)
    ca.add_argument("--out", required=True)
    ca.add_argument("--threads", type=int, default=-1,
                    help="worker threads for neighbor queries (-1: all cores)")
    _add_common(ca)
    ca.set_defaults(func=cmd_calibrate_apply)

    f = sub.add_parser("fuse", help="fuse trial blocks into per-sample results")
    f.add_argument("--trials", required=True, help="trial CSV")
    f.add_argument("--calibrator", default=None)
    f.add_argument("--out", required=True)
    f.add_argument("--method", choices=["frequentist", "bayesian", BASELINE_VARIANCE],
                   default="frequentist")
    f.add_argument("--prior", type=float, default=None)
    f.add_argument("--log-floor", type=float, default=LOG_FLOOR_F32)
    f.add_argument("--hypothesis-mode", choices=[SCORE_MASS, CALIBRATED_MASS],
                   default=SCORE_MASS)
    _add_common(f)
    f.set_defaults(func=cmd_fuse)

    e = sub.add_parser("eval", help="reliability, ECE, and oracle comparisons")
    e.add_argument("--probs", required=True, help="calibrated or fused CSV")
    e.add_argument("--truth", default=None,
                   help="CSV supplying true classes for fused results")
    e.add_argument("--bins", type=int, default=100)
    e.add_argument("--reliability-out", default=None)
    e.add_argument("--metrics-out", default=None)
    e.add_argument("--inputs", default=None,
                   help="toy input CSV aligning x with sample_id for pmax comparison")
    e.add_argument("--pmax-range", type=float, nargs=2, default=(-2.0, 5.0))
    e.add_argument("--pmax-bins", type=int, default=70)
    e.add_argument("--separation", type=float, default=3.0)
    e.add_argument("--assert-ece", type=float, default=None)
    e.add_argument("--assert-mapd", type=float, default=None)
    e.add_argument("--assert-bin-gap", type=float, default=None)
    e.add_argument("--bin-min-count", type=int, default=100)
    _add_common(e)
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="closed-form references")
    o.add_argument("kind", choices=["pmax"])
    o.add_argument("--x", type=float, default=None)
    o.add_argument("--grid", default=None, help="lo:hi:count")
    o.add_argument("--out", default=None)
    o.add_argument("--separation", type=float, default=3.0)
    _add_common(o)
    o.set_defaults(func=cmd_oracle)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except AssertionFailure as e:
        print(f"assertion failed: {e}", file=sys.stderr)
        return 3
    except (UsageError, FileNotFoundError, CsvFormatError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {e!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
