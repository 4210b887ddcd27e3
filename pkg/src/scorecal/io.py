"""File formats: CSV tables for scores, trials, fused results, and
reliability diagrams, plus JSON artifact helpers.

Column layouts are part of the public contract:

- score files:        ``y_0,...,y_{d-1},true_class``
- trial files:        ``sample_id,trial_id,y_0,...,y_{d-1},true_class``
- fused results:      ``sample_id,hypothesis,probability,method,T``
- reliability tables: ``bin_lo,bin_hi,count,mean_confidence,empirical_accuracy,residual``
- calibrated tables:  ``sample_id,predicted_class,true_class,probability,extrapolated``
- toy input tables:   ``x,true_class``

Schema violations raise CsvFormatError naming the offending row and
column.  Floats are written in shortest round-trip representation, so
rewriting a file read back is byte-stable.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .core import Dataset, InvalidInputError, SOFTMAX
from .fusion import FusedResult, TrialBlock
from .metrics import ReliabilityBin


class CsvFormatError(InvalidInputError):
    """A CSV file does not match its declared schema."""


def _read_frame(path, expected: list[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    got = list(df.columns)
    if got != expected:
        raise CsvFormatError(
            f"{path}: header {got!r} does not match expected {expected!r}"
        )
    return df


def _numeric_column(df: pd.DataFrame, col: str, path, integer: bool = False) -> np.ndarray:
    s = pd.to_numeric(df[col], errors="coerce")
    bad = s.isna()
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise CsvFormatError(
            f"{path}: non-numeric or missing value at row {row}, column {col!r}"
        )
    arr = s.to_numpy()
    if integer:
        as_int = arr.astype(np.int64)
        if np.any(as_int != arr):
            row = int(np.argmax(as_int != arr))
            raise CsvFormatError(
                f"{path}: non-integer value at row {row}, column {col!r}"
            )
        return as_int
    return arr.astype(np.float64)


def _score_columns(d: int) -> list[str]:
    return [f"y_{i}" for i in range(d)]


def _infer_score_dims(columns, fixed_prefix: list[str], path) -> int:
    rest = list(columns)[len(fixed_prefix):]
    if rest[-1:] != ["true_class"]:
        raise CsvFormatError(f"{path}: last column must be 'true_class', got {rest[-1:]}")
    d = len(rest) - 1
    if d < 1 or rest[:-1] != _score_columns(d):
        raise CsvFormatError(
            f"{path}: score columns must be y_0..y_{{d-1}}, got {rest[:-1]!r}"
        )
    return d


def write_score_csv(path, ds: Dataset) -> None:
    cols = {c: ds.scores[:, i] for i, c in enumerate(_score_columns(ds.class_count))}
    cols["true_class"] = ds.true_class
    pd.DataFrame(cols).to_csv(path, index=False)


def read_score_csv(path, space_tag: str = SOFTMAX) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    d = _infer_score_dims(df.columns, [], path)
    scores = np.column_stack(
        [_numeric_column(df, c, path) for c in _score_columns(d)]
    ) if len(df) else np.empty((0, d))
    true = _numeric_column(df, "true_class", path, integer=True)
    try:
        return Dataset(scores, true, space_tag)
    except InvalidInputError as e:
        raise CsvFormatError(f"{path}: {e}") from e


def write_trial_csv(path, blocks) -> None:
    frames = []
    for b in blocks:
        t = b.trial_count
        cols = {"sample_id": np.full(t, b.sample_id), "trial_id": np.arange(t)}
        for i, c in enumerate(_score_columns(b.class_count)):
            cols[c] = b.trials[:, i]
        if b.true_class is None:
            raise InvalidInputError("trial files carry true_class; block has none")
        cols["true_class"] = np.full(t, b.true_class)
        frames.append(pd.DataFrame(cols))
    if not frames:
        raise InvalidInputError("no trial blocks to write")
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)


def read_trial_csv(path, space_tag: str = SOFTMAX) -> list[TrialBlock]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    d = _infer_score_dims(df.columns, ["sample_id", "trial_id"], path)
    if list(df.columns[:2]) != ["sample_id", "trial_id"]:
        raise CsvFormatError(f"{path}: first columns must be sample_id,trial_id")
    sample_id = _numeric_column(df, "sample_id", path, integer=True)
    trial_id = _numeric_column(df, "trial_id", path, integer=True)
    scores = np.column_stack([_numeric_column(df, c, path) for c in _score_columns(d)])
    true = _numeric_column(df, "true_class", path, integer=True)
    # Blocks keep first-appearance order; trials sort by trial_id inside.
    _, first, inverse = np.unique(sample_id, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))[inverse]
    perm = np.lexsort((trial_id, rank))
    groups = np.split(perm, np.flatnonzero(np.diff(rank[perm])) + 1)
    blocks = []
    for rows in groups:
        sid = int(sample_id[rows[0]])
        tc = np.unique(true[rows])
        if tc.size != 1:
            raise CsvFormatError(
                f"{path}: sample {sid} has conflicting true_class values {tc.tolist()}"
            )
        try:
            blocks.append(TrialBlock(sid, scores[rows], int(tc[0]), space_tag))
        except InvalidInputError as e:
            raise CsvFormatError(f"{path}: sample {sid}: {e}") from e
    return blocks


def flatten_trial_blocks(blocks, space_tag: str = SOFTMAX) -> Dataset:
    """Pool every trial of every block into one labeled dataset."""
    if not blocks:
        raise InvalidInputError("no trial blocks to flatten")
    missing = [b.sample_id for b in blocks if b.true_class is None]
    if missing:
        raise InvalidInputError(f"blocks lack true_class: samples {missing[:5]}")
    scores = np.concatenate([b.trials for b in blocks], axis=0)
    labels = np.concatenate([np.full(b.trial_count, b.true_class) for b in blocks])
    return Dataset(scores, labels, space_tag)


def write_toy_csv(path, x, labels) -> None:
    pd.DataFrame({"x": np.asarray(x, dtype=np.float64),
                  "true_class": np.asarray(labels, dtype=np.int64)}).to_csv(path, index=False)


def read_toy_csv(path) -> tuple[np.ndarray, np.ndarray]:
    df = _read_frame(path, ["x", "true_class"])
    return (_numeric_column(df, "x", path),
            _numeric_column(df, "true_class", path, integer=True))


def write_fused_csv(path, results: list[FusedResult]) -> None:
    if not results:
        raise InvalidInputError("no fused results to write")
    pd.DataFrame({
        "sample_id": [r.sample_id for r in results],
        "hypothesis": [r.hypothesis for r in results],
        "probability": [r.probability for r in results],
        "method": [r.method for r in results],
        "T": [r.trial_count for r in results],
    }).to_csv(path, index=False)


def read_fused_csv(path) -> list[FusedResult]:
    df = _read_frame(path, ["sample_id", "hypothesis", "probability", "method", "T"])
    sid = _numeric_column(df, "sample_id", path, integer=True)
    hyp = _numeric_column(df, "hypothesis", path, integer=True)
    prob = _numeric_column(df, "probability", path)
    t = _numeric_column(df, "T", path, integer=True)
    return [FusedResult(int(s), int(h), float(p), str(m), int(n))
            for s, h, p, m, n in zip(sid, hyp, prob, df["method"], t)]


def write_calibrated_csv(path, ds: Dataset, probs, extrapolated) -> None:
    probs = np.asarray(probs, dtype=np.float64)
    flags = np.asarray(extrapolated, dtype=bool)
    if len(ds) != probs.shape[0] or probs.shape != flags.shape:
        raise InvalidInputError("probabilities and flags must match the dataset")
    pd.DataFrame({
        "sample_id": np.arange(len(ds)),
        "predicted_class": ds.predicted_class,
        "true_class": ds.true_class,
        "probability": probs,
        "extrapolated": flags.astype(int),
    }).to_csv(path, index=False)


def read_calibrated_csv(path):
    cols = ["sample_id", "predicted_class", "true_class", "probability", "extrapolated"]
    df = _read_frame(path, cols)
    return {
        "sample_id": _numeric_column(df, "sample_id", path, integer=True),
        "predicted_class": _numeric_column(df, "predicted_class", path, integer=True),
        "true_class": _numeric_column(df, "true_class", path, integer=True),
        "probability": _numeric_column(df, "probability", path),
        "extrapolated": _numeric_column(df, "extrapolated", path, integer=True).astype(bool),
    }


def write_reliability_csv(path, bins: list[ReliabilityBin]) -> None:
    pd.DataFrame({
        "bin_lo": [b.bin_lo for b in bins],
        "bin_hi": [b.bin_hi for b in bins],
        "count": [b.count for b in bins],
        "mean_confidence": [b.mean_confidence for b in bins],
        "empirical_accuracy": [b.empirical_accuracy for b in bins],
        "residual": [b.residual for b in bins],
    }).to_csv(path, index=False)


def save_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(path.read_text())
