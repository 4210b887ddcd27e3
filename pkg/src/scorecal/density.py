"""Nonparametric density estimators over score space.

Two estimators back the calibration ratio: a fixed-grid histogram for
low-dimensional score spaces and a k-nearest-neighbor estimator that
stays usable when the dimension grows.  Both accept per-point weights
and serialize to versioned JSON artifacts whose round trip reproduces
query results bit for bit.

The kNN estimate at a query point x with neighbor distances
d_1 <= ... <= d_k is

    rho(x) = sum_i W_i / (n * V_dims * sum_i d_i**dims)

where W_i is the cumulative weight of the i nearest neighbors and
V_dims the unit-ball volume.  With unit weights W_i = i and the
numerator collapses to k(k+1)/2, the unweighted form; the cumulative
weighting is this library's construction for imbalanced data, not a
published one.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .core import InvalidInputError

HISTOGRAM = "histogram"
KNN = "knn"

UNIFORM = "uniform"
INVERSE_PREVALENCE = "inverse-class-prevalence"

# Volume assigned to a query that coincides with its k nearest stored
# points; keeps the estimate finite instead of dividing by zero.
COINCIDENT_EPS_VOL = 1e-12

ARTIFACT_VERSION = 1


class OutOfSupportError(InvalidInputError):
    """Query fell outside the histogram's configured range."""


@dataclass
class DensityConfig:
    """Estimator choice and knobs shared by fits and artifacts."""

    estimator_kind: str = HISTOGRAM
    bins_per_dim: int = 100
    k: int = 25
    weighting: str = UNIFORM
    range_per_dim: tuple | None = None  # ((lo, hi), ...) or None to auto-fit

    def validate(self) -> None:
        if self.estimator_kind not in (HISTOGRAM, KNN):
            raise InvalidInputError(f"unknown estimator_kind {self.estimator_kind!r}")
        if self.bins_per_dim < 1:
            raise InvalidInputError("bins_per_dim must be >= 1")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.weighting not in (UNIFORM, INVERSE_PREVALENCE):
            raise InvalidInputError(f"unknown weighting {self.weighting!r}")


def unit_ball_volume(dims: int) -> float:
    """Volume of the Euclidean unit ball: pi**(d/2) / Gamma(d/2 + 1)."""
    if dims < 1:
        raise InvalidInputError("dims must be >= 1")
    return float(np.exp(0.5 * dims * np.log(np.pi) - gammaln(0.5 * dims + 1.0)))


def _check_points_weights(points, weights):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InvalidInputError(f"points must be a nonempty (n, d) array, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points must be finite")
    if weights is None:
        w = np.ones(pts.shape[0], dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise InvalidInputError("weights length does not match points")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise InvalidInputError("weights must be finite and > 0")
    return pts, w


def _cell_indices(edges, pts: np.ndarray):
    """Cell index per point per dim, plus an in-support mask.

    Cells are half-open on the right except the last cell, which also
    owns the upper edge.
    """
    n = pts.shape[0]
    b = edges[0].shape[0] - 1
    idx = np.empty((n, len(edges)), dtype=np.intp)
    ok = np.ones(n, dtype=bool)
    for j, e in enumerate(edges):
        x = pts[:, j]
        ok &= (x >= e[0]) & (x <= e[-1])
        i = np.searchsorted(e, x, side="right") - 1
        i[x == e[-1]] = b - 1
        idx[:, j] = np.clip(i, 0, b - 1)
    return idx, ok


class HistogramDensity:
    """Histogram density on a fixed per-dimension grid.

    Cells are half-open [lo, hi) except the last cell per dimension,
    which also includes the upper edge.  The density of a cell is
    cell_weight / (population * cell_volume); ``population`` defaults
    to the total stored weight, making the estimate integrate to one.
    """

    def __init__(self, edges, counts, total_weight, population, config: DensityConfig):
        self.edges = [np.asarray(e, dtype=np.float64) for e in edges]
        self.counts = np.asarray(counts, dtype=np.float64)
        self.total_weight = float(total_weight)
        self.population = float(population)
        self.config = config
        self.dims = len(self.edges)
        self.bins_per_dim = self.edges[0].shape[0] - 1
        widths = [e[-1] - e[0] for e in self.edges]
        self.cell_volume = float(np.prod([w / self.bins_per_dim for w in widths]))
        self.counts.flags.writeable = False

    @property
    def ranges(self) -> np.ndarray:
        return np.array([[e[0], e[-1]] for e in self.edges])

    def _cell_indices(self, pts: np.ndarray):
        return _cell_indices(self.edges, pts)

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Densities and an in-support mask for a batch of query points.

        Out-of-range queries get density 0.0 and mask False; callers
        that need a hard failure use :meth:`density`.
        """
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != self.dims:
            raise InvalidInputError(f"query dims {pts.shape[1]} != estimator dims {self.dims}")
        idx, ok = self._cell_indices(pts)
        flat = np.ravel_multi_index(idx.T, self.counts.shape, mode="clip")
        rho = self.counts.ravel()[flat] / (self.population * self.cell_volume)
        rho[~ok] = 0.0
        return rho, ok

    def density(self, x) -> float:
        """Density at a single point; raises OutOfSupportError outside the range."""
        rho, ok = self.evaluate(np.atleast_1d(np.asarray(x, dtype=np.float64))[None, :]
                                if np.ndim(x) <= 1 else x)
        if not ok[0]:
            raise OutOfSupportError(f"query {x!r} outside histogram range")
        return float(rho[0])

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["range_per_dim"] = [[float(e[0]), float(e[-1])] for e in self.edges]
        return {
            "version": ARTIFACT_VERSION,
            "estimator_kind": HISTOGRAM,
            "dims": self.dims,
            "config": cfg,
            "counts": [float(c) for c in self.counts.ravel()],
            "weights": None,
            "range": cfg["range_per_dim"],
            "total_weight": self.total_weight,
            "population": self.population,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistogramDensity":
        if d.get("version") != ARTIFACT_VERSION:
            raise InvalidInputError(f"unsupported artifact version {d.get('version')!r}")
        if d.get("estimator_kind") != HISTOGRAM:
            raise InvalidInputError("artifact is not a histogram estimator")
        cfg = dict(d["config"])
        cfg["range_per_dim"] = tuple(tuple(r) for r in cfg["range_per_dim"])
        config = DensityConfig(**cfg)
        dims = d["dims"]
        b = config.bins_per_dim
        edges = [np.linspace(lo, hi, b + 1) for lo, hi in cfg["range_per_dim"]]
        counts = np.asarray(d["counts"], dtype=np.float64).reshape((b,) * dims)
        return cls(edges, counts, d["total_weight"], d["population"], config)


def fit_histogram(points, weights=None, config: DensityConfig | None = None,
                  population: float | None = None) -> HistogramDensity:
    """Fit a histogram density.

    Parameters
    ----------
    points : array-like, shape (n, d) or (n,)
        Sample locations; every point must lie inside the range.
    weights : array-like, shape (n,), optional
        Positive per-point weights; default is unit weight.
    config : DensityConfig, optional
        Bin count and, optionally, an explicit (lo, hi) per dimension.
        Without an explicit range the fit uses the data extent, padded
        by a relative 1e-9 margin so extreme points stay inside.
    population : float, optional
        Normalization total in the density denominator.  Defaults to
        the summed weights; a calibrator fitting a correct-subset
        estimator passes the full-set total here.
    """
    config = config or DensityConfig()
    config.validate()
    pts, w = _check_points_weights(points, weights)
    dims = pts.shape[1]
    b = config.bins_per_dim
    if config.range_per_dim is not None:
        ranges = [(float(lo), float(hi)) for lo, hi in config.range_per_dim]
        if len(ranges) != dims:
            raise InvalidInputError("range_per_dim length does not match point dims")
    else:
        margin = 1e-9
        ranges = []
        for j in range(dims):
            lo, hi = float(pts[:, j].min()), float(pts[:, j].max())
            pad = max(abs(lo), abs(hi), 1.0) * margin
            ranges.append((lo - pad, hi + pad))
    for j, (lo, hi) in enumerate(ranges):
        if not hi > lo:
            raise InvalidInputError(f"empty range ({lo}, {hi}) in dim {j}")
        if np.any(pts[:, j] < lo) or np.any(pts[:, j] > hi):
            row = int(np.argmax((pts[:, j] < lo) | (pts[:, j] > hi)))
            raise InvalidInputError(
                f"point {row} outside configured range in dim {j}"
            )
    edges = [np.linspace(lo, hi, b + 1) for lo, hi in ranges]
    idx, _ = _cell_indices(edges, pts)
    flat = np.ravel_multi_index(idx.T, (b,) * dims)
    counts = np.bincount(flat, weights=w, minlength=b ** dims).reshape((b,) * dims)
    total = float(w.sum())
    cfg = DensityConfig(HISTOGRAM, b, config.k, config.weighting,
                        tuple((lo, hi) for lo, hi in ranges))
    return HistogramDensity(edges, counts, total,
                            total if population is None else population, cfg)


def histogram_density(est: HistogramDensity, x) -> float:
    return est.density(x)


class KnnDensity:
    """k-nearest-neighbor density over stored weighted points.

    Neighbor lookups use an exact KD-tree; results are identical to a
    brute-force distance sort.  The estimator is immutable after fit.
    """

    def __init__(self, points, weights, config: DensityConfig, population=None):
        pts, w = _check_points_weights(points, weights)
        self.points = pts
        self.weights = w
        self.points.flags.writeable = False
        self.weights.flags.writeable = False
        self.dims = pts.shape[1]
        self.total_weight = float(w.sum())
        self.population = self.total_weight if population is None else float(population)
        self.config = config
        self.tree = cKDTree(self.points)
        self._ball_volume = unit_ball_volume(self.dims)

    def __len__(self) -> int:
        return self.points.shape[0]

    def evaluate(self, points, k: int | None = None, workers: int = 1) -> np.ndarray:
        """kNN densities for a batch of query points.

        ``k`` defaults to the fitted config's k.  ``workers`` is passed
        to the tree query; -1 uses all cores.
        """
        k = self.config.k if k is None else int(k)
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        if k > len(self):
            raise InvalidInputError(f"k={k} exceeds stored point count {len(self)}")
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != self.dims:
            raise InvalidInputError(f"query dims {pts.shape[1]} != estimator dims {self.dims}")
        dist, idx = self.tree.query(pts, k=k, workers=workers)
        dist = np.atleast_2d(dist.reshape(pts.shape[0], k))
        idx = np.atleast_2d(idx.reshape(pts.shape[0], k))
        denom_dist = (dist ** self.dims).sum(axis=1)
        cumw = self.weights[idx].cumsum(axis=1)
        numer = cumw.sum(axis=1)
        rho = np.empty(pts.shape[0], dtype=np.float64)
        coincident = denom_dist == 0.0
        safe = ~coincident
        rho[safe] = numer[safe] / (self.population * self._ball_volume * denom_dist[safe])
        # All k neighbors sit exactly on the query: report the ceiling.
        rho[coincident] = self.population / (self._ball_volume * COINCIDENT_EPS_VOL)
        return rho

    def density(self, x, k: int | None = None) -> float:
        q = np.asarray(x, dtype=np.float64)
        q = q[None, :] if q.ndim == 1 else q
        return float(self.evaluate(q, k=k)[0])

    def to_dict(self) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "estimator_kind": KNN,
            "dims": self.dims,
            "config": asdict(self.config),
            "points": [[float(v) for v in row] for row in self.points],
            "weights": [float(v) for v in self.weights],
            "range": None,
            "total_weight": self.total_weight,
            "population": self.population,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnDensity":
        if d.get("version") != ARTIFACT_VERSION:
            raise InvalidInputError(f"unsupported artifact version {d.get('version')!r}")
        if d.get("estimator_kind") != KNN:
            raise InvalidInputError("artifact is not a knn estimator")
        cfg = dict(d["config"])
        if cfg.get("range_per_dim") is not None:
            cfg["range_per_dim"] = tuple(tuple(r) for r in cfg["range_per_dim"])
        config = DensityConfig(**cfg)
        return cls(np.asarray(d["points"], dtype=np.float64),
                   np.asarray(d["weights"], dtype=np.float64),
                   config, population=d["population"])


def fit_knn(points, weights=None, config: DensityConfig | None = None,
            population: float | None = None) -> KnnDensity:
    """Fit a kNN density estimator; needs at least config.k points."""
    config = config or DensityConfig(estimator_kind=KNN)
    config.validate()
    pts, w = _check_points_weights(points, weights)
    if pts.shape[0] < config.k:
        raise InvalidInputError(
            f"need at least k={config.k} points, got {pts.shape[0]}"
        )
    cfg = DensityConfig(KNN, config.bins_per_dim, config.k, config.weighting, None)
    return KnnDensity(pts, w, cfg, population=population)


def knn_density(est: KnnDensity, x, k: int | None = None) -> float:
    return est.density(x, k=k)


def estimator_from_dict(d: dict):
    kind = d.get("estimator_kind")
    if kind == HISTOGRAM:
        return HistogramDensity.from_dict(d)
    if kind == KNN:
        return KnnDensity.from_dict(d)
    raise InvalidInputError(f"unknown estimator_kind {kind!r}")
