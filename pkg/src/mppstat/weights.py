"""Weight strategies for combining per-realization mean-mark estimates.

Shipped strategies:

* ``equal``  - every realization weighs the same.
* ``pairs``  - weight by the realization's ordered-pair count in the band
  per unit window volume; combined with the weighted estimator this pools
  all pairs across realizations.
* ``counts`` - weight by the realization's point count in [0, T] per unit
  window volume; for regularly spaced locations with iid marks these are
  the variance-minimizing weights (the estimator variance given the
  locations scales like 1/N).
* ``rfvar``  - weight by the reciprocal of the estimator's conditional
  variance given the point locations, computed from a known mark
  covariance model; the general variance-minimizing choice when marks are
  independent of locations.
* ``custom`` - caller-supplied function of (patterns, win, band).

Also provides the best-linear-unbiased (inverse covariance) weights for
averaging correlated observations with a common mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core import Band, InputError, PointPattern, Window, band_pair_indices, pair_count

__all__ = [
    "WeightStrategy",
    "compute_weights",
    "mean_mark_conditional_variance",
    "blue_weights",
    "neighbor_counts",
]

_KINDS = ("equal", "pairs", "counts", "rfvar", "custom")


@dataclass(frozen=True)
class WeightStrategy:
    """Selection of a realization-weighting rule.

    ``rfvar`` requires `cov` (vectorized covariance of the transformed
    marks as a function of non-negative distance) and `var_f` (its value
    at zero).  ``custom`` requires `fn`.
    """

    kind: str
    cov: Callable[[np.ndarray], np.ndarray] | None = None
    var_f: float | None = None
    fn: Callable[..., Sequence[float]] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown weight strategy {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "rfvar" and (self.cov is None or self.var_f is None):
            raise InputError("rfvar strategy needs cov and var_f")
        if self.kind == "custom" and self.fn is None:
            raise InputError("custom strategy needs fn")


def neighbor_counts(pattern: PointPattern, win: Window, band: Band) -> np.ndarray:
    """Number of band neighbors of each in-window point.

    Entry for a point t counts the other points t2 with displacement from
    t in the band, t2 anywhere in the simulation window.  Points outside
    [0, T] get count zero.
    """
    ii, _ = band_pair_indices(pattern, win, band)
    counts = np.zeros(pattern.n_points, dtype=np.int64)
    if ii.size:
        np.add.at(counts, ii, 1)
    return counts


def mean_mark_conditional_variance(
    pattern: PointPattern,
    win: Window,
    band: Band,
    cov: Callable[[np.ndarray], np.ndarray],
    var_f: float,
) -> float:
    """Variance of the mean-mark estimator given the point locations.

    For marks independent of locations with Cov[f(Y(t)), f(Y(s))] given by
    `cov` of the distance, the estimator (all z = 1, f of the first mark)
    conditionally on the locations has variance

        sum_{t,s in [0,T]} cov(|t-s|) n(t) n(s) / (sum_t n(t))^2,

    where n(t) is the band-neighbor count of t.  Returns NaN when no
    in-window point has a neighbor (the estimate itself is undefined).
    `cov(0)` must equal `var_f`.
    """
    c0 = float(np.asarray(cov(np.zeros(1)))[0])
    if not np.isfinite(var_f) or var_f < 0:
        raise InputError(f"var_f must be finite and >= 0, got {var_f}")
    if abs(c0 - var_f) > 1e-9 * max(1.0, abs(var_f)):
        raise InputError(f"cov(0)={c0!r} does not match var_f={var_f!r}")
    counts = neighbor_counts(pattern, win, band)
    active = counts > 0
    total = float(counts.sum())
    if total == 0.0:
        return float("nan")
    pts = pattern.locations[active]
    n_active = counts[active].astype(np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    cmat = np.asarray(cov(dist), dtype=np.float64)
    quad = float(n_active @ cmat @ n_active)
    return quad / (total * total)


def compute_weights(
    strategy: WeightStrategy,
    patterns: Sequence[PointPattern],
    win: Window,
    band: Band,
) -> np.ndarray:
    """Evaluate a weight strategy on a set of realizations.

    All strategies return finite non-negative weights.  The rfvar strategy
    assigns weight zero (with a warning) to realizations whose conditional
    variance is undefined because they have no qualifying pairs.
    """
    if not patterns:
        raise InputError("at least one realization is required")
    n = len(patterns)
    if strategy.kind == "equal":
        return np.ones(n)
    if strategy.kind == "pairs":
        return np.array(
            [pair_count(p, win, band) / win.volume for p in patterns], dtype=np.float64
        )
    if strategy.kind == "counts":
        return np.array(
            [
                float(np.sum(np.all((p.locations >= 0.0) & (p.locations <= win.t), axis=1)))
                / win.volume
                for p in patterns
            ]
        )
    if strategy.kind == "rfvar":
        out = np.empty(n)
        for k, p in enumerate(patterns):
            v = mean_mark_conditional_variance(p, win, band, strategy.cov, strategy.var_f)
            if not np.isfinite(v) or v <= 0.0:
                warnings.warn(
                    f"realization {k}: conditional variance undefined or zero; weight set to 0",
                    stacklevel=2,
                )
                out[k] = 0.0
            else:
                out[k] = 1.0 / v
        return out
    w = np.asarray(strategy.fn(patterns, win, band), dtype=np.float64)
    if w.shape != (n,) or np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InputError("custom strategy must return finite non-negative weights, one per realization")
    return w


def blue_weights(cov_matrix: np.ndarray) -> np.ndarray:
    """Minimum-variance unbiased weights for averaging correlated observations.

    Solves for w proportional to Sigma^{-1} 1 and renormalizes so the
    weights sum to one; this minimizes w' Sigma w subject to sum(w) = 1.
    The matrix must be symmetric positive definite.
    """
    sigma = np.asarray(cov_matrix, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InputError(f"covariance matrix must be square, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise InputError("covariance matrix must be finite")
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=0.0):
        raise InputError("covariance matrix must be symmetric")
    try:
        factor = scipy.linalg.cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InputError(f"covariance matrix is not positive definite: {exc}") from exc
    w = scipy.linalg.cho_solve(factor, np.ones(sigma.shape[0]))
    return w / np.sum(w)
