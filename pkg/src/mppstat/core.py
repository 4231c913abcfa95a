"""Point-pattern data model, window geometry, distance bands and pair enumeration.

Every estimator in this package reduces to sums over ordered point pairs
(p1, p2), p1 != p2, where p1 lies in an estimation window [0, T] and the
displacement from p1 to p2 falls in a distance band.  For patterns on the
real line the displacement is signed (t2 - t1); in higher dimensions the
Euclidean distance ||t2 - t1|| is used.

All objects are immutable (arrays are frozen) and all operations are pure
functions of their inputs, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "MppstatError",
    "InputError",
    "NumericError",
    "UnsupportedSpecError",
    "MarkedPoint",
    "SimWindow",
    "PointPattern",
    "Window",
    "Band",
    "pair_distance",
    "band_pair_indices",
    "band_pair_indices_naive",
    "pair_count",
    "weighted_pair_sum",
    "translate",
    "buffered_window",
    "write_pattern_csv",
    "read_pattern_csv",
]


class MppstatError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MppstatError, ValueError):
    """An argument violates a documented precondition."""


class NumericError(MppstatError, ArithmeticError):
    """A computation produced or encountered a non-finite value."""


class UnsupportedSpecError(MppstatError):
    """A closed-form route does not exist for the requested model."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkedPoint:
    """A single point: location in R^d, primary mark y, weight mark z >= 0."""

    location: tuple[float, ...]
    y: float
    z: float

    def __post_init__(self):
        loc = tuple(float(c) for c in self.location)
        object.__setattr__(self, "location", loc)
        if not all(np.isfinite(loc)):
            raise InputError(f"non-finite location {loc}")
        if not np.isfinite(self.y):
            raise InputError(f"non-finite mark y={self.y}")
        if not np.isfinite(self.z) or self.z < 0:
            raise InputError(f"weight mark must be finite and >= 0, got z={self.z}")


@dataclass(frozen=True)
class SimWindow:
    """Axis-aligned simulation box; the region on which a pattern is fully observed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InputError("window bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("window bounds must be finite")
        if np.any(lo > hi):
            raise InputError(f"window has lo > hi: {lo} / {hi}")
        object.__setattr__(self, "lo", _freeze(lo))
        object.__setattr__(self, "hi", _freeze(hi))

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "SimWindow":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, locations: np.ndarray) -> np.ndarray:
        """Boolean mask: rows of `locations` inside the closed box."""
        pts = np.atleast_2d(locations)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def shifted(self, x: np.ndarray) -> "SimWindow":
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return SimWindow(self.lo - x, self.hi - x)


@dataclass(frozen=True)
class Window:
    """Estimation window [0, T] with T > 0 componentwise."""

    t: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.t, dtype=np.float64))
        if t.ndim != 1:
            raise InputError("window extent must be a scalar or 1-d sequence")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise InputError(f"window extent must be finite and > 0, got {t}")
        object.__setattr__(self, "t", _freeze(t))

    @property
    def dim(self) -> int:
        return self.t.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.t))

    def box(self) -> SimWindow:
        return SimWindow(np.zeros(self.dim), self.t)


@dataclass(frozen=True)
class Band:
    """A distance band [lo, hi], closed at both ends.

    For one-dimensional patterns the band is signed and membership means
    t2 - t1 in [lo, hi]; a negative displacement points into the past.
    For d > 1 the band is unsigned (lo >= 0) and membership means
    ||t2 - t1|| in [lo, hi].
    """

    lo: float
    hi: float
    signed: bool = True

    def __post_init__(self):
        lo = float(self.lo)
        hi = float(self.hi)
        if np.isnan(lo) or np.isnan(hi):
            raise InputError("band endpoints must not be NaN")
        if lo > hi:
            raise InputError(f"band must have lo <= hi, got [{lo}, {hi}]")
        if not self.signed and lo < 0:
            raise InputError(f"unsigned band needs lo >= 0, got lo={lo}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def absolute(cls, lo: float, hi: float) -> "Band":
        return cls(lo, hi, signed=False)

    @property
    def max_abs(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def require_dim(self, dim: int) -> None:
        if self.signed and dim != 1:
            raise InputError(f"signed band used with dim={dim}; signed bands require d=1")
        if not self.signed and dim == 1:
            raise InputError("unsigned band used with d=1; use a signed band")

    def contains(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values)
        return (v >= self.lo) & (v <= self.hi)


@dataclass(frozen=True)
class PointPattern:
    """A finite realization of a marked point process on a simulation window.

    `locations` has shape (n, dim); `y` and `z` have shape (n,).  Patterns
    are simple: no two points share a location.  All weight marks z are
    non-negative and every location lies inside `sim_window`.
    """

    locations: np.ndarray
    y: np.ndarray
    z: np.ndarray
    sim_window: SimWindow

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.float64)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1)
        if loc.ndim != 2:
            raise InputError("locations must have shape (n, dim)")
        y = np.atleast_1d(np.asarray(self.y, dtype=np.float64))
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        n = loc.shape[0]
        if y.shape != (n,) or z.shape != (n,):
            raise InputError("y and z must be 1-d with one entry per point")
        if loc.shape[1] != self.sim_window.dim:
            raise InputError(
                f"locations have dim {loc.shape[1]} but window has dim {self.sim_window.dim}"
            )
        if n:
            if not np.all(np.isfinite(loc)):
                raise InputError("locations must be finite")
            if not np.all(np.isfinite(y)):
                raise InputError("marks y must be finite")
            if not np.all(np.isfinite(z)) or np.any(z < 0):
                raise InputError("weight marks z must be finite and >= 0")
            if not np.all(self.sim_window.contains(loc)):
                raise InputError("all locations must lie inside sim_window")
            order = np.lexsort(loc.T[::-1])
            srt = loc[order]
            if n > 1 and np.any(np.all(srt[1:] == srt[:-1], axis=1)):
                raise InputError("pattern is not simple: duplicate locations")
        object.__setattr__(self, "locations", _freeze(loc))
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "z", _freeze(z))

    @classmethod
    def from_points(cls, points: Sequence[MarkedPoint], sim_window: SimWindow) -> "PointPattern":
        loc = np.array([p.location for p in points], dtype=np.float64).reshape(
            len(points), sim_window.dim
        )
        y = np.array([p.y for p in points], dtype=np.float64)
        z = np.array([p.z for p in points], dtype=np.float64)
        return cls(loc, y, z, sim_window)

    @property
    def dim(self) -> int:
        return self.sim_window.dim

    @property
    def n_points(self) -> int:
        return self.locations.shape[0]

    def points(self) -> list[MarkedPoint]:
        return [
            MarkedPoint(tuple(self.locations[i]), float(self.y[i]), float(self.z[i]))
            for i in range(self.n_points)
        ]

    def with_weights(self, z: np.ndarray) -> "PointPattern":
        return PointPattern(self.locations, self.y, z, self.sim_window)


# ---------------------------------------------------------------------------
# Distances and pair enumeration
# ---------------------------------------------------------------------------


def _row_displacements(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Displacement of each row pair: signed scalar for d=1, Euclidean norm else.

    This single code path defines the float semantics of pair distances;
    both the naive and the accelerated enumerations go through it.
    """
    if a.shape[1] == 1:
        return (b - a).ravel()
    diff = b - a
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def pair_distance(t1: Sequence[float], t2: Sequence[float]) -> float:
    """Displacement from t1 to t2: t2 - t1 for d=1, ||t2 - t1|| for d>1."""
    a = np.atleast_2d(np.asarray(t1, dtype=np.float64))
    b = np.atleast_2d(np.asarray(t2, dtype=np.float64))
    if a.shape != b.shape or a.shape[0] != 1:
        raise InputError(f"locations must share one dimension, got {a.shape} and {b.shape}")
    return float(_row_displacements(a, b)[0])


def _t1_mask(pattern: PointPattern, win: Window) -> np.ndarray:
    if win.dim != pattern.dim:
        raise InputError(f"window dim {win.dim} != pattern dim {pattern.dim}")
    loc = pattern.locations
    return np.all((loc >= 0.0) & (loc <= win.t), axis=1)


def band_pair_indices_naive(
    pattern: PointPattern, win: Window, band: Band
) -> tuple[np.ndarray, np.ndarray]:
    """Reference O(n^2) enumeration of qualifying ordered pairs.

    Examines every ordered pair (i, j), i != j, with point i inside
    [0, T]; kept pairs are exactly those whose displacement lies in the
    closed band.  Used as the ground truth for the accelerated paths.
    """
    band.require_dim(pattern.dim)
    loc = pattern.locations
    n = pattern.n_points
    t1_ok = _t1_mask(pattern, win)
    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []
    all_j = np.arange(n)
    for i in range(n):
        if not t1_ok[i]:
            continue
        d = _row_displacements(np.broadcast_to(loc[i], loc.shape), loc)
        keep = band.contains(d)
        keep[i] = False
        jj = all_j[keep]
        out_i.append(np.full(jj.shape, i, dtype=np.int64))
        out_j.append(jj)
    if not out_i:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(out_i), np.concatenate(out_j)


def _pairs_sorted_1d(
    pattern: PointPattern, win: Window, band: Band
) -> tuple[np.ndarray, np.ndarray]:
    x = pattern.locations[:, 0]
    n = x.shape[0]
    ii0 = np.nonzero(_t1_mask(pattern, win))[0]
    if ii0.size == 0 or n == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    order = np.argsort(x, kind="stable")
    xs = x[order]
    xi = x[ii0]
    if np.isfinite(band.lo) and np.isfinite(band.hi):
        # Candidate ranges are widened by a few ulps so that the exact
        # membership test below never loses a pair to rounding of xi + lo.
        pad = 8.0 * np.spacing(np.abs(xi) + band.max_abs + 1.0)
        left = np.searchsorted(xs, xi + band.lo - pad, side="left")
        right = np.searchsorted(xs, xi + band.hi + pad, side="right")
    else:
        left = np.zeros(ii0.size, dtype=np.int64)
        right = np.full(ii0.size, n, dtype=np.int64)
    counts = right - left
    total = int(counts.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    ii = np.repeat(ii0, counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(total) - np.repeat(starts, counts) + np.repeat(left, counts)
    jj = order[pos]
    d = x[jj] - x[ii]
    keep = band.contains(d) & (ii != jj)
    return ii[keep], jj[keep]


def _pairs_tree(pattern: PointPattern, win: Window, band: Band) -> tuple[np.ndarray, np.ndarray]:
    loc = pattern.locations
    n = pattern.n_points
    t1_ok = _t1_mask(pattern, win)
    empty = np.empty(0, dtype=np.int64)
    if n < 2 or not t1_ok.any():
        return empty, empty
    if not np.isfinite(band.hi):
        return band_pair_indices_naive(pattern, win, band)
    scale = band.hi + float(np.max(np.abs(loc))) + 1.0
    radius = band.hi + 16.0 * np.spacing(scale)
    tree = cKDTree(loc)
    raw = tree.query_pairs(radius, output_type="ndarray")
    if raw.size == 0:
        return empty, empty
    cand_i = np.concatenate((raw[:, 0], raw[:, 1]))
    cand_j = np.concatenate((raw[:, 1], raw[:, 0]))
    keep = t1_ok[cand_i]
    cand_i, cand_j = cand_i[keep], cand_j[keep]
    d = _row_displacements(loc[cand_i], loc[cand_j])
    keep = band.contains(d)
    return cand_i[keep].astype(np.int64), cand_j[keep].astype(np.int64)


def band_pair_indices(
    pattern: PointPattern, win: Window, band: Band
) -> tuple[np.ndarray, np.ndarray]:
    """Indices (i, j) of ordered pairs with point i in [0, T] and displacement in band.

    Point j may lie anywhere in the simulation window.  Uses a sorted
    sweep for d=1 and a kd-tree for d>1; candidate supersets are filtered
    with the same closed-band predicate as the naive double loop, so the
    returned pair set is identical to it.
    """
    band.require_dim(pattern.dim)
    if pattern.dim == 1:
        return _pairs_sorted_1d(pattern, win, band)
    return _pairs_tree(pattern, win, band)


def pair_count(pattern: PointPattern, win: Window, band: Band) -> int:
    """Number of qualifying ordered pairs; an empty pattern has none."""
    ii, _ = band_pair_indices(pattern, win, band)
    return int(ii.size)


def weighted_pair_sum(
    pattern: PointPattern,
    win: Window,
    band: Band,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    weight_on: str = "first",
) -> float:
    """Sum of z1 * f(y1, y2) over qualifying ordered pairs.

    `f` must accept numpy arrays of first and second marks and return an
    array of values.  `weight_on="second"` replaces the z1 factor by z2;
    this variant exists to express the pair-reversal symmetry of fully
    observed one-dimensional patterns.
    """
    if weight_on not in ("first", "second"):
        raise InputError(f"weight_on must be 'first' or 'second', got {weight_on!r}")
    ii, jj = band_pair_indices(pattern, win, band)
    if ii.size == 0:
        return 0.0
    vals = np.asarray(f(pattern.y[ii], pattern.y[jj]), dtype=np.float64)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.nonzero(bad)[0][0])
        i, j = int(ii[k]), int(jj[k])
        raise NumericError(
            "mark function returned a non-finite value for pair "
            f"(t1={tuple(pattern.locations[i])}, y1={pattern.y[i]}, z1={pattern.z[i]}) x "
            f"(t2={tuple(pattern.locations[j])}, y2={pattern.y[j]})"
        )
    w = pattern.z[ii] if weight_on == "first" else pattern.z[jj]
    return float(np.sum(w * vals))


def translate(pattern: PointPattern, x: Sequence[float]) -> PointPattern:
    """Shift the frame of reference by x: each location t becomes t - x.

    The simulation window moves along with the points and the marks are
    untouched, so translating a pattern and its windows together leaves
    every pair statistic unchanged.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (pattern.dim,):
        raise InputError(f"shift vector must have {pattern.dim} components")
    if not np.all(np.isfinite(x)):
        raise InputError("shift vector must be finite")
    return PointPattern(
        pattern.locations - x, pattern.y, pattern.z, pattern.sim_window.shifted(x)
    )


def buffered_window(win: Window, bands: Band | Sequence[Band], extra: float = 0.0) -> SimWindow:
    """Simulation box [-b, T+b]^d with b = max(|lo|, |hi|) over the requested bands.

    Generating on this box guarantees that every point of the estimation
    window [0, T] has its full band neighborhood observed, which keeps the
    pair-sum estimators free of edge effects.
    """
    if isinstance(bands, Band):
        bands = [bands]
    if not bands:
        raise InputError("at least one band is required")
    b = max(band.max_abs for band in bands) + float(extra)
    if not np.isfinite(b):
        raise InputError("cannot buffer for a band with infinite endpoints")
    return SimWindow(np.full(win.dim, -b), win.t + b)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def write_pattern_csv(pattern: PointPattern, path) -> None:
    """Write a pattern as CSV: `# dim=d` header, then location columns, y, z.

    Floats are written with `repr`, which round-trips every double
    exactly (17 significant digits suffice).
    """
    lines = [f"# dim={pattern.dim}"]
    bounds = ";".join(
        f"{float(lo)!r}:{float(hi)!r}"
        for lo, hi in zip(pattern.sim_window.lo, pattern.sim_window.hi)
    )
    lines.append(f"# window={bounds}")
    for i in range(pattern.n_points):
        cells = [repr(float(c)) for c in pattern.locations[i]]
        cells.append(repr(float(pattern.y[i])))
        cells.append(repr(float(pattern.z[i])))
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pattern_csv(path) -> PointPattern:
    """Inverse of :func:`write_pattern_csv`; bit-faithful for finite doubles."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("# dim="):
        raise InputError(f"{path}: missing '# dim=' header")
    dim = int(lines[0].split("=", 1)[1])
    if len(lines) < 2 or not lines[1].startswith("# window="):
        raise InputError(f"{path}: missing '# window=' header")
    bounds = lines[1].split("=", 1)[1].split(";")
    if len(bounds) != dim:
        raise InputError(f"{path}: window bounds do not match dim={dim}")
    lo = np.array([float(b.split(":")[0]) for b in bounds])
    hi = np.array([float(b.split(":")[1]) for b in bounds])
    rows = []
    for k, ln in enumerate(lines[2:], start=3):
        cells = ln.split(",")
        if len(cells) != dim + 2:
            raise InputError(f"{path}: line {k}: expected {dim + 2} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise InputError(f"{path}: line {k}: {exc}") from exc
    data = np.array(rows, dtype=np.float64).reshape(len(rows), dim + 2)
    return PointPattern(data[:, :dim], data[:, dim], data[:, dim + 1], SimWindow(lo, hi))
