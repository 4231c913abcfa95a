"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from mppstat import Band, PointPattern, SimWindow

# Grid unit for fixtures that need exact float arithmetic: sums and
# differences of multiples of 2^-20 below 2^20 are representable exactly.
DYADIC = 2.0**-20


def pattern_1d(x, y=None, z=None, lo=None, hi=None) -> PointPattern:
    """One-dimensional pattern with defaulted marks and a snug window."""
    x = np.asarray(x, dtype=float)
    if y is None:
        y = np.ones_like(x)
    if z is None:
        z = np.ones_like(x)
    if lo is None:
        lo = float(x.min()) if x.size else 0.0
    if hi is None:
        hi = float(x.max()) if x.size else 1.0
    return PointPattern(x, np.asarray(y, float), np.asarray(z, float), SimWindow.cube(lo, hi, 1))


def snap_dyadic(a: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(a, dtype=float) / DYADIC) * DYADIC


def random_pattern(
    rng: np.random.Generator,
    n: int,
    dim: int = 1,
    extent: float = 10.0,
    buffer: float = 2.0,
    dyadic: bool = False,
    positive_marks: bool = False,
) -> PointPattern:
    """Random simple pattern on [-buffer, extent+buffer]^dim."""
    while True:
        loc = rng.uniform(-buffer, extent + buffer, size=(n, dim))
        if dyadic:
            loc = snap_dyadic(loc)
        if n < 2:
            break
        order = np.lexsort(loc.T[::-1])
        srt = loc[order]
        if not np.any(np.all(srt[1:] == srt[:-1], axis=1)):
            break
    y = rng.uniform(1.0, 5.0, n) if positive_marks else rng.normal(0.0, 2.0, n)
    z = rng.uniform(0.0, 2.0, n)
    window = SimWindow.cube(-buffer, extent + buffer, dim)
    return PointPattern(loc, y, z, window)


def random_band(rng: np.random.Generator, dim: int = 1, max_reach: float = 3.0) -> Band:
    if dim == 1:
        a, b = np.sort(rng.uniform(-max_reach, max_reach, 2))
        return Band(float(a), float(b))
    a, b = np.sort(rng.uniform(0.0, max_reach, 2))
    return Band(float(a), float(b), signed=False)


def sorted_pairs(ii: np.ndarray, jj: np.ndarray) -> list[tuple[int, int]]:
    return sorted(zip(ii.tolist(), jj.tolist()))
