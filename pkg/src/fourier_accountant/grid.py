"""Equidistant grids and the placement of privacy loss distributions on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .pld import AtomicPLD

OVERSAMPLE = 16
CRITICAL_XTOL = 1e-12


class Side(enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class GridSpec:
    """The grid x_i = -L + i*dx, i = 0..n-1, with dx = 2L/n."""

    L: float
    n: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"L must be positive and finite, got {self.L!r}")
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 2, got {self.n!r}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def points(self) -> np.ndarray:
        return -self.L + np.arange(self.n) * self.dx

    def point(self, i) -> np.ndarray:
        return -self.L + np.asarray(i) * self.dx

    def check_contains(self, s: np.ndarray) -> None:
        s = np.asarray(s)
        if s.size == 0:
            return
        top = self.point(self.n - 1)
        bad = (s < -self.L) | (s > top)
        if np.any(bad):
            worst = float(s[bad][np.argmax(np.abs(s[bad]))])
            raise ValueError(
                f"privacy loss value s={worst!r} lies outside the grid range "
                f"[{-self.L!r}, {float(top)!r}]; increase L"
            )

    def floor_index(self, s: np.ndarray) -> np.ndarray:
        """Index of the largest grid point <= s (s inside the grid range)."""
        s = np.asarray(s, dtype=np.float64)
        idx = np.floor((s + self.L) / self.dx).astype(np.int64)
        idx = np.clip(idx, 0, self.n - 1)
        # the float division can land one cell off either way
        idx = np.where(self.point(idx) > s, idx - 1, idx)
        nxt = np.minimum(idx + 1, self.n - 1)
        idx = np.where((nxt > idx) & (self.point(nxt) <= s), nxt, idx)
        return idx

    def ceil_index(self, s: np.ndarray) -> np.ndarray:
        """Index of the smallest grid point >= s (s inside the grid range)."""
        s = np.asarray(s, dtype=np.float64)
        idx = self.floor_index(s)
        return np.where(self.point(idx) < s, idx + 1, idx)


@dataclass(frozen=True)
class GridPLD:
    """A PLD whose atoms sit on the points of `grid`."""

    grid: GridSpec
    mass: np.ndarray
    delta_inf: float = 0.0

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.shape != (self.grid.n,):
            raise ValueError(f"mass must have length n={self.grid.n}")
        if np.any(mass < 0):
            raise ValueError("grid masses must be non-negative")
        if not 0.0 <= self.delta_inf <= 1.0:
            raise ValueError("delta_inf outside [0, 1]")
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "delta_inf", float(self.delta_inf))

    @property
    def total_mass(self) -> float:
        return math.fsum(self.mass)

    def to_atomic(self) -> AtomicPLD:
        nz = self.mass > 0
        return AtomicPLD(self.grid.points[nz], self.mass[nz], self.delta_inf)


def _snap(pld: AtomicPLD, grid: GridSpec, index_fn) -> GridPLD:
    grid.check_contains(pld.s)
    idx = index_fn(pld.s)
    mass = np.bincount(idx, weights=pld.mass, minlength=grid.n)
    return GridPLD(grid, mass, pld.delta_inf)


def snap_left(pld: AtomicPLD, grid: GridSpec) -> GridPLD:
    """Moves every atom down to the nearest grid point (pessimistic for the lower bound)."""
    return _snap(pld, grid, grid.floor_index)


def snap_right(pld: AtomicPLD, grid: GridSpec) -> GridPLD:
    """Moves every atom up to the nearest grid point."""
    return _snap(pld, grid, grid.ceil_index)


def _critical_points(
    density: Callable, xs: np.ndarray, vals: np.ndarray
) -> np.ndarray:
    d = np.diff(vals)
    j = np.arange(1, vals.size - 1)
    peak = (d[:-1] > 0) & (d[1:] <= 0)
    trough = (d[:-1] < 0) & (d[1:] >= 0)
    out = []
    for jj, is_peak in zip(j[peak | trough], peak[peak | trough]):
        sign = -1.0 if is_peak else 1.0
        res = optimize.minimize_scalar(
            lambda x: sign * float(density(np.array([x]))[0]),
            bounds=(xs[jj - 1], xs[jj + 1]),
            method="bounded",
            options={"xatol": CRITICAL_XTOL},
        )
        out.append(res.x)
    return np.asarray(out, dtype=np.float64)


def cell_extrema(
    density: Callable, support_left: float, edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Min and max of `density` over each cell [edges[j], edges[j+1]].

    Each cell is sampled at OVERSAMPLE sub-intervals; interior extrema are
    located from sign changes of the sampled differences and refined to
    CRITICAL_XTOL. The density is treated as zero at or below `support_left`.
    """
    cells = edges.size - 1
    t = np.linspace(0.0, 1.0, OVERSAMPLE + 1)[:-1]
    xs = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * t[None, :]).ravel()
    xs = np.append(xs, edges[-1])

    def f(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        inside = x > support_left
        if np.any(inside):
            out[inside] = density(x[inside])
        return out

    vals = f(xs)
    body = vals[:-1].reshape(cells, OVERSAMPLE)
    right = vals[OVERSAMPLE::OVERSAMPLE]
    lo = np.minimum(body.min(axis=1), right)
    hi = np.maximum(body.max(axis=1), right)

    crit = _critical_points(f, xs, vals)
    if crit.size:
        cval = f(crit)
        cell = np.clip(np.searchsorted(edges, crit, side="right") - 1, 0, cells - 1)
        np.minimum.at(lo, cell, cval)
        np.maximum.at(hi, cell, cval)
    return lo, hi


def discretize_continuous(
    density: Callable, support_left: float, grid: GridSpec, side: Side
) -> GridPLD:
    """Riemann-cell discretization of a continuous PLD density onto `grid`.

    MIN puts dx * min over [x_i, x_{i+1}] on x_i; MAX puts dx * max over
    [x_{i-1}, x_i] on x_i. The density must accept numpy arrays and have few
    interior critical points; that is the caller's obligation.
    """
    side = Side(side)
    edges = grid.point(np.arange(-1, grid.n + 1))
    lo, hi = cell_extrema(density, support_left, edges)
    # cell j spans [x_{j-1}, x_j]
    if side is Side.MIN:
        mass = grid.dx * lo[1:]
    else:
        mass = grid.dx * hi[:-1]
    return GridPLD(grid, np.maximum(mass, 0.0), 0.0)
