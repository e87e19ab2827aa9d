"""FFT evaluation of truncated, periodised k-fold convolutions of grid PLDs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import GridPLD, GridSpec
from .pld import delta_infty_composed

logger = logging.getLogger(__name__)

EPS_TOL = 1e-9


@dataclass(frozen=True)
class ComposedGridPLD:
    """Result of composing grid PLDs: masses b on grid points plus the composed delta_inf.

    `mass` may hold tiny negative entries from FFT roundoff.
    """

    grid: GridSpec
    mass: np.ndarray
    k: int
    delta_inf_composed: float

    @property
    def min_mass(self) -> float:
        return float(self.mass.min())


def fft_shift(v: np.ndarray) -> np.ndarray:
    """Swaps the two halves of an even-length vector."""
    v = np.asarray(v)
    n = v.shape[-1]
    if n % 2:
        raise ValueError(f"fft_shift needs an even length, got {n}")
    h = n // 2
    return np.concatenate((v[..., h:], v[..., :h]), axis=-1)


def complex_power(z: np.ndarray, k: int) -> np.ndarray:
    """Elementwise z**k by repeated squaring."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    result = None
    base = np.array(z, dtype=np.complex128)
    while True:
        if k & 1:
            result = base.copy() if result is None else result * base
        k >>= 1
        if not k:
            return result
        base = base * base


def _transform(pld: GridPLD) -> np.ndarray:
    return np.fft.rfft(fft_shift(pld.mass))


def _inverse(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    b = fft_shift(np.fft.irfft(spectrum, n=grid.n))
    if b.size and b.min() < 0:
        logger.debug("FFT roundoff left negative mass %.3e", b.min())
    return b


def compose_self(pld: GridPLD, k: int) -> ComposedGridPLD:
    """k-fold truncated periodic self-convolution of `pld`."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    if k == 1:
        # the one-fold truncated periodic convolution is the identity; skip FFT roundoff
        b = np.array(pld.mass, dtype=np.float64)
    else:
        b = _inverse(complex_power(_transform(pld), k), pld.grid)
    return ComposedGridPLD(pld.grid, b, k, delta_infty_composed(pld.delta_inf, k))


def compose_heterogeneous(plds: Sequence[GridPLD]) -> ComposedGridPLD:
    """Composition of different PLDs sharing one grid."""
    if not plds:
        raise ValueError("need at least one PLD")
    grid = plds[0].grid
    if len(plds) == 1:
        return compose_self(plds[0], 1)
    for p in plds[1:]:
        if p.grid != grid:
            raise ValueError(f"grid mismatch: {p.grid} vs {grid}")
    spectrum = _transform(plds[0])
    keep = 1.0 - plds[0].delta_inf
    for p in plds[1:]:
        spectrum = spectrum * _transform(p)
        keep *= 1.0 - p.delta_inf
    b = _inverse(spectrum, grid)
    return ComposedGridPLD(grid, b, len(plds), min(max(1.0 - keep, 0.0), 1.0))


def delta_tilde(comp: ComposedGridPLD, eps: float) -> float:
    """Grid approximation of delta(eps): the composed delta_inf plus the hockey-stick sum.

    Negative roundoff masses are treated as zero.
    """
    grid = comp.grid
    x = grid.points
    start = int(np.searchsorted(x, eps, side="right"))
    b = np.maximum(comp.mass[start:], 0.0)
    tail = float(np.dot(-np.expm1(eps - x[start:]), b)) if b.size else 0.0
    return min(max(comp.delta_inf_composed + tail, 0.0), 1.0)


def delta_tilde_curve(comp: ComposedGridPLD, eps: np.ndarray) -> np.ndarray:
    return np.array([delta_tilde(comp, float(e)) for e in np.atleast_1d(eps)])


def epsilon_for_delta(
    delta_fn: Callable[[float], float],
    target_delta: float,
    eps_range: tuple[float, float],
    side: str = "upper",
    tol: float = EPS_TOL,
) -> float:
    """Inverts a non-increasing delta(eps) curve by bisection.

    Returns the smallest eps in `eps_range` (to within `tol`) with
    delta_fn(eps) <= target_delta. With ``side="upper"`` the returned point is
    one where the curve is already at or below the target; with
    ``side="lower"`` it is the last point still above it, so an inverted lower
    bound stays a lower bound.
    """
    lo, hi = map(float, eps_range)
    if not lo <= hi:
        raise ValueError("eps_range must satisfy lo <= hi")
    d_lo = delta_fn(lo)
    if d_lo <= target_delta:
        return lo
    d_hi = delta_fn(hi)
    if d_hi > target_delta:
        raise ValueError(
            f"target delta {target_delta!r} not reached on [{lo}, {hi}]: "
            f"delta(lo)={d_lo!r}, delta(hi)={d_hi!r}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if delta_fn(mid) <= target_delta:
            hi = mid
        else:
            lo = mid
    return hi if side == "upper" else lo

