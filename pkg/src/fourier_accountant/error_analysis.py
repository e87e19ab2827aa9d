"""Moment generating functions and the worst-case error budget of the FFT accountant.

All bounds here are evaluated in log space and may legitimately come out as
``inf`` when the chosen (L, lambda) cannot control the error; callers then
fall back to the trivial bracket [0, 1].
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .fourier import ComposedGridPLD, compose_self, delta_tilde
from .grid import GridPLD, GridSpec, Side, snap_left, snap_right
from .pld import AtomicPLD, PrivacyBound

logger = logging.getLogger(__name__)

ALPHA_ZERO_TOL = 1e-14
LAMBDA_SHRINK = 0.99


@dataclass(frozen=True)
class MgfPair:
    """log E[e^{lam*w}] and log E[e^{-lam*w}] for a PLD random variable w."""

    alpha_plus: float
    alpha_minus: float
    lam: float


@dataclass(frozen=True)
class ErrorBudget:
    tail: float
    truncation: float
    periodisation: float
    total: float
    lambda_used: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_used")
        return d


def _locations_and_mass(pld: Union[AtomicPLD, GridPLD]):
    if isinstance(pld, GridPLD):
        return pld.grid.points, pld.mass
    return np.asarray(pld.s), np.asarray(pld.mass)


def log_mgf(pld: Union[AtomicPLD, GridPLD], t: float) -> float:
    """log sum_i e^{t*s_i} a_i, factoring out the largest exponent."""
    s, a = _locations_and_mass(pld)
    keep = a > 0
    if not np.any(keep):
        raise ValueError("MGF of an empty PLD is undefined")
    # log weights rather than logsumexp(b=...): subnormal masses overflow its rescaling
    return float(logsumexp(t * s[keep] + np.log(a[keep])))


def mgf(pld: Union[AtomicPLD, GridPLD], lam: float) -> MgfPair:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    return MgfPair(log_mgf(pld, lam), log_mgf(pld, -lam), float(lam))


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def chernoff_tail(k: int, alpha_plus: float, lam: float, L: float) -> float:
    """Chernoff bound e^{k*alpha - lam*L} on P[S_k >= L]."""
    return _exp(k * alpha_plus - lam * L)


def _log_geometric(alpha: float, m: int) -> float:
    """log of sum_{l=1}^{m} e^{l*alpha}; -inf for m = 0."""
    if m <= 0:
        return -math.inf
    if abs(math.expm1(alpha)) < ALPHA_ZERO_TOL:
        # each term lies within a factor e^{m|alpha|} of 1
        return math.log(m) + max(0.0, m * alpha)
    if alpha > 0:
        return (
            alpha + m * alpha + math.log(-math.expm1(-m * alpha)) - math.log(math.expm1(alpha))
        )
    return alpha + math.log(-math.expm1(m * alpha)) - math.log(-math.expm1(alpha))


def _log_add(*terms: float) -> float:
    finite = [t for t in terms if t != -math.inf]
    if not finite:
        return -math.inf
    return float(logsumexp(finite))


def error_budget(k: int, mgf_pair: MgfPair, L: float) -> ErrorBudget:
    """Worst-case |delta - delta_tilde| of the FFT accountant for k compositions.

    tail: e^{k a+} e^{-L lam}
    truncation: sum_{l=1}^{k-1} (e^{l a+} + e^{l a-}) e^{-L lam}
    periodisation: (e^{k a+} + e^{k a-}) e^{-L lam} / (1 - e^{-L lam})
    total: (sum_{l=1}^{k} e^{l a+} + e^{k a+} + sum_{l=1}^{k} e^{l a-})
           * e^{-L lam} / (1 - e^{-L lam}),
    which dominates the sum of the three parts.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    lam = mgf_pair.lam
    ap, am = mgf_pair.alpha_plus, mgf_pair.alpha_minus
    lt = -L * lam
    if lt >= 0:
        raise ValueError("need lambda * L > 0")
    log_ratio = lt - math.log(-math.expm1(lt))

    tail = lt + k * ap
    trunc = _log_add(_log_geometric(ap, k - 1), _log_geometric(am, k - 1)) + lt
    period = _log_add(k * ap, k * am) + log_ratio
    total = _log_add(_log_geometric(ap, k), k * ap, _log_geometric(am, k)) + log_ratio
    return ErrorBudget(_exp(tail), _exp(trunc), _exp(period), _exp(total), lam)


def snapped_mgf_bounds(mgf_true: MgfPair, grid: GridSpec) -> tuple[MgfPair, MgfPair]:
    """Upper bounds on the MGF pairs of the left- and right-snapped PLDs.

    Snapping down cannot increase E[e^{lam w}] and inflates E[e^{-lam w}] by at
    most 1/(1 - lam*dx); snapping up is the mirror image.
    """
    lam = mgf_true.lam
    if not lam * grid.dx < 1.0:
        raise ValueError(
            f"lambda={lam!r} must satisfy lambda < 1/dx = {1.0 / grid.dx!r}; "
            "lower lambda or raise n"
        )
    inflate = -math.log1p(-lam * grid.dx)
    left = MgfPair(mgf_true.alpha_plus, mgf_true.alpha_minus + inflate, lam)
    right = MgfPair(mgf_true.alpha_plus + inflate, mgf_true.alpha_minus, lam)
    return left, right


def default_lambda(grid: GridSpec, lam: Optional[float] = None) -> float:
    """L/2 unless given, shrunk to 0.99/dx (with a warning) when L/2 >= 1/dx.

    An explicit lambda >= 1/dx is rejected: the snapping MGF bounds need lambda*dx < 1.
    """
    if lam is not None:
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam!r}")
        if lam * grid.dx >= 1.0:
            raise ValueError(
                f"lambda={lam!r} must satisfy lambda < 1/dx = {1.0 / grid.dx!r}; "
                "lower lambda or raise n"
            )
        return float(lam)
    lam = grid.L / 2.0
    if lam * grid.dx >= 1.0:
        new = LAMBDA_SHRINK / grid.dx
        warnings.warn(
            f"default lambda L/2={lam!r} violates lambda < 1/dx; using {new!r}", stacklevel=2
        )
        lam = new
    return float(lam)


@dataclass(frozen=True)
class GridBracket:
    """Composed left/right grid PLDs and their error budgets, reusable across eps."""

    left: ComposedGridPLD
    right: ComposedGridPLD
    budget_left: ErrorBudget
    budget_right: ErrorBudget

    @property
    def grid(self) -> GridSpec:
        return self.left.grid

    def at(self, eps: float) -> PrivacyBound:
        dl = delta_tilde(self.left, eps)
        dr = delta_tilde(self.right, eps)
        return PrivacyBound(
            delta_lower=max(0.0, dl - self.budget_left.total),
            delta_upper=min(1.0, dr + self.budget_right.total),
            err_bound=max(self.budget_left.total, self.budget_right.total),
            delta_tilde_L=dl,
            delta_tilde_R=dr,
            eps=float(eps),
            k=self.left.k,
            L=self.grid.L,
            n=self.grid.n,
            budgets={"lower": self.budget_left, "upper": self.budget_right},
        )


def bracket_from_grid_plds(
    lower: GridPLD,
    upper: GridPLD,
    k: int,
    lam: float,
    mgf_lower: Optional[MgfPair] = None,
    mgf_upper: Optional[MgfPair] = None,
) -> GridBracket:
    """Runs the FFT composition on both grid PLDs and attaches error budgets.

    MGFs default to direct sums over the grid masses.
    """
    grid = lower.grid
    mgf_lower = mgf_lower or mgf(lower, lam)
    mgf_upper = mgf_upper or mgf(upper, lam)
    return GridBracket(
        compose_self(lower, k),
        compose_self(upper, k),
        error_budget(k, mgf_lower, grid.L),
        error_budget(k, mgf_upper, grid.L),
    )


def build_bracket(
    pld: AtomicPLD,
    grid: GridSpec,
    k: int,
    lam: Optional[float] = None,
    pld_upper: Optional[AtomicPLD] = None,
) -> GridBracket:
    """Strict bracket machinery for one direction of an atomic PLD.

    `pld_upper`, when given, replaces `pld` on the upper-bound side (used when
    the two sides must be built differently, e.g. underflow folding).
    """
    lam = default_lambda(grid, lam)
    lower = snap_left(pld, grid)
    upper = snap_right(pld_upper if pld_upper is not None else pld, grid)
    return bracket_from_grid_plds(lower, upper, k, lam)


def strict_delta_bounds(
    pld: AtomicPLD,
    grid: GridSpec,
    k: int,
    eps: float,
    lam: Optional[float] = None,
) -> PrivacyBound:
    """Strict lower and upper bounds on delta(eps) for k-fold composition of `pld`."""
    return build_bracket(pld, grid, k, lam).at(eps)


def subsampled_gaussian_constant(q: float, sigma: float) -> float:
    """sigma^2 log(1/(2q)) - 1/2, the offset in the Gaussian tail bound of the PLD density."""
    return sigma**2 * math.log(1.0 / (2.0 * q)) - 0.5


def subsampled_gaussian_mgf_correction(
    q: float, sigma: float, grid: GridSpec, lam: float
) -> float:
    """Bound on the MGF contribution of discretization cells beyond L.

    e^{c lam L} (2/sqrt(pi)) e^{-lam(2C - lam)/(2 sigma^2)}
    * erfc(((1-c) sigma^2 L + C - lam) / (sqrt(2) sigma)), with c = dx/L.
    """
    L = grid.L
    c = grid.dx / L
    problems = []
    if not sigma >= 1:
        problems.append("sigma >= 1")
    if not 0 < q <= 0.5:
        problems.append("0 < q <= 1/2")
    if not 0 < lam <= L:
        problems.append("0 < lambda <= L")
    if not c < 1:
        problems.append("dx < L")
    if not L > abs(math.log1p(-q)):
        problems.append("L > |log(1 - q)|")
    if not L - grid.dx >= 1:
        problems.append("L - dx >= 1")
    if problems:
        raise ValueError("subsampled Gaussian MGF bound requires " + ", ".join(problems))
    C = subsampled_gaussian_constant(q, sigma)
    x = ((1 - c) * sigma**2 * L + C - lam) / (math.sqrt(2.0) * sigma)
    # erfc(x) = 2 * Phi(-sqrt(2) x), kept in log space
    log_erfc = math.log(2.0) + float(log_ndtr(-math.sqrt(2.0) * x))
    log_err = (
        c * lam * L
        + math.log(2.0 / math.sqrt(math.pi))
        - lam * (2 * C - lam) / (2 * sigma**2)
        + log_erfc
    )
    return _exp(log_err)


def subsampled_gaussian_mgf_bound(
    q: float,
    sigma: float,
    grid: GridSpec,
    side: Side,
    lam: float,
    sign: int,
    discretized: Optional[GridPLD] = None,
) -> float:
    """Upper bound on E[e^{sign*lam*w}] for the untruncated MIN/MAX discretization w.

    The finite sum over the grid plus the correction for cells beyond L.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    corr = subsampled_gaussian_mgf_correction(q, sigma, grid, lam)
    if discretized is None:
        from .mechanisms import subsampled_gaussian_grid_pld

        discretized = subsampled_gaussian_grid_pld(q, sigma, grid, Side(side))
    return _exp(log_mgf(discretized, sign * lam)) + corr


def subsampled_gaussian_mgf_pair(
    q: float, sigma: float, discretized: GridPLD, side: Side, lam: float
) -> MgfPair:
    g = discretized.grid
    plus = subsampled_gaussian_mgf_bound(q, sigma, g, side, lam, +1, discretized)
    minus = subsampled_gaussian_mgf_bound(q, sigma, g, side, lam, -1, discretized)
    return MgfPair(math.log(plus), math.log(minus), lam)
