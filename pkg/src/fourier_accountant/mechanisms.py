"""PLD constructors for randomised response, the exponential mechanism on a
counting query, binomial (lattice) noise, Poisson subsampling and the
subsampled Gaussian mechanism."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .error_analysis import (
    GridBracket,
    bracket_from_grid_plds,
    build_bracket,
    default_lambda,
    subsampled_gaussian_mgf_pair,
)
from .grid import GridPLD, GridSpec, Side, discretize_continuous
from .pld import (
    AtomicPLD,
    OutputDistribution,
    PrivacyBound,
    pld_from_log_probs,
    read_pld_csv,
)

MIN_LOG_MASS = -745.0


class Direction(enum.Enum):
    XY = "X/Y"
    YX = "Y/X"


def _check_prob(name: str, p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {p!r}")


# ---------------------------------------------------------------- randomised response


def rr_outputs(p: float) -> Tuple[OutputDistribution, OutputDistribution]:
    """Worst-case output pair of randomised response: X answers 1 w.p. p, Y w.p. 1-p."""
    _check_prob("p", p)
    fx = OutputDistribution(np.array([0.0, 1.0]), np.array([1.0 - p, p]))
    fy = OutputDistribution(np.array([0.0, 1.0]), np.array([p, 1.0 - p]))
    return fx, fy


def rr_delta(p: float, eps: float) -> float:
    """Tight delta(eps) of one randomised response release, p(1 - e^{eps - c_p}) below c_p = log(p/(1-p))."""
    _check_prob("p", p)
    c = abs(math.log(p) - math.log1p(-p))
    hi = max(p, 1.0 - p)
    return hi * -math.expm1(eps - c) if eps < c else 0.0


# ---------------------------------------------------------------- exponential mechanism


def exp_count_log_probs(
    eps_tilde: float, m: int, n_total: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Log output probabilities on {0, 1} for the exponential mechanism on a counting query.

    X holds m zeros among n_total records; its neighbour Y has one zero removed.
    The score of an output is the number of records equal to it.
    """
    if not eps_tilde > 0:
        raise ValueError(f"eps_tilde must be positive, got {eps_tilde!r}")
    if not (int(m) == m and int(n_total) == n_total and 1 <= m <= n_total):
        raise ValueError(f"need integers 1 <= m <= n_total, got m={m!r}, n_total={n_total!r}")
    ones = n_total - m
    zx, ox = eps_tilde * m, eps_tilde * ones
    zy = eps_tilde * (m - 1)
    nx = np.logaddexp(zx, ox)
    ny = np.logaddexp(zy, ox)
    return np.array([zx - nx, ox - nx]), np.array([zy - ny, ox - ny])


def exp_count_outputs(
    eps_tilde: float, m: int, n_total: int
) -> Tuple[OutputDistribution, OutputDistribution]:
    lx, ly = exp_count_log_probs(eps_tilde, m, n_total)
    labels = np.array([0.0, 1.0])
    return OutputDistribution(labels, np.exp(lx)), OutputDistribution(labels, np.exp(ly))


def exp_count_pld(
    eps_tilde: float, m: int, n_total: int, direction: Direction = Direction.XY
) -> AtomicPLD:
    lx, ly = exp_count_log_probs(eps_tilde, m, n_total)
    if Direction(direction) is Direction.YX:
        lx, ly = ly, lx
    return AtomicPLD(lx - ly, np.exp(lx), 0.0)


# ---------------------------------------------------------------- binomial / lattice noise


def binomial_log_pmf(n_trials: int, p: float) -> np.ndarray:
    if not (int(n_trials) == n_trials and n_trials >= 1):
        raise ValueError(f"n_trials must be a positive integer, got {n_trials!r}")
    _check_prob("p", p)
    k = np.arange(int(n_trials) + 1)
    # binom.logpmf drifts by ~1e-9 relative at n ~ 1e6; the pmf itself stays
    # accurate, so take its log wherever it does not underflow
    pmf = stats.binom.pmf(k, int(n_trials), p)
    out = stats.binom.logpmf(k, int(n_trials), p)
    ok = pmf > 1e-290
    out[ok] = np.log(pmf[ok])
    return out


@dataclass(frozen=True)
class LatticePair:
    """X = shift + T versus Y = T for a noise T living on the integer lattice.

    The physical value of lattice index j is j * unit; `offset` is the index
    of log_pmf[0].
    """

    unit: Fraction
    shift: int
    offset: int
    log_pmf: np.ndarray

    def __post_init__(self):
        if int(self.shift) != self.shift or self.shift < 0:
            raise ValueError("shift must be a non-negative integer")
        object.__setattr__(self, "log_pmf", np.asarray(self.log_pmf, dtype=np.float64))

    def aligned_log_probs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Lattice indices plus log P[X = j] and log P[Y = j] on their union."""
        m = self.log_pmf.size
        idx = self.offset + np.arange(m + self.shift)
        lx = np.full(idx.size, -np.inf)
        ly = np.full(idx.size, -np.inf)
        lx[self.shift :] = self.log_pmf
        ly[:m] = self.log_pmf
        return idx, lx, ly


@dataclass(frozen=True)
class BinomialNoise:
    """Per-coordinate noise Z ~ Bin(n_trials, p)."""

    n_trials: int
    p: float

    def log_pmf(self) -> np.ndarray:
        return binomial_log_pmf(self.n_trials, self.p)


def _as_fraction(x) -> Fraction:
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"sensitivity entries must be finite, got {x!r}")
        # decimal reading: 0.1 means 1/10, not the nearest binary fraction
        return Fraction(repr(x))
    return Fraction(x)


def reduce_to_1d(
    delta_vec: Sequence, noise: Union[BinomialNoise, Sequence[BinomialNoise]]
) -> LatticePair:
    """Collapses additive lattice noise on a d-dimensional query to a 1D pair.

    The pair is ||D||^2 + sum_i D_i Z_i versus sum_i D_i Z_i, expressed on the
    coarsest lattice that contains every D_i and ||D||^2.
    """
    deltas = [_as_fraction(x) for x in delta_vec]
    if not deltas:
        raise ValueError("delta_vec must be non-empty")
    if isinstance(noise, BinomialNoise):
        noise = [noise] * len(deltas)
    noise = list(noise)
    if len(noise) != len(deltas):
        raise ValueError("need one noise description per coordinate")

    denom = reduce(math.lcm, (d.denominator for d in deltas), 1)
    coeffs = [int(d * denom) for d in deltas]
    sq = sum(c * c for c in coeffs)
    # ||D||^2 = sq / denom^2; refine the unit 1/denom by m so the shift is integral
    m = denom // math.gcd(sq, denom)
    unit = Fraction(1, denom * m)
    coeffs = [c * m for c in coeffs]
    shift = sq * m // denom
    if shift == 0:
        raise ValueError("delta_vec must not be all zero")

    first = noise[0]
    c = coeffs[0]
    if abs(c) == 1 and all(x == c for x in coeffs) and all(z == first for z in noise):
        # sum of identically weighted binomials is again binomial
        total = first.n_trials * len(coeffs)
        log_pmf = binomial_log_pmf(total, first.p)
        if c > 0:
            return LatticePair(unit, shift, 0, log_pmf)
        return LatticePair(unit, shift, -total, log_pmf[::-1])

    pmf = np.ones(1)
    offset = 0
    for c, z in zip(coeffs, noise):
        if c == 0:
            continue
        base = np.exp(z.log_pmf())
        spread = np.zeros(abs(c) * z.n_trials + 1)
        spread[:: abs(c)] = base if c > 0 else base[::-1]
        if c < 0:
            offset += c * z.n_trials
        pmf = np.convolve(pmf, spread)
    with np.errstate(divide="ignore"):
        log_pmf = np.log(np.maximum(pmf, 0.0))
    # strip lattice points the noise cannot reach
    nz = np.flatnonzero(np.isfinite(log_pmf))
    log_pmf = log_pmf[nz[0] : nz[-1] + 1]
    return LatticePair(unit, shift, offset + int(nz[0]), log_pmf)


def binomial_pair(n_trials: int, p: float, shift: int) -> LatticePair:
    return LatticePair(Fraction(1), int(shift), 0, binomial_log_pmf(n_trials, p))


def binomial_1d_outputs(
    n_trials: int, p: float, shift: int, scale: float = 1.0
) -> Tuple[OutputDistribution, OutputDistribution]:
    """X = shift + Bin(N, p) and Y = Bin(N, p), with labels multiplied by `scale`."""
    if int(shift) != shift or shift < 0:
        raise ValueError("shift must be a non-negative integer")
    binomial_log_pmf(n_trials, p)  # validation
    pmf = stats.binom.pmf(np.arange(n_trials + 1), n_trials, p)
    labels = np.arange(n_trials + 1, dtype=np.float64)
    return (
        OutputDistribution((labels + shift) * scale, pmf),
        OutputDistribution(labels * scale, pmf),
    )


# ---------------------------------------------------------------- subsampling


def poisson_subsample_pair(
    fx: OutputDistribution, fy: OutputDistribution, q: float
) -> Tuple[Tuple[OutputDistribution, OutputDistribution], Tuple[OutputDistribution, OutputDistribution]]:
    """Returns (mix, fy) and (fy, mix) with mix = q*fx + (1-q)*fy on the union of outcomes."""
    _check_prob("q", q)
    labels = np.union1d(fx.outcomes, fy.outcomes)
    px = np.zeros(labels.size)
    py = np.zeros(labels.size)
    px[np.searchsorted(labels, fx.outcomes)] = fx.probs
    py[np.searchsorted(labels, fy.outcomes)] = fy.probs
    mix = OutputDistribution(labels, q * px + (1.0 - q) * py)
    full_y = OutputDistribution(labels, py)
    return (mix, full_y), (full_y, mix)


def subsample_log_probs(
    log_px: np.ndarray, log_py: np.ndarray, q: float
) -> np.ndarray:
    """log(q * f_X + (1 - q) * f_Y) on aligned log-probabilities."""
    _check_prob("q", q)
    return np.logaddexp(math.log(q) + log_px, math.log1p(-q) + log_py)


# ---------------------------------------------------------------- subsampled Gaussian


def subsampled_gaussian_density(q: float, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """PLD density of Poisson-subsampled Gaussian noise with unit sensitivity (X/Y direction).

    omega(s) = f(g(s)) g'(s) for s > log(1-q), zero otherwise, where f is the
    mixture density q N(1, sigma^2) + (1-q) N(0, sigma^2) and g inverts
    t -> log(f(t) / N(0, sigma^2)(t)).
    """
    _check_prob("q", q)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s2 = sigma * sigma
    floor = math.log1p(-q)
    log_norm = -0.5 * math.log(2 * math.pi * s2)
    lq, l1q = math.log(q), math.log1p(-q)

    def omega(s):
        s = np.asarray(s, dtype=np.float64)
        out = np.zeros_like(s)
        ok = s > floor
        if not np.any(ok):
            return out
        x = s[ok]
        # e^s - (1 - q), written to keep precision near s = 0
        with np.errstate(over="ignore"):
            v = np.expm1(x) + q
        pos = (v > 0) & np.isfinite(v)
        x, v = x[pos], v[pos]
        lv = np.log(v)
        t = s2 * (lv - lq) + 0.5
        log_f = log_norm + np.logaddexp(lq - (t - 1.0) ** 2 / (2 * s2), l1q - t * t / (2 * s2))
        log_gp = math.log(s2) + x - lv
        vals = np.zeros(ok.sum())
        vals[pos] = np.exp(log_f + log_gp)
        out[ok] = vals
        return out

    omega.support_left = floor
    return omega


def subsampled_gaussian_grid_pld(q: float, sigma: float, grid: GridSpec, side: Side) -> GridPLD:
    omega = subsampled_gaussian_density(q, sigma)
    return discretize_continuous(omega, omega.support_left, grid, Side(side))


def subsampled_gaussian_bracket(
    q: float, sigma: float, grid: GridSpec, k: int, lam: Optional[float] = None
) -> GridBracket:
    lam = default_lambda(grid, lam)
    lo = subsampled_gaussian_grid_pld(q, sigma, grid, Side.MIN)
    hi = subsampled_gaussian_grid_pld(q, sigma, grid, Side.MAX)
    return bracket_from_grid_plds(
        lo,
        hi,
        k,
        lam,
        mgf_lower=subsampled_gaussian_mgf_pair(q, sigma, lo, Side.MIN, lam),
        mgf_upper=subsampled_gaussian_mgf_pair(q, sigma, hi, Side.MAX, lam),
    )


def subsampled_gaussian_bounds(
    q: float, sigma: float, grid: GridSpec, k: int, eps: float, lam: Optional[float] = None
) -> PrivacyBound:
    """Strict bracket [delta_min, delta_max] for k compositions of the subsampled Gaussian."""
    return subsampled_gaussian_bracket(q, sigma, grid, k, lam).at(eps)


# ---------------------------------------------------------------- mechanism envelope


@dataclass(frozen=True)
class RR:
    p: float


@dataclass(frozen=True)
class ExpCount:
    eps_tilde: float
    m: int
    n_total: int = 100


@dataclass(frozen=True)
class Binomial:
    n_trials: int
    p: float
    shift: int
    scale: float = 1.0  # labels only; the accounting does not depend on it


@dataclass(frozen=True)
class LatticeNoise:
    """Query with per-coordinate sensitivities `delta_vec` and Bin(n_trials, p) noise on each coordinate."""

    delta_vec: Tuple
    n_trials: int
    p: float

    def __post_init__(self):
        _check_prob("p", self.p)
        object.__setattr__(self, "delta_vec", tuple(self.delta_vec))

    def pair(self) -> LatticePair:
        return reduce_to_1d(self.delta_vec, BinomialNoise(self.n_trials, self.p))


@dataclass(frozen=True)
class SubsampledGaussian:
    q: float
    sigma: float


@dataclass(frozen=True)
class UserAtoms:
    path: Union[str, Path]


Variant = Union[RR, ExpCount, Binomial, LatticeNoise, SubsampledGaussian, UserAtoms]


@dataclass(frozen=True)
class MechanismSpec:
    """A mechanism plus the directions to account for and optional Poisson subsampling.

    `direction=None` means both neighbouring directions.
    """

    variant: Variant
    direction: Optional[Direction] = None
    subsample_q: Optional[float] = None

    def __post_init__(self):
        v = self.variant
        if isinstance(v, RR):
            _check_prob("p", v.p)
        elif isinstance(v, ExpCount):
            exp_count_log_probs(v.eps_tilde, v.m, v.n_total)
        elif isinstance(v, Binomial):
            _check_prob("p", v.p)
            if not (int(v.n_trials) == v.n_trials and v.n_trials >= 1):
                raise ValueError("n_trials must be a positive integer")
            if int(v.shift) != v.shift or v.shift < 0:
                raise ValueError("shift must be a non-negative integer")
        elif isinstance(v, LatticeNoise):
            pass
        elif isinstance(v, SubsampledGaussian):
            _check_prob("q", v.q)
            if not v.sigma > 0:
                raise ValueError("sigma must be positive")
            if self.subsample_q is not None:
                raise ValueError("the subsampled Gaussian already includes its subsampling ratio")
        elif isinstance(v, UserAtoms):
            if self.subsample_q is not None:
                raise ValueError("subsampling needs output distributions, not a bare PLD")
        else:
            raise TypeError(f"unknown mechanism variant {v!r}")
        if self.subsample_q is not None:
            _check_prob("q", self.subsample_q)
        if self.direction is not None:
            object.__setattr__(self, "direction", Direction(self.direction))


def _log_pair(v: Variant) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(v, RR):
        lp, l1p = math.log(v.p), math.log1p(-v.p)
        return np.array([l1p, lp]), np.array([lp, l1p])
    if isinstance(v, ExpCount):
        return exp_count_log_probs(v.eps_tilde, v.m, v.n_total)
    if isinstance(v, Binomial):
        _, lx, ly = binomial_pair(v.n_trials, v.p, v.shift).aligned_log_probs()
        return lx, ly
    if isinstance(v, LatticeNoise):
        _, lx, ly = v.pair().aligned_log_probs()
        return lx, ly
    raise TypeError(f"{type(v).__name__} has no discrete output pair")


def side_plds(
    log_px: np.ndarray, log_py: np.ndarray, min_log_mass: float = MIN_LOG_MASS
) -> Tuple[AtomicPLD, AtomicPLD]:
    """PLDs for the lower and upper bound sides.

    Atoms whose mass underflows are dropped for the lower side and their
    mass bound is added to delta_inf for the upper side.
    """
    pld, dropped = pld_from_log_probs(log_px, log_py, min_log_mass)
    if dropped == 0.0:
        return pld, pld
    upper = AtomicPLD(pld.s, pld.mass, min(1.0, pld.delta_inf + dropped))
    return pld, upper


def directional_plds(spec: MechanismSpec) -> List[Tuple[Direction, AtomicPLD, AtomicPLD]]:
    """(direction, lower-side PLD, upper-side PLD) for every direction to account for."""
    v = spec.variant
    if isinstance(v, UserAtoms):
        pld = read_pld_csv(v.path)
        return [(Direction.XY, pld, pld)]
    lx, ly = _log_pair(v)
    if spec.subsample_q is not None:
        lx = subsample_log_probs(lx, ly, spec.subsample_q)
    pairs = {Direction.XY: (lx, ly), Direction.YX: (ly, lx)}
    wanted = [spec.direction] if spec.direction is not None else list(Direction)
    return [(d, *side_plds(*pairs[d])) for d in wanted]


@dataclass(frozen=True)
class CombinedBracket:
    """Max over neighbouring directions of the per-direction brackets."""

    brackets: Tuple[GridBracket, ...]
    labels: Tuple[str, ...] = field(default=())

    @property
    def grid(self) -> GridSpec:
        return self.brackets[0].grid

    @property
    def lam(self) -> float:
        return self.brackets[0].budget_left.lambda_used

    def at(self, eps: float) -> PrivacyBound:
        parts = [b.at(eps) for b in self.brackets]
        top = max(parts, key=lambda b: b.delta_upper)
        return PrivacyBound(
            delta_lower=max(b.delta_lower for b in parts),
            delta_upper=top.delta_upper,
            err_bound=max(b.err_bound for b in parts),
            delta_tilde_L=max(b.delta_tilde_L for b in parts),
            delta_tilde_R=max(b.delta_tilde_R for b in parts),
            eps=float(eps),
            k=top.k,
            L=top.L,
            n=top.n,
            budgets=top.budgets,
        )


def mechanism_bracket(
    spec: MechanismSpec, grid: GridSpec, k: int, lam: Optional[float] = None
) -> CombinedBracket:
    v = spec.variant
    if isinstance(v, SubsampledGaussian):
        return CombinedBracket((subsampled_gaussian_bracket(v.q, v.sigma, grid, k, lam),), ("X/Y",))
    lam = default_lambda(grid, lam)
    out, labels = [], []
    for d, lower, upper in directional_plds(spec):
        out.append(build_bracket(lower, grid, k, lam, pld_upper=upper))
        labels.append(d.value)
    return CombinedBracket(tuple(out), tuple(labels))


def mechanism_bounds(
    spec: MechanismSpec, grid: GridSpec, k: int, eps: float, lam: Optional[float] = None
) -> PrivacyBound:
    return mechanism_bracket(spec, grid, k, lam).at(eps)
