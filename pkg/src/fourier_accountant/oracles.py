"""Slow reference computations used to cross-check the accountant.

None of these share code paths with the FFT engine; they exist so the
library can verify itself (see the CLI's ``--verify``).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .pld import AtomicPLD

DIRECT_MAX_N = 1024
DIRECT_MAX_K = 6
ENUMERATION_BUDGET = 10**7
QUAD_ABS_TOL = 1e-10


class OracleMethod(enum.Enum):
    DIRECT_CONVOLUTION = "direct_convolution"
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    EXHAUSTIVE_ENUMERATION = "exhaustive_enumeration"


@dataclass(frozen=True)
class OracleReport:
    reference_value: float
    method: OracleMethod
    cost_note: str = ""

    def __post_init__(self):
        if not math.isfinite(self.reference_value):
            raise ValueError("oracle produced a non-finite value")


def direct_truncated_periodised_convolution(mass: np.ndarray, k: int) -> np.ndarray:
    """k-fold convolution on the grid by explicit double sums, indices taken modulo n.

    Grid index j stands for -L + j*dx, so the sum of indices j and m lands on
    index j + m - n/2.
    """
    a = np.asarray(mass, dtype=np.float64)
    n = a.size
    if n > DIRECT_MAX_N or k > DIRECT_MAX_K:
        raise ValueError(
            f"direct convolution limited to n <= {DIRECT_MAX_N}, k <= {DIRECT_MAX_K}"
        )
    if n % 2 or k < 1:
        raise ValueError("need an even n and k >= 1")
    half = n // 2
    i = np.arange(n)
    # row i holds a[(i - j + n/2) mod n] for every j
    shifted = a[(i[:, None] - i[None, :] + half) % n]
    out = a.copy()
    for _ in range(k - 1):
        out = shifted @ out
    return out


def _compositions(k: int, parts: int):
    """All count vectors of `parts` non-negative integers summing to k."""
    for bars in itertools.combinations(range(k + parts - 1), parts - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(k + parts - 2 - prev)
        yield counts


def exact_atom_convolution_delta(
    pld: AtomicPLD, k: int, eps: float, budget: int = ENUMERATION_BUDGET
) -> float:
    """delta(eps) of the k-fold composition by summing over multinomial count vectors.

    Every composed atom is sum_i c_i s_i with weight k!/prod(c_i!) prod(a_i^c_i).
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    s = np.asarray(pld.s)
    a = np.asarray(pld.mass)
    keep = a > 0
    s, a = s[keep], a[keep]
    d_inf = 1.0 - (1.0 - pld.delta_inf) ** k
    if s.size == 0:
        return d_inf
    count = math.comb(k + s.size - 1, s.size - 1)
    if count > budget:
        raise ValueError(f"{count} count vectors exceed the enumeration budget {budget}")
    counts = np.array(list(_compositions(k, s.size)), dtype=np.float64)
    log_w = (
        special.gammaln(k + 1)
        - special.gammaln(counts + 1).sum(axis=1)
        + counts @ np.log(a)
    )
    loss = counts @ s
    above = loss > eps
    terms = -np.expm1(eps - loss[above]) * np.exp(log_w[above])
    return min(1.0, d_inf + math.fsum(terms))


def rr_closed_form_delta(p: float, eps: float) -> float:
    """p(1 - e^{eps - c_p}) for eps <= c_p = log(p/(1-p)), else 0."""
    if not 0.5 < p < 1.0:
        raise ValueError(f"closed form needs 1/2 < p < 1, got {p!r}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    c = math.log(p / (1.0 - p))
    return p * (1.0 - math.exp(eps - c)) if eps <= c else 0.0


def continuous_delta_quadrature(
    omega: Callable, eps: float, support_left: float = -math.inf, breakpoints: Sequence[float] = ()
) -> float:
    """Integral of (1 - e^{eps - s}) omega(s) over s > eps by adaptive quadrature.

    The tolerance is relative so that very small deltas are still resolved;
    an absolute error estimate above QUAD_ABS_TOL is reported as failure.
    """
    lo = max(eps, support_left)

    def integrand(s):
        return -math.expm1(eps - s) * float(omega(np.array([s]))[0])

    cuts = sorted(b for b in breakpoints if b > lo)
    edges = [lo, *cuts, math.inf]
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-12, limit=500)
        total += val
        err += e
    if not err <= QUAD_ABS_TOL or not math.isfinite(total):
        raise ArithmeticError(f"quadrature did not converge: estimate {total!r}, error {err!r}")
    return total


def gaussian_pld_density(sigma: float, sensitivity: float) -> Callable[[np.ndarray], np.ndarray]:
    """PLD density of N(sensitivity, sigma^2) over N(0, sigma^2): N(mu, 2 mu) with mu = D^2/(2 sigma^2)."""
    mu = sensitivity**2 / (2 * sigma**2)
    sd = math.sqrt(2 * mu)
    return lambda s: stats.norm.pdf(np.asarray(s, dtype=np.float64), loc=mu, scale=sd)


def analytical_gaussian_delta(sigma: float, sensitivity: float, eps: float) -> float:
    """Phi(D/2s - eps s/D) - e^eps Phi(-D/2s - eps s/D) for the Gaussian mechanism."""
    if not (sigma > 0 and sensitivity > 0):
        raise ValueError("sigma and sensitivity must be positive")
    a = sensitivity / (2 * sigma)
    b = eps * sigma / sensitivity
    # second term in log space so large eps does not overflow
    log_second = eps + float(special.log_ndtr(-a - b))
    second = math.exp(log_second) if log_second > -745.0 else 0.0
    return max(0.0, float(special.ndtr(a - b)) - second)


def analytical_gaussian_epsilon(
    sigma: float, sensitivity: float, delta: float, tol: float = 1e-12
) -> float:
    """Smallest eps with analytical_gaussian_delta(eps) <= delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if analytical_gaussian_delta(sigma, sensitivity, 0.0) <= delta:
        return 0.0
    hi = 1.0
    while analytical_gaussian_delta(sigma, sensitivity, hi) > delta:
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if analytical_gaussian_delta(sigma, sensitivity, mid) > delta:
            lo = mid
        else:
            hi = mid
    return hi


def exhaustive_multidim_delta(
    delta_vec: Sequence[float], n_trials: int, p: float, eps: float
) -> float:
    """delta(eps) for X = D + Z versus Y = Z with independent Z_i ~ Bin(n_trials, p).

    Enumerates every outcome vector of both distributions and sums
    max(f_X - e^eps f_Y, 0) directly.
    """
    if any(int(x) != x for x in delta_vec):
        raise ValueError("delta_vec entries must be integers (express them in lattice units)")
    delta_vec = [int(x) for x in delta_vec]
    d = len(delta_vec)
    if (n_trials + 1) ** d > ENUMERATION_BUDGET:
        raise ValueError("outcome space too large to enumerate")
    pmf = stats.binom.pmf(np.arange(n_trials + 1), n_trials, p)
    fy = {}
    for z in itertools.product(range(n_trials + 1), repeat=d):
        fy[z] = math.prod(pmf[i] for i in z)
    total = []
    e = math.exp(eps)
    for z, pz in fy.items():
        # X takes the value z + D with probability P[Z = z]; match it against Y
        py = fy.get(tuple(zi + di for zi, di in zip(z, delta_vec)), 0.0)
        total.append(max(pz - e * py, 0.0))
    return math.fsum(total)
