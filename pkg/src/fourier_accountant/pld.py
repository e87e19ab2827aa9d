"""Exact privacy loss distributions built from pairs of discrete output distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

MERGE_TOL = 1e-12
NORMALIZATION_TOL = 1e-12
DEFAULT_ATOM_BUDGET = 10**7


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("expected a one dimensional sequence")
    return arr


def merge_atoms(
    locs: np.ndarray, mass: np.ndarray, tol: float = MERGE_TOL
) -> Tuple[np.ndarray, np.ndarray]:
    """Sorts atoms by location and merges neighbours closer than `tol`.

    Each merged group keeps the location of its lowest member.
    """
    locs = _as_float_array(locs)
    mass = _as_float_array(mass)
    if locs.shape != mass.shape:
        raise ValueError("locations and masses must have the same length")
    if locs.size == 0:
        return locs, mass
    order = np.argsort(locs, kind="stable")
    locs = locs[order]
    mass = mass[order]
    new_group = np.empty(locs.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(locs) >= tol
    starts = np.flatnonzero(new_group)
    return locs[starts], np.add.reduceat(mass, starts)


@dataclass(frozen=True)
class OutputDistribution:
    """Discrete distribution of a mechanism output.

    Outcomes are kept in strictly increasing order and probabilities must sum
    to one.
    """

    outcomes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        outcomes = _as_float_array(self.outcomes)
        probs = _as_float_array(self.probs)
        if outcomes.shape != probs.shape:
            raise ValueError("outcomes and probs must have the same length")
        if outcomes.size == 0:
            raise ValueError("an output distribution needs at least one outcome")
        order = np.argsort(outcomes, kind="stable")
        outcomes, probs = outcomes[order], probs[order]
        if np.any(np.diff(outcomes) <= 0):
            raise ValueError("duplicate outcome labels")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        total = math.fsum(probs)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        outcomes.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]]) -> "OutputDistribution":
        pairs = list(pairs)
        return cls(
            np.array([t for t, _ in pairs], dtype=np.float64),
            np.array([p for _, p in pairs], dtype=np.float64),
        )

    def as_dict(self) -> dict:
        return dict(zip(self.outcomes.tolist(), self.probs.tolist()))


@dataclass(frozen=True)
class AtomicPLD:
    """Sparse privacy loss distribution.

    Attributes:
        s: strictly increasing privacy loss values log(f_X(t) / f_Y(t)).
        mass: probability under f_X attached to each loss value.
        delta_inf: f_X-probability of outcomes that f_Y cannot produce.
    """

    s: np.ndarray
    mass: np.ndarray
    delta_inf: float = 0.0

    def __post_init__(self):
        s, mass = merge_atoms(self.s, self.mass)
        if np.any(mass < 0):
            raise ValueError("atom masses must be non-negative")
        if not np.all(np.isfinite(s)):
            raise ValueError("privacy loss values must be finite")
        d = float(self.delta_inf)
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"delta_inf={d!r} outside [0, 1]")
        s.flags.writeable = False
        mass.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "delta_inf", d)

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[Tuple[float, float]], delta_inf: float = 0.0
    ) -> "AtomicPLD":
        pairs = list(pairs)
        return cls(
            np.array([s for s, _ in pairs], dtype=np.float64),
            np.array([a for _, a in pairs], dtype=np.float64),
            delta_inf,
        )

    @property
    def total_mass(self) -> float:
        return math.fsum(self.mass)

    def __len__(self) -> int:
        return int(self.s.size)


def build_pld(fx: OutputDistribution, fy: OutputDistribution) -> AtomicPLD:
    """Privacy loss distribution of f_X over f_Y.

    Outcome labels are matched by exact equality. Outcomes that only f_X can
    produce contribute to ``delta_inf``.
    """
    if math.fsum(fx.probs) <= 0:
        raise ValueError("f_X has zero total mass")
    _, ix, iy = np.intersect1d(
        fx.outcomes, fy.outcomes, assume_unique=True, return_indices=True
    )
    px = fx.probs[ix]
    py = fy.probs[iy]
    shared = (px > 0) & (py > 0)
    s = np.log(px[shared]) - np.log(py[shared])

    matched = np.zeros(fx.outcomes.size, dtype=bool)
    matched[ix[py > 0]] = True
    delta_inf = math.fsum(fx.probs[~matched & (fx.probs > 0)])
    return AtomicPLD(s, px[shared], min(delta_inf, 1.0))


def pld_from_log_probs(
    log_px: np.ndarray, log_py: np.ndarray, min_log_mass: float = -745.0
) -> Tuple[AtomicPLD, float]:
    """PLD from aligned log-probabilities of f_X and f_Y on a shared outcome list.

    Loss values are formed in log space, so they stay exact when f_Y underflows.
    Outcomes whose f_X mass would underflow (log mass below `min_log_mass`) are
    left out of the atom list.

    Returns:
        The PLD and an upper bound on the f_X mass that was left out.
    """
    log_px = _as_float_array(log_px)
    log_py = _as_float_array(log_py)
    present = np.isfinite(log_px)
    kept = present & (log_px >= min_log_mass)
    dropped = int(np.count_nonzero(present & ~kept))
    only_x = kept & ~np.isfinite(log_py)
    atoms = kept & np.isfinite(log_py)
    pld = AtomicPLD(
        log_px[atoms] - log_py[atoms],
        np.exp(log_px[atoms]),
        min(math.fsum(np.exp(log_px[only_x])), 1.0),
    )
    return pld, dropped * math.exp(min_log_mass)


def delta_infty_composed(delta_inf: float, k: int) -> float:
    """Probability that at least one of k independent runs hits an impossible-under-Y outcome."""
    if not 0.0 <= delta_inf <= 1.0:
        raise ValueError(f"delta_inf={delta_inf!r} outside [0, 1]")
    if delta_inf == 1.0:
        return 1.0
    return -math.expm1(k * math.log1p(-delta_inf))


def hockey_stick(s: np.ndarray, mass: np.ndarray, eps: float) -> float:
    """Sum of (1 - e^(eps - s)) * mass over atoms with s > eps."""
    above = s > eps
    return math.fsum(-np.expm1(eps - s[above]) * mass[above])


def self_convolve_atoms(
    pld: AtomicPLD, k: int, atom_budget: int = DEFAULT_ATOM_BUDGET
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact k-fold convolution of the atoms of `pld` (delta_inf ignored).

    Uses binary exponentiation and merges equal loss values after every
    product so RR-like distributions stay small.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")

    def product(a, b):
        count = a[0].size * b[0].size
        if count > atom_budget:
            raise ValueError(
                f"exact convolution needs {count} intermediate atoms, "
                f"budget is {atom_budget}"
            )
        s = (a[0][:, None] + b[0][None, :]).ravel()
        m = (a[1][:, None] * b[1][None, :]).ravel()
        return merge_atoms(s, m)

    base = (np.asarray(pld.s), np.asarray(pld.mass))
    result = None
    while True:
        if k & 1:
            result = base if result is None else product(result, base)
        k >>= 1
        if not k:
            return result
        base = product(base, base)


def delta_exact(
    pld: AtomicPLD, eps: float, k: int = 1, atom_budget: int = DEFAULT_ATOM_BUDGET
) -> float:
    """Tight delta(eps) of the k-fold composition, by exact atom arithmetic."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    s, mass = self_convolve_atoms(pld, k, atom_budget)
    value = delta_infty_composed(pld.delta_inf, k) + hockey_stick(s, mass, eps)
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class PrivacyBound:
    """Strict lower and upper bounds on delta(eps) together with the raw grid values."""

    delta_lower: float
    delta_upper: float
    err_bound: float
    delta_tilde_L: float
    delta_tilde_R: float
    eps: float
    k: int
    L: float
    n: int
    budgets: dict = field(default_factory=dict, compare=False)

    @property
    def width(self) -> float:
        return self.delta_upper - self.delta_lower

    def contains(self, value: float) -> bool:
        return self.delta_lower <= value <= self.delta_upper


def write_pld_csv(
    pld: AtomicPLD, path: Union[str, Path], grid: Optional[Tuple[float, int]] = None
) -> None:
    """Writes the CSV interchange format: ``delta_inf=`` header then ``s,mass`` rows."""
    lines = [f"delta_inf={pld.delta_inf!r}"]
    if grid is not None:
        lines.append(f"grid={float(grid[0])!r},{int(grid[1])}")
    lines.extend(f"{s!r},{m!r}" for s, m in zip(pld.s.tolist(), pld.mass.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def parse_pld_csv(text: str) -> Tuple[AtomicPLD, Optional[Tuple[float, int]]]:
    """Parses the CSV interchange format, returning the PLD and an optional grid header."""
    rows: Sequence[str] = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not rows or not rows[0].startswith("delta_inf="):
        raise ValueError("PLD CSV must start with a 'delta_inf=<float>' header")
    delta_inf = float(rows[0].split("=", 1)[1])
    grid = None
    body = rows[1:]
    if body and body[0].startswith("grid="):
        L, n = body[0].split("=", 1)[1].split(",")
        grid = (float(L), int(n))
        body = body[1:]
    s, mass = [], []
    prev = -math.inf
    for lineno, row in enumerate(body, start=2):
        try:
            a, b = row.split(",")
            sv, mv = float(a), float(b)
        except ValueError:
            raise ValueError(f"line {lineno}: expected 's,mass', got {row!r}") from None
        if sv <= prev:
            raise ValueError(f"line {lineno}: s values must be strictly increasing")
        prev = sv
        s.append(sv)
        mass.append(mv)
    return AtomicPLD(np.array(s), np.array(mass), delta_inf), grid


def read_pld_csv(path: Union[str, Path]) -> AtomicPLD:
    return parse_pld_csv(Path(path).read_text(encoding="utf-8"))[0]
