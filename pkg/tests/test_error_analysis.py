import math
import warnings

import numpy as np
import pytest

from conftest import random_pld
from fourier_accountant import (
    AtomicPLD,
    GridSpec,
    MgfPair,
    build_pld,
    chernoff_tail,
    compose_self,
    delta_tilde,
    error_budget,
    mgf,
    rr_outputs,
    snap_left,
    snap_right,
    snapped_mgf_bounds,
    strict_delta_bounds,
)
from fourier_accountant.error_analysis import (
    _log_geometric,
    default_lambda,
    subsampled_gaussian_constant,
    subsampled_gaussian_mgf_bound,
    subsampled_gaussian_mgf_correction,
)
from fourier_accountant.grid import GridPLD, Side
from fourier_accountant.oracles import exact_atom_convolution_delta
from fourier_accountant.pld import self_convolve_atoms


def test_mgf_single_atom():
    m = mgf(AtomicPLD.from_pairs([(0.2, 1.0)]), 2.0)
    assert m.alpha_plus == pytest.approx(0.4, abs=1e-15)
    assert m.alpha_minus == pytest.approx(-0.4, abs=1e-15)
    z = mgf(AtomicPLD.from_pairs([(0.0, 1.0)]), 3.0)
    assert (z.alpha_plus, z.alpha_minus) == (0.0, 0.0)


def test_mgf_rr(rr75):
    assert mgf(rr75, 1.0).alpha_plus == pytest.approx(0.8472978603872036, abs=1e-14)


def test_mgf_renyi_form_agrees():
    """sum e^{lam s} a equals sum (a_X/a_Y)^lam a_X on the RR pair."""
    fx, fy = rr_outputs(0.75)
    pld = build_pld(fx, fy)
    for lam in (0.5, 1.0, 3.0, 7.5):
        direct = math.log(math.fsum((fx.probs / fy.probs) ** lam * fx.probs))
        assert mgf(pld, lam).alpha_plus == pytest.approx(direct, abs=1e-12)


def test_mgf_rejects_empty_and_bad_lambda(rr75):
    with pytest.raises(ValueError):
        mgf(AtomicPLD(np.array([]), np.array([]), 1.0), 1.0)
    with pytest.raises(ValueError):
        mgf(rr75, 0.0)


def test_mgf_survives_huge_exponents():
    pld = AtomicPLD.from_pairs([(-300.0, 1e-300), (300.0, 0.5)])
    m = mgf(pld, 5.0)
    assert m.alpha_plus == pytest.approx(1500 + math.log(0.5))
    assert math.isfinite(m.alpha_minus)


def test_chernoff_examples():
    assert chernoff_tail(1, 0.0, 1.0, 10.0) == pytest.approx(math.exp(-10), rel=1e-15)
    assert chernoff_tail(0, 5.0, 1.0, 10.0) == pytest.approx(math.exp(-10), rel=1e-15)
    assert chernoff_tail(10, math.log(7 / 3), 1.0, 20.0) == pytest.approx(9.860029513210784e-06, rel=1e-13)
    assert chernoff_tail(10**6, 10.0, 1.0, 1.0) == math.inf


@pytest.mark.parametrize("k", [1, 2, 50, 1000])
@pytest.mark.parametrize("lam", [1.0, 2.0, 10.0])
def test_chernoff_dominates_rr_tail(k, lam):
    pld = build_pld(*rr_outputs(0.6))
    L = 20.0
    s, m = self_convolve_atoms(pld, k)
    tail = math.fsum(m[s >= L])
    assert tail <= chernoff_tail(k, mgf(pld, lam).alpha_plus, lam, L)


@pytest.mark.parametrize("alpha", [-2.0, -1e-9, -1e-15, 0.0, 1e-15, 1e-9, 0.3])
@pytest.mark.parametrize("m", [1, 5, 40])
def test_geometric_sum_against_direct_summation(alpha, m):
    direct = math.fsum(math.exp(l * alpha) for l in range(1, m + 1))
    got = math.exp(_log_geometric(alpha, m))
    assert got >= direct * (1 - 1e-12)
    assert got == pytest.approx(direct, rel=1e-9)


def _closed_form_total(k, ap, am, lam, L):
    r = math.exp(-L * lam) / (1 - math.exp(-L * lam))
    a = (2 * math.exp((k + 1) * ap) - math.exp(k * ap) - math.exp(ap)) / (math.exp(ap) - 1)
    b = (math.exp((k + 1) * am) - math.exp(am)) / (math.exp(am) - 1)
    return (a + b) * r


@pytest.mark.parametrize("k,ap,am", [(1, 0.3, 0.2), (8, 0.05, -0.4), (100, 0.01, 0.02)])
def test_total_matches_combined_formula(k, ap, am):
    lam, L = 2.0, 10.0
    b = error_budget(k, MgfPair(ap, am, lam), L)
    assert b.total == pytest.approx(_closed_form_total(k, ap, am, lam, L), rel=1e-10)
    assert b.total >= (b.tail + b.truncation + b.periodisation) * (1 - 1e-12)


def test_budget_point_mass_uses_series_limit():
    k, lam, L = 7, 1.0, 20.0
    b = error_budget(k, MgfPair(0.0, 0.0, lam), L)
    r = math.exp(-L) / -math.expm1(-L)
    assert b.total == pytest.approx((k + 1 + k) * r, rel=1e-12)
    assert b.truncation == pytest.approx(2 * (k - 1) * math.exp(-L), rel=1e-12)
    assert b.tail == pytest.approx(math.exp(-L), rel=1e-12)


def test_budget_vanishes_with_L():
    m = MgfPair(0.4, 0.1, 1.5)
    vals = [error_budget(10, m, L).total for L in (10, 20, 40, 80, 400)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0 or vals[-1] < 1e-200


def test_budget_overflow_is_inf():
    b = error_budget(10**6, MgfPair(5.0, 1.0, 1.0), 1.0)
    assert b.total == math.inf
    assert b.as_dict()["lambda"] == 1.0


def test_budget_covers_reference_run(rr75):
    """|delta(L'=3L, n'=3n) - delta_tilde| <= budget on the same snapped PLD."""
    k, L, n = 8, 20.0, 4096
    g = GridSpec(L, n)
    g3 = GridSpec(3 * L, 3 * n)
    for snap in (snap_left, snap_right):
        gp = snap(rr75, g)
        padded = np.zeros(3 * n)
        padded[n : 2 * n] = gp.mass  # same dx, x_i maps to index i + n
        ref = compose_self(GridPLD(g3, padded), k)
        comp = compose_self(gp, k)
        budget = error_budget(k, mgf(gp, L / 2), L).total
        for eps in (0.0, 0.5, 1.0, 2.0, 4.0):
            assert abs(delta_tilde(ref, eps) - delta_tilde(comp, eps)) <= budget + 1e-14


def test_inflation_factor_two():
    g = GridSpec(1.0, 4)  # dx = 0.5
    left, right = snapped_mgf_bounds(MgfPair(0.1, 0.2, 1.0), g)
    assert left.alpha_minus - 0.2 == pytest.approx(math.log(2.0), abs=1e-15)
    assert right.alpha_plus - 0.1 == pytest.approx(math.log(2.0), abs=1e-15)
    assert left.alpha_plus == 0.1 and right.alpha_minus == 0.2
    with pytest.raises(ValueError, match="lower lambda or raise n"):
        snapped_mgf_bounds(MgfPair(0.0, 0.0, 2.0), g)


def test_snapping_mgf_inequalities(rng):
    g = GridSpec(4.0, 80)
    for _ in range(200):
        pld = random_pld(rng)
        for frac in (0.1, 0.5, 0.9):
            lam = frac / g.dx
            true = mgf(pld, lam)
            left, right = snapped_mgf_bounds(true, g)
            ml, mr = mgf(snap_left(pld, g), lam), mgf(snap_right(pld, g), lam)
            tol = 1e-12
            assert ml.alpha_plus <= left.alpha_plus + tol
            assert ml.alpha_minus <= left.alpha_minus + tol
            assert mr.alpha_plus <= right.alpha_plus + tol
            assert mr.alpha_minus <= right.alpha_minus + tol


def test_already_gridded_mgf_unchanged():
    g = GridSpec(2.0, 8)
    pld = AtomicPLD(g.points[[1, 4, 6]], np.array([0.2, 0.5, 0.3]))
    lam = 0.9 / g.dx
    assert mgf(snap_left(pld, g), lam) == mgf(pld, lam)
    assert mgf(snap_right(pld, g), lam) == mgf(pld, lam)


def test_point_mass_bounds_are_zero():
    pld = AtomicPLD.from_pairs([(0.0, 1.0)])
    for eps in (0.01, 0.5, 3.0):
        b = strict_delta_bounds(pld, GridSpec(20.0, 2**12), 5, eps)
        assert b.delta_lower == 0.0
        assert b.delta_upper == pytest.approx(0.0, abs=1e-80)


def test_rr_fifty_fold_contains_exact(rr75):
    b = strict_delta_bounds(rr75, GridSpec(20.0, 2**16), 50, 3.0)
    exact = exact_atom_convolution_delta(rr75, 50, 3.0)
    assert b.delta_lower <= exact <= b.delta_upper
    assert 0 <= b.delta_lower <= b.delta_upper <= 1


def test_default_lambda():
    assert default_lambda(GridSpec(20.0, 2**16)) == 10.0
    with pytest.warns(UserWarning, match="violates"):
        lam = default_lambda(GridSpec(20.0, 64))
    assert lam == pytest.approx(0.99 / (40 / 64))
    with pytest.raises(ValueError, match="lambda < 1/dx"):
        default_lambda(GridSpec(20.0, 64), 5.0)


def test_subsampled_gaussian_constant():
    assert subsampled_gaussian_constant(0.02, 2.0) == pytest.approx(12.375503299472803, abs=1e-12)


def test_gaussian_correction_negligible_and_decaying():
    err = subsampled_gaussian_mgf_correction(0.02, 2.0, GridSpec(8.0, 10**5), 4.0)
    assert err < 1e-20
    vals = [subsampled_gaussian_mgf_correction(0.02, 2.0, GridSpec(L, 10**5), 1.0) for L in (2, 4, 8, 16)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize(
    "q,sigma,L,lam,msg",
    [
        (0.02, 0.5, 8.0, 4.0, "sigma >= 1"),
        (0.7, 2.0, 8.0, 4.0, "q <= 1/2"),
        (0.02, 2.0, 8.0, 9.0, "lambda <= L"),
    ],
)
def test_gaussian_correction_preconditions(q, sigma, L, lam, msg):
    with pytest.raises(ValueError, match=msg):
        subsampled_gaussian_mgf_correction(q, sigma, GridSpec(L, 1000), lam)


def test_gaussian_mgf_bound_all_combinations():
    g = GridSpec(8.0, 20000)
    vals = {}
    for side in Side:
        for sign in (1, -1):
            vals[side, sign] = subsampled_gaussian_mgf_bound(0.02, 2.0, g, side, 4.0, sign)
    assert all(math.isfinite(v) and v > 0 for v in vals.values())
    # the upper Riemann discretization dominates the lower one termwise
    assert vals[Side.MAX, 1] >= vals[Side.MIN, 1]
    assert vals[Side.MAX, -1] >= vals[Side.MIN, -1]
