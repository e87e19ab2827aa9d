"""Strict (eps, delta) bounds for composed discrete mechanisms via FFT over privacy loss distributions."""

from .error_analysis import (
    ErrorBudget,
    GridBracket,
    MgfPair,
    build_bracket,
    chernoff_tail,
    error_budget,
    mgf,
    snapped_mgf_bounds,
    strict_delta_bounds,
    subsampled_gaussian_mgf_bound,
)
from .fourier import (
    ComposedGridPLD,
    compose_heterogeneous,
    compose_self,
    delta_tilde,
    epsilon_for_delta,
)
from .grid import GridPLD, GridSpec, Side, discretize_continuous, snap_left, snap_right
from .mechanisms import (
    RR,
    Binomial,
    BinomialNoise,
    Direction,
    ExpCount,
    LatticeNoise,
    LatticePair,
    MechanismSpec,
    SubsampledGaussian,
    UserAtoms,
    binomial_1d_outputs,
    exp_count_pld,
    mechanism_bounds,
    poisson_subsample_pair,
    reduce_to_1d,
    rr_outputs,
    subsampled_gaussian_bounds,
    subsampled_gaussian_density,
)
from .pld import (
    AtomicPLD,
    OutputDistribution,
    PrivacyBound,
    build_pld,
    delta_exact,
    delta_infty_composed,
    read_pld_csv,
    write_pld_csv,
)

__version__ = "0.1.0"
