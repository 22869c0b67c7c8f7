"""Numerical laboratory for hierarchical lattices of quantum anharmonic oscillators."""

from .bounds import (
    BetaBrackets,
    EpsilonWindow,
    Kernels,
    epsilon_window,
    find_beta_brackets,
    kernel_functions,
    predicted_limit,
    propagate_and_classify,
    recurrence_step,
    select_parameters,
)
from .config import ExperimentConfig, default_config, dump_config, load_config
from .enumeration import IsingExact, exact_enumeration, hierarchical_block_couplings, ring_couplings
from .hierarchy import (
    Block,
    HierarchyParams,
    block_members,
    coupling_matrix,
    hier_distance_and_coupling,
    normalization_constants,
)
from .lattice import (
    LatticeModel,
    MCEstimates,
    build_lattice_model,
    gaussian_oracle,
    mc_estimate,
    temporal_mode_weights,
)
from .rgflow import PathEnsemble, ensemble_estimates, flow_run, flow_run_replicated, init_level0, rg_step
from .spectral import (
    ModelParams,
    SpectralSolution,
    build_and_diagonalize,
    check_initial_bounds,
    eta_and_rigidity,
    gamma2,
    u_hat,
    x_fourpoint,
)
from .ursell import (
    LeeYangCoeffs,
    UrsellTable,
    cumulants_from_moments,
    inequality_suite,
    leeyang_product_fit,
    moments_from_cumulants,
    root_locus_check,
)

__version__ = "0.1.0"
