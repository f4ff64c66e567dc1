"""Simulation and estimation laboratory for multigenerational
socioeconomic transmission models."""

from .models import (
    ModelParams,
    SteadyState,
    Variant,
    ModelError,
    NonStationaryError,
    InfeasibleSigmaError,
    steady_state,
    steady_state_var_y,
    solve_sigma2_for_unit_var,
)
from .moments import (
    MomentSet,
    duality_gp,
    duality_gp_nonstationary,
    simplified_bt_coeffs,
    lf_moments,
    bt_gp_normalized,
    bt_gp_general,
    bt_gp_dgamma,
    direct_am_moments,
    family_am_moments,
    moments_for,
)
from .pedigree import (
    PedigreeCovariance,
    PedigreeRecord,
    NotPSDError,
    MatchingToleranceError,
    build_pedigree_covariance,
    sample_pedigrees,
    simulate_dynasties,
    simulate_marriage_market,
    plant_scenario,
)
from .regression import (
    RegressionSpec,
    FitResult,
    fit,
    fwl_partial,
    build_spec,
    cluster_cov,
    with_stage_dummies,
)
from .panel import read_panel, write_panel

__version__ = "0.1.0"
