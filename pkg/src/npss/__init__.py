"""Nullspace-preserving saddle search on spectral Landau energy landscapes."""

from .lattice import Grid, LatticeBasis, make_reciprocal, square_lattice
from .fieldio import read_field, write_field
from .models import (
    LBModel,
    LBParams,
    LPModel,
    LPParams,
    ToyLandscape,
    project_mean_zero,
)
from .eigen import (
    EigenPair,
    SolverOptions,
    SubspaceBasis,
    SymmetricOperator,
    dense_hessian_oracle,
    eigvec_flow_stage1,
    eigvec_flow_stage2,
    rayleigh_quotient,
    smallest_eigenpairs,
)
from .nullspace import (
    PrincipalAngleReport,
    detect_nullspace,
    principal_angles,
    translational_generators,
    vector_subspace_angle,
)
from .search import (
    IndexCensus,
    NPSSOptions,
    NPSSResult,
    Trajectory,
    morse_census,
    npss_search,
    stage1_run,
    stage2_run,
    verify_index1,
)
from .hisd import HiSDOptions, HiSDResult, hisd_find_index1, hisd_run
from .mep import (
    MEPath,
    PreservationReport,
    gradient_descent_minimize,
    locate_inflection_point,
    mep_from_saddle,
    nullspace_preservation_report,
)
from .config import ExperimentConfig, load_config, parse_config
from .seeds import SEED_PATTERNS, prepare_initial_state, seed_field
from .runner import compare_experiments, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "LatticeBasis",
    "make_reciprocal",
    "square_lattice",
    "read_field",
    "write_field",
    "LBModel",
    "LBParams",
    "LPModel",
    "LPParams",
    "ToyLandscape",
    "project_mean_zero",
    "EigenPair",
    "SolverOptions",
    "SubspaceBasis",
    "SymmetricOperator",
    "dense_hessian_oracle",
    "eigvec_flow_stage1",
    "eigvec_flow_stage2",
    "rayleigh_quotient",
    "smallest_eigenpairs",
    "PrincipalAngleReport",
    "detect_nullspace",
    "principal_angles",
    "translational_generators",
    "vector_subspace_angle",
    "IndexCensus",
    "NPSSOptions",
    "NPSSResult",
    "Trajectory",
    "morse_census",
    "npss_search",
    "stage1_run",
    "stage2_run",
    "verify_index1",
    "HiSDOptions",
    "HiSDResult",
    "hisd_find_index1",
    "hisd_run",
    "MEPath",
    "PreservationReport",
    "gradient_descent_minimize",
    "locate_inflection_point",
    "mep_from_saddle",
    "nullspace_preservation_report",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "SEED_PATTERNS",
    "prepare_initial_state",
    "seed_field",
    "compare_experiments",
    "run_experiment",
]
