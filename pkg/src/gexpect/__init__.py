"""Sublinear expectations by PDE, exact dynamic programming and Monte Carlo."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    IncrementFamily,
    IncrementLaw,
    TestFunctional,
    VolBand,
    conjugate_expectation,
    g_pair,
    g_scalar,
    lower_capacity,
    sup_expectation,
    upper_capacity,
)
from .dp_oracle import (  # noqa: E402
    DpResult,
    SublinearDP,
    dp_binned,
    dp_exact,
    dp_selfnorm,
    enumerate_exhaustive,
    maxsum_moment,
    rosenthal_p2_check,
)
from .exceptions import GExpectError, NumericalError, ValidationError  # noqa: E402
from .heavytail import HeavyTailSpec, check_conditions, compute_l_and_dn  # noqa: E402
from .mc_engine import (  # noqa: E402
    PathBundle,
    Policy,
    PolicySearch,
    mc_expectation,
    policy_search,
    simulate_paths,
)
from .pde_gheat import GHeatSolver, gnormal_expectation, solve_gheat  # noqa: E402
from .pde_pair import PairPdeSolver, SelfNormalizedLimit, selfnorm_limit, solve_pair  # noqa: E402

__all__ = [
    "DpResult", "GExpectError", "GHeatSolver", "HeavyTailSpec", "IncrementFamily",
    "IncrementLaw", "NumericalError", "PairPdeSolver", "PathBundle", "Policy", "PolicySearch",
    "SelfNormalizedLimit", "SublinearDP", "TestFunctional", "ValidationError", "VolBand",
    "check_conditions", "compute_l_and_dn", "conjugate_expectation", "dp_binned", "dp_exact",
    "dp_selfnorm", "enumerate_exhaustive", "g_pair", "g_scalar", "gnormal_expectation",
    "lower_capacity", "maxsum_moment", "mc_expectation", "policy_search", "rosenthal_p2_check",
    "selfnorm_limit", "simulate_paths", "solve_gheat", "solve_pair", "sup_expectation",
    "upper_capacity",
]
