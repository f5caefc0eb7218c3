"""Pricing with social-network user profiling.

Equilibrium solvers for a seller who profiles socially active users and
charges them personalised prices, plus simulation and reporting tools.
"""

from .dist import (
    Beta,
    Exponential,
    TruncatedNormal,
    Uniform,
    check_assumption_a1,
    fit_truncated_normal,
    monopoly_price,
)
from .errors import (
    ConfigError,
    InputError,
    NoEquilibriumFound,
    ProfilingError,
    SolverError,
)
from .fourstage import compare_models, solve_four_stage
from .hetero import (
    SocialGraph,
    TypeProfile,
    load_graph,
    solve_hetero_pbe,
    solve_network_pbe,
)
from .pbe import (
    Case,
    EquilibriumOutcome,
    MarketConfig,
    classify_regime,
    solve_equilibrium,
    solve_pbe,
)
from .sim import StrategyProfile, simulate_market
from .social import SocialParams, expected_benefit

__version__ = "0.1.0"
