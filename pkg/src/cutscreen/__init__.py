"""Fast screening of saturated cut-sets caused by single-branch outages."""

from .dcflow import IslandingError, apply_redispatch, dc_contingency, dc_n_minus_1, solve_dc
from .feasibility import (
    CutSet,
    FtReport,
    ResidualView,
    brute_force_margin,
    cut_transfer,
    evaluate_cut,
    extract_cut,
    feasibility_test,
    make_residual,
    screen_n_minus_1,
)
from .flows import FlowState, InfeasibleFlowError, Route, RoutingPolicy, build_flow, verify_flow
from .network import (
    Balance,
    BalancePolicy,
    Branch,
    Bus,
    Network,
    balance,
    bundled_case,
    load_case,
    parse_case,
    to_native,
    validate_connectivity,
)
from .synthetic import random_network

__version__ = "0.1.0"
