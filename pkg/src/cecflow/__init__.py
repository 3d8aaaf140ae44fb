"""Joint routing and partial computation offloading on multi-hop edge networks.

Library layout:

    model       network, cost functions, tasks, scenario (de)serialization
    strategy    fraction-based strategies, loop checks, flow evaluation
    gradients   marginal costs and the optimality-condition checkers
    optimize    scaled-gradient-projection drivers (sync/async, GP mode)
    protocol    event-driven two-stage broadcast simulation
    baselines   GP / SPOO / LCOR / LPR comparison algorithms
    oracle      Frank-Wolfe flow-model bound and exhaustive grid search
    topology    graph generators and embedded reference topologies
    sampling    randomized scenario generation
    experiment  comparison suites, failure adaptivity, parameter sweeps
    cli         command-line entry point

The hot per-task sweeps run on a compiled kernel when available; set
``CECFLOW_PURE_PYTHON=1`` to force the pure-Python backend.
"""

from ._kernels import BACKEND
from .model import (ComputeCost, LinkCost, Network, Scenario, Task,
                    validate_scenario)
from .strategy import (FlowState, Strategy, detect_loops, evaluate_flows,
                       initial_strategy, random_loop_free_strategy, total_cost)
from .gradients import (MarginalState, compute_marginals, certified_optimal,
                        finite_difference_marginal, flow_identity_residual,
                        optimality_gap, stationarity_gap)
from .optimize import (CurvatureBounds, RunResult, UpdateConfig, blocked_sets,
                       curvature_bounds, project_scaled, run)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ComputeCost", "CurvatureBounds", "FlowState", "LinkCost",
    "MarginalState", "Network", "RunResult", "Scenario", "Strategy", "Task",
    "UpdateConfig", "blocked_sets", "certified_optimal", "compute_marginals",
    "curvature_bounds", "detect_loops", "evaluate_flows",
    "finite_difference_marginal", "flow_identity_residual",
    "initial_strategy", "optimality_gap", "project_scaled",
    "random_loop_free_strategy", "run", "stationarity_gap", "total_cost",
    "validate_scenario",
]
