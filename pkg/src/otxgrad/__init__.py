"""Entropy-regularized extragradient solver for discrete optimal transport,
with scaling baselines, an exact LP oracle, and a benchmark harness."""

from .baselines import greenkhorn, sinkhorn, theoretical_eta
from .bench import AlgorithmSpec, GeneratorSpec, RunConfig, compare, run
from .core import (NumericFailure, OTInstance, TransportPlan, load_instance,
                   marginal_violation, penalized_objective, save_instance,
                   transport_cost)
from .extragrad import (SolverParams, derive_params, fine_tuned_params,
                        manual_params, solve)
from .instances import (cost_grid_l1, gen_point_clouds, gen_synthetic,
                        load_mnist_pair)
from .oracle import brute_force_ot, exact_ot
from .rounding import round_to_feasible
from .trace import TraceRecord, write_trace_csv

__all__ = [
    "AlgorithmSpec", "GeneratorSpec", "NumericFailure", "OTInstance",
    "RunConfig", "SolverParams", "TraceRecord", "TransportPlan",
    "brute_force_ot", "compare", "cost_grid_l1", "derive_params", "exact_ot",
    "fine_tuned_params", "gen_point_clouds", "gen_synthetic", "greenkhorn",
    "load_instance", "load_mnist_pair", "manual_params", "marginal_violation",
    "penalized_objective", "round_to_feasible", "run", "save_instance",
    "sinkhorn", "solve", "theoretical_eta", "transport_cost",
    "write_trace_csv",
]

__version__ = "0.1.0"
