"""Randomization procedures for multi-arm trials and Monte Carlo evaluation
of their operating characteristics."""

from .config import (
    METRIC_IDS,
    RunConfig,
    load_run_config,
    parse_proc,
    parse_run_config,
    parse_weights,
)
from .core import (
    AllocationTarget,
    ConfigError,
    Kind,
    ProbabilityVector,
    ProcedureConfig,
    ProcedureState,
    TrialPath,
    advance_state,
    allocation_caps,
    initial_state,
    label,
    normalize_target,
)
from .engine import (
    DEFAULT_SEED,
    SimulationResult,
    backend_name,
    child_stream,
    draw_arm,
    simulate,
)
from .metrics import (
    ArpResult,
    FinalImbalance,
    MetricSeries,
    calc_brt,
    calc_cummean_epcg,
    calc_cummean_loss,
    calc_cummean_pda,
    calc_expected_abs_imb,
    calc_expected_max_abs_imb,
    calc_fi,
    calc_final_imb,
    calc_variance_of_imb,
    eval_arp,
)
from .oracle import (
    ExactDistribution,
    compare,
    enumerate_paths,
    exact_distribution,
    exact_metrics,
    exact_metrics_by_paths,
)
from .rules import conditional_probs

__version__ = "0.1.0"

__all__ = [
    "AllocationTarget",
    "ArpResult",
    "ConfigError",
    "DEFAULT_SEED",
    "ExactDistribution",
    "FinalImbalance",
    "Kind",
    "METRIC_IDS",
    "MetricSeries",
    "ProbabilityVector",
    "ProcedureConfig",
    "ProcedureState",
    "RunConfig",
    "SimulationResult",
    "TrialPath",
    "advance_state",
    "allocation_caps",
    "backend_name",
    "calc_brt",
    "calc_cummean_epcg",
    "calc_cummean_loss",
    "calc_cummean_pda",
    "calc_expected_abs_imb",
    "calc_expected_max_abs_imb",
    "calc_fi",
    "calc_final_imb",
    "calc_variance_of_imb",
    "child_stream",
    "compare",
    "conditional_probs",
    "draw_arm",
    "enumerate_paths",
    "eval_arp",
    "exact_distribution",
    "exact_metrics",
    "exact_metrics_by_paths",
    "initial_state",
    "label",
    "load_run_config",
    "normalize_target",
    "parse_proc",
    "parse_run_config",
    "parse_weights",
    "simulate",
]
