"""Fully online matching: water-filling, Ranking, their hard instances and certificates."""

__version__ = "0.1.0"

from .errors import FomError
from .instance import (
    Instance, build_instance, instance_from_deadlines, load_instance, opt_value,
    random_instance, serialize_instance,
)
from .ranking import RankingGain, estimate_ratio, expected_edge_gain, omega_constant, run_ranking, thresholds
from .ranking_hardness import gen_ranking_hard_instance, hard_instance_ratio, omega_fixed_point
from .waterfill import certify_duals, linear_gain, run_waterfill
from .wf_hardness import gen_generalized_hard_instance, gen_wf_hard_instance, stationary_profile

__all__ = [
    "FomError", "Instance", "build_instance", "instance_from_deadlines", "load_instance",
    "opt_value", "random_instance", "serialize_instance", "RankingGain", "estimate_ratio",
    "expected_edge_gain", "omega_constant", "run_ranking", "thresholds",
    "gen_ranking_hard_instance", "hard_instance_ratio", "omega_fixed_point",
    "certify_duals", "linear_gain", "run_waterfill", "gen_generalized_hard_instance",
    "gen_wf_hard_instance", "stationary_profile",
]
