"""Apprenticeship learning with probabilistic safety guarantees.

The learner proposes policies by max-margin feature matching; a PCTL model
checker verifies them and supplies counterexamples that steer later
proposals away from unsafe behaviour.
"""
from .cex import Counterexample, counterexample_features, enumerate_counterexample
from .errors import CegalError
from .loop import CegalConfig, CegalResult, run_al, run_cegal, update_k
from .margin import MarginProblem, MarginSolution, solve_max_margin, solve_weighted_margin
from .mdp import (Dtmc, FeatureMap, Mdp, Policy, Trajectory, estimate_expert_features,
                  expected_features, induce_dtmc, solve_optimal_policy)
from .pctl import Verdict, format_pctl, parse_pctl, safety, verify
from .synth import synthesize_min_reach_policy

__version__ = "0.1.0"

__all__ = [
    "Counterexample", "counterexample_features", "enumerate_counterexample", "CegalError",
    "CegalConfig", "CegalResult", "run_al", "run_cegal", "update_k",
    "MarginProblem", "MarginSolution", "solve_max_margin", "solve_weighted_margin",
    "Dtmc", "FeatureMap", "Mdp", "Policy", "Trajectory", "estimate_expert_features",
    "expected_features", "induce_dtmc", "solve_optimal_policy",
    "Verdict", "format_pctl", "parse_pctl", "safety", "verify", "synthesize_min_reach_policy",
]
