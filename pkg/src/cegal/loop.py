"""Learner/verifier loop: apprenticeship learning with counterexample guidance.

The learner picks reward weights by max-margin separation, the verifier
model-checks the resulting optimal policy.  Safe policies join the candidate
set; unsafe ones contribute a counterexample whose feature expectation the
learner is pushed away from.  A scalar ``k`` trades off imitation (``k = 1``)
against separation from counterexamples (``k -> 0``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cex import counterexample_features, enumerate_counterexample
from .errors import BudgetExhausted, UnsafeInitialPolicy
from .margin import MarginProblem, solve_max_margin, solve_weighted_margin
from .mdp import FeatureMap, Mdp, Policy, expected_features, induce_dtmc, solve_optimal_policy
from .pctl import Prob, Verdict, check_formula_shape, parse_pctl, verify

log = logging.getLogger(__name__)

SAT, UNSAT, DUP = "SAT", "UNSAT", "DUP"

EPSILON_CLOSE = "EpsilonClose"
K_EXHAUSTED = "KExhausted"
ITER_BUDGET = "IterBudget"
INITIAL_CLOSE = "InitialPolicyClose"
MARGIN_CONVERGED = "MarginConverged"


@dataclass(frozen=True)
class CegalConfig:
    epsilon: float = 10.0
    sigma: float = 1e-5
    alpha: float = 0.5
    max_iters: int = 50
    max_paths: int = 10_000
    cex_threshold: Optional[float] = None  # enumerate against a smaller bound than the formula's
    feature_tol: float = 1e-9
    opt_tol: float = 1e-12
    opt_iters: int = 10_000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    k: float  # value after this iteration's update
    inf: float
    k_before: float
    delta: float  # margin of the solve that produced this iteration's policy
    probability: float
    verdict: str
    mu_dist: float
    event: str
    cex_paths: int = 0
    omega: tuple = ()

    CSV_FIELDS = ("iter", "k", "inf", "delta", "probability", "verdict", "mu_dist")

    def csv_row(self) -> list:
        return [self.iteration, repr(self.k), repr(self.inf), repr(self.delta),
                repr(self.probability), self.verdict, repr(self.mu_dist)]


@dataclass
class CegalState:
    safe_set: list = field(default_factory=list)  # (Policy, mu, omega or None)
    cex_set: list = field(default_factory=list)  # (Counterexample, mu)
    inf: float = 0.0
    sup: float = 1.0
    k: float = 1.0
    iteration: int = 0
    transcript: list = field(default_factory=list)


@dataclass(frozen=True)
class CegalResult:
    policy: Policy
    mu: np.ndarray
    verdict: Verdict
    termination_reason: str
    transcript: tuple
    omega: np.ndarray
    mu_source: str = "policy"

    @property
    def iterations(self) -> int:
        return max((r.iteration for r in self.transcript), default=0)


def update_k(state: CegalState, satisfied: bool, alpha: float) -> CegalState:
    """SAT raises the floor to ``k`` and resets ``k`` to the ceiling; UNSAT
    moves ``k`` a fraction ``alpha`` of the way down to the floor."""
    if satisfied:
        return replace(state, inf=state.k, k=state.sup)
    return replace(state, k=alpha * state.inf + (1.0 - alpha) * state.k)


def _distance(mu_expert: np.ndarray, mu: np.ndarray) -> float:
    return float(np.linalg.norm(mu_expert - mu))


def _best_safe(state: CegalState, mu_expert: np.ndarray):
    dists = [_distance(mu_expert, mu) for _, mu, _ in state.safe_set]
    return state.safe_set[int(np.argmin(dists))]


def _learn(mdp: Mdp, features: FeatureMap, omega: np.ndarray, tol: float):
    policy, _ = solve_optimal_policy(mdp, features.reward(omega))
    return policy, expected_features(mdp, policy, features, tol)


def run_cegal(mdp: Mdp, features: FeatureMap, mu_expert, formula, pi0: Policy,
              config: CegalConfig = CegalConfig(), mu_source: str = "policy") -> CegalResult:
    """Apprenticeship learning steered by counterexamples, starting from the safe policy ``pi0``.

    The result satisfies the formula and is no farther from ``mu_expert``
    than ``pi0`` is.
    """
    if isinstance(formula, str):
        formula = parse_pctl(formula)
    formula: Prob = check_formula_shape(formula)
    mu_expert = np.asarray(mu_expert, dtype=float)
    eps, gamma = config.epsilon, mdp.gamma

    verdict0 = verify(induce_dtmc(mdp, pi0), formula)
    if not verdict0.satisfied:
        raise UnsafeInitialPolicy(
            f"initial policy violates the property (probability {verdict0.probability:.6g})"
        )
    mu0 = expected_features(mdp, pi0, features, config.feature_tol)
    dist0 = _distance(mu_expert, mu0)
    zero_omega = np.zeros(features.k)
    state = CegalState(safe_set=[(pi0, mu0, None)])
    state.transcript.append(IterationRecord(0, state.k, state.inf, state.k, math.nan,
                                            verdict0.probability, SAT, dist0, "init"))

    def result(policy, mu, verdict, reason, omega):
        log.info("cegal finished: %s after %d iterations", reason, state.iteration)
        return CegalResult(policy, mu, verdict, reason, tuple(state.transcript),
                           zero_omega if omega is None else omega, mu_source)

    def fallback(reason):
        pol, mu, om = _best_safe(state, mu_expert)
        return result(pol, mu, verify(induce_dtmc(mdp, pol), formula), reason, om)

    if dist0 <= eps:
        return result(pi0, mu0, verdict0, INITIAL_CLOSE, None)

    # first learner step is plain max-margin AL against the initial policy
    sol = solve_max_margin(mu_expert, [mu0], config.opt_tol, config.opt_iters)
    omega, delta = sol.omega, sol.delta
    policy, mu = _learn(mdp, features, omega, config.feature_tol)

    for i in range(1, config.max_iters + 1):
        state.iteration = i
        k_before = state.k
        dist = _distance(mu_expert, mu)
        verdict = verify(induce_dtmc(mdp, policy), formula)
        tag = SAT if verdict.satisfied else UNSAT
        event = ""
        cex_paths = 0
        if any(policy == p for p, _, _ in state.safe_set):
            # re-learning a known candidate would stall; shrink k as if unsafe
            tag, event = DUP, "duplicate"
        if tag == SAT:
            if dist <= eps:
                state.transcript.append(IterationRecord(i, state.k, state.inf, k_before, delta,
                                                        verdict.probability, tag, dist, "eps-close"))
                return result(policy, mu, verdict, EPSILON_CLOSE, omega)
            state.safe_set.append((policy, mu, omega))
            state = update_k(state, True, config.alpha)
            event = "added"
        else:
            if tag == UNSAT:
                try:
                    cex = enumerate_counterexample(induce_dtmc(mdp, policy), formula,
                                                   config.max_paths, config.cex_threshold)
                    event = "cex"
                except BudgetExhausted as exc:
                    cex = exc.partial
                    event = "cex-budget"
                cex_paths = len(cex.paths)
                state.cex_set.append((cex, counterexample_features(cex, features, gamma)))
            if abs(state.k - state.inf) <= config.sigma:
                state.transcript.append(IterationRecord(i, state.k, state.inf, k_before, delta,
                                                        verdict.probability, tag, dist,
                                                        event + ";k-exhausted", cex_paths))
                return fallback(K_EXHAUSTED)
            state = update_k(state, False, config.alpha)
        state.transcript.append(IterationRecord(i, state.k, state.inf, k_before, delta,
                                                verdict.probability, tag, dist, event, cex_paths,
                                                tuple(float(w) for w in omega)))
        log.debug("iter %d: %s p=%.4g dist=%.4g k=%.6g inf=%.6g", i, tag,
                  verdict.probability, dist, state.k, state.inf)
        if i == config.max_iters:
            break
        problem = MarginProblem(mu_expert, [m for _, m, _ in state.safe_set],
                                [m for _, m in state.cex_set], state.k)
        sol = solve_weighted_margin(problem, config.opt_tol, config.opt_iters)
        omega, delta = sol.omega, sol.delta
        policy, mu = _learn(mdp, features, omega, config.feature_tol)
    return fallback(ITER_BUDGET)


@dataclass(frozen=True)
class AlResult:
    policy: Policy
    mu: np.ndarray
    omega: np.ndarray
    termination_reason: str
    iterations: int
    margins: tuple


def run_al(mdp: Mdp, features: FeatureMap, mu_expert, pi0: Policy, epsilon: float = 10.0,
           max_iters: int = 50, feature_tol: float = 1e-9, counterexamples=(), k: float = 1.0,
           opt_tol: float = 1e-12, opt_iters: int = 10_000) -> AlResult:
    """Max-margin apprenticeship learning without any safety check.

    Stops when the newly learnt policy is epsilon-close, or when the margin
    drops to epsilon (returning the closest policy found), or at the budget.
    Fixed ``counterexamples`` feature vectors with ``k < 1`` switch the learner
    to the weighted objective.
    """
    mu_expert = np.asarray(mu_expert, dtype=float)
    mu0 = expected_features(mdp, pi0, features, feature_tol)
    found = [(pi0, mu0, np.zeros(features.k))]
    margins = []
    reason = ITER_BUDGET
    for i in range(1, max_iters + 1):
        problem = MarginProblem(mu_expert, [m for _, m, _ in found], tuple(counterexamples), k)
        sol = solve_weighted_margin(problem, opt_tol, opt_iters)
        margins.append(sol.delta)
        policy, mu = _learn(mdp, features, sol.omega, feature_tol)
        if _distance(mu_expert, mu) <= epsilon:
            return AlResult(policy, mu, sol.omega, EPSILON_CLOSE, i, tuple(margins))
        found.append((policy, mu, sol.omega))
        if sol.delta <= epsilon:
            reason = MARGIN_CONVERGED
            break
    dists = [_distance(mu_expert, m) for _, m, _ in found[1:]] or [math.inf]
    pol, mu, om = found[1 + int(np.argmin(dists))]
    return AlResult(pol, mu, om, reason, len(margins), tuple(margins))
