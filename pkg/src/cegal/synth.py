"""Maximally safe policies: minimise the probability of an until property.

Unbounded properties are solved exactly over stationary deterministic
policies (precomputed zero set, value iteration, then policy iteration).
Bounded properties are solved by backward induction, which gives a
step-dependent optimum; the stationary policy returned is the best of the
per-step decision rules and the unbounded optimum, refined by single-state
switches, and always re-verified on the induced chain.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleStationary
from .mdp import Mdp, Policy, induce_dtmc
from .pctl import Prob, Until, check_formula_shape, parse_pctl, state_mask, until_probabilities, verify

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class SynthesisResult:
    policy: Policy
    probability: float
    optimum: float  # step-indexed optimum for bounded properties, same as probability otherwise
    stationary_exact: bool

    def __iter__(self):
        # unpacks as (policy, probability)
        return iter((self.policy, self.probability))


def _argmin_low(q: np.ndarray) -> np.ndarray:
    best = q.min(axis=1, keepdims=True)
    return np.argmax(q <= best + TIE_TOL, axis=1)


def _masks(mdp: Mdp, formula: Prob):
    # an MDP carries the same labels as its chains, so state_mask works on it directly
    return state_mask(mdp, formula.path.left), state_mask(mdp, formula.path.right)


def min_zero_states(mdp: Mdp, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    """States where some policy avoids ``phi1 U phi2`` with probability one."""
    zero = ~phi2
    while True:
        # action a keeps s inside the set iff all of T(s, a, .) lands inside
        outside = (~zero).astype(float)
        leak = mdp.q_values(outside) > 0.0
        stays = (~leak).any(axis=1)
        nxt = zero & (~phi1 | stays)
        if np.array_equal(nxt, zero):
            return zero
        zero = nxt


def _policy_reach(mdp: Mdp, policy: Policy, formula: Prob) -> float:
    return verify(induce_dtmc(mdp, policy), formula).probability


def _unbounded(mdp: Mdp, formula: Prob) -> SynthesisResult:
    phi1, phi2 = _masks(mdp, formula)
    zero = min_zero_states(mdp, phi1, phi2)
    maybe = phi1 & ~phi2 & ~zero
    x = phi2.astype(float)
    for _ in range(MAX_SWEEPS):
        q = mdp.q_values(x)
        nxt = np.where(maybe, q.min(axis=1), x)
        step = float(np.abs(nxt - x).max())
        x = nxt
        if step < 1e-13:
            break
    # on zero states pick an action that stays inside the zero set
    outside = (~zero).astype(float)
    q_zero = mdp.q_values(outside)
    actions = _argmin_low(mdp.q_values(x))
    actions[zero] = _argmin_low(q_zero)[zero]
    policy = Policy(actions)
    # policy iteration with exact evaluation removes value-iteration tie noise
    for _ in range(mdp.n_states * mdp.n_actions + 1):
        vals = until_probabilities(induce_dtmc(mdp, policy), formula.path)
        q = mdp.q_values(vals)
        cur = q[np.arange(mdp.n_states), policy.action_of]
        better = maybe & (q.min(axis=1) < cur - 1e-12)
        if not better.any():
            break
        new = policy.action_of.copy()
        new[better] = _argmin_low(q)[better]
        policy = Policy(new)
    p = _policy_reach(mdp, policy, formula)
    return SynthesisResult(policy, p, p, True)


def backward_induction(mdp: Mdp, phi1: np.ndarray, phi2: np.ndarray, bound: int):
    """Step-indexed minimum probabilities and decision rules.

    Returns ``(values, rules)`` where ``values[r]`` is the minimum probability
    with ``r`` steps left and ``rules[r]`` (``r >= 1``) the minimising action.
    """
    live = phi1 & ~phi2
    values = np.zeros((bound + 1, mdp.n_states))
    rules = np.zeros((bound + 1, mdp.n_states), dtype=np.int64)
    values[0] = phi2.astype(float)
    for r in range(1, bound + 1):
        q = mdp.q_values(values[r - 1])
        rules[r] = _argmin_low(q)
        values[r] = np.where(phi2, 1.0, np.where(live, q.min(axis=1), 0.0))
    return values, rules


def _bounded(mdp: Mdp, formula: Prob, max_evaluations: int) -> SynthesisResult:
    phi1, phi2 = _masks(mdp, formula)
    bound = formula.path.bound
    values, rules = backward_induction(mdp, phi1, phi2, bound)
    optimum = float(values[bound, mdp.initial_state])

    # candidate stationary policies: step-0 rule first, then later rules
    candidates: list[Policy] = []
    seen = set()
    for r in range(bound, 0, -1):
        pol = Policy(rules[r])
        if pol not in seen:
            seen.add(pol)
            candidates.append(pol)
    unbounded = _unbounded(mdp, Prob(formula.comparison, formula.threshold,
                                      Until(formula.path.left, formula.path.right, None))).policy
    if unbounded not in seen:
        candidates.append(unbounded)

    best, best_p = candidates[0], _policy_reach(mdp, candidates[0], formula)
    for pol in candidates[1:]:
        if best_p <= optimum + TIE_TOL:
            break
        p = _policy_reach(mdp, pol, formula)
        if p < best_p - TIE_TOL:
            best, best_p = pol, p

    # single-state switches, first improvement, until a sweep finds nothing
    evaluations = 0
    live = np.flatnonzero(phi1 & ~phi2)
    improved = best_p > optimum + TIE_TOL
    while improved and evaluations < max_evaluations:
        improved = False
        for s in live:
            for a in range(mdp.n_actions):
                if a == best[s] or evaluations >= max_evaluations:
                    continue
                trial = best.action_of.copy()
                trial[s] = a
                trial_pol = Policy(trial)
                p = _policy_reach(mdp, trial_pol, formula)
                evaluations += 1
                if p < best_p - TIE_TOL:
                    best, best_p, improved = trial_pol, p, True
            if best_p <= optimum + TIE_TOL:
                improved = False
                break
    exact = best_p <= optimum + TIE_TOL
    return SynthesisResult(best, best_p, optimum, exact)


def synthesize_min_reach_policy(mdp: Mdp, formula, max_evaluations: int = 2000,
                                strict: bool = True) -> SynthesisResult:
    """Stationary policy minimising the initial-state probability of the path formula.

    With ``strict`` (the default) a bounded property whose stationary
    projection violates the threshold while the step-indexed optimum meets
    it raises :class:`InfeasibleStationary`.
    """
    if isinstance(formula, str):
        formula = parse_pctl(formula)
    formula = check_formula_shape(formula)
    if formula.path.bound is None:
        result = _unbounded(mdp, formula)
    else:
        result = _bounded(mdp, formula, max_evaluations)
    log.info("min-reach synthesis: stationary %.6g, optimum %.6g", result.probability, result.optimum)
    if strict and not formula.holds(result.probability) and formula.holds(result.optimum):
        raise InfeasibleStationary(result.probability, result.optimum, formula.threshold)
    return result
