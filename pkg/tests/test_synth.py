import itertools

import numpy as np
import pytest

from cegal.envs import build_gridworld, navigation_layout
from cegal.errors import InfeasibleStationary
from cegal.mdp import Mdp, Policy, induce_dtmc
from cegal.pctl import safety, verify
from cegal.synth import backward_induction, min_zero_states, synthesize_min_reach_policy
from helpers import all_policies, random_mdp


def brute_force_min(mdp, formula):
    return min(verify(induce_dtmc(mdp, Policy(p)), formula).probability
               for p in all_policies(mdp.n_states, mdp.n_actions))


def test_no_unsafe_states():
    mdp = Mdp.from_dense(np.full((3, 2, 3), 1 / 3), 0.9, 0, {"unsafe": set()})
    pol, p = synthesize_min_reach_policy(mdp, safety(0.1, 10))
    assert p == 0.0
    assert list(pol.action_of) == [0, 0, 0]


def test_dominant_action_is_chosen():
    kernel = np.zeros((2, 2, 2))
    kernel[0, 0] = [0.1, 0.9]
    kernel[0, 1] = [0.9, 0.1]
    kernel[1, :, 1] = 1.0
    mdp = Mdp.from_dense(kernel, 0.9, 0, {"unsafe": {1}})
    # one step: only the first transition counts
    pol, p = synthesize_min_reach_policy(mdp, safety(0.5, 1))
    assert pol[0] == 1
    assert p == pytest.approx(0.1)


@pytest.mark.parametrize("horizon", [None, 1, 3, 10])
def test_matches_exhaustive_enumeration(horizon):
    rng = np.random.default_rng(100 + (horizon or 0))
    for _ in range(30):
        n, na = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        mdp = random_mdp(rng, n, na)
        formula = safety(1.0, horizon)
        res = synthesize_min_reach_policy(mdp, formula)
        assert res.probability == pytest.approx(brute_force_min(mdp, formula), abs=1e-9)


def test_three_state_example():
    rng = np.random.default_rng(42)
    mdp = random_mdp(rng, 3, 2)
    formula = safety(1.0, None)
    assert len(list(all_policies(3, 2))) == 8
    _, p = synthesize_min_reach_policy(mdp, formula)
    assert p == pytest.approx(brute_force_min(mdp, formula), abs=1e-9)


def test_reported_probability_is_reverified():
    mdp, _ = build_gridworld(navigation_layout())
    formula = safety(1.0, 64)
    res = synthesize_min_reach_policy(mdp, formula)
    direct = verify(induce_dtmc(mdp, res.policy), formula).probability
    assert res.probability == pytest.approx(direct, abs=1e-10)
    assert res.optimum <= res.probability + 1e-12


def test_lower_bounds_random_policies():
    mdp, _ = build_gridworld(navigation_layout())
    formula = safety(1.0, 64)
    _, p = synthesize_min_reach_policy(mdp, formula)
    rng = np.random.default_rng(0)
    for _ in range(100):
        q = verify(induce_dtmc(mdp, Policy(rng.integers(0, mdp.n_actions, mdp.n_states))), formula).probability
        assert p <= q + 1e-12


def test_backward_induction_matches_step_enumeration():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng, 3, 2)
    phi1, phi2 = np.ones(3, bool), mdp.label_mask("unsafe")
    values, _ = backward_induction(mdp, phi1, phi2, 3)
    dense = np.stack([[[mdp.row(s, a).get(j, 0.0) for j in range(3)] for a in range(2)] for s in range(3)])
    # brute force over step-dependent rules: 8 rules for each of 3 steps
    rules = list(all_policies(3, 2))
    best = 1.0
    for seq in itertools.product(rules, repeat=3):
        dist = np.eye(3)[mdp.initial_state]
        hit = 0.0
        for rule in seq:
            hit += dist[phi2].sum()
            dist = np.where(phi2, 0.0, dist)
            dist = sum(dist[s] * dense[s, rule[s]] for s in range(3))
        best = min(best, hit + dist[phi2].sum())
    assert values[3, mdp.initial_state] == pytest.approx(best, abs=1e-12)


def test_zero_states():
    kernel = np.zeros((3, 2, 3))
    kernel[0, 0, 1] = 1.0  # safe exit
    kernel[0, 1, 2] = 1.0
    kernel[1, :, 1] = 1.0
    kernel[2, :, 2] = 1.0
    mdp = Mdp.from_dense(kernel, 0.9, 0, {"unsafe": {2}})
    zero = min_zero_states(mdp, np.ones(3, bool), mdp.label_mask("unsafe"))
    assert zero.tolist() == [True, True, False]


def timing_mdp():
    # s0 reaches the decision state s1 after one or two steps (via s4).
    # At s1, a0 detours through s5 and is hurt one step later; a1 is hurt
    # immediately with probability 0.3.  s2 unsafe, s3 safe sink.
    kernel = np.zeros((6, 2, 6))
    kernel[0, :, 1] = kernel[0, :, 4] = 0.5
    kernel[4, :, 1] = 1.0
    kernel[1, 0, 5] = 1.0
    kernel[1, 1, 2], kernel[1, 1, 3] = 0.3, 0.7
    kernel[5, :, 2] = 1.0
    kernel[2, :, 2] = kernel[3, :, 3] = 1.0
    return Mdp.from_dense(kernel, 0.9, 0, {"unsafe": {2}})


def test_step_dependent_optimum_beats_every_stationary_policy():
    mdp = timing_mdp()
    res = synthesize_min_reach_policy(mdp, safety(1.0, 3))
    # early arrival (2 steps left) takes the 0.3 risk, late arrival detours safely
    assert res.optimum == pytest.approx(0.15)
    assert res.probability == pytest.approx(0.3)
    assert res.policy[1] == 1
    assert not res.stationary_exact


def test_infeasible_stationary():
    mdp = timing_mdp()
    with pytest.raises(InfeasibleStationary):
        synthesize_min_reach_policy(mdp, safety(0.2, 3))
    res = synthesize_min_reach_policy(mdp, safety(0.2, 3), strict=False)
    assert res.probability == pytest.approx(0.3)
    # both fail: nothing to report beyond the plain verdict
    synthesize_min_reach_policy(mdp, safety(0.1, 3), strict=False)
