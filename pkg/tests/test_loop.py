import math

import numpy as np
import pytest

from cegal.envs import build_gridworld, make_expert, navigation_layout
from cegal.errors import UnsafeInitialPolicy
from cegal.loop import (DUP, EPSILON_CLOSE, INITIAL_CLOSE, K_EXHAUSTED, SAT, UNSAT, CegalConfig,
                        CegalState, run_al, run_cegal, update_k)
from cegal.margin import solve_max_margin
from cegal.mdp import FeatureMap, Mdp, Policy, expected_features, induce_dtmc, solve_optimal_policy
from cegal.pctl import safety, verify
from cegal.synth import synthesize_min_reach_policy


def test_unsat_halves_gap():
    s = update_k(CegalState(inf=0.0, k=1.0), False, 0.5)
    assert s.k == 0.5 and s.inf == 0.0


def test_unsat_at_floor_is_fixed_point():
    s = update_k(CegalState(inf=0.3, k=0.3), False, 0.5)
    assert s.k == 0.3


def test_sat_raises_floor():
    s = update_k(CegalState(inf=0.0, k=0.25), True, 0.5)
    assert s.inf == 0.25 and s.k == 1.0


def test_config_validation():
    for bad in ({"epsilon": 0}, {"sigma": 1.0}, {"alpha": 0.0}, {"max_iters": 0}):
        with pytest.raises(ValueError):
            CegalConfig(**bad)
    c = CegalConfig()
    assert (c.epsilon, c.sigma, c.alpha, c.max_iters) == (10.0, 1e-5, 0.5, 50)


def two_state():
    # s0: stay (a0) or go to the unsafe sink s1 (a1)
    kernel = np.zeros((2, 2, 2))
    kernel[0, 0, 0] = 1.0
    kernel[0, 1, 1] = 1.0
    kernel[1, :, 1] = 1.0
    mdp = Mdp.from_dense(kernel, 0.9, 0, {"unsafe": {1}})
    return mdp, FeatureMap(np.eye(2))


def test_unsafe_initial_policy_rejected():
    mdp, feats = two_state()
    with pytest.raises(UnsafeInitialPolicy):
        run_cegal(mdp, feats, [0.0, 10.0], safety(0.5, 5), Policy([1, 0]))


def test_initial_policy_close():
    mdp, feats = two_state()
    res = run_cegal(mdp, feats, [9.0, 0.0], safety(0.5, 5), Policy([0, 0]), CegalConfig(epsilon=2.0))
    assert res.termination_reason == INITIAL_CLOSE
    assert res.policy == Policy([0, 0])
    assert res.iterations == 0


def test_adversarial_instance_exhausts_k():
    mdp, feats = two_state()
    cfg = CegalConfig(epsilon=0.01)
    res = run_cegal(mdp, feats, [0.0, 10.0], safety(0.5, 5), Policy([0, 0]), cfg)
    assert res.termination_reason == K_EXHAUSTED
    assert res.policy == Policy([0, 0])
    assert res.verdict.satisfied
    bound = 1 + math.log(cfg.sigma / 1.0) / math.log(1 - cfg.alpha)
    assert res.iterations <= math.ceil(bound)
    rows = res.transcript[1:]
    assert all(r.verdict in (UNSAT, DUP) for r in rows)
    assert {r.verdict for r in rows} == {UNSAT, DUP}


@pytest.fixture(scope="module")
def grid():
    spec = navigation_layout()
    mdp, feats = build_gridworld(spec)
    expert, mu_e = make_expert(mdp, feats, spec.reward_vector())
    return mdp, feats, expert, mu_e


def test_first_policy_close_matches_plain_al(grid):
    mdp, feats, _, mu_e = grid
    formula = safety(1.0, 64)
    pi0 = synthesize_min_reach_policy(mdp, safety(0.2, 64)).policy
    mu0 = expected_features(mdp, pi0, feats)
    omega = solve_max_margin(mu_e, [mu0]).omega
    first, _ = solve_optimal_policy(mdp, feats.reward(omega))
    d0 = np.linalg.norm(mu_e - mu0)
    d1 = np.linalg.norm(mu_e - expected_features(mdp, first, feats))
    assert d1 < d0
    eps = (d0 + d1) / 2
    res = run_cegal(mdp, feats, mu_e, formula, pi0, CegalConfig(epsilon=eps))
    al = run_al(mdp, feats, mu_e, pi0, epsilon=eps)
    assert res.termination_reason == EPSILON_CLOSE == al.termination_reason
    assert res.policy == al.policy == first
    assert len(res.transcript) == 2  # the initial check plus one verification


def reverify_rows(mdp, feats, transcript, formula):
    for r in transcript:
        if r.verdict == SAT and r.omega:
            pol, _ = solve_optimal_policy(mdp, feats.reward(np.array(r.omega)))
            assert verify(induce_dtmc(mdp, pol), formula).satisfied


def check_k_geometry(transcript, alpha):
    for r in transcript[1:]:
        if r.verdict in (UNSAT, DUP) and "k-exhausted" not in r.event:
            assert abs(r.k - r.inf) == pytest.approx((1 - alpha) * abs(r.k_before - r.inf), abs=1e-15)
        elif r.verdict == SAT and r.event == "added":
            assert r.inf == r.k_before and r.k == 1.0


@pytest.mark.parametrize("pstar", [0.05, 0.2])
def test_output_safe_and_no_worse_than_start(grid, pstar):
    mdp, feats, _, mu_e = grid
    formula = safety(pstar, 64)
    pi0 = synthesize_min_reach_policy(mdp, formula).policy
    res = run_cegal(mdp, feats, mu_e, formula, pi0)
    assert res.verdict.satisfied
    assert verify(induce_dtmc(mdp, res.policy), formula).satisfied
    d0 = np.linalg.norm(mu_e - expected_features(mdp, pi0, feats))
    assert np.linalg.norm(mu_e - res.mu) <= d0 + 1e-9
    reverify_rows(mdp, feats, res.transcript, formula)
    check_k_geometry(res.transcript, 0.5)
    assert all(0.0 <= r.inf <= r.k <= 1.0 for r in res.transcript)


def test_deterministic_transcript(grid):
    mdp, feats, _, mu_e = grid
    formula = safety(0.2, 64)
    pi0 = synthesize_min_reach_policy(mdp, formula).policy
    a = run_cegal(mdp, feats, mu_e, formula, pi0, CegalConfig(max_iters=10))
    b = run_cegal(mdp, feats, mu_e, formula, pi0, CegalConfig(max_iters=10))
    assert [r.csv_row() for r in a.transcript] == [r.csv_row() for r in b.transcript]
    assert a.policy == b.policy


def test_run_al_ignores_safety(grid):
    mdp, feats, _, mu_e = grid
    pi0 = synthesize_min_reach_policy(mdp, safety(0.05, 64)).policy
    al = run_al(mdp, feats, mu_e, pi0)
    assert np.linalg.norm(mu_e - al.mu) <= np.linalg.norm(mu_e - expected_features(mdp, pi0, feats))
    assert al.iterations == len(al.margins) >= 1
