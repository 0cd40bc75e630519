"""Expert policies and demonstration sets for the bundled environments."""
from __future__ import annotations

import numpy as np

from ..errors import FilterExhausted
from ..mdp import FeatureMap, Mdp, Policy, Trajectory, _simulate, expected_features, policy_matrix, solve_optimal_policy


def make_expert(mdp: Mdp, features: FeatureMap, true_reward) -> tuple[Policy, np.ndarray]:
    """Optimal policy for the ground-truth reward and its feature expectation."""
    policy, _ = solve_optimal_policy(mdp, np.asarray(true_reward, dtype=float))
    return policy, expected_features(mdp, policy, features)


def generate_demonstrations(mdp: Mdp, policy: Policy, m: int, horizon: int, seed: int,
                            filter_safe: bool = False, unsafe_label: str = "unsafe") -> list[Trajectory]:
    """Sample ``m`` demonstrations; with ``filter_safe`` reject any touching an unsafe state.

    Rejection sampling gives up after ``100 * m`` attempts.
    """
    if m < 1:
        raise ValueError("m must be positive")
    p = policy_matrix(mdp, policy)
    rng = np.random.default_rng(seed)
    if not filter_safe:
        return [Trajectory(tuple(r)) for r in _simulate(p, mdp.initial_state, m, horizon, rng)]
    unsafe = mdp.label_mask(unsafe_label) if unsafe_label in mdp.labels else np.zeros(mdp.n_states, bool)
    accepted: list[np.ndarray] = []
    attempts = 0
    cap = 100 * m
    while len(accepted) < m:
        # the first batch matches plain sampling, so a policy that never
        # touches an unsafe state yields exactly the unfiltered demonstrations
        want = m if attempts == 0 else max(m - len(accepted), 64) * 2
        batch = min(want, cap - attempts)
        if batch <= 0:
            raise FilterExhausted(f"only {len(accepted)} of {m} safe demonstrations after {attempts} attempts")
        runs = _simulate(p, mdp.initial_state, batch, horizon, rng)
        attempts += batch
        ok = ~unsafe[runs].any(axis=1)
        accepted.extend(runs[ok][: m - len(accepted)])
    return [Trajectory(tuple(r)) for r in accepted]
