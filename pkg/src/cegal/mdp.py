"""Tabular MDPs, induced Markov chains, and feature expectations.

Transitions are stored as one CSR matrix per action so that the same code
paths serve an 8x8 grid and a 64x64 one.  States are integers ``0..n-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, IncompletePolicy, ModelError, NoDemonstrations

ROW_SUM_TOL = 1e-9
SOLVE_TOL = 1e-9
MAX_SWEEPS = 100_000


def _freeze_labels(labels: Mapping[str, Iterable[int]] | None) -> dict[str, frozenset[int]]:
    return {str(name): frozenset(int(s) for s in states) for name, states in (labels or {}).items()}


def _check_rows(matrix: sp.csr_matrix, what: str) -> None:
    if matrix.nnz and (matrix.data.min() < 0.0 or matrix.data.max() > 1.0 + ROW_SUM_TOL):
        raise ModelError(f"{what}: probabilities must lie in [0, 1]")
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise ModelError(f"{what}: row {int(bad[0])} sums to {sums[bad[0]]!r}")


def _check_labels(labels: Mapping[str, frozenset[int]], n_states: int) -> None:
    for name, states in labels.items():
        for s in states:
            if not 0 <= s < n_states:
                raise ModelError(f"label {name!r} references state {s} outside 0..{n_states - 1}")


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP without a reward: states, actions, kernel, discount, start, labels.

    ``transitions[a]`` is an ``n_states x n_states`` CSR matrix whose row ``s``
    is the next-state distribution of taking ``a`` in ``s``.
    """

    n_states: int
    n_actions: int
    transitions: tuple[sp.csr_matrix, ...]
    gamma: float
    initial_state: int
    labels: dict[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ModelError("an MDP needs at least one state and one action")
        if len(self.transitions) != self.n_actions:
            raise ModelError(f"expected {self.n_actions} transition matrices, got {len(self.transitions)}")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError(f"discount must lie in [0, 1), got {self.gamma}")
        if not 0 <= self.initial_state < self.n_states:
            raise ModelError(f"initial state {self.initial_state} out of range")
        mats = []
        for a, m in enumerate(self.transitions):
            m = sp.csr_matrix(m, dtype=float)
            if m.shape != (self.n_states, self.n_states):
                raise ModelError(f"action {a}: matrix shape {m.shape} != {(self.n_states, self.n_states)}")
            m.eliminate_zeros()
            m.sort_indices()
            _check_rows(m, f"action {a}")
            mats.append(m)
        labels = _freeze_labels(self.labels)
        _check_labels(labels, self.n_states)
        object.__setattr__(self, "transitions", tuple(mats))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_dense(cls, kernel, gamma: float, initial_state: int = 0, labels=None) -> "Mdp":
        """Build from an array indexed ``[state, action, next_state]``."""
        kernel = np.asarray(kernel, dtype=float)
        n, na, n2 = kernel.shape
        if n != n2:
            raise ModelError(f"kernel shape {kernel.shape} is not (S, A, S)")
        return cls(n, na, tuple(sp.csr_matrix(kernel[:, a, :]) for a in range(na)),
                   float(gamma), int(initial_state), labels or {})

    def row(self, state: int, action: int) -> dict[int, float]:
        m = self.transitions[action]
        lo, hi = m.indptr[state], m.indptr[state + 1]
        return {int(j): float(p) for j, p in zip(m.indices[lo:hi], m.data[lo:hi])}

    def label_mask(self, name: str) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.labels[name])] = True
        return mask

    @cached_property
    def stacked(self) -> sp.csr_matrix:
        """All actions stacked vertically: row ``a * n_states + s`` is ``T(s, a, .)``."""
        return sp.csr_matrix(sp.vstack(self.transitions, format="csr"))

    def q_values(self, values: np.ndarray) -> np.ndarray:
        """``Q[s, a] = sum_s' T(s, a, s') * values[s']`` (no reward, no discount)."""
        return (self.stacked @ values).reshape(self.n_actions, self.n_states).T


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic stationary policy, stored as an int array ``state -> action``."""

    action_of: np.ndarray

    def __post_init__(self):
        arr = np.array(self.action_of, dtype=np.int64, copy=True)
        if arr.ndim != 1:
            raise IncompletePolicy("policy must be a flat state -> action map")
        arr.setflags(write=False)
        object.__setattr__(self, "action_of", arr)

    def __len__(self) -> int:
        return len(self.action_of)

    def __getitem__(self, state: int) -> int:
        return int(self.action_of[state])

    def __eq__(self, other) -> bool:
        return isinstance(other, Policy) and np.array_equal(self.action_of, other.action_of)

    def __hash__(self) -> int:
        return hash(self.action_of.tobytes())

    @classmethod
    def constant(cls, n_states: int, action: int = 0) -> "Policy":
        return cls(np.full(n_states, action, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class Dtmc:
    """Markov chain induced by fixing a policy: one sparse row per state."""

    n_states: int
    rows: sp.csr_matrix
    initial_state: int
    labels: dict[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        m = sp.csr_matrix(self.rows, dtype=float)
        if m.shape != (self.n_states, self.n_states):
            raise ModelError(f"row matrix shape {m.shape} does not match {self.n_states} states")
        m.eliminate_zeros()
        m.sort_indices()
        _check_rows(m, "dtmc")
        if not 0 <= self.initial_state < self.n_states:
            raise ModelError(f"initial state {self.initial_state} out of range")
        labels = _freeze_labels(self.labels)
        _check_labels(labels, self.n_states)
        object.__setattr__(self, "rows", m)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_dense(cls, matrix, initial_state: int = 0, labels=None) -> "Dtmc":
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix.shape[0], sp.csr_matrix(matrix), int(initial_state), labels or {})

    def row(self, state: int) -> dict[int, float]:
        lo, hi = self.rows.indptr[state], self.rows.indptr[state + 1]
        return {int(j): float(p) for j, p in zip(self.rows.indices[lo:hi], self.rows.data[lo:hi])}

    def label_mask(self, name: str) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.labels[name])] = True
        return mask


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-state feature vectors, ``values[s]`` in ``[0, 1]^k``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DimensionMismatch("features must be an (n_states, k) array")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ModelError("feature values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def __call__(self, state: int) -> np.ndarray:
        return self.values[state]

    def reward(self, omega) -> np.ndarray:
        """Per-state linear reward ``omega . f(s)``."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.k,):
            raise DimensionMismatch(f"weight vector has shape {omega.shape}, expected ({self.k},)")
        return self.values @ omega


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    probability: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        if not self.states:
            raise ModelError("empty trajectory")

    def __len__(self) -> int:
        return len(self.states)


def check_policy(mdp: Mdp, policy: Policy) -> None:
    if len(policy) != mdp.n_states:
        raise IncompletePolicy(f"policy covers {len(policy)} states, MDP has {mdp.n_states}")
    acts = policy.action_of
    if acts.size and (acts.min() < 0 or acts.max() >= mdp.n_actions):
        bad = int(np.flatnonzero((acts < 0) | (acts >= mdp.n_actions))[0])
        raise IncompletePolicy(f"state {bad} has no valid action ({int(acts[bad])})")


def induce_dtmc(mdp: Mdp, policy: Policy) -> Dtmc:
    """Select, for every state, the transition row of the policy's action."""
    check_policy(mdp, policy)
    picked = policy.action_of * mdp.n_states + np.arange(mdp.n_states)
    return Dtmc(mdp.n_states, mdp.stacked[picked], mdp.initial_state, mdp.labels)


def policy_matrix(mdp: Mdp, policy: Policy) -> sp.csr_matrix:
    return induce_dtmc(mdp, policy).rows


def _greedy(q: np.ndarray) -> np.ndarray:
    # lowest index among actions within a scale-relative tolerance of the max
    best = q.max(axis=1, keepdims=True)
    spread = float(q.max() - q.min()) if q.size else 0.0
    tol = 1e-10 * spread
    return np.argmax(q >= best - tol, axis=1)


def evaluate_policy(mdp: Mdp, policy: Policy, reward) -> np.ndarray:
    """Exact discounted value of a stationary policy via a sparse solve."""
    p = policy_matrix(mdp, policy)
    a = sp.identity(mdp.n_states, format="csc") - mdp.gamma * p.tocsc()
    return np.atleast_1d(spla.spsolve(a, np.asarray(reward, dtype=float)))


def solve_optimal_policy(mdp: Mdp, reward, max_iters: int = MAX_SWEEPS) -> tuple[Policy, np.ndarray]:
    """Howard policy iteration on the state-reward MDP.

    Returns the greedy policy (lowest action index on ties) and its value.
    """
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (mdp.n_states,):
        raise DimensionMismatch(f"reward has shape {reward.shape}, expected ({mdp.n_states},)")
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward must be finite")
    policy = Policy.constant(mdp.n_states, 0)
    values = evaluate_policy(mdp, policy, reward)
    for _ in range(max_iters):
        q = reward[:, None] + mdp.gamma * mdp.q_values(values)
        current = q[np.arange(mdp.n_states), policy.action_of]
        # only switch on strict improvement so the iteration cannot cycle on ties
        gain = q.max(axis=1) - current
        scale = max(1.0, float(np.abs(q).max()))
        improve = gain > 1e-12 * scale
        if not improve.any():
            break
        new = policy.action_of.copy()
        new[improve] = _greedy(q)[improve]
        policy = Policy(new)
        values = evaluate_policy(mdp, policy, reward)
    q = reward[:, None] + mdp.gamma * mdp.q_values(values)
    return Policy(_greedy(q)), q.max(axis=1)


def bellman_residual(mdp: Mdp, reward, values) -> float:
    q = np.asarray(reward, dtype=float)[:, None] + mdp.gamma * mdp.q_values(np.asarray(values, dtype=float))
    return float(np.abs(q.max(axis=1) - values).max())


def _check_features(mdp: Mdp, features: FeatureMap) -> None:
    if features.n_states != mdp.n_states:
        raise DimensionMismatch(f"feature map covers {features.n_states} states, MDP has {mdp.n_states}")


def state_feature_expectations(mdp: Mdp, policy: Policy, features: FeatureMap,
                               tol: float = SOLVE_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Per-state discounted feature sums ``M = F + gamma P M`` by fixed-point iteration.

    Stops once the a-posteriori bound ``gamma/(1-gamma) * ||dM||_inf`` drops
    below ``tol``.
    """
    _check_features(mdp, features)
    p = policy_matrix(mdp, policy)
    f = features.values
    g = mdp.gamma
    m = f.copy()
    bound_factor = g / (1.0 - g) if g > 0 else 0.0
    for _ in range(max_sweeps):
        nxt = f + g * (p @ m)
        step = float(np.abs(nxt - m).max()) if m.size else 0.0
        m = nxt
        if step * bound_factor < tol:
            break
    return m


def expected_features(mdp: Mdp, policy: Policy, features: FeatureMap,
                      tol: float = SOLVE_TOL) -> np.ndarray:
    """Discounted feature expectation of ``policy`` from the initial state."""
    return state_feature_expectations(mdp, policy, features, tol)[mdp.initial_state].copy()


def discounted_feature_sum(states: Sequence[int], features: FeatureMap, gamma: float) -> np.ndarray:
    idx = np.asarray(states, dtype=np.int64)
    weights = gamma ** np.arange(len(idx))
    return weights @ features.values[idx]


def _pad(states: Sequence[int], horizon: int) -> np.ndarray:
    arr = np.asarray(states, dtype=np.int64)[: horizon + 1]
    if len(arr) < horizon + 1:
        arr = np.concatenate([arr, np.full(horizon + 1 - len(arr), arr[-1], dtype=np.int64)])
    return arr


def estimate_expert_features(trajectories: Sequence[Trajectory], features: FeatureMap,
                             gamma: float, horizon: int) -> np.ndarray:
    """Empirical mean of discounted feature sums over ``horizon + 1`` states.

    Short trajectories are padded by repeating their final state.
    """
    if not trajectories:
        raise NoDemonstrations("at least one demonstration is required")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    idx = np.stack([_pad(t.states, horizon) for t in trajectories])
    weights = gamma ** np.arange(horizon + 1)
    # sum_t gamma^t f(s_t), averaged over trajectories
    per_traj = np.einsum("t,ntk->nk", weights, features.values[idx])
    return per_traj.mean(axis=0)


def _row_sampler(p: sp.csr_matrix):
    """Offsets such that ``searchsorted(cum, row + u)`` samples row ``row``."""
    counts = np.diff(p.indptr)
    rows = np.repeat(np.arange(p.shape[0]), counts)
    total = np.concatenate([[0.0], np.cumsum(p.data)])
    return total[1:] - np.repeat(total[p.indptr[:-1]], counts) + rows


def sample_trajectories(mdp: Mdp, policy: Policy, n: int, horizon: int, seed: int) -> list[Trajectory]:
    """Sample ``n`` state sequences of ``horizon + 1`` states from the initial state."""
    if n < 1 or horizon < 0:
        raise ValueError("need n >= 1 and horizon >= 0")
    p = policy_matrix(mdp, policy)
    return [Trajectory(tuple(row)) for row in _simulate(p, mdp.initial_state, n, horizon, seed)]


def _simulate(p: sp.csr_matrix, start: int, n: int, horizon: int, seed) -> np.ndarray:
    # accepts an int seed or a Generator so callers can continue one stream
    rng = np.random.default_rng(seed)
    cum = _row_sampler(p)
    out = np.empty((n, horizon + 1), dtype=np.int64)
    out[:, 0] = start
    cur = np.full(n, start, dtype=np.int64)
    for t in range(1, horizon + 1):
        u = rng.random(n)
        pos = np.searchsorted(cum, cur + u, side="right")
        # cumulative sums can miss 1 by rounding; keep the pick inside the current row
        pos = np.clip(pos, p.indptr[cur], p.indptr[cur + 1] - 1)
        cur = p.indices[pos]
        out[:, t] = cur
    return out
