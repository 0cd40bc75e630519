"""Max-margin weight selection over the unit L2 ball.

Both learner objectives have the form ``max_{|w|<=1} min_j w . d_j`` for a
finite set of difference vectors ``d_j``.  Its value is the distance from the
origin to the convex hull of the ``d_j`` (zero if the origin is inside), and
the maximiser is the normalised minimum-norm point of that hull.  The
minimum-norm point is found with Wolfe's active-set algorithm, which
terminates finitely and is exact up to the linear solves it performs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch

MAX_WOLFE_ITERS = 10_000


@dataclass(frozen=True)
class MarginSolution:
    omega: np.ndarray
    delta: float


@dataclass(frozen=True)
class MarginProblem:
    mu_expert: np.ndarray
    safe_candidates: Sequence[np.ndarray]
    counterexamples: Sequence[np.ndarray] = field(default_factory=tuple)
    k: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"k must lie in [0, 1], got {self.k}")
        if len(self.safe_candidates) == 0:
            raise ValueError("at least one safe candidate is required")


def _as_matrix(vectors: Sequence[np.ndarray], dim: int, what: str) -> np.ndarray:
    rows = [np.asarray(v, dtype=float).ravel() for v in vectors]
    for v in rows:
        if v.shape != (dim,):
            raise DimensionMismatch(f"{what}: vector of length {v.shape[0]}, expected {dim}")
    return np.array(rows, dtype=float).reshape(len(rows), dim)


def inner_min(omega: np.ndarray, directions: np.ndarray) -> float:
    return float(np.min(directions @ np.asarray(omega, dtype=float)))


def _affine_minimizer(points: np.ndarray) -> np.ndarray:
    """Barycentric weights of the min-norm point of the affine hull of ``points``."""
    m = len(points)
    gram = points @ points.T
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = gram
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:m]


def min_norm_point(points: np.ndarray, tol: float = 1e-12, max_iters: int = MAX_WOLFE_ITERS) -> np.ndarray:
    """Point of ``conv(points)`` closest to the origin (Wolfe, 1976)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("need a non-empty (m, d) array of points")
    scale = max(1.0, float(np.max(np.sum(points**2, axis=1))))
    eps = tol * scale
    first = int(np.argmin(np.sum(points**2, axis=1)))
    active = [first]
    lam = np.array([1.0])
    x = points[first].copy()
    for _ in range(max_iters):
        j = int(np.argmin(points @ x))
        if x @ x - points[j] @ x <= eps or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(points[active])
            if np.all(mu > eps):
                lam = mu
                break
            neg = mu <= eps
            ratios = lam[neg] / np.maximum(lam[neg] - mu[neg], 1e-300)
            theta = float(min(1.0, ratios.min()))
            lam = lam + theta * (mu - lam)
            keep = lam > eps
            keep[np.argmax(lam)] = True
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ points[active]
    return x


def solve_directions(directions: np.ndarray, tol: float = 1e-12,
                     max_iters: int = MAX_WOLFE_ITERS) -> MarginSolution:
    """``max_{|w|<=1} min_j w . d_j`` for the rows ``d_j`` of ``directions``."""
    directions = np.asarray(directions, dtype=float)
    x = min_norm_point(directions, tol, max_iters)
    norm = float(np.linalg.norm(x))
    scale = max(1.0, float(np.abs(directions).max()))
    if norm <= 1e-12 * scale:
        omega = np.zeros(directions.shape[1])
        return MarginSolution(omega, 0.0)
    omega = x / norm
    # report the objective actually achieved at omega
    return MarginSolution(omega, inner_min(omega, directions))


def max_margin_directions(mu_expert, candidates) -> np.ndarray:
    mu_expert = np.asarray(mu_expert, dtype=float).ravel()
    if len(candidates) == 0:
        raise ValueError("at least one candidate is required")
    cand = _as_matrix(candidates, mu_expert.shape[0], "candidate")
    return mu_expert[None, :] - cand


def solve_max_margin(mu_expert, candidates, tol: float = 1e-12,
                     max_iters: int = MAX_WOLFE_ITERS) -> MarginSolution:
    """Weights separating the expert's features from every candidate's."""
    return solve_directions(max_margin_directions(mu_expert, candidates), tol, max_iters)


def weighted_directions(problem: MarginProblem) -> np.ndarray:
    """Difference vectors ``k(mu_E - mu_pi) + (1-k)(mu_pi' - mu_cex)`` over all triples.

    With no counterexamples the separation term is dropped.
    """
    mu_e = np.asarray(problem.mu_expert, dtype=float).ravel()
    dim = mu_e.shape[0]
    safe = _as_matrix(problem.safe_candidates, dim, "safe candidate")
    expert_term = mu_e[None, :] - safe
    if len(problem.counterexamples) == 0:
        return expert_term
    cex = _as_matrix(problem.counterexamples, dim, "counterexample")
    k = problem.k
    separation = (safe[:, None, :] - cex[None, :, :]).reshape(-1, dim)
    # (pi, pi', cex) triples; pi and pi' range independently
    combined = k * expert_term[:, None, :] + (1.0 - k) * separation[None, :, :]
    return np.unique(combined.reshape(-1, dim), axis=0)


def solve_weighted_margin(problem: MarginProblem, tol: float = 1e-12,
                          max_iters: int = MAX_WOLFE_ITERS) -> MarginSolution:
    return solve_directions(weighted_directions(problem), tol, max_iters)
