"""Discretised mountain car built from sampled transitions.

States are cells of an ``n_pos x n_vel`` grid over (position, velocity);
state index is ``i_pos * n_vel + i_vel``.  Actions are push left, coast,
push right.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import SpecError
from ..mdp import FeatureMap, Mdp

ACTIONS = ("left", "coast", "right")
FORCE = 0.001
GRAVITY = 0.0025


@dataclass(frozen=True)
class MountainCarSpec:
    n_pos: int = 40
    n_vel: int = 40
    pos_range: tuple[float, float] = (-1.2, 0.6)
    vel_range: tuple[float, float] = (-0.07, 0.07)
    goal_position: float = 0.5
    # unsafe: (p <= left_pos and v <= -speed_limit) or (p >= right_pos and v >= speed_limit)
    left_pos: float = -1.1
    right_pos: float = 0.5
    speed_limit: float = 0.04
    horizon: int = 66
    start: tuple[float, float] = (-0.5, 0.0)
    gamma: float = 0.99
    rbf_grid: tuple[int, int] = (6, 3)
    rbf_bandwidth: float = 0.2  # in normalised [0, 1] coordinates
    frame_skip: int = 2  # dynamics updates per decision step

    def __post_init__(self):
        if self.n_pos < 2 or self.n_vel < 2:
            raise SpecError("need at least 2 cells per axis")
        (p0, p1), (v0, v1) = self.pos_range, self.vel_range
        if not (p0 < p1 and v0 < v1):
            raise SpecError("ranges must be increasing")
        for x in (self.goal_position, self.left_pos, self.right_pos, self.start[0]):
            if not p0 <= x <= p1:
                raise SpecError(f"position threshold {x} outside {self.pos_range}")
        for x in (self.speed_limit, -self.speed_limit, self.start[1]):
            if not v0 <= x <= v1:
                raise SpecError(f"velocity threshold {x} outside {self.vel_range}")
        if self.horizon < 1 or self.rbf_bandwidth <= 0 or self.frame_skip < 1:
            raise SpecError("horizon, frame skip and rbf bandwidth must be positive")

    @property
    def n_states(self) -> int:
        return self.n_pos * self.n_vel

    @property
    def n_features(self) -> int:
        return 2 + self.rbf_grid[0] * self.rbf_grid[1]

    def cell_width(self) -> tuple[float, float]:
        (p0, p1), (v0, v1) = self.pos_range, self.vel_range
        return (p1 - p0) / self.n_pos, (v1 - v0) / self.n_vel

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-state cell-centre position and velocity."""
        wp, wv = self.cell_width()
        ip, iv = np.divmod(np.arange(self.n_states), self.n_vel)
        return self.pos_range[0] + (ip + 0.5) * wp, self.vel_range[0] + (iv + 0.5) * wv

    def cell_of(self, position, velocity) -> np.ndarray:
        wp, wv = self.cell_width()
        ip = np.clip(((np.asarray(position) - self.pos_range[0]) / wp).astype(np.int64), 0, self.n_pos - 1)
        iv = np.clip(((np.asarray(velocity) - self.vel_range[0]) / wv).astype(np.int64), 0, self.n_vel - 1)
        return ip * self.n_vel + iv

    def unsafe_mask(self) -> np.ndarray:
        p, v = self.centers()
        left = (p <= self.left_pos) & (v <= -self.speed_limit)
        right = (p >= self.right_pos) & (v >= self.speed_limit)
        return left | right

    def goal_mask(self) -> np.ndarray:
        return self.centers()[0] >= self.goal_position


def step(spec: MountainCarSpec, position, velocity, action):
    """One update of the classic dynamics, vectorised; the left wall stops the car."""
    v = velocity + FORCE * (np.asarray(action) - 1) - GRAVITY * np.cos(3 * position)
    v = np.clip(v, *spec.vel_range)
    p = np.clip(position + v, *spec.pos_range)
    v = np.where((p <= spec.pos_range[0]) & (v < 0), 0.0, v)
    return p, v


def decision_step(spec: MountainCarSpec, position, velocity, action):
    """Hold ``action`` for ``frame_skip`` updates; stops early inside the goal."""
    p, v = np.asarray(position, dtype=float), np.asarray(velocity, dtype=float)
    for _ in range(spec.frame_skip):
        done = p >= spec.goal_position
        p2, v2 = step(spec, p, v, action)
        p, v = np.where(done, p, p2), np.where(done, v, v2)
    return p, v


def mountain_car_features(spec: MountainCarSpec) -> FeatureMap:
    """Two exponentials (progress to the right, low speed) plus a grid of RBFs."""
    p, v = spec.centers()
    x = (p - spec.pos_range[0]) / (spec.pos_range[1] - spec.pos_range[0])
    y = (v - spec.vel_range[0]) / (spec.vel_range[1] - spec.vel_range[0])
    cols = [np.exp(-3.0 * (1.0 - x)), np.exp(-3.0 * np.abs(2.0 * y - 1.0))]
    nx, ny = spec.rbf_grid
    for cx in np.linspace(0.0, 1.0, nx):
        for cy in np.linspace(0.0, 1.0, ny + 2)[1:-1]:
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            cols.append(np.exp(-d2 / (2.0 * spec.rbf_bandwidth**2)))
    return FeatureMap(np.column_stack(cols))


def build_mountain_car(spec: MountainCarSpec = MountainCarSpec(), samples_per_cell: int = 100,
                       seed: int = 0, sampling: str = "uniform") -> tuple[Mdp, FeatureMap]:
    """Empirical transition model: sample points in each cell, push them through
    the dynamics, and count destination cells.  Goal cells are absorbing."""
    if samples_per_cell < 1:
        raise SpecError("samples_per_cell must be positive")
    if sampling not in ("uniform", "center"):
        raise SpecError(f"unknown sampling mode {sampling!r}")
    n, m = spec.n_states, samples_per_cell
    wp, wv = spec.cell_width()
    cp, cv = spec.centers()
    if sampling == "center":
        offsets = np.zeros((2, n, m))
    else:
        rng = np.random.default_rng(seed)
        offsets = rng.uniform(-0.5, 0.5, size=(2, n, m))
    p = cp[:, None] + offsets[0] * wp
    v = cv[:, None] + offsets[1] * wv
    goal = spec.goal_mask()
    rows = np.repeat(np.arange(n), m)
    mats = []
    for a in range(len(ACTIONS)):
        p2, v2 = decision_step(spec, p, v, a)
        dest = spec.cell_of(p2, v2).ravel()
        dest = np.where(goal[rows], rows, dest)
        counts = sp.csr_matrix((np.ones(n * m), (rows, dest)), shape=(n, n))
        counts.sum_duplicates()
        counts.data /= m
        mats.append(counts)
    labels = {"unsafe": np.flatnonzero(spec.unsafe_mask()), "goal": np.flatnonzero(goal)}
    start = int(spec.cell_of(spec.start[0], spec.start[1]))
    mdp = Mdp(n, len(ACTIONS), tuple(mats), spec.gamma, start, labels)
    return mdp, mountain_car_features(spec)


def goal_reward(spec: MountainCarSpec) -> np.ndarray:
    """Ground truth for the expert: +1 on goal cells, 0 elsewhere."""
    return spec.goal_mask().astype(float)
