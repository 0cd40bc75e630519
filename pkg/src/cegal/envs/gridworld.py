"""Noisy grid-world navigation with unsafe cells and radial-basis features."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import SpecError
from ..mdp import FeatureMap, Mdp

ACTIONS = ("stay", "up", "down", "left", "right")
MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))  # (d_row, d_col)

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridWorldSpec:
    """Grid layout; cells are ``(row, col)`` with ``(0, 0)`` the upper-left corner."""

    width: int
    height: int
    start: Cell = (0, 0)
    goals: tuple[Cell, ...] = ()
    unsafe: tuple[Cell, ...] = ()
    noise: float = 0.2
    rbf_centers: tuple[Cell, ...] = ()
    rbf_bandwidth: float | None = None  # defaults to width / 4
    reward: np.ndarray | None = field(default=None, compare=False)  # (height, width) ground truth
    gamma: float = 0.99

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SpecError("grid dimensions must be positive")
        if not 0.0 <= self.noise < 1.0:
            raise SpecError(f"noise must lie in [0, 1), got {self.noise}")
        for what, cells in (("start", (self.start,)), ("goal", self.goals),
                            ("unsafe", self.unsafe), ("rbf centre", self.rbf_centers)):
            for r, c in cells:
                if not (0 <= r < self.height and 0 <= c < self.width):
                    raise SpecError(f"{what} cell {(r, c)} outside the {self.height}x{self.width} grid")
        if self.rbf_bandwidth is not None and self.rbf_bandwidth <= 0:
            raise SpecError("rbf bandwidth must be positive")
        if self.reward is not None and np.shape(self.reward) != (self.height, self.width):
            raise SpecError(f"reward map must have shape {(self.height, self.width)}")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def bandwidth(self) -> float:
        return self.rbf_bandwidth if self.rbf_bandwidth is not None else self.width / 4.0

    def index(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, state: int) -> Cell:
        return divmod(int(state), self.width)

    def reward_vector(self) -> np.ndarray:
        if self.reward is None:
            raise SpecError("this grid has no ground-truth reward")
        return np.asarray(self.reward, dtype=float).ravel()


def _move(spec: GridWorldSpec, r: int, c: int, action: int) -> int:
    dr, dc = MOVES[action]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < spec.height and 0 <= nc < spec.width):
        nr, nc = r, c
    return nr * spec.width + nc


def grid_features(spec: GridWorldSpec) -> FeatureMap:
    """``exp(-|s - c|^2 / (2 bw^2))`` for each centre ``c``."""
    rows, cols = np.divmod(np.arange(spec.n_states), spec.width)
    centers = np.asarray(spec.rbf_centers, dtype=float).reshape(-1, 2)
    d2 = (rows[:, None] - centers[None, :, 0]) ** 2 + (cols[:, None] - centers[None, :, 1]) ** 2
    return FeatureMap(np.exp(-d2 / (2.0 * spec.bandwidth**2)))


def build_gridworld(spec: GridWorldSpec) -> tuple[Mdp, FeatureMap]:
    n, na = spec.n_states, len(ACTIONS)
    goals = {spec.index(g) for g in spec.goals}
    slip = spec.noise / na
    rows, cols, vals = [[] for _ in range(na)], [[] for _ in range(na)], [[] for _ in range(na)]
    for s in range(n):
        r, c = spec.cell(s)
        for a in range(na):
            if s in goals:
                dist = {s: 1.0}
            else:
                dist: dict[int, float] = {}
                for executed in range(na):
                    p = (1.0 - spec.noise) * (executed == a) + slip
                    nxt = _move(spec, r, c, executed)
                    dist[nxt] = dist.get(nxt, 0.0) + p
            for nxt, p in sorted(dist.items()):
                rows[a].append(s)
                cols[a].append(nxt)
                vals[a].append(p)
    mats = tuple(sp.csr_matrix((vals[a], (rows[a], cols[a])), shape=(n, n)) for a in range(na))
    labels = {
        "unsafe": {spec.index(u) for u in spec.unsafe},
        "goal": goals,
    }
    mdp = Mdp(n, na, mats, spec.gamma, spec.index(spec.start), labels)
    return mdp, grid_features(spec)


def navigation_layout(noise: float = 0.2, gamma: float = 0.99) -> GridWorldSpec:
    """8x8 layout resembling the navigation example: start upper-left, goals lower-right.

    Two bright goal cells, two dark cells, and two unsafe bands that flank the
    direct route.  The reward map is hand-made; only the qualitative picture
    (an expert that brushes past the unsafe cells) is intended.
    """
    h = w = 8
    goals = ((7, 7), (6, 7))
    dark = ((1, 6), (6, 1))
    unsafe = ((2, 2), (2, 3), (3, 2), (4, 5), (5, 5), (5, 4))
    rr, cc = np.mgrid[0:h, 0:w]
    reward = -0.5 + 0.04 * (rr + cc)
    for g in goals:
        reward[g] = 1.0
    for d in dark:
        reward[d] = -1.0
    for u in unsafe:
        reward[u] = -0.8
    return GridWorldSpec(
        width=w, height=h, start=(0, 0), goals=goals, unsafe=unsafe, noise=noise,
        rbf_centers=goals + dark, reward=reward, gamma=gamma,
    )


def random_gridworld(seed: int, width: int = 8, height: int = 8, noise: float = 0.2,
                     n_unsafe: int = 6, gamma: float = 0.99) -> GridWorldSpec:
    """Seeded layout: start upper-left, two goals in the lower-right quadrant,
    unsafe cells kept at least two moves away from the start."""
    rng = np.random.default_rng(seed)
    start = (0, 0)
    lr = [(r, c) for r in range(height // 2, height) for c in range(width // 2, width)]
    gi = rng.choice(len(lr), size=min(2, len(lr)), replace=False)
    goals = tuple(lr[i] for i in sorted(gi))
    free = [(r, c) for r in range(height) for c in range(width)
            if (r, c) not in goals and r + c >= 3]
    ui = rng.choice(len(free), size=min(n_unsafe, len(free)), replace=False)
    unsafe = tuple(free[i] for i in sorted(ui))
    others = [cell for cell in free if cell not in unsafe]
    di = rng.choice(len(others), size=2, replace=False)
    dark = tuple(others[i] for i in sorted(di))
    rr, cc = np.mgrid[0:height, 0:width]
    reward = -0.5 + 0.5 * (rr + cc) / max(1, height + width - 2)
    reward = reward + 0.05 * rng.standard_normal((height, width))
    for u in unsafe:
        reward[u] = -0.8
    for d in dark:
        reward[d] = -1.0
    for g in goals:
        reward[g] = 1.0
    return GridWorldSpec(width=width, height=height, start=start, goals=goals, unsafe=unsafe,
                         noise=noise, rbf_centers=goals + dark, reward=reward, gamma=gamma)


def scaled_gridworld(size: int, noise: float = 0.2, gamma: float = 0.99) -> GridWorldSpec:
    """Square grid of any size with the navigation layout stretched to fit."""
    base = navigation_layout(noise, gamma)
    f = size / base.width

    def scale(cell):
        return (min(size - 1, int(cell[0] * f + f / 2)), min(size - 1, int(cell[1] * f + f / 2)))

    goals = tuple(dict.fromkeys(scale(g) for g in base.goals))
    unsafe = tuple(dict.fromkeys(
        (min(size - 1, int(r * f) + i), min(size - 1, int(c * f) + j))
        for r, c in base.unsafe for i in range(max(1, int(f))) for j in range(max(1, int(f)))
    ))
    dark = tuple(scale(d) for d in ((1, 6), (6, 1)))
    rr, cc = np.mgrid[0:size, 0:size]
    reward = -0.5 + 0.5 * (rr + cc) / max(1, 2 * size - 2)
    for u in unsafe:
        reward[u] = -0.8
    for d in dark:
        reward[d] = -1.0
    for g in goals:
        reward[g] = 1.0
    return GridWorldSpec(width=size, height=size, start=(0, 0), goals=goals, unsafe=unsafe,
                         noise=noise, rbf_centers=goals + dark, reward=reward, gamma=gamma)
