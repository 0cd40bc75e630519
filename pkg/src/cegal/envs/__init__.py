"""Bundled experiment environments."""
from .experts import generate_demonstrations, make_expert
from .gridworld import GridWorldSpec, build_gridworld, navigation_layout, random_gridworld, scaled_gridworld
from .mountain_car import MountainCarSpec, build_mountain_car, goal_reward

__all__ = [
    "GridWorldSpec", "build_gridworld", "navigation_layout", "random_gridworld", "scaled_gridworld",
    "MountainCarSpec", "build_mountain_car", "goal_reward",
    "make_expert", "generate_demonstrations",
]
