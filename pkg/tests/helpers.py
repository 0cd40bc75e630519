"""Random models and brute-force oracles shared by the tests."""
import itertools

import numpy as np

from cegal.mdp import Dtmc, Mdp


def random_stochastic(rng, n_rows, n_cols, density=0.6):
    m = rng.random((n_rows, n_cols)) * (rng.random((n_rows, n_cols)) < density)
    empty = m.sum(axis=1) == 0
    m[empty, rng.integers(0, n_cols, empty.sum())] = 1.0
    return m / m.sum(axis=1, keepdims=True)


def random_dtmc(rng, n, labels=("a", "b"), density=0.6):
    rows = random_stochastic(rng, n, n, density)
    lab = {name: set(np.flatnonzero(rng.random(n) < 0.4).tolist()) for name in labels}
    return Dtmc.from_dense(rows, int(rng.integers(0, n)), lab)


def random_mdp(rng, n, na, gamma=0.9, labels=("unsafe",), density=0.6):
    kernel = np.stack([random_stochastic(rng, n, n, density) for _ in range(na)], axis=1)
    lab = {name: set(np.flatnonzero(rng.random(n) < 0.35).tolist()) for name in labels}
    return Mdp.from_dense(kernel, gamma, int(rng.integers(0, n)), lab)


def dense_rows(dtmc):
    return dtmc.rows.toarray()


def satisfying_paths(dtmc, phi1, phi2, t):
    """Every minimally satisfying path from the initial state, by depth-first search."""
    p = dense_rows(dtmc)
    out = []

    def walk(path, prob):
        s = path[-1]
        if phi2[s]:
            out.append((tuple(path), prob))
            return
        if not phi1[s] or len(path) - 1 >= t:
            return
        for s2 in np.flatnonzero(p[s]):
            walk(path + [int(s2)], prob * p[s, s2])

    walk([dtmc.initial_state], 1.0)
    return out


def all_policies(n, na):
    return itertools.product(range(na), repeat=n)


def bounded_reach_dense(rows, phi1, phi2, t, start):
    """Distribution push-forward on a chain where phi2 and non-phi1 states absorb."""
    n = len(rows)
    live = phi1 & ~phi2
    dist = np.zeros(n)
    dist[start] = 1.0
    hit = dist[phi2].sum()
    dist[~live] = 0.0
    for _ in range(t):
        dist = dist @ rows
        hit += dist[phi2].sum()
        dist[~live] = 0.0
    return hit


def unbounded_reach_dense(rows, phi1, phi2):
    """Per-state reach probabilities from a dense solve; prob-0 states found by graph search."""
    import networkx as nx

    n = len(rows)
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for s in range(n):
        if phi1[s] and not phi2[s]:
            for s2 in np.flatnonzero(rows[s]):
                g.add_edge(s, int(s2))
    can = set()
    for target in np.flatnonzero(phi2):
        can |= nx.ancestors(g, int(target)) | {int(target)}
    x = np.zeros(n)
    unknown = [s for s in range(n) if s in can and not phi2[s]]
    x[phi2] = 1.0
    if unknown:
        a = np.eye(len(unknown)) - rows[np.ix_(unknown, unknown)]
        b = rows[np.ix_(unknown, np.flatnonzero(phi2))].sum(axis=1)
        x[unknown] = np.linalg.solve(a, b)
    return x


def refined_circle_max(directions, n=100_000, rounds=6):
    """Grid search of max_{|w|<=1} min_j w.d_j over unit-circle angles, refined locally."""
    d = np.asarray(directions, dtype=float)

    def obj(theta):
        w = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return (w @ d.T).min(axis=-1)

    theta = np.linspace(0, 2 * np.pi, n, endpoint=False)
    vals = obj(theta)
    best = theta[np.argmax(vals)]
    width = 2 * np.pi / n
    for _ in range(rounds):
        local = best + np.linspace(-width, width, 2001)
        v = obj(local)
        best = local[np.argmax(v)]
        width /= 500
    top = float(obj(np.array([best]))[0])
    # the zero vector is feasible, so the optimum is never negative
    return max(top, 0.0), np.array([np.cos(best), np.sin(best)])


def refined_sphere_max(directions, n=40_000, rounds=30):
    """Same idea on the 2-sphere: Fibonacci grid, then shrinking local grids."""
    d = np.asarray(directions, dtype=float)
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    pts = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    vals = (pts @ d.T).min(axis=1)
    best = pts[np.argmax(vals)]
    width = 0.05
    g = np.linspace(-1, 1, 61)
    for _ in range(rounds):
        u = np.cross(best, [1.0, 0.0, 0.0])
        if np.linalg.norm(u) < 1e-6:
            u = np.cross(best, [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(best, u)
        cand = best + width * (g[:, None, None] * u + g[None, :, None] * v)
        cand = cand.reshape(-1, 3)
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        vals = (cand @ d.T).min(axis=1)
        best = cand[np.argmax(vals)]
        width /= 3
    return max(float((best @ d.T).min()), 0.0), best
