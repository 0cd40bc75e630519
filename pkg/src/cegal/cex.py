"""Counterexamples for upper-bounded until properties.

A counterexample is a set of minimally satisfying paths whose probability
mass exceeds the threshold.  Paths are enumerated most-probable first over a
graph with edge weights ``-ln T(s, s')``, so the shortest path is the most
probable one.  Enumeration is best-first over path prefixes with an exact
cost-to-go heuristic (the shortest remaining distance to the target set,
respecting the hop budget); with an exact heuristic every popped prefix lies
on one of the next-best complete paths, which keeps the frontier small.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BudgetExhausted, EmptyCounterexample, FormulaSatisfied, UnsupportedFormula
from .mdp import Dtmc, FeatureMap, Trajectory, discounted_feature_sum
from .pctl import Prob, check_formula_shape, parse_pctl, state_mask, verify

DEFAULT_MAX_PATHS = 10_000
SINK = "sink"


@dataclass(frozen=True, eq=False)
class PathGraph:
    """Weighted digraph whose source-to-sink paths are the minimally satisfying paths.

    ``edges`` keeps only transitions out of ``phi1 & ~phi2`` states into
    states that can still reach ``phi2``; weights are ``-ln p``.  For a bounded
    until the graph is conceptually expanded into ``(state, step)`` layers,
    ``0 <= step <= bound``; every ``phi2`` node links to a virtual sink.
    """

    n_states: int
    source: int
    edges: sp.csr_matrix  # probabilities of retained transitions
    target: np.ndarray
    bound: int | None
    cost_to_go: np.ndarray = field(repr=False)  # (bound+1, n) or (1, n)

    def weight(self, s: int, s2: int) -> float:
        return -math.log(self.edges[s, s2])

    def successors(self, s: int) -> Iterator[tuple[int, float, float]]:
        lo, hi = self.edges.indptr[s], self.edges.indptr[s + 1]
        for j, p in zip(self.edges.indices[lo:hi], self.edges.data[lo:hi]):
            yield int(j), -math.log(p), float(p)

    def remaining(self, s: int, steps_taken: int) -> float:
        """Weight of the best completion from ``s`` after ``steps_taken`` steps."""
        if self.bound is None:
            return float(self.cost_to_go[0, s])
        left = self.bound - steps_taken
        if left < 0:
            return math.inf
        return float(self.cost_to_go[left, s])

    def shortest_weight(self) -> float:
        return self.remaining(self.source, 0)

    def expanded_edges(self) -> Iterator[tuple[object, object, float]]:
        """Explicit edges ``(u, v, weight)``; nodes are ``(state, step)`` or ``state``."""
        coo = self.edges.tocoo()
        rows, cols, probs = coo.row, coo.col, coo.data
        if self.bound is None:
            for s, s2, p in zip(rows, cols, probs):
                yield int(s), int(s2), -math.log(p)
            for s in np.flatnonzero(self.target):
                yield int(s), SINK, 0.0
            return
        for step in range(self.bound):
            for s, s2, p in zip(rows, cols, probs):
                yield (int(s), step), (int(s2), step + 1), -math.log(p)
        for step in range(self.bound + 1):
            for s in np.flatnonzero(self.target):
                yield (int(s), step), SINK, 0.0

    def source_node(self):
        return self.source if self.bound is None else (self.source, 0)

    def to_networkx(self):
        import networkx as nx

        g = nx.DiGraph()
        g.add_node(self.source_node())
        g.add_node(SINK)
        for u, v, w in self.expanded_edges():
            g.add_edge(u, v, weight=w)
        return g


def _dijkstra_to_targets(edges: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    rev = edges.T.tocsr()
    dist = np.full(edges.shape[0], math.inf)
    heap = [(0.0, int(s)) for s in np.flatnonzero(target)]
    for _, s in heap:
        dist[s] = 0.0
    heapq.heapify(heap)
    while heap:
        d, s = heapq.heappop(heap)
        if d > dist[s]:
            continue
        lo, hi = rev.indptr[s], rev.indptr[s + 1]
        for u, p in zip(rev.indices[lo:hi], rev.data[lo:hi]):
            nd = d - math.log(p)
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, int(u)))
    return dist


def _layered_cost_to_go(edges: sp.csr_matrix, target: np.ndarray, bound: int) -> np.ndarray:
    coo = edges.tocoo()
    rows, cols, w = coo.row, coo.col, -np.log(coo.data)
    out = np.full((bound + 1, edges.shape[0]), math.inf)
    out[0, target] = 0.0
    for r in range(1, bound + 1):
        cur = np.full(edges.shape[0], math.inf)
        np.minimum.at(cur, rows, w + out[r - 1, cols])
        cur[target] = 0.0
        out[r] = cur
    return out


def build_path_graph(dtmc: Dtmc, phi1, phi2, t: int | None) -> PathGraph:
    phi1 = np.asarray(phi1, dtype=bool)
    phi2 = np.asarray(phi2, dtype=bool)
    live = phi1 & ~phi2
    rows = dtmc.rows.tocoo()
    keep = live[rows.row] & (phi1[rows.col] | phi2[rows.col])
    edges = sp.csr_matrix(
        (rows.data[keep], (rows.row[keep], rows.col[keep])), shape=dtmc.rows.shape
    )
    edges.sort_indices()
    if t is None:
        ctg = _dijkstra_to_targets(edges, phi2)[None, :]
    else:
        ctg = _layered_cost_to_go(edges, phi2, t)
    # drop transitions into states that can never complete
    reachable = np.isfinite(ctg.min(axis=0))
    ec = edges.tocoo()
    ok = reachable[ec.col]
    edges = sp.csr_matrix((ec.data[ok], (ec.row[ok], ec.col[ok])), shape=edges.shape)
    edges.sort_indices()
    return PathGraph(dtmc.n_states, dtmc.initial_state, edges, phi2, t, ctg)


def iter_paths(graph: PathGraph) -> Iterator[Trajectory]:
    """All minimally satisfying paths, most probable first.

    Ties in weight are broken by the lexicographic order of state sequences.
    """
    h0 = graph.shortest_weight()
    if not math.isfinite(h0):
        return
    heap: list[tuple[float, tuple[int, ...], float, float]] = [
        (h0, (graph.source,), 0.0, 1.0)
    ]
    target = graph.target
    succ_cache: dict[int, list[tuple[int, float, float]]] = {}
    while heap:
        f, seq, g, prob = heapq.heappop(heap)
        s = seq[-1]
        if target[s]:
            yield Trajectory(seq, prob)
            continue
        steps = len(seq)
        succ = succ_cache.get(s)
        if succ is None:
            succ = succ_cache[s] = list(graph.successors(s))
        for s2, w, p in succ:
            h = graph.remaining(s2, steps)
            if h == math.inf:
                continue
            ng = g + w
            heapq.heappush(heap, (ng + h, seq + (s2,), ng, prob * p))


@dataclass(frozen=True)
class Counterexample:
    paths: tuple[Trajectory, ...]
    total_probability: float
    formula: Prob
    threshold: float
    sub_threshold: bool = False  # enumerated against a smaller threshold than the formula's
    exhausted: bool = False  # path budget hit before the mass exceeded the threshold

    def __len__(self) -> int:
        return len(self.paths)


def _exceeds(total: float, threshold: float, strict: bool) -> bool:
    return total > threshold if strict else total >= threshold


def enumerate_counterexample(dtmc: Dtmc, formula, max_paths: int = DEFAULT_MAX_PATHS,
                             threshold: float | None = None) -> Counterexample:
    """Most probable minimally satisfying paths until their mass exceeds the bound.

    ``threshold`` overrides the formula's bound for enumeration only (to keep
    path counts manageable for large thresholds); the result is then marked
    ``sub_threshold``.  Raises :class:`FormulaSatisfied` when the formula holds
    and :class:`BudgetExhausted` (carrying the partial set) when ``max_paths``
    paths do not suffice.
    """
    if isinstance(formula, str):
        formula = parse_pctl(formula)
    formula = check_formula_shape(formula)
    if formula.comparison not in ("<=", "<"):
        raise UnsupportedFormula("counterexamples are only defined for upper-bounded properties")
    if max_paths < 1:
        raise ValueError("max_paths must be positive")
    verdict = verify(dtmc, formula)
    if verdict.satisfied:
        raise FormulaSatisfied(verdict.probability, formula.threshold)
    strict = formula.comparison == "<="
    bound = formula.threshold
    sub = False
    if threshold is not None and threshold < bound:
        bound, sub = float(threshold), True

    path = formula.path
    graph = build_path_graph(dtmc, state_mask(dtmc, path.left), state_mask(dtmc, path.right), path.bound)
    found: list[Trajectory] = []
    total = 0.0
    done = False
    for tr in iter_paths(graph):
        found.append(tr)
        total += tr.probability
        if _exceeds(total, bound, strict):
            done = True
            break
        if len(found) >= max_paths:
            break
    # floating-point near-ties can pop a hair out of order; restore the contract
    found.sort(key=lambda tr: (-tr.probability, tr.states))
    cex = Counterexample(tuple(found), total, formula, bound, sub, not done)
    if not done:
        raise BudgetExhausted(cex)
    return cex


def counterexample_features(cex: Counterexample | Sequence[Trajectory], features: FeatureMap,
                            gamma: float) -> np.ndarray:
    """Probability-weighted mean of the paths' discounted feature sums."""
    paths = cex.paths if isinstance(cex, Counterexample) else tuple(cex)
    if not paths:
        raise EmptyCounterexample("counterexample has no paths")
    probs = np.array([tr.probability for tr in paths], dtype=float)
    sums = np.stack([discounted_feature_sum(tr.states, features, gamma) for tr in paths])
    return (probs / probs.sum()) @ sums
