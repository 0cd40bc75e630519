"""PCTL formulas over labelled DTMCs: AST, parser, printer and model checking.

Grammar accepted by :func:`parse_pctl`::

    state  := conj
    conj   := unary ('&' unary)*
    unary  := '!' unary | 'true' | '"label"' | '(' state ')' | prob
    prob   := 'P' CMP NUMBER '[' path ']'
    path   := 'X' unary | state 'U' ('<=' INT)? state
    CMP    := '<=' | '>=' | '<' | '>'

Only a top-level probability operator over an until formula can be checked;
the AST represents the whole language.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PctlSyntaxError, UnknownLabel, UnsupportedFormula
from .mdp import Dtmc

COMPARISONS = ("<=", ">=", "<", ">")


@dataclass(frozen=True)
class TrueFormula:
    pass


@dataclass(frozen=True)
class Atom:
    label: str


@dataclass(frozen=True)
class Not:
    operand: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Next:
    operand: "StateFormula"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"
    bound: int | None = None

    def __post_init__(self):
        if self.bound is not None and self.bound < 1:
            raise ValueError(f"step bound must be >= 1, got {self.bound}")


@dataclass(frozen=True)
class Prob:
    comparison: str
    threshold: float
    path: "PathFormula"

    def __post_init__(self):
        if self.comparison not in COMPARISONS:
            raise ValueError(f"unknown comparison {self.comparison!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")

    def holds(self, probability: float) -> bool:
        p, c = self.threshold, self.comparison
        if c == "<=":
            return probability <= p
        if c == "<":
            return probability < p
        if c == ">=":
            return probability >= p
        return probability > p


StateFormula = Union[TrueFormula, Atom, Not, And, Prob]
PathFormula = Union[Next, Until]
PctlFormula = Union[StateFormula, PathFormula]


def safety(threshold: float, horizon: int | None, label: str = "unsafe") -> Prob:
    """``P<=threshold [ true U<=horizon "label" ]``."""
    return Prob("<=", float(threshold), Until(TrueFormula(), Atom(label), horizon))


# ---------------------------------------------------------------------------
# printing


def _fmt_number(x: float) -> str:
    return repr(float(x))


def format_pctl(formula: PctlFormula) -> str:
    """Canonical text form; ``parse_pctl(format_pctl(f)) == f``."""
    if isinstance(formula, TrueFormula):
        return "true"
    if isinstance(formula, Atom):
        return f'"{formula.label}"'
    if isinstance(formula, Not):
        inner = format_pctl(formula.operand)
        if isinstance(formula.operand, And):
            inner = f"({inner})"
        return f"!{inner}"
    if isinstance(formula, And):
        right = format_pctl(formula.right)
        if isinstance(formula.right, And):
            right = f"({right})"
        return f"{format_pctl(formula.left)} & {right}"
    if isinstance(formula, Prob):
        return f"P{formula.comparison}{_fmt_number(formula.threshold)} [ {format_pctl(formula.path)} ]"
    if isinstance(formula, Next):
        inner = format_pctl(formula.operand)
        if isinstance(formula.operand, And):
            inner = f"({inner})"
        return f"X {inner}"
    if isinstance(formula, Until):
        op = "U" if formula.bound is None else f"U<={formula.bound}"
        return f"{format_pctl(formula.left)} {op} {format_pctl(formula.right)}"
    raise TypeError(f"not a PCTL formula: {formula!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<number>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)
      | (?P<label>"[^"]*")
      | (?P<cmp><=|>=|<|>|=\?|=|!=)
      | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<punct>[!&|\[\]()])
    )""",
    re.VERBOSE,
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise PctlSyntaxError(f"unexpected character {text[start]!r}", start)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value:
            raise PctlSyntaxError(f"expected {value!r}, found {text or 'end of input'!r}", pos)

    def state(self):
        left = self.unary()
        while self.peek()[1] == "&":
            self.take()
            left = And(left, self.unary())
        kind, text, pos = self.peek()
        if text == "|":
            raise PctlSyntaxError("unknown operator '|'", pos)
        return left

    def unary(self):
        kind, text, pos = self.take()
        if text == "!":
            return Not(self.unary())
        if text == "(":
            inner = self.state()
            self.expect(")")
            return inner
        if kind == "label":
            return Atom(text[1:-1])
        if kind == "word" and text == "true":
            return TrueFormula()
        if kind == "word" and text == "P":
            return self.prob(pos)
        raise PctlSyntaxError(f"unexpected {text or 'end of input'!r}", pos)

    def prob(self, start: int):
        kind, cmp, pos = self.take()
        if kind != "cmp":
            raise PctlSyntaxError("expected a comparison after 'P'", pos)
        if cmp not in COMPARISONS:
            raise PctlSyntaxError(f"unknown operator {cmp!r}", pos)
        kind, num, pos = self.take()
        if kind != "number":
            raise PctlSyntaxError("expected a probability threshold", pos)
        threshold = float(num)
        if not 0.0 <= threshold <= 1.0:
            raise PctlSyntaxError(f"threshold {num} outside [0, 1]", pos)
        self.expect("[")
        path = self.path()
        self.expect("]")
        return Prob(cmp, threshold, path)

    def path(self):
        kind, text, pos = self.peek()
        if kind == "word" and text == "X":
            self.take()
            return Next(self.unary())
        left = self.state()
        kind, text, pos = self.take()
        if not (kind == "word" and text == "U"):
            raise PctlSyntaxError(f"expected 'U', found {text or 'end of input'!r}", pos)
        bound = None
        if self.peek()[1] == "<=":
            self.take()
            kind, num, npos = self.take()
            if kind != "number" or not num.isdigit():
                raise PctlSyntaxError("step bound must be a positive integer", npos)
            bound = int(num)
            if bound < 1:
                raise PctlSyntaxError("step bound must be >= 1", npos)
        elif self.peek()[0] == "cmp":
            raise PctlSyntaxError(f"unknown operator {self.peek()[1]!r}", self.peek()[2])
        right = self.state()
        return Until(left, right, bound)


def parse_pctl(text: str) -> PctlFormula:
    parser = _Parser(text)
    formula = parser.state()
    kind, tok, pos = parser.peek()
    if kind != "eof":
        raise PctlSyntaxError(f"trailing input {tok!r}", pos)
    return formula


# ---------------------------------------------------------------------------
# checking


@dataclass(frozen=True)
class Verdict:
    satisfied: bool
    probability: float
    formula: Prob


def state_mask(dtmc, formula: StateFormula) -> np.ndarray:
    """Boolean vector of states satisfying a propositional state formula."""
    n = dtmc.n_states
    if isinstance(formula, TrueFormula):
        return np.ones(n, dtype=bool)
    if isinstance(formula, Atom):
        if formula.label not in dtmc.labels:
            raise UnknownLabel(formula.label)
        return dtmc.label_mask(formula.label)
    if isinstance(formula, Not):
        return ~state_mask(dtmc, formula.operand)
    if isinstance(formula, And):
        return state_mask(dtmc, formula.left) & state_mask(dtmc, formula.right)
    if isinstance(formula, Prob):
        raise UnsupportedFormula("nested probability operators are not supported")
    raise UnsupportedFormula(f"not a state formula: {formula!r}")


def check_bounded_until(dtmc: Dtmc, phi1: np.ndarray, phi2: np.ndarray, t: int) -> np.ndarray:
    """Probability, per state, of reaching ``phi2`` within ``t`` steps through ``phi1``."""
    phi1 = np.asarray(phi1, dtype=bool)
    phi2 = np.asarray(phi2, dtype=bool)
    if t < 0:
        raise ValueError("step bound must be non-negative")
    x = phi2.astype(float)
    live = phi1 & ~phi2
    for _ in range(t):
        nxt = dtmc.rows @ x
        x = np.where(phi2, 1.0, np.where(live, nxt, 0.0))
    return x


def _backward_reach(rows: sp.csr_matrix, targets: np.ndarray, through: np.ndarray) -> np.ndarray:
    """States that can reach ``targets`` moving only through ``through`` states."""
    pred = rows.T.tocsr()
    seen = targets.copy()
    queue = deque(np.flatnonzero(targets).tolist())
    while queue:
        s = queue.popleft()
        for u in pred.indices[pred.indptr[s]:pred.indptr[s + 1]]:
            if not seen[u] and through[u]:
                seen[u] = True
                queue.append(u)
    return seen


def prob0_states(dtmc: Dtmc, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    return ~_backward_reach(dtmc.rows, phi2, phi1 & ~phi2)


def prob1_states(dtmc: Dtmc, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    no = prob0_states(dtmc, phi1, phi2)
    return ~_backward_reach(dtmc.rows, no, phi1 & ~phi2)


def check_unbounded_until(dtmc: Dtmc, phi1, phi2) -> np.ndarray:
    """Reachability probabilities via prob-0/prob-1 precomputation and a sparse solve.

    Once both sets are removed, ``I - A`` on the remaining states is
    nonsingular, so the system is solved directly rather than iterated.
    """
    phi1 = np.asarray(phi1, dtype=bool)
    phi2 = np.asarray(phi2, dtype=bool)
    no = prob0_states(dtmc, phi1, phi2)
    yes = prob1_states(dtmc, phi1, phi2)
    x = yes.astype(float)
    maybe = ~(no | yes)
    if not maybe.any():
        return x
    idx = np.flatnonzero(maybe)
    a = dtmc.rows[idx][:, idx]
    b = np.asarray(dtmc.rows[idx][:, np.flatnonzero(yes)].sum(axis=1)).ravel()
    lhs = (sp.identity(len(idx), format="csc") - a.tocsc())
    x[idx] = np.clip(np.atleast_1d(spla.spsolve(lhs, b)), 0.0, 1.0)
    return x


def until_probabilities(dtmc: Dtmc, path: Until) -> np.ndarray:
    phi1 = state_mask(dtmc, path.left)
    phi2 = state_mask(dtmc, path.right)
    if path.bound is None:
        return check_unbounded_until(dtmc, phi1, phi2)
    return check_bounded_until(dtmc, phi1, phi2, path.bound)


def check_formula_shape(formula) -> Prob:
    if not isinstance(formula, Prob):
        raise UnsupportedFormula("top-level formula must be a probability operator")
    if not isinstance(formula.path, Until):
        raise UnsupportedFormula("only until path formulas can be checked")
    for side in (formula.path.left, formula.path.right):
        _reject_nested(side)
    return formula


def _reject_nested(f) -> None:
    if isinstance(f, Prob):
        raise UnsupportedFormula("nested probability operators are not supported")
    if isinstance(f, Not):
        _reject_nested(f.operand)
    elif isinstance(f, And):
        _reject_nested(f.left)
        _reject_nested(f.right)


def verify(dtmc: Dtmc, formula) -> Verdict:
    """Check ``P~p [ phi1 U(<=t) phi2 ]`` at the initial state."""
    if isinstance(formula, str):
        formula = parse_pctl(formula)
    formula = check_formula_shape(formula)
    probs = until_probabilities(dtmc, formula.path)
    p = float(probs[dtmc.initial_state])
    # clamp floating noise; probabilities are exact up to rounding
    p = min(1.0, max(0.0, p))
    return Verdict(formula.holds(p), p, formula)
