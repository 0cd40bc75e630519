"""Plain-text file formats.

MDP files::

    MDP <n_states> <n_actions> <gamma> <initial_state>
    <s> <a> <s'> <p>
    LABEL <name> <s1> <s2> ...
    FEAT <s> <f1> ... <fk>

Policy files hold ``<s> <a>`` lines, trajectory files one state sequence per
line, weight files one line of floats.  ``#`` starts a comment everywhere.
Floats are written with ``repr`` so every file re-parses to identical values.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .cex import Counterexample
from .errors import FormatError
from .mdp import FeatureMap, Mdp, Policy, Trajectory

PathLike = str | Path


def _content_lines(text: str) -> Iterator[tuple[int, list[str]]]:
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _fmt(x: float) -> str:
    return repr(float(x))


def _write(path: PathLike, text: str) -> None:
    Path(path).write_text(text)


# -- MDP ---------------------------------------------------------------------

def format_mdp(mdp: Mdp, features: FeatureMap | None = None) -> str:
    out = [f"MDP {mdp.n_states} {mdp.n_actions} {_fmt(mdp.gamma)} {mdp.initial_state}"]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            for s2, p in mdp.row(s, a).items():
                out.append(f"{s} {a} {s2} {_fmt(p)}")
    for name in sorted(mdp.labels):
        out.append(" ".join(["LABEL", name] + [str(s) for s in sorted(mdp.labels[name])]))
    if features is not None:
        for s in range(features.n_states):
            out.append(" ".join(["FEAT", str(s)] + [_fmt(x) for x in features.values[s]]))
    return "\n".join(out) + "\n"


def save_mdp(path: PathLike, mdp: Mdp, features: FeatureMap | None = None) -> None:
    _write(path, format_mdp(mdp, features))


def parse_mdp(text: str, source=None) -> tuple[Mdp, FeatureMap | None]:
    lines = _content_lines(text)
    try:
        no, head = next(lines)
    except StopIteration:
        raise FormatError("empty model file", source, 1) from None
    if head[0] != "MDP" or len(head) != 5:
        raise FormatError("expected 'MDP <n_states> <n_actions> <gamma> <initial_state>'", source, no)
    try:
        n, na, gamma, init = int(head[1]), int(head[2]), float(head[3]), int(head[4])
    except ValueError as exc:
        raise FormatError(str(exc), source, no) from None
    if n < 1 or na < 1:
        raise FormatError("state and action counts must be positive", source, no)
    rows = [[] for _ in range(na)]
    cols = [[] for _ in range(na)]
    vals = [[] for _ in range(na)]
    seen = set()
    labels: dict[str, set[int]] = {}
    feats: dict[int, list[float]] = {}
    for no, tok in lines:
        try:
            if tok[0] == "LABEL":
                if len(tok) < 2:
                    raise FormatError("LABEL needs a name", source, no)
                labels.setdefault(tok[1], set()).update(int(s) for s in tok[2:])
            elif tok[0] == "FEAT":
                s = int(tok[1])
                if s in feats:
                    raise FormatError(f"duplicate features for state {s}", source, no)
                feats[s] = [float(x) for x in tok[2:]]
            elif len(tok) == 4:
                s, a, s2, p = int(tok[0]), int(tok[1]), int(tok[2]), float(tok[3])
                if not (0 <= s < n and 0 <= s2 < n and 0 <= a < na):
                    raise FormatError(f"transition {s} {a} {s2} out of range", source, no)
                if (s, a, s2) in seen:
                    raise FormatError(f"duplicate transition {s} {a} {s2}", source, no)
                seen.add((s, a, s2))
                rows[a].append(s)
                cols[a].append(s2)
                vals[a].append(p)
            else:
                raise FormatError(f"unrecognised line {' '.join(tok)!r}", source, no)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed line: {exc}", source, no) from None
    mats = tuple(sp.csr_matrix((vals[a], (rows[a], cols[a])), shape=(n, n)) for a in range(na))
    mdp = Mdp(n, na, mats, gamma, init, labels)
    features = None
    if feats:
        if set(feats) != set(range(n)):
            raise FormatError("FEAT lines must cover every state exactly once", source)
        widths = {len(v) for v in feats.values()}
        if len(widths) != 1:
            raise FormatError("FEAT lines have differing lengths", source)
        features = FeatureMap(np.array([feats[s] for s in range(n)], dtype=float))
    return mdp, features


def load_mdp(path: PathLike) -> tuple[Mdp, FeatureMap | None]:
    return parse_mdp(Path(path).read_text(), path)


# -- policies, trajectories, weights -------------------------------------------

def format_policy(policy: Policy) -> str:
    return "".join(f"{s} {int(a)}\n" for s, a in enumerate(policy.action_of))


def save_policy(path: PathLike, policy: Policy) -> None:
    _write(path, format_policy(policy))


def parse_policy(text: str, source=None) -> Policy:
    actions: dict[int, int] = {}
    for no, tok in _content_lines(text):
        if len(tok) != 2:
            raise FormatError("expected '<state> <action>'", source, no)
        try:
            s, a = int(tok[0]), int(tok[1])
        except ValueError as exc:
            raise FormatError(str(exc), source, no) from None
        if s in actions:
            raise FormatError(f"state {s} listed twice", source, no)
        actions[s] = a
    if set(actions) != set(range(len(actions))):
        raise FormatError("policy must list states 0..n-1", source)
    return Policy(np.array([actions[s] for s in range(len(actions))], dtype=np.int64))


def load_policy(path: PathLike) -> Policy:
    return parse_policy(Path(path).read_text(), path)


def format_trajectories(trajectories: Iterable[Trajectory]) -> str:
    return "".join(" ".join(str(s) for s in tr.states) + "\n" for tr in trajectories)


def save_trajectories(path: PathLike, trajectories: Iterable[Trajectory]) -> None:
    _write(path, format_trajectories(trajectories))


def parse_trajectories(text: str, source=None) -> list[Trajectory]:
    out = []
    for no, tok in _content_lines(text):
        try:
            out.append(Trajectory(tuple(int(s) for s in tok)))
        except ValueError as exc:
            raise FormatError(str(exc), source, no) from None
    return out


def load_trajectories(path: PathLike) -> list[Trajectory]:
    return parse_trajectories(Path(path).read_text(), path)


def format_weights(omega: Sequence[float]) -> str:
    return " ".join(_fmt(w) for w in omega) + "\n"


def save_weights(path: PathLike, omega: Sequence[float]) -> None:
    _write(path, format_weights(omega))


def parse_weights(text: str, source=None) -> np.ndarray:
    values = []
    for no, tok in _content_lines(text):
        try:
            values.extend(float(x) for x in tok)
        except ValueError as exc:
            raise FormatError(str(exc), source, no) from None
    if not values:
        raise FormatError("no weights found", source)
    return np.array(values)


def load_weights(path: PathLike) -> np.ndarray:
    return parse_weights(Path(path).read_text(), path)


# -- counterexamples -----------------------------------------------------------

def format_counterexample(cex: Counterexample) -> str:
    lines = [" ".join([_fmt(tr.probability)] + [str(s) for s in tr.states]) for tr in cex.paths]
    lines.append(f"TOTAL {_fmt(cex.total_probability)}")
    return "\n".join(lines) + "\n"


def parse_counterexample(text: str, source=None) -> tuple[list[Trajectory], float]:
    paths, total = [], None
    for no, tok in _content_lines(text):
        try:
            if tok[0] == "TOTAL":
                total = float(tok[1])
            else:
                paths.append(Trajectory(tuple(int(s) for s in tok[1:]), float(tok[0])))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"malformed line: {exc}", source, no) from None
    if total is None:
        raise FormatError("missing TOTAL line", source)
    return paths, total


# -- transcripts ---------------------------------------------------------------

TRANSCRIPT_FIELDS = ("iter", "k", "inf", "delta", "probability", "verdict", "mu_dist")


def format_transcript(records, settings: dict | None = None) -> str:
    """CSV with the fixed column set; ``settings`` are echoed as leading ``#`` lines."""
    buf = io.StringIO()
    for key in sorted(settings or {}):
        buf.write(f"# {key}={settings[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSCRIPT_FIELDS)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()


def save_transcript(path: PathLike, records, settings: dict | None = None) -> None:
    _write(path, format_transcript(records, settings))


def parse_transcript(text: str, source=None) -> tuple[dict[str, str], list[dict]]:
    settings, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            settings[key] = value
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != TRANSCRIPT_FIELDS:
        raise FormatError(f"transcript columns {reader.fieldnames} != {list(TRANSCRIPT_FIELDS)}", source)
    rows = []
    for row in reader:
        rows.append({
            "iter": int(row["iter"]),
            **{key: float(row[key]) for key in ("k", "inf", "delta", "probability", "mu_dist")},
            "verdict": row["verdict"],
        })
    return settings, rows


def load_transcript(path: PathLike):
    return parse_transcript(Path(path).read_text(), path)


# -- reward maps ---------------------------------------------------------------

def format_reward_csv(grid: np.ndarray) -> str:
    return "".join(",".join(_fmt(x) for x in row) + "\n" for row in np.atleast_2d(grid))


def parse_reward_csv(text: str, source=None) -> np.ndarray:
    try:
        return np.array([[float(x) for x in row] for row in csv.reader(text.splitlines()) if row])
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def to_gray(grid: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant map becomes mid-grey."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = float(grid.min()), float(grid.max())
    if hi - lo <= 0:
        return np.full(grid.shape, 128, dtype=np.int64)
    return np.rint((grid - lo) / (hi - lo) * 255).astype(np.int64)


def format_pgm(gray: np.ndarray) -> str:
    """Plain (P2) portable graymap with maxval 255."""
    gray = np.atleast_2d(np.asarray(gray, dtype=np.int64))
    h, w = gray.shape
    rows = "".join(" ".join(str(int(v)) for v in row) + "\n" for row in gray)
    return f"P2\n{w} {h}\n255\n{rows}"


def parse_pgm(text: str, source=None) -> np.ndarray:
    tokens = [t for _, tok in _content_lines(text) for t in tok]
    if len(tokens) < 4 or tokens[0] != "P2":
        raise FormatError("not a plain P2 graymap", source)
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if data.size != w * h or data.min(initial=0) < 0 or data.max(initial=0) > maxval:
        raise FormatError("pixel data does not match the header", source)
    return data.reshape(h, w)
