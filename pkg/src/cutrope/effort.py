"""Effort scores for attack-graph edges from session-log statistics.

Each edge gets a convex combination of three normalised measures taken over
the log span between the edge's source message and the nearest vulnerable
node reachable through the edge: message distance, tokens and cost. A score
of 1 means the vulnerability sits in the same message; 0 means unreachable.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import networkx as nx

from .graph import AttackEdge
from .normalize import NormalizedGraph, rescore

ROLES = ("user", "assistant", "tool")
FALLBACK_SCORE = 0.5


class SessionLogError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def approx_tokens(text: str) -> int:
    """Default tokenizer stand-in: one token per four characters, rounded up."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class MessageRecord:
    index: int
    role: str
    text: str
    tokens: int
    cost: float


@dataclass(frozen=True)
class SessionLog:
    messages: tuple[MessageRecord, ...]
    estimated_costs: bool = False

    def __post_init__(self):
        if not self.messages:
            raise SessionLogError("session log has no messages")
        for i, m in enumerate(self.messages, 1):
            if m.index != i:
                raise SessionLogError(f"message indices must be contiguous from 1, got {m.index} at position {i}")

    def __len__(self):
        return len(self.messages)

    @property
    def total_tokens(self) -> int:
        return sum(m.tokens for m in self.messages)

    @property
    def total_cost(self) -> float:
        return math.fsum(m.cost for m in self.messages)

    def span(self, first: int, last: int) -> tuple[MessageRecord, ...]:
        """Messages with ``first <= index <= last`` (1-based, clipped)."""
        lo = max(first, 1)
        hi = min(last, len(self.messages))
        return self.messages[lo - 1:hi]


def parse_session_log(lines: Iterable[str] | str, total_cost: float | None = None,
                      tokenizer: Callable[[str], int] = approx_tokens) -> SessionLog:
    """Read line-delimited ``{index, role, text, tokens?, cost?}`` records.

    Missing token counts come from ``tokenizer``. Missing costs are
    estimated proportionally to tokens, using either the messages that do
    carry a cost or the given ``total_cost``.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    raw = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SessionLogError(f"malformed JSON ({exc.msg})", lineno) from exc
        if not isinstance(rec, dict):
            raise SessionLogError("record is not an object", lineno)
        role = rec.get("role", "assistant")
        if role not in ROLES:
            raise SessionLogError(f"unknown role {role!r}", lineno)
        text = rec.get("text", rec.get("content", ""))
        if not isinstance(text, str):
            raise SessionLogError("text must be a string", lineno)
        tokens = rec.get("tokens")
        if tokens is None:
            tokens = tokenizer(text)
        if not isinstance(tokens, int) or isinstance(tokens, bool) or tokens < 0:
            raise SessionLogError(f"tokens must be a non-negative integer, got {tokens!r}", lineno)
        cost = rec.get("cost")
        if cost is not None and (not isinstance(cost, (int, float)) or isinstance(cost, bool) or cost < 0):
            raise SessionLogError(f"cost must be a non-negative number, got {cost!r}", lineno)
        index = rec.get("index", len(raw) + 1)
        if index != len(raw) + 1:
            raise SessionLogError(f"index {index} breaks contiguous numbering (expected {len(raw) + 1})", lineno)
        raw.append((index, role, text, tokens, cost))
    if not raw:
        raise SessionLogError("session log has no messages")

    known = [(t, c) for (_, _, _, t, c) in raw if c is not None]
    missing = len(known) < len(raw)
    if known and missing:
        ref_tokens = sum(t for t, _ in known)
        ref_cost = math.fsum(c for _, c in known)
    elif total_cost is not None:
        ref_tokens = sum(t for (_, _, _, t, _) in raw)
        ref_cost = total_cost
    else:
        ref_tokens, ref_cost = 1, 0.0

    messages = []
    for index, role, text, tokens, cost in raw:
        if cost is None:
            cost = estimate_cost(tokens, max(ref_tokens, 1), ref_cost)
        messages.append(MessageRecord(index, role, text, tokens, float(cost)))
    return SessionLog(tuple(messages), estimated_costs=missing)


def dump_session_log(log: SessionLog) -> str:
    return "".join(json.dumps({"index": m.index, "role": m.role, "text": m.text,
                               "tokens": m.tokens, "cost": m.cost}) + "\n"
                   for m in log.messages)


# --------------------------------------------------------------------------
# scalar measures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EffortWeights:
    msg: float = 1 / 3
    tok: float = 1 / 3
    cost: float = 1 / 3

    def __post_init__(self):
        if min(self.msg, self.tok, self.cost) < 0:
            raise ValueError("effort weights must be non-negative")
        if abs(self.msg + self.tok + self.cost - 1.0) > 1e-12:
            raise ValueError(f"effort weights must sum to 1, got {self.msg + self.tok + self.cost}")

    @classmethod
    def parse(cls, text: str) -> "EffortWeights":
        """``"msg,tok,cost"``; values are rescaled onto the simplex."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights need three comma-separated values")
        total = sum(parts)
        if total <= 0:
            raise ValueError("weights must not all be zero")
        msg, tok = parts[0] / total, parts[1] / total
        return cls(msg, tok, 1.0 - msg - tok)


def message_effort(m: int, J: int) -> float:
    if J <= 1:
        return 1.0
    if not 1 <= m <= J:
        raise ValueError(f"message distance {m} outside [1, {J}]")
    return 1.0 - (m - 1) / (J - 1)


def token_effort(t: float, T: float) -> float:
    if T <= 0:
        return 1.0
    if not 0 <= t <= T:
        raise ValueError(f"token count {t} outside [0, {T}]")
    return 1.0 - t / T


def cost_effort(c: float, C: float) -> float:
    if C <= 0:
        return 1.0
    if not 0 <= c <= C * (1 + 1e-12):
        raise ValueError(f"cost {c} outside [0, {C}]")
    return max(0.0, 1.0 - c / C)


def estimate_cost(y: float, x: float, cost_x: float) -> float:
    """Cost of ``y`` tokens given that ``x`` tokens cost ``cost_x``."""
    if x < 1:
        raise ValueError("reference token count must be >= 1")
    return (y / x) * cost_x


def effort_score(weights: EffortWeights, phis: tuple[float, float, float]) -> float:
    for p in phis:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"effort component {p} outside [0, 1]")
    s = weights.msg * phis[0] + weights.tok * phis[1] + weights.cost * phis[2]
    return min(1.0, max(0.0, s))


# --------------------------------------------------------------------------
# edges
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeMetrics:
    m: int
    t: int
    c: float
    reachable: bool = True
    vulnerable_node: int | None = None


def _vulnerable_candidates(graph, nxg, target: int) -> list[int]:
    reach = {target} | nx.descendants(nxg, target)
    return sorted(v for v in reach if graph.nodes[v].vulnerable)


def edge_metrics(edge: AttackEdge, normalized: NormalizedGraph, log: SessionLog) -> EdgeMetrics:
    """Log-span metrics for one edge.

    The span starts at the source's message and ends at the nearest (by
    message distance) vulnerable node reachable from the edge target,
    counted inclusively for ``m``. Tokens and cost are summed over the
    messages advanced past the source message, so a co-anchored
    vulnerability costs nothing.
    """
    g = normalized.graph
    candidates = _vulnerable_candidates(g, g.to_networkx(), edge.target)
    if not candidates:
        return EdgeMetrics(m=len(log), t=0, c=0.0, reachable=False)
    start = g.nodes[edge.source].message_id
    best = None
    for v in candidates:
        end = g.nodes[v].message_id
        lo, hi = min(start, end), max(start, end)
        m = min(hi - lo + 1, len(log))
        advanced = log.span(lo + 1, hi)
        t = sum(r.tokens for r in advanced)
        c = math.fsum(r.cost for r in advanced)
        key = (m, t, v)
        if best is None or key < best[0]:
            best = (key, EdgeMetrics(m, t, c, True, v))
    return best[1]


def metrics_score(metrics: EdgeMetrics, log: SessionLog, weights: EffortWeights) -> float:
    if not metrics.reachable:
        return 0.0
    phis = (message_effort(metrics.m, len(log)),
            token_effort(metrics.t, log.total_tokens),
            cost_effort(metrics.c, log.total_cost))
    return effort_score(weights, phis)


def _anchored(node, log: SessionLog) -> bool:
    return 1 <= node.message_id <= len(log)


def score_edges(normalized: NormalizedGraph, log: SessionLog,
                weights: EffortWeights = EffortWeights()) -> NormalizedGraph:
    """Assign an effort score to every edge of a normalised graph.

    Vulnerable-to-leaf edges stay at 1.0. Edges whose endpoints have no
    anchor inside the log fall back to 0.5 with a warning.
    """
    g = normalized.graph
    nxg = g.to_networkx()
    scored = []
    for key in sorted(g.edges):
        e = g.edges[key]
        src, dst = g.nodes[e.source], g.nodes[e.target]
        if dst.artificial:
            scored.append(AttackEdge(e.source, e.target, 1.0, e.synthetic))
            continue
        if not (_anchored(src, log) and _anchored(dst, log)):
            warnings.warn(f"edge {e.source}->{e.target} lacks a log anchor; using {FALLBACK_SCORE}",
                          RuntimeWarning, stacklevel=2)
            scored.append(AttackEdge(e.source, e.target, FALLBACK_SCORE, e.synthetic))
            continue
        if not _vulnerable_candidates(g, nxg, e.target):
            scored.append(AttackEdge(e.source, e.target, 0.0, e.synthetic))
            continue
        score = metrics_score(edge_metrics(e, normalized, log), log, weights)
        scored.append(AttackEdge(e.source, e.target, score, e.synthetic))
    return rescore(normalized, scored)
