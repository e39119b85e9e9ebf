import sys
import random

import pytest
from hypothesis import strategies as st

from cutrope import AttackEdge, AttackGraph, AttackNode, load_fixture, normalize


def make_graph(n, edges, vulnerable=(), scores=None, message_ids=None):
    scores = scores or {}
    message_ids = message_ids or {}
    nodes = [AttackNode(i, f"n{i}", "", i in vulnerable, message_ids.get(i, i)) for i in range(1, n + 1)]
    return AttackGraph.build(nodes, [AttackEdge(s, t, scores.get((s, t))) for s, t in edges])


@st.composite
def random_dags(draw, max_nodes=12, min_nodes=2, scored=False, density=0.35):
    """Random DAG with edges only from lower to higher id."""
    n = draw(st.integers(min_nodes, max_nodes))
    edges = []
    for s in range(1, n + 1):
        for t in range(s + 1, n + 1):
            if draw(st.floats(0, 1)) < density:
                edges.append((s, t))
    vulnerable = {i for i in range(2, n + 1) if draw(st.booleans())}
    scores = {}
    if scored:
        for e in edges:
            scores[e] = draw(st.floats(0.05, 1.0))
    return make_graph(n, edges, vulnerable, scores)


@st.composite
def random_digraphs(draw, max_nodes=12, density=0.2):
    """Random directed graph, cycles allowed, no self-loops."""
    n = draw(st.integers(1, max_nodes))
    edges = [(s, t) for s in range(1, n + 1) for t in range(1, n + 1)
             if s != t and draw(st.floats(0, 1)) < density]
    return n, edges


def random_scored_game_graph(rng: random.Random, max_nodes=12, max_paths=10, proper=True):
    """Scored DAG rooted at 1 with between 2 and ``max_paths`` attack paths.

    ``proper`` additionally requires an inspectable node on every path, so
    the game is not one of the degenerate special cases.
    """
    from cutrope import enumerate_attack_paths

    while True:
        n = rng.randint(4, max_nodes)
        edges = [(s, t) for s in range(1, n + 1) for t in range(s + 1, n + 1)
                 if rng.random() < 0.3]
        vulnerable = {i for i in range(2, n + 1) if rng.random() < 0.3}
        if not vulnerable:
            continue
        scores = {e: round(rng.uniform(0.1, 1.0), 6) for e in edges}
        try:
            norm = normalize(make_graph(n, edges, vulnerable, scores))
        except Exception:
            continue
        paths = enumerate_attack_paths(norm)
        if not 2 <= len(paths) <= max_paths:
            continue
        g = norm.graph
        cuttable = all(any(v != norm.root and not g.nodes[v].vulnerable and not g.nodes[v].artificial
                           for v in p.nodes) for p in paths)
        if cuttable or not proper:
            return norm


@pytest.fixture
def fixture_graph():
    return load_fixture


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
