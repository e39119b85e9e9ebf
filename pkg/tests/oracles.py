"""Independent reference computations for the test suite.

Nothing here imports the package under test except for plain data access;
each oracle recomputes its quantity from first principles.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------

def dfs_paths(succ: dict[int, list[int]], root: int) -> list[tuple[int, ...]]:
    """All simple root-to-sink paths by plain recursion."""
    out = []

    def walk(node, trail):
        nxt = [s for s in succ.get(node, []) if s not in trail]
        if not succ.get(node):
            out.append(tuple(trail))
            return
        for s in nxt:
            walk(s, trail + [s])

    walk(root, [root])
    return out


def brute_force_has_cycle(nodes, edges) -> bool:
    """Colour-marking DFS over an adjacency list."""
    adj = {n: [] for n in nodes}
    for s, t in edges:
        adj[s].append(t)
    colour = {n: 0 for n in nodes}

    def visit(n):
        colour[n] = 1
        for m in adj[n]:
            if colour[m] == 1:
                return True
            if colour[m] == 0 and visit(m):
                return True
        colour[n] = 2
        return False

    return any(colour[n] == 0 and visit(n) for n in nodes)


def nodes_on_cycles(nodes, edges) -> set[int]:
    """Nodes that can reach themselves, by transitive closure."""
    idx = {n: i for i, n in enumerate(nodes)}
    k = len(nodes)
    reach = [[False] * k for _ in range(k)]
    for s, t in edges:
        reach[idx[s]][idx[t]] = True
    for m in range(k):
        for i in range(k):
            if reach[i][m]:
                for j in range(k):
                    if reach[m][j]:
                        reach[i][j] = True
    return {n for n in nodes if reach[idx[n]][idx[n]]}


# --------------------------------------------------------------------------
# node cap
# --------------------------------------------------------------------------

def node_cap_oracle(count: int) -> tuple[int, int]:
    if count < 70:
        lo, hi = Fraction(12, 100), Fraction(16, 100)
    elif count < 200:
        lo, hi = Fraction(6, 100), Fraction(12, 100)
    else:
        lo, hi = Fraction(35, 1000), Fraction(5, 100)

    def ceil_frac(f):
        return -((-f.numerator) // f.denominator)

    clamp = lambda v: min(25, max(4, v))  # noqa: E731
    return clamp(ceil_frac(lo * count)), clamp(ceil_frac(hi * count))


# --------------------------------------------------------------------------
# effort
# --------------------------------------------------------------------------

def effort_oracle(m, J, t, T, c, C, w):
    """Spreadsheet-style recomputation of the weighted effort score."""
    cells = {}
    cells["phi_msg"] = 1.0 if J <= 1 else 1.0 - (m - 1) / (J - 1)
    cells["phi_tok"] = 1.0 if T == 0 else 1.0 - t / T
    cells["phi_cost"] = 1.0 if C == 0 else 1.0 - c / C
    cells["score"] = w[0] * cells["phi_msg"] + w[1] * cells["phi_tok"] + w[2] * cells["phi_cost"]
    return cells


# --------------------------------------------------------------------------
# Poisson walk
# --------------------------------------------------------------------------

def poisson_pmf(k: int, lam: float) -> float:
    return lam ** k * math.exp(-lam) / math.factorial(k)


def position_oracle(n_nodes: int, lam: float, scores: list[float] | None = None) -> list[float]:
    scores = scores or [1.0] * (n_nodes - 1)
    w = []
    gate = 1.0
    for d in range(n_nodes):
        if d:
            gate *= scores[d - 1]
        w.append(poisson_pmf(d, lam) * gate)
    s = sum(w)
    return [x / s for x in w]


# --------------------------------------------------------------------------
# zero-sum games by support enumeration
# --------------------------------------------------------------------------

def support_enumeration(A: np.ndarray, tol: float = 1e-9):
    """Value and optimal strategies of a zero-sum game (rows minimise).

    Enumerates square supports (I, J); for each, solves the indifference
    system by direct linear algebra and keeps the first candidate that is a
    genuine equilibrium. Every finite zero-sum game has an equilibrium with
    equal-size supports whose kernel is nonsingular (Shapley-Snow), so the
    search is exhaustive.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    for k in range(1, min(m, n) + 1):
        for I in itertools.combinations(range(m), k):
            for J in itertools.combinations(range(n), k):
                sub = A[np.ix_(I, J)]
                # unknowns: x_I (k), v  |  x^T sub = v 1, sum x = 1
                M = np.zeros((k + 1, k + 1))
                M[:k, :k] = sub.T
                M[:k, k] = -1.0
                M[k, :k] = 1.0
                rhs = np.zeros(k + 1)
                rhs[k] = 1.0
                N = np.zeros((k + 1, k + 1))
                N[:k, :k] = sub
                N[:k, k] = -1.0
                N[k, :k] = 1.0
                try:
                    sx = np.linalg.solve(M, rhs)
                    sy = np.linalg.solve(N, rhs)
                except np.linalg.LinAlgError:
                    continue
                if abs(sx[k] - sy[k]) > 1e-7:
                    continue
                if sx[:k].min() < -tol or sy[:k].min() < -tol:
                    continue
                x = np.zeros(m)
                y = np.zeros(n)
                x[list(I)] = np.clip(sx[:k], 0, None)
                y[list(J)] = np.clip(sy[:k], 0, None)
                v = sx[k]
                # no column gains against x, no row gains against y
                if (x @ A).max() <= v + 1e-8 and (A @ y).min() >= v - 1e-8:
                    return float(v), x, y
    raise AssertionError("no equilibrium found by support enumeration")
