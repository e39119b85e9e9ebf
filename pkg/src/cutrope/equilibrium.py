"""Cut-the-Rope equilibrium on a normalised, scored attack graph.

The attacker starts at the root and advances a Poisson(lambda) number of
steps along the chosen path; each edge's effort score gates how much mass
gets past it. The defender inspects one defendable node. An inspected node
on the path's interior cuts the path, so attacker success on that path is 0;
otherwise it is the probability mass that reached the path's target. The
artificial leaf closing each path marks the target and adds no distance.
The defender minimises and the attacker maximises that success probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import linprog

from .normalize import (DEFAULT_PATH_CEILING, AttackPath, NormalizedGraph,
                        enumerate_attack_paths)


class EquilibriumError(RuntimeError):
    code = "equilibrium_error"


class NoAttackSurface(EquilibriumError):
    code = "no_attack_surface"


class SolverFailure(EquilibriumError):
    code = "solver_failure"


@dataclass(frozen=True)
class SolverConfig:
    lambda_attacker: float = 2.0
    # inspection window unit; only the attacker rate enters the payoffs
    lambda_defender: float = 1.0
    start: int | None = None
    tolerance: float = 1e-9
    path_ceiling: int = DEFAULT_PATH_CEILING
    # "root": attacker always starts at the root; "any": it also picks the start node
    attacker_starts: str = "root"

    def __post_init__(self):
        if self.lambda_attacker <= 0 or self.lambda_defender <= 0:
            raise ValueError("Poisson rates must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.attacker_starts not in ("root", "any"):
            raise ValueError("attacker_starts must be 'root' or 'any'")


def poisson_pmf(k: int, lam: float) -> float:
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


@dataclass(frozen=True)
class PositionDistribution:
    path: AttackPath
    probabilities: tuple[float, ...]

    def at(self, node: int) -> float:
        return self.probabilities[self.path.nodes.index(node)]


def _edge_score(scores, s: int, t: int) -> float:
    if scores is None:
        return 1.0
    if callable(scores):
        v = scores(s, t)
    else:
        v = scores.get((s, t))
    return 1.0 if v is None else float(v)


def position_distribution(path: AttackPath, scores=None, config: SolverConfig = SolverConfig(),
                          start_index: int = 0) -> PositionDistribution:
    """Where the attacker is after one inspection window.

    Node at step distance ``d`` from the start gets weight
    ``pois(d; lambda) * prod(edge scores up to it)``, normalised over the
    path nodes from the start onward. ``scores`` maps ``(s, t)`` to a score
    (missing means 1) or is a callable ``(s, t) -> score``.
    """
    nodes = path.nodes
    if not nodes:
        raise ValueError("empty path")
    lam = config.lambda_attacker
    weights = [0.0] * len(nodes)
    gate = 1.0
    for d, i in enumerate(range(start_index, len(nodes))):
        if d > 0:
            gate *= _edge_score(scores, nodes[i - 1], nodes[i])
        weights[i] = poisson_pmf(d, lam) * gate
    total = math.fsum(weights)
    assert total > 0, "start node always carries positive mass"
    return PositionDistribution(path, tuple(w / total for w in weights))


@dataclass(frozen=True)
class PayoffMatrix:
    """Attacker success probabilities; rows are inspected nodes, columns are
    ``(path index, start node)`` attacker strategies."""

    rows: tuple[int, ...]
    cols: tuple[tuple[int, int], ...]
    values: np.ndarray
    paths: tuple[AttackPath, ...]
    uncuttable: tuple[int, ...] = ()

    @property
    def shape(self):
        return self.values.shape


def defendable_nodes(normalized: NormalizedGraph) -> list[int]:
    g = normalized.graph
    return sorted(nid for nid, n in g.nodes.items()
                  if nid != normalized.root and not n.vulnerable and not n.artificial)


def path_interior(normalized: NormalizedGraph, path: AttackPath, start_index: int = 0) -> list[int]:
    g = normalized.graph
    return [v for v in path.nodes[start_index:]
            if v != normalized.root and not g.nodes[v].vulnerable and not g.nodes[v].artificial]


def _walk(graph, path: AttackPath) -> AttackPath:
    """The path without its trailing artificial leaf."""
    if len(path.nodes) > 1 and graph.nodes[path.nodes[-1]].artificial:
        return AttackPath(path.nodes[:-1])
    return path


def target_success(normalized: NormalizedGraph, path: AttackPath,
                   config: SolverConfig = SolverConfig(), start_index: int = 0) -> float:
    """Attacker mass at the path's target when nothing is inspected."""
    g = normalized.graph
    scores = {k: e.score for k, e in g.edges.items()}
    return position_distribution(_walk(g, path), scores, config, start_index).probabilities[-1]


def build_payoff_matrix(normalized: NormalizedGraph, paths: list[AttackPath],
                        config: SolverConfig = SolverConfig()) -> PayoffMatrix:
    g = normalized.graph
    scores = {k: e.score for k, e in g.edges.items()}
    rows = defendable_nodes(normalized)
    cols: list[tuple[int, int]] = []
    columns: list[np.ndarray] = []
    uncuttable: list[int] = []
    for pi, path in enumerate(paths):
        if config.attacker_starts == "any":
            # any node before the target; starting on the target is not a game
            starts = list(range(len(_walk(g, path).nodes) - 1))
        else:
            first = 0 if config.start is None else path.nodes.index(config.start)
            starts = [first]
        walk = _walk(g, path)
        for si in starts:
            success = position_distribution(walk, scores, config, si).probabilities[-1]
            interior = set(path_interior(normalized, path, si))
            if not interior and si == starts[0]:
                uncuttable.append(len(cols))
            columns.append(np.array([0.0 if r in interior else success for r in rows]))
            cols.append((pi, path.nodes[si]))
    values = np.column_stack(columns) if columns and rows else np.zeros((len(rows), len(cols)))
    return PayoffMatrix(tuple(rows), tuple(cols), values, tuple(paths), tuple(uncuttable))


# --------------------------------------------------------------------------
# zero-sum LP
# --------------------------------------------------------------------------

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _minimax_row(A: np.ndarray) -> tuple[float, np.ndarray]:
    """Row player minimising the column maximum; lowest-index rows preferred on ties."""
    m, n = A.shape
    # variables: x_1..x_m, v
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A.T, -np.ones((n, 1))])
    b_ub = np.zeros(n)
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                  method="highs", options=_HIGHS)
    if not res.success:
        raise SolverFailure(f"minimax LP failed ({res.message}); matrix shape {A.shape}, "
                            f"range [{A.min():.3g}, {A.max():.3g}]")
    v = res.x[-1]
    # second stage: among (near-)optimal mixes, push mass to low indices
    slack = 1e-10 * max(1.0, abs(v))
    res2 = linprog(np.arange(m, dtype=float), A_ub=A.T, b_ub=np.full(n, v + slack),
                   A_eq=np.ones((1, m)), b_eq=[1.0], bounds=[(0, None)] * m,
                   method="highs", options=_HIGHS)
    x = res2.x if res2.success else res.x[:m]
    x = np.clip(x, 0.0, None)
    return v, x / x.sum()


def solve_zero_sum(matrix) -> tuple[float, np.ndarray, np.ndarray]:
    """Minimax solution of a zero-sum game.

    Rows minimise, columns maximise the entries of ``matrix``. Returns the
    game value with the row and column mixed strategies.
    """
    A = np.asarray(matrix.values if isinstance(matrix, PayoffMatrix) else matrix, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise SolverFailure(f"cannot solve an empty game (shape {A.shape})")
    v_row, x = _minimax_row(A)
    v_col, y = _minimax_row(-A.T)
    upper = float(np.max(x @ A))
    lower = float(np.min(A @ y))
    value = 0.5 * (upper + lower)
    return value, x, y


# --------------------------------------------------------------------------
# full solve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumSolution:
    defender: Mapping[int, float]
    paths: tuple[AttackPath, ...]
    attacker: tuple[float, ...]
    value: float
    defender_guarantee: float
    attacker_guarantee: float
    degenerate: bool = False
    reason: str | None = None
    matrix: PayoffMatrix | None = field(default=None, compare=False, repr=False)
    column_mix: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def path_probability(self, path: AttackPath) -> float:
        return self.attacker[self.paths.index(path)]

    def defender_ranked(self) -> list[tuple[int, float]]:
        return sorted(self.defender.items(), key=lambda kv: (-round(kv[1], 12), kv[0]))

    def attacker_ranked(self) -> list[tuple[int, AttackPath, float]]:
        rows = [(i + 1, p, q) for i, (p, q) in enumerate(zip(self.paths, self.attacker))]
        return sorted(rows, key=lambda r: (-round(r[2], 12), r[0]))


def _path_marginals(matrix: PayoffMatrix, y: np.ndarray) -> tuple[float, ...]:
    out = [0.0] * len(matrix.paths)
    for (pi, _), q in zip(matrix.cols, y):
        out[pi] += float(q)
    return tuple(out)


def solve_equilibrium(normalized: NormalizedGraph, config: SolverConfig = SolverConfig(),
                      paths: list[AttackPath] | None = None) -> EquilibriumSolution:
    """Enumerate paths, build the payoff matrix and solve the game.

    Special cases: a root adjacent to a target (no inspectable node on some
    path) is degenerate and reported with value 0; a single path always has
    value 0 with all attacker mass on it.
    """
    if paths is None:
        paths = enumerate_attack_paths(normalized, config.path_ceiling)
    if not paths:
        raise NoAttackSurface("graph has no root-to-target attack path")
    matrix = build_payoff_matrix(normalized, paths, config)
    m, n = matrix.shape

    if m == 0:
        # nothing to inspect: the attacker takes the most successful path
        succ = [target_success(normalized, p, config) for p in paths]
        best = int(np.argmax(succ))
        attacker = tuple(1.0 if i == best else 0.0 for i in range(len(paths)))
        return EquilibriumSolution({}, tuple(paths), attacker, 0.0, 0.0, 0.0,
                                   degenerate=True, reason="no_defendable_nodes",
                                   matrix=matrix, column_mix=attacker)

    _, x, y = solve_zero_sum(matrix)
    A = matrix.values
    upper = float(np.max(x @ A))
    lower = float(np.min(A @ y))
    defender = {r: float(p) for r, p in zip(matrix.rows, x)}
    attacker = _path_marginals(matrix, y)
    value = 0.5 * (upper + lower)
    degenerate, reason = False, None
    if matrix.uncuttable:
        degenerate, reason = True, "uncuttable_path"
        value = upper = lower = 0.0
    if len(paths) == 1:
        attacker = (1.0,)
        value = upper = lower = 0.0
    value = min(1.0, max(0.0, value))
    return EquilibriumSolution(defender, tuple(paths), attacker, value, upper, lower,
                               degenerate, reason, matrix, tuple(float(q) for q in y))


@dataclass
class EquilibriumCheck:
    passed: bool
    worst_deviation: float
    defender_gain: float
    attacker_gain: float
    normalization_error: float


def verify_equilibrium(matrix: PayoffMatrix, solution: EquilibriumSolution,
                       tol: float = 1e-7) -> EquilibriumCheck:
    """Check that no pure deviation improves either side by more than ``tol``."""
    A = matrix.values
    x = np.array([solution.defender.get(r, 0.0) for r in matrix.rows])
    y = np.array(solution.column_mix) if solution.column_mix else np.array(solution.attacker)
    if A.size == 0:
        norm_err = abs(y.sum() - 1.0)
        return EquilibriumCheck(norm_err <= tol, norm_err, 0.0, 0.0, norm_err)
    payoff = float(x @ A @ y)
    # attacker switching to a pure column; defender switching to a pure row
    attacker_gain = float(np.max(x @ A)) - payoff
    defender_gain = payoff - float(np.min(A @ y))
    norm_err = max(abs(x.sum() - 1.0), abs(y.sum() - 1.0),
                   float(max(0.0, -x.min())), float(max(0.0, -y.min())))
    worst = max(attacker_gain, defender_gain, norm_err)
    return EquilibriumCheck(worst <= tol, worst, defender_gain, attacker_gain, norm_err)


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

def format_solution_tables(solution: EquilibriumSolution, normalized: NormalizedGraph | None = None) -> str:
    """Defender table, attacker table and equilibrium block, six decimals."""
    graph = normalized.graph if normalized is not None else None
    out = ["Optimal Defense Strategy", f"{'Node ID':<10}Probability"]
    for node, p in solution.defender_ranked():
        label = graph.label(node) if graph is not None else str(node)
        out.append(f"{label:<10}{p:.6f}")
    out += ["", "Attacker Strategy", f"{'Path ID':<10}{'Path Sequence':<40}Probability"]
    for pid, path, p in solution.attacker_ranked():
        out.append(f"{pid:<10}{path.arrow(graph):<40}{p:.6f}")
    out += ["", "Game Equilibrium",
            f"Defender can keep attacker success below: {solution.value:.6f}",
            f"Attacker can guarantee success probability of: {solution.value:.6f}"]
    if solution.degenerate:
        out.append(f"(degenerate: {solution.reason})")
    return "\n".join(out) + "\n"
