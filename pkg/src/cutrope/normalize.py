"""Canonicalisation of extracted attack graphs into single-root DAGs.

Pipeline order is merge entry points, strip edges into the root, prune
non-vulnerable leaves, attach artificial leaves. Path enumeration is the
final step and is consumed by the solver.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import islice

import networkx as nx

from .graph import AttackEdge, AttackGraph, AttackNode, find_cycles

DEFAULT_PATH_CEILING = 10_000
LEAF_PREFIX = "leaf_"


class NormalizationError(ValueError):
    pass


class PathLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class NormalizedGraph:
    graph: AttackGraph
    root: int
    targets: tuple[tuple[int, int], ...]
    provenance: tuple[dict, ...] = field(default=(), compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def target_of_leaf(self, leaf: int) -> int:
        for vuln, lf in self.targets:
            if lf == leaf:
                return vuln
        raise KeyError(leaf)


@dataclass(frozen=True)
class AttackPath:
    nodes: tuple[int, ...]

    @property
    def target(self) -> int:
        return self.nodes[-1]

    def __len__(self):
        return len(self.nodes)

    def arrow(self, graph: AttackGraph | None = None, include_leaf: bool = False) -> str:
        nodes = self.nodes
        if graph is not None and not include_leaf and graph.nodes[nodes[-1]].artificial:
            nodes = nodes[:-1]
        label = graph.label if graph is not None else str
        return " -> ".join(label(n) for n in nodes)


@dataclass(frozen=True)
class CapRange:
    min_nodes: int
    max_nodes: int

    def __post_init__(self):
        if not 4 <= self.min_nodes <= self.max_nodes <= 25:
            raise ValueError(f"invalid cap range {self.min_nodes}..{self.max_nodes}")


# --------------------------------------------------------------------------
# steps
# --------------------------------------------------------------------------

def merge_entry_points(graph: AttackGraph) -> AttackGraph:
    """Connect every extra in-degree-0 node to the minimum-id node."""
    if not graph.nodes:
        raise NormalizationError("cannot normalise an empty graph")
    root = min(graph.nodes)
    extra = [s for s in graph.sources() if s != root]
    if not extra and graph.root == root:
        return graph
    edges = list(graph.edges.values())
    edges += [AttackEdge(root, s, None, synthetic=True) for s in extra]
    return AttackGraph.build(graph.nodes.values(), edges, root, graph.labels)


def strip_root_incoming(graph: AttackGraph, root: int) -> AttackGraph:
    if root not in graph.nodes:
        raise NormalizationError(f"root {root} is not a node")
    kept = [e for (s, t), e in graph.edges.items() if t != root]
    if len(kept) == len(graph.edges) and graph.root == root:
        return graph
    return AttackGraph.build(graph.nodes.values(), kept, root, graph.labels)


def prune_nonvulnerable_leaves(graph: AttackGraph) -> AttackGraph:
    """Remove non-vulnerable, non-artificial leaves until a fixpoint.

    The root is never removed. A graph reduced to its root alone triggers a
    warning: no attack path can exist.
    """
    root = graph.root if graph.root is not None else min(graph.nodes)
    nodes = dict(graph.nodes)
    edges = dict(graph.edges)
    while True:
        origins = {s for (s, _) in edges}
        doomed = {nid for nid, n in nodes.items()
                  if nid not in origins and nid != root
                  and not n.vulnerable and not n.artificial}
        if not doomed:
            break
        for nid in doomed:
            del nodes[nid]
        edges = {k: e for k, e in edges.items() if k[0] not in doomed and k[1] not in doomed}
    if len(nodes) == len(graph.nodes):
        return graph
    if len(nodes) == 1:
        warnings.warn(f"graph pruned down to its root {root}; no attack path remains",
                      RuntimeWarning, stacklevel=2)
    labels = {k: v for k, v in graph.labels.items() if k in nodes}
    return AttackGraph.build(nodes.values(), edges.values(), graph.root, labels)


def _artificial_leaf(graph: AttackGraph, vuln: int) -> int | None:
    for t in graph.successors(vuln):
        n = graph.nodes[t]
        if n.artificial and graph.in_degree(t) == 1:
            return t
    return None


def attach_artificial_leaves(graph: AttackGraph) -> AttackGraph:
    """Give every vulnerable node one artificial leaf successor (edge score 1)."""
    nodes = list(graph.nodes.values())
    edges = list(graph.edges.values())
    labels = dict(graph.labels)
    next_id = max(graph.nodes) + 1
    changed = False
    for vid in sorted(graph.nodes):
        v = graph.nodes[vid]
        if not v.vulnerable or _artificial_leaf(graph, vid) is not None:
            continue
        leaf_name = LEAF_PREFIX + graph.label(vid)
        nodes.append(AttackNode(next_id, leaf_name, f"target reached via {v.name}",
                                vulnerable=False, message_id=v.message_id, artificial=True))
        edges.append(AttackEdge(vid, next_id, 1.0, synthetic=True))
        if labels:
            labels[next_id] = leaf_name
        next_id += 1
        changed = True
    if not changed:
        return graph
    return AttackGraph.build(nodes, edges, graph.root, labels)


def normalize(graph: AttackGraph) -> NormalizedGraph:
    """Run the full canonicalisation pipeline.

    Cycles through the root are broken by stripping its incoming edges; any
    other cycle is rejected.
    """
    provenance: list[dict] = []
    notes: list[str] = []

    merged = merge_entry_points(graph)
    added = sorted(set(merged.edges) - set(graph.edges))
    provenance.append({"step": "merge_entry_points", "root": merged.root, "added_edges": added})

    root = merged.root
    stripped = strip_root_incoming(merged, root)
    removed = sorted(set(merged.edges) - set(stripped.edges))
    provenance.append({"step": "strip_root_incoming", "removed_edges": removed})

    cycles = find_cycles(stripped, limit=1)
    if cycles:
        raise NormalizationError(
            "graph contains a cycle not through the root: "
            + " -> ".join(map(str, cycles[0] + cycles[0][:1])))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pruned = prune_nonvulnerable_leaves(stripped)
    notes.extend(str(w.message) for w in caught)
    provenance.append({"step": "prune_nonvulnerable_leaves",
                       "removed_nodes": sorted(set(stripped.nodes) - set(pruned.nodes))})

    final = attach_artificial_leaves(pruned)
    new_leaves = sorted(set(final.nodes) - set(pruned.nodes))
    provenance.append({"step": "attach_artificial_leaves", "added_nodes": new_leaves})

    targets = []
    for vid in sorted(final.nodes):
        if final.nodes[vid].vulnerable:
            targets.append((vid, _artificial_leaf(final, vid)))
    return NormalizedGraph(final, root, tuple(targets), tuple(provenance), tuple(notes))


def is_normalized(graph: AttackGraph) -> bool:
    if graph.root is None or graph.sources() != [graph.root]:
        return False
    if not nx.is_directed_acyclic_graph(graph.to_networkx()):
        return False
    for leaf in graph.leaves():
        preds = graph.predecessors(leaf)
        if not graph.nodes[leaf].artificial or len(preds) != 1:
            return False
        if not graph.nodes[preds[0]].vulnerable or graph.edges[(preds[0], leaf)].score != 1.0:
            return False
    return True


# --------------------------------------------------------------------------
# paths
# --------------------------------------------------------------------------

def enumerate_attack_paths(normalized: NormalizedGraph,
                           ceiling: int = DEFAULT_PATH_CEILING) -> list[AttackPath]:
    """All simple root-to-artificial-leaf paths.

    Sorted lexicographically by the visible node sequence (the artificial
    leaf dropped), so a path that stops at a vulnerable node precedes its
    extensions.
    """
    g = normalized.graph
    nxg = g.to_networkx()
    paths: list[tuple[int, ...]] = []
    for _, leaf in normalized.targets:
        budget = ceiling - len(paths) + 1
        found = list(islice(nx.all_simple_paths(nxg, normalized.root, leaf), budget))
        paths.extend(tuple(p) for p in found)
        if len(paths) > ceiling:
            raise PathLimitExceeded(f"more than {ceiling} attack paths")
    return [AttackPath(p) for p in sorted(paths, key=lambda p: (p[:-1], p))]


# --------------------------------------------------------------------------
# node cap
# --------------------------------------------------------------------------

_BRACKETS = (
    (70, Fraction(12, 100), Fraction(16, 100)),
    (200, Fraction(6, 100), Fraction(12, 100)),
    (None, Fraction(35, 1000), Fraction(5, 100)),
)
CAP_FLOOR, CAP_CEIL = 4, 25


def node_cap(message_count: int) -> CapRange:
    """Node-count bounds for a log with ``message_count`` messages."""
    if message_count < 1:
        raise ValueError("message_count must be >= 1")
    for upper, lo, hi in _BRACKETS:
        if upper is None or message_count < upper:
            break

    def clamp(x: int) -> int:
        return min(CAP_CEIL, max(CAP_FLOOR, x))

    return CapRange(clamp(math.ceil(lo * message_count)), clamp(math.ceil(hi * message_count)))


def rescore(normalized: NormalizedGraph, edges) -> NormalizedGraph:
    """Return ``normalized`` with its graph edges replaced."""
    return replace(normalized, graph=normalized.graph.with_edges(edges))
