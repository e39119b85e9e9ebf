"""Attack graph domain types and the JSON annotation format.

A graph document looks like::

    {"nodes": [{"id": "A", "name": "...", "info": "...",
                "vulnerability": false, "message_id": 101}, ...],
     "edges": [{"source": "A", "target": "B"}, ...]}

Line-delimited input (one such document per line) is accepted and merged;
output is always the single-document form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import networkx as nx


class GraphFormatError(ValueError):
    """Raised when an annotation document cannot be turned into a graph."""

    def __init__(self, message: str, key=None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class AttackNode:
    id: int
    name: str
    info: str = ""
    vulnerable: bool = False
    message_id: int = 1
    artificial: bool = False


@dataclass(frozen=True)
class AttackEdge:
    source: int
    target: int
    score: float | None = None
    # root-merge edges and vulnerable->leaf edges
    synthetic: bool = False

    def __post_init__(self):
        if self.source == self.target:
            raise GraphFormatError(f"self-loop on node {self.source}", self.source)
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise GraphFormatError(
                f"edge {self.source}->{self.target} score {self.score} outside [0, 1]",
                (self.source, self.target),
            )


@dataclass(frozen=True)
class AttackGraph:
    """Immutable attack graph.

    ``nodes`` maps id to node, ``edges`` maps ``(source, target)`` to edge.
    ``labels`` keeps the original string ids of human-annotated graphs.
    """

    nodes: Mapping[int, AttackNode]
    edges: Mapping[tuple[int, int], AttackEdge]
    root: int | None = None
    labels: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for (s, t), e in self.edges.items():
            if (e.source, e.target) != (s, t):
                raise GraphFormatError(f"edge key {(s, t)} does not match edge", (s, t))
            for end in (s, t):
                if end not in self.nodes:
                    raise GraphFormatError(f"edge {s}->{t} references unknown node {end}", end)
        if self.root is not None and self.root not in self.nodes:
            raise GraphFormatError(f"root {self.root} is not a node", self.root)

    @classmethod
    def build(cls, nodes: Iterable[AttackNode], edges: Iterable[AttackEdge] = (),
              root: int | None = None, labels: Mapping[int, str] | None = None) -> "AttackGraph":
        node_map: dict[int, AttackNode] = {}
        for n in nodes:
            if n.id in node_map:
                raise GraphFormatError(f"duplicate node id {n.id}", n.id)
            node_map[n.id] = n
        edge_map: dict[tuple[int, int], AttackEdge] = {}
        for e in edges:
            key = (e.source, e.target)
            old = edge_map.get(key)
            if old is not None:
                # multi-edges collapse, keeping the larger score
                scores = [s for s in (old.score, e.score) if s is not None]
                e = replace(e, score=max(scores) if scores else None,
                            synthetic=old.synthetic and e.synthetic)
            edge_map[key] = e
        return cls(node_map, edge_map, root, dict(labels or {}))

    # -- structure queries -------------------------------------------------

    def successors(self, node: int) -> list[int]:
        return sorted(t for (s, t) in self.edges if s == node)

    def predecessors(self, node: int) -> list[int]:
        return sorted(s for (s, t) in self.edges if t == node)

    def in_degree(self, node: int) -> int:
        return sum(1 for (_, t) in self.edges if t == node)

    def out_degree(self, node: int) -> int:
        return sum(1 for (s, _) in self.edges if s == node)

    def sources(self) -> list[int]:
        targets = {t for (_, t) in self.edges}
        return sorted(n for n in self.nodes if n not in targets)

    def leaves(self) -> list[int]:
        origins = {s for (s, _) in self.edges}
        return sorted(n for n in self.nodes if n not in origins)

    def label(self, node: int) -> str:
        return self.labels.get(node, str(node))

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.nodes))
        g.add_edges_from(sorted(self.edges))
        return g

    # -- functional updates ------------------------------------------------

    def with_edges(self, edges: Iterable[AttackEdge]) -> "AttackGraph":
        return AttackGraph.build(self.nodes.values(), edges, self.root, self.labels)

    def with_root(self, root: int | None) -> "AttackGraph":
        return AttackGraph(self.nodes, self.edges, root, self.labels)


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {c for c, _ in self.errors}

    def warning_codes(self) -> set[str]:
        return {c for c, _ in self.warnings}


# --------------------------------------------------------------------------
# parsing / serialization
# --------------------------------------------------------------------------

def _load_documents(text: str) -> list[dict]:
    text = text.strip()
    if not text:
        raise GraphFormatError("empty document")
    try:
        docs = [json.loads(text)]
    except json.JSONDecodeError:
        docs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise GraphFormatError(f"line {lineno}: malformed JSON ({exc.msg})", lineno) from exc
    for doc in docs:
        if not isinstance(doc, dict):
            raise GraphFormatError("graph document must be a JSON object")
        for key in ("nodes", "edges"):
            if not isinstance(doc.get(key), list):
                raise GraphFormatError(f"missing or non-list top-level key '{key}'", key)
    return docs


def _is_int_id(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def parse_graph_document(text: str) -> AttackGraph:
    """Parse an annotation document (single JSON or JSON lines) into a graph.

    Integer ids are kept as-is. If any id is a string, all ids are treated as
    labels and numbered 1, 2, ... in order of first appearance.
    """
    docs = _load_documents(text)
    raw_nodes = [n for d in docs for n in d["nodes"]]
    raw_edges = [e for d in docs for e in d["edges"]]
    if not raw_nodes:
        raise GraphFormatError("empty node set", "nodes")

    for n in raw_nodes:
        if not isinstance(n, dict) or "id" not in n:
            raise GraphFormatError(f"node without id: {n!r}", "id")
    raw_ids = [n["id"] for n in raw_nodes]
    use_labels = not all(_is_int_id(i) for i in raw_ids)

    id_map: dict = {}
    labels: dict[int, str] = {}
    for raw in raw_ids:
        key = str(raw) if use_labels else raw
        if key in id_map:
            raise GraphFormatError(f"duplicate node id {raw!r}", raw)
        new = len(id_map) + 1 if use_labels else raw
        id_map[key] = new
        if use_labels:
            labels[new] = str(raw)

    nodes = []
    for n in raw_nodes:
        nid = id_map[str(n["id"]) if use_labels else n["id"]]
        artificial = bool(n.get("artificial", False))
        message_id = n.get("message_id", 1)
        if not isinstance(message_id, int) or isinstance(message_id, bool):
            raise GraphFormatError(f"node {n['id']!r}: message_id must be an integer", n["id"])
        nodes.append(AttackNode(
            id=nid,
            name=str(n.get("name", n["id"])),
            info=str(n.get("info", "")),
            vulnerable=bool(n.get("vulnerability", n.get("vulnerable", False))),
            message_id=message_id,
            artificial=artificial,
        ))

    edges = []
    for e in raw_edges:
        if not isinstance(e, dict) or "source" not in e or "target" not in e:
            raise GraphFormatError(f"edge missing source/target: {e!r}", "edges")
        ends = []
        for end in (e["source"], e["target"]):
            key = str(end) if use_labels else end
            if key not in id_map:
                raise GraphFormatError(f"edge references unknown node {end!r}", end)
            ends.append(id_map[key])
        score = e.get("score")
        edges.append(AttackEdge(ends[0], ends[1],
                                None if score is None else float(score),
                                bool(e.get("synthetic", False))))

    root = None
    root_raw = next((d["root"] for d in docs if "root" in d), None)
    if root_raw is not None:
        key = str(root_raw) if use_labels else root_raw
        if key not in id_map:
            raise GraphFormatError(f"root {root_raw!r} is not a node", root_raw)
        root = id_map[key]
    return AttackGraph.build(nodes, edges, root, labels)


def graph_to_document(graph: AttackGraph, extra: Mapping | None = None) -> dict:
    use_labels = bool(graph.labels)
    ident = graph.label if use_labels else (lambda i: i)
    nodes = []
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        doc = {"id": ident(nid), "name": n.name, "info": n.info,
               "vulnerability": n.vulnerable, "message_id": n.message_id}
        if n.artificial:
            doc["artificial"] = True
        nodes.append(doc)
    edges = []
    for key in sorted(graph.edges):
        e = graph.edges[key]
        doc = {"source": ident(e.source), "target": ident(e.target)}
        if e.score is not None:
            doc["score"] = e.score
        if e.synthetic:
            doc["synthetic"] = True
        edges.append(doc)
    out = {"nodes": nodes, "edges": edges}
    if graph.root is not None:
        out["root"] = ident(graph.root)
    if extra:
        out.update(extra)
    return out


def serialize_graph_document(graph: AttackGraph, extra: Mapping | None = None) -> str:
    return json.dumps(graph_to_document(graph, extra), indent=2, ensure_ascii=False) + "\n"


def canonical_form(graph: AttackGraph) -> tuple:
    """Id-independent description used for isomorphism checks of labelled graphs."""
    key = {nid: (graph.label(nid), n.name, n.vulnerable, n.message_id, n.artificial)
           for nid, n in graph.nodes.items()}
    nodes = tuple(sorted(key.values()))
    edges = tuple(sorted((key[s], key[t], e.score, e.synthetic)
                         for (s, t), e in graph.edges.items()))
    return nodes, edges


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def find_cycles(graph: AttackGraph, limit: int = 20) -> list[list[int]]:
    cycles = []
    for cyc in nx.simple_cycles(graph.to_networkx()):
        cycles.append(cyc)
        if len(cycles) >= limit:
            break
    return cycles


def validate_graph(graph: AttackGraph, root_policy: str | None = "merge") -> ValidationReport:
    """Check a graph against the structural rules downstream modules rely on.

    ``root_policy="merge"`` declares that disconnected entry fragments will be
    merged into the minimum-id root; with ``None`` they are an error.
    """
    report = ValidationReport()
    if not graph.nodes:
        report.errors.append(("empty", "graph has no nodes"))
        return report

    for cyc in find_cycles(graph):
        report.errors.append(("cycle", " -> ".join(map(str, cyc + cyc[:1]))))

    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        if n.artificial and n.vulnerable:
            report.errors.append(("artificial_vulnerable", f"artificial node {nid} is marked vulnerable"))
        if not n.artificial and n.message_id < 1:
            report.errors.append(("message_id", f"node {nid} has message_id {n.message_id} < 1"))

    components = list(nx.weakly_connected_components(graph.to_networkx()))
    if len(components) > 1:
        msg = f"{len(components)} weakly connected components"
        if root_policy is None:
            report.errors.append(("components", msg + " and no root policy"))
        else:
            report.warnings.append(("components", msg + f" (policy: {root_policy})"))

    sources = graph.sources()
    if len(sources) > 1:
        report.warnings.append(("entry_points", f"multiple entry points {sources}"))

    leaves = set(graph.leaves())
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        if not n.vulnerable:
            continue
        dead = [t for t in graph.successors(nid)
                if t in leaves and not graph.nodes[t].artificial and not graph.nodes[t].vulnerable]
        if dead:
            report.warnings.append(("vulnerable_to_leaf",
                                    f"vulnerable node {nid} leads to non-vulnerable leaves {dead}"))
    if not any(n.vulnerable for n in graph.nodes.values()):
        report.warnings.append(("no_vulnerability", "graph has no vulnerable node"))
    return report


# --------------------------------------------------------------------------
# DOT output
# --------------------------------------------------------------------------

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(graph: AttackGraph, solution=None) -> str:
    """Emit Graphviz DOT. Start node gray, vulnerable dark, others light.

    With an equilibrium ``solution`` the defender probability is added to
    node labels and the attacker probability mass crossing each edge to edge
    labels.
    """
    root = graph.root if graph.root is not None else (min(graph.nodes) if graph.nodes else None)
    defender = dict(solution.defender) if solution is not None else {}
    edge_mass: dict[tuple[int, int], float] = {}
    if solution is not None:
        for path, p in zip(solution.paths, solution.attacker):
            for key in zip(path.nodes, path.nodes[1:]):
                edge_mass[key] = edge_mass.get(key, 0.0) + p

    lines = ["digraph attack_graph {", "  rankdir=LR;",
             '  node [shape=box, style="rounded,filled", fontname="Helvetica"];']
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        if nid == root:
            fill, font = "#b0b0b0", "black"
        elif n.vulnerable:
            fill, font = "#1f6f6f", "white"
        else:
            fill, font = "#cdeeee", "black"
        label = f"{graph.label(nid)}: {n.name}"
        if nid in defender:
            label += f"\\ndefend {defender[nid]:.2f}"
        style = ', style="rounded,dashed"' if n.artificial else ""
        lines.append(f'  n{nid} [label="{_dot_escape(label)}", fillcolor="{fill}", '
                     f'fontcolor="{font}"{style}];')
    for key in sorted(graph.edges):
        e = graph.edges[key]
        attrs = []
        parts = []
        if e.score is not None:
            parts.append(f"{e.score:.2f}")
        if key in edge_mass:
            parts.append(f"p={edge_mass[key]:.2f}")
        if parts:
            attrs.append(f'label="{" ".join(parts)}"')
        if e.synthetic:
            attrs.append('style=dashed, color="#e08020"')
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  n{e.source} -> n{e.target}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"
