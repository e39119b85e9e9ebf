"""Attack-graph extraction from session logs.

``extract_graph`` asks a text-completion client for an annotation document
and repairs what it can (node cap); cyclic answers are re-asked. Without a
client, a keyword-rule extractor builds the graph deterministically.
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

from .effort import SessionLog
from .graph import (AttackEdge, AttackGraph, AttackNode, GraphFormatError,
                    parse_graph_document, validate_graph)
from .normalize import CapRange, node_cap


class ExtractionError(RuntimeError):
    code = "extraction_failed"


DEFAULT_PATTERNS: tuple[tuple[str, bool], ...] = (
    (r"\b(?:vulnerab\w*|exploit\w*|injection|sqli|xss|idor|rce|bypass\w*|"
     r"hardcoded|leak\w*|exposed (?:key|secret|credential)s?|"
     r"privilege escalation|flag\{)", True),
    (r"\b(?:nmap|scan\w*|port|subdomain\w*|endpoint\w*|api|login|directory|"
     r"enumerat\w*|recon\w*|header\w*|robots\.txt|ftp|ssh|http)\b", False),
)


@dataclass(frozen=True)
class ExtractionConfig:
    cap: CapRange | None = None
    max_retries: int = 2
    forbid_cycles: bool = True
    prompt_template: str | None = None
    patterns: tuple[tuple[str, bool], ...] = field(default=DEFAULT_PATTERNS)

    def cap_for(self, log: SessionLog) -> CapRange:
        return self.cap if self.cap is not None else node_cap(len(log))


EXTRACTION_TEMPLATE = """\
Read the security exercise log below and produce an attack graph.

Output one JSON document with top-level "nodes" and "edges" arrays and nothing else.
Each node has the fields "id", "name", "info", "vulnerability" and "message_id":
- "id": unique integer, numbered in order of appearance, starting at 1
- "name": short label of the system element, finding or action
- "info": one sentence of supporting context from the log
- "vulnerability": true only for confirmed, exploited weaknesses
- "message_id": index of the log message the node comes from
Each edge is {{"source": <id>, "target": <id>}} and means the attacker progressed from source to target.

Constraints:
- Use at most {max_nodes} nodes (aim for at least {min_nodes}).
{cycle_rule}- Node 1 is the single entry point and corresponds to message 1; connect every other starting point to it.

Log ({count} messages):
{transcript}
"""

CYCLE_RULE = "- The graph must be acyclic: never add an edge that leads back to an earlier node.\n"


def _transcript(log: SessionLog, width: int = 400) -> str:
    lines = []
    for m in log.messages:
        text = " ".join(m.text.split())
        if len(text) > width:
            text = text[:width] + " ..."
        lines.append(f"[{m.index}] {m.role}: {text}")
    return "\n".join(lines)


def build_extraction_prompt(log: SessionLog, config: ExtractionConfig = ExtractionConfig()) -> str:
    cap = config.cap_for(log)
    template = config.prompt_template or EXTRACTION_TEMPLATE
    return template.format(max_nodes=cap.max_nodes, min_nodes=cap.min_nodes,
                           cycle_rule=CYCLE_RULE if config.forbid_cycles else "",
                           count=len(log), transcript=_transcript(log))


def _json_payload(text: str) -> str:
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.S)
    if fenced:
        return fenced.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        return text[start:end + 1]
    return text


def enforce_cap(graph: AttackGraph, max_nodes: int) -> AttackGraph:
    """Remove lowest-degree non-vulnerable, non-root nodes until within cap.

    Each removed node's predecessors are linked to its successors, so
    reachability among the kept nodes is preserved.
    """
    root = graph.root if graph.root is not None else min(graph.nodes)
    nodes = dict(graph.nodes)
    edges = dict(graph.edges)
    while len(nodes) > max_nodes:
        def degree(n):
            return sum(1 for (s, t) in edges if n in (s, t))
        candidates = [n for n, node in nodes.items() if n != root and not node.vulnerable]
        if not candidates:
            warnings.warn(f"cap {max_nodes} unreachable: {len(nodes)} root/vulnerable nodes kept",
                          RuntimeWarning, stacklevel=2)
            break
        victim = min(candidates, key=lambda n: (degree(n), -n))
        preds = [s for (s, t) in edges if t == victim]
        succs = [t for (s, t) in edges if s == victim]
        edges = {k: e for k, e in edges.items() if victim not in k}
        for p in preds:
            for s in succs:
                if p != s and (p, s) not in edges:
                    edges[(p, s)] = AttackEdge(p, s)
        del nodes[victim]
    if len(nodes) == len(graph.nodes):
        return graph
    labels = {k: v for k, v in graph.labels.items() if k in nodes}
    return AttackGraph.build(nodes.values(), edges.values(), graph.root, labels)


def keyword_extract(log: SessionLog, config: ExtractionConfig = ExtractionConfig()) -> AttackGraph:
    """Deterministic stand-in for model extraction.

    Message 1 becomes the entry node; every later message matching a pattern
    becomes a node, chained in message order. Only tool output can confirm a
    vulnerability; an assistant naming one is just an attempt. A message that
    repeats an earlier keyword with the same verdict adds no new node.
    """
    compiled = [(re.compile(p, re.I), vuln) for p, vuln in config.patterns]
    first = log.messages[0]
    nodes = [AttackNode(1, "User Prompt", _snippet(first.text), False, 1)]
    seen = set()
    for m in log.messages[1:]:
        hits = [(rx.search(m.text), vuln) for rx, vuln in compiled]
        hits = [(h, v) for h, v in hits if h]
        if not hits:
            continue
        vulnerable = m.role == "tool" and any(v for _, v in hits)
        keyword = next((h for h, v in hits if v == vulnerable), hits[0][0]).group(0)
        if (keyword.lower(), vulnerable) in seen:
            continue
        seen.add((keyword.lower(), vulnerable))
        name = f"{keyword.strip().title()} (msg {m.index})"
        nodes.append(AttackNode(len(nodes) + 1, name, _snippet(m.text), vulnerable, m.index))
    edges = [AttackEdge(a.id, b.id) for a, b in zip(nodes, nodes[1:])]
    graph = AttackGraph.build(nodes, edges)
    return enforce_cap(graph, config.cap_for(log).max_nodes)


def _snippet(text: str, width: int = 120) -> str:
    text = " ".join(text.split())
    return text if len(text) <= width else text[:width - 3] + "..."


def extract_graph(log: SessionLog, inference=None,
                  config: ExtractionConfig = ExtractionConfig()) -> AttackGraph:
    """Extract a validated attack graph from ``log``.

    Unparsable or cyclic responses are retried up to ``max_retries`` times,
    then ``ExtractionError`` is raised.
    """
    if inference is None:
        return keyword_extract(log, config)
    cap = config.cap_for(log)
    prompt = build_extraction_prompt(log, config)
    problems = []
    for attempt in range(config.max_retries + 1):
        try:
            response = inference(prompt, temperature=0.0, timeout=120.0)
            graph = parse_graph_document(_json_payload(response or ""))
        except (GraphFormatError, json.JSONDecodeError) as exc:
            problems.append(f"attempt {attempt + 1}: {exc}")
            continue
        except Exception as exc:
            problems.append(f"attempt {attempt + 1}: inference error {exc}")
            continue
        report = validate_graph(graph)
        if not report.ok:
            problems.append(f"attempt {attempt + 1}: " + "; ".join(f"{c}: {m}" for c, m in report.errors))
            continue
        return enforce_cap(graph, cap.max_nodes)
    raise ExtractionError("extraction failed: " + " | ".join(problems))
