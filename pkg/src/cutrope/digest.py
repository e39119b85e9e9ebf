"""Strategic digests rendered from an equilibrium.

Two modes share one classification step: ``algorithmic`` fills fixed
templates; ``llm`` sends a structured prompt to a text-completion client and
falls back to the algorithmic text whenever that call fails.
"""
from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass, field

from .equilibrium import EquilibriumSolution
from .graph import AttackGraph
from .normalize import AttackPath, NormalizedGraph

log = logging.getLogger(__name__)

BOTTLENECK_THRESHOLD = 0.95
# the prose variant of the bottleneck rule; selectable via bottleneck_threshold
PROSE_BOTTLENECK_THRESHOLD = 0.5
HIGH_RISK_THRESHOLD = 0.90
DEFAULT_TIMEOUT = 50.0
TEMPERATURE = 0.3

MODES = ("algorithmic", "llm")
ROLES = ("attacker", "defender", "merged")

SECTION_PATHS = "Identified Attack Paths"
SECTION_BOTTLENECKS = "Critical Bottlenecks"
SECTION_CRITICAL = "Critical Nodes"
SECTION_HIGH_RISK = "High-Risk Transitions"
SECTION_GUIDANCE = "Tactical Guidance"
SECTIONS = (SECTION_PATHS, SECTION_BOTTLENECKS, SECTION_CRITICAL, SECTION_HIGH_RISK, SECTION_GUIDANCE)

HEADER = "## Game-Theoretic Security Analysis (added to the system prompt)"

_POSITIVE = 1e-9


@dataclass(frozen=True)
class TransitionClassification:
    bottlenecks: tuple[tuple[tuple[int, int], float], ...]
    high_risk: tuple[tuple[tuple[int, int], float], ...]
    critical_nodes: tuple[int, ...]
    bottleneck_threshold: float = BOTTLENECK_THRESHOLD
    high_risk_threshold: float = HIGH_RISK_THRESHOLD


@dataclass(frozen=True)
class Digest:
    text: str
    mode: str
    role: str
    fallback_used: bool
    source_solution: EquilibriumSolution = field(repr=False)
    classification: TransitionClassification | None = field(default=None, repr=False)
    failure: str | None = None


@dataclass(frozen=True)
class InferenceRequest:
    prompt: str
    temperature: float = TEMPERATURE
    model_hint: str = "default"


def _score(graph: AttackGraph, key: tuple[int, int]) -> float:
    s = graph.edges[key].score
    return 1.0 if s is None else s


def active_edges(solution: EquilibriumSolution, graph: AttackGraph) -> list[tuple[int, int]]:
    """Non-artificial edges on paths the attacker plays with positive probability."""
    seen: dict[tuple[int, int], None] = {}
    for _, path, p in solution.attacker_ranked():
        if p <= _POSITIVE:
            continue
        for key in zip(path.nodes, path.nodes[1:]):
            if not graph.nodes[key[1]].artificial:
                seen.setdefault(key, None)
    return list(seen)


def classify_transitions(solution: EquilibriumSolution, normalized: NormalizedGraph,
                         bottleneck_threshold: float = BOTTLENECK_THRESHOLD,
                         high_risk_threshold: float = HIGH_RISK_THRESHOLD) -> TransitionClassification:
    g = normalized.graph
    edges = active_edges(solution, g)
    scored = [(k, _score(g, k)) for k in edges]
    bottlenecks = sorted(((k, p) for k, p in scored if p < bottleneck_threshold),
                         key=lambda kp: (kp[1], kp[0]))
    high_risk = sorted(((k, p) for k, p in scored if p > high_risk_threshold),
                       key=lambda kp: (-kp[1], kp[0]))
    critical = tuple(n for n, p in solution.defender_ranked() if p > _POSITIVE)
    return TransitionClassification(tuple(bottlenecks), tuple(high_risk), critical,
                                    bottleneck_threshold, high_risk_threshold)


# --------------------------------------------------------------------------
# algorithmic rendering
# --------------------------------------------------------------------------

def _name(graph: AttackGraph, node: int) -> str:
    return graph.nodes[node].name


def path_notation(path: AttackPath, graph: AttackGraph) -> str:
    """``A →[66%] B ⋯→[30%] C ⋯→ Target (C)``; dotted arrows mark synthetic edges."""
    parts = [_name(graph, path.nodes[0])]
    for s, t in zip(path.nodes, path.nodes[1:]):
        e = graph.edges[(s, t)]
        if graph.nodes[t].artificial:
            parts.append(f"⋯→ Target ({_name(graph, s)})")
            continue
        arrow = "⋯→" if e.synthetic else "→"
        parts.append(f"{arrow}[{round(100 * _score(graph, (s, t)))}%] {_name(graph, t)}")
    return " ".join(parts)


def _edge_line(graph: AttackGraph, key: tuple[int, int], p: float) -> str:
    return f"- `{_name(graph, key[0])} -> {_name(graph, key[1])}`: {100 * p:.1f}% success rate"


def _paths_section(solution, graph, by_probability: bool) -> list[str]:
    rows = solution.attacker_ranked()
    if not by_probability:
        rows = sorted(rows, key=lambda r: r[0])
    lines = [f"**{SECTION_PATHS}:**"]
    for pid, path, p in rows:
        lines.append(f"Path {pid} (p={p:.6f}): {path_notation(path, graph)}")
    return lines


def _edges_section(title: str, subtitle: str, items, graph) -> list[str]:
    lines = [f"**{title}** ({subtitle}):"]
    lines += [_edge_line(graph, k, p) for k, p in items] or ["- none"]
    return lines


def _critical_section(solution, classification, graph) -> list[str]:
    lines = [f"**{SECTION_CRITICAL}** (equilibrium inspection allocation):"]
    for n in classification.critical_nodes:
        lines.append(f"- {_name(graph, n)} (ID: {graph.label(n)}): {100 * solution.defender[n]:.2f}%")
    if not classification.critical_nodes:
        lines.append("- none")
    return lines


def _attacker_guidance(solution, classification, graph) -> list[str]:
    pid, path, p = solution.attacker_ranked()[0]
    lines = [f"**{SECTION_GUIDANCE}** (attacker):",
             f"- Prioritise Path {pid} ({100 * p:.1f}% of equilibrium play): "
             f"{path.arrow(graph)}."]
    if classification.high_risk:
        k, q = classification.high_risk[0]
        lines.append(f"- Press the strongest transition `{_name(graph, k[0])} -> "
                     f"{_name(graph, k[1])}` ({100 * q:.1f}%).")
    if classification.bottlenecks:
        k, q = classification.bottlenecks[0]
        lines.append(f"- Find an alternative to `{_name(graph, k[0])} -> {_name(graph, k[1])}` "
                     f"({100 * q:.1f}%), the weakest step.")
    if classification.critical_nodes:
        names = ", ".join(_name(graph, n) for n in classification.critical_nodes)
        lines.append(f"- Expect inspections at: {names}.")
    lines.append(f"- Equilibrium success probability: {solution.value:.6f}.")
    return lines


def _defender_guidance(solution, classification, graph) -> list[str]:
    lines = [f"**{SECTION_GUIDANCE}** (defender):"]
    if classification.critical_nodes:
        alloc = ", ".join(f"{_name(graph, n)} {100 * solution.defender[n]:.1f}%"
                          for n in classification.critical_nodes)
        lines.append(f"- Allocate inspections: {alloc}.")
    else:
        lines.append("- No inspectable node cuts the attack; monitor the targets directly.")
    if classification.high_risk:
        k, q = classification.high_risk[0]
        lines.append(f"- Harden `{_name(graph, k[0])} -> {_name(graph, k[1])}` first "
                     f"({100 * q:.1f}% attacker success).")
    if classification.bottlenecks:
        k, q = classification.bottlenecks[0]
        lines.append(f"- `{_name(graph, k[0])} -> {_name(graph, k[1])}` already slows the "
                     f"attacker ({100 * q:.1f}%).")
    lines.append(f"- Attacker success can be held below {solution.value:.6f}.")
    return lines


def _degeneracy_notice(solution) -> list[str]:
    return ["**Degeneracy Notice:**",
            f"- Reason: {solution.reason}. No inspectable node lies between the entry point "
            "and at least one target, so the reported value 0.000000 is a convention, "
            "not a defender win."]


def _role_body(role: str, solution, classification, graph) -> str:
    paths = _paths_section(solution, graph, by_probability=(role == "attacker"))
    bottle = _edges_section(SECTION_BOTTLENECKS, "attack weaknesses",
                            classification.bottlenecks, graph)
    risk = _edges_section(SECTION_HIGH_RISK, "weak defenses", classification.high_risk, graph)
    critical = _critical_section(solution, classification, graph)
    if role == "attacker":
        blocks = [paths, risk, bottle, critical, _attacker_guidance(solution, classification, graph)]
    else:
        blocks = [critical, risk, bottle, paths, _defender_guidance(solution, classification, graph)]
    title = "### Attacker View" if role == "attacker" else "### Defender View"
    return "\n\n".join([title] + ["\n".join(b) for b in blocks])


def render_algorithmic_digest(solution: EquilibriumSolution, classification: TransitionClassification,
                              role: str, graph: AttackGraph) -> Digest:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    head = [HEADER, f"Strategic position (equilibrium attacker success): {solution.value:.6f}"]
    if solution.degenerate:
        head.append("\n".join(_degeneracy_notice(solution)))
    roles = ("attacker", "defender") if role == "merged" else (role,)
    body = [_role_body(r, solution, classification, graph) for r in roles]
    text = "\n\n".join(head + body) + "\n"
    return Digest(text, "algorithmic", role, False, solution, classification)


# --------------------------------------------------------------------------
# llm mode
# --------------------------------------------------------------------------

PROMPT_TEMPLATE = """\
You are a senior offensive and defensive security strategist. You receive the \
output of a zero-sum attack-graph game that was solved for the current \
penetration test. The attacker advances along directed attack paths toward \
vulnerable targets, and the defender inspects intermediate nodes; an \
inspection on the attacker's path cuts that path before the target is reached. \
Every edge carries an effort score between 0 and 1, where 1 means the \
transition happened within the same message as the vulnerability and values \
near 0 mean the transition was expensive or unreachable. The equilibrium value \
is the attacker success probability that both sides can guarantee.

Write guidance for the {role} perspective. Use only the data below. Do not \
invent hosts, services, credentials or vulnerabilities that are not named in \
the data, and do not repeat the raw tables.

Equilibrium tables:
{tables}

Edge effort scores:
{edges}

Precomputed bottlenecks (score below {bottleneck:.2f}):
{bottlenecks}

Precomputed high-risk transitions (score above {high_risk:.2f}):
{high_risk_edges}

Precomputed critical nodes (defender support, highest first):
{critical}

Answer in markdown with exactly these five sections, in this order, each \
introduced by a level-three heading:

### {s1}
List the attack paths that receive positive probability, most likely first, \
using arrow notation with the edge scores as bracketed percentages. Explain \
in one sentence why the leading path dominates.

### {s2}
Name the weakest transitions on the played paths and what they imply: where \
the attacker struggles and where alternatives should be sought.

### {s3}
Name the nodes where the defender concentrates inspections and their \
probabilities, and say what an inspection there interrupts.

### {s4}
Name the strongest transitions, where the attacker progresses easily and \
defenses appear minimal.

### {s5}
Give three to five concrete, ordered next actions for the {role} perspective \
that follow from the sections above. Each action must reference a node or \
transition by name.

If a list in the data says none, state that the section has no entries rather \
than omitting it. Keep the whole answer under 350 words, be specific, and \
prefer short imperative sentences.
"""


def _template_body_words() -> int:
    import re
    return len(re.sub(r"\{[^}]*\}", " ", PROMPT_TEMPLATE).split())


def _edge_listing(items, graph) -> str:
    if not items:
        return "none"
    return "\n".join(f"- {_name(graph, k[0])} -> {_name(graph, k[1])}: {p:.2f}" for k, p in items)


def build_llm_prompt(normalized: NormalizedGraph, solution: EquilibriumSolution,
                     classification: TransitionClassification | None = None,
                     role: str = "merged", model_hint: str = "default") -> InferenceRequest:
    from .equilibrium import format_solution_tables

    g = normalized.graph
    if classification is None:
        classification = classify_transitions(solution, normalized)
    edges = [(k, _score(g, k)) for k in sorted(g.edges) if not g.nodes[k[1]].artificial]
    critical = ("\n".join(f"- {_name(g, n)} (ID: {g.label(n)}): {solution.defender[n]:.6f}"
                          for n in classification.critical_nodes) or "none")
    perspective = {"attacker": "attacker", "defender": "defender",
                   "merged": "combined attacker and defender"}[role]
    prompt = PROMPT_TEMPLATE.format(
        role=perspective,
        tables=format_solution_tables(solution, normalized).rstrip(),
        edges=_edge_listing(edges, g),
        bottleneck=classification.bottleneck_threshold,
        bottlenecks=_edge_listing(classification.bottlenecks, g),
        high_risk=classification.high_risk_threshold,
        high_risk_edges=_edge_listing(classification.high_risk, g),
        critical=critical,
        s1=SECTION_PATHS, s2=SECTION_BOTTLENECKS, s3=SECTION_CRITICAL,
        s4=SECTION_HIGH_RISK, s5=SECTION_GUIDANCE,
    )
    return InferenceRequest(prompt, TEMPERATURE, model_hint)


def _call_with_timeout(inference, request: InferenceRequest, timeout: float) -> str:
    pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
    try:
        fut = pool.submit(inference, request.prompt, temperature=request.temperature, timeout=timeout)
        return fut.result(timeout=timeout)
    finally:
        pool.shutdown(wait=False)


def generate_digest(normalized: NormalizedGraph, solution: EquilibriumSolution,
                    mode: str = "algorithmic", role: str = "merged", inference=None,
                    timeout: float = DEFAULT_TIMEOUT,
                    bottleneck_threshold: float = BOTTLENECK_THRESHOLD,
                    high_risk_threshold: float = HIGH_RISK_THRESHOLD) -> Digest:
    """Render a digest; never raises on inference problems.

    In ``llm`` mode a missing client, an exception, a timeout or an empty
    response all yield the algorithmic text with ``fallback_used=True``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown digest mode {mode!r}")
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    classification = classify_transitions(solution, normalized, bottleneck_threshold,
                                          high_risk_threshold)
    fallback = render_algorithmic_digest(solution, classification, role, normalized.graph)
    if mode == "algorithmic":
        return fallback

    request = build_llm_prompt(normalized, solution, classification, role)
    failure = None
    if inference is None:
        failure = "no inference client configured"
    else:
        try:
            text = _call_with_timeout(inference, request, timeout)
        except concurrent.futures.TimeoutError:
            failure = f"inference timed out after {timeout}s"
        except Exception as exc:  # any client failure downgrades to the template
            failure = f"inference failed: {exc}"
        else:
            if isinstance(text, str) and text.strip():
                return Digest(text, "llm", role, False, solution, classification)
            failure = "inference returned an empty response"
    log.warning("digest fallback to algorithmic mode: %s", failure)
    return Digest(fallback.text, "llm", role, True, solution, classification, failure)
