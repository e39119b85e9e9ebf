"""Score edges from a session log and show the per-edge metrics.

    python3 demos/effort_scoring.py
"""
from cutrope import EffortWeights, fixture_text, keyword_extract, normalize, parse_session_log, score_edges
from cutrope.effort import edge_metrics

log = parse_session_log(fixture_text("session_log.jsonl"))
print(f"{len(log)} messages, {log.total_tokens} tokens, cost {log.total_cost:.3f}")

norm = normalize(keyword_extract(log))
scored = score_edges(norm, log, EffortWeights())
g = scored.graph
print(f"\n{'edge':32} {'m':>3} {'tokens':>7} {'cost':>7} {'score':>7}")
for key, edge in sorted(g.edges.items()):
    if g.nodes[edge.target].artificial:
        continue
    m = edge_metrics(norm.graph.edges[key], norm, log)
    name = f"{g.nodes[key[0]].name} -> {g.nodes[key[1]].name}"
    print(f"{name[:32]:32} {m.m:>3} {m.t:>7} {m.c:>7.3f} {edge.score:>7.3f}")
