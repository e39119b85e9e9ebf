"""Normalise a graph with two entry points and list its attack paths.

    python3 demos/normalize_and_paths.py
"""
from cutrope import enumerate_attack_paths, load_fixture, normalize, validate_graph

graph = load_fixture("alt_entry")
report = validate_graph(graph)
print("validation:", "ok" if report.ok else "errors")
for code, msg in report.warnings:
    print(f"  warning [{code}] {msg}")

norm = normalize(graph)
print("\nsteps applied:", ", ".join(p["step"] for p in norm.provenance))
print("root:", norm.graph.label(norm.root))
for i, path in enumerate(enumerate_attack_paths(norm), 1):
    print(f"path {i}: {path.arrow(norm.graph)}")
