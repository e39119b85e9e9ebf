"""Extract a graph from a log with the offline stub and with a canned model answer.

    python3 demos/extraction.py
"""
from cutrope import extract_graph, fixture_text, parse_session_log, serialize_graph_document
from cutrope.extraction import build_extraction_prompt
from cutrope.inference import StaticCompletion

log = parse_session_log(fixture_text("session_log.jsonl"))
print(build_extraction_prompt(log).split("Log (")[0])

stub = extract_graph(log)
print("keyword stub:")
for node in stub.nodes.values():
    print(f"  {node.id}: {node.name}{'  [vulnerable]' if node.vulnerable else ''}")

canned = StaticCompletion(fixture_text("two_node.json"))
print("\ncanned model answer:")
print(serialize_graph_document(extract_graph(log, canned)))
