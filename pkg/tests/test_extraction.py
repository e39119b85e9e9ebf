import json
import random

import networkx as nx
import pytest

from cutrope import (CapRange, ExtractionConfig, ExtractionError, extract_graph, fixture_text,
                     keyword_extract, parse_session_log, validate_graph)
from cutrope.extraction import build_extraction_prompt, enforce_cap
from cutrope.inference import StaticCompletion


def chat_log(n, seed=0):
    rng = random.Random(seed)
    words = ["nmap scan", "login page", "api endpoint", "idor vulnerability confirmed",
             "nothing interesting", "sqli injection works", "ftp banner"]
    recs = []
    for i in range(1, n + 1):
        role = "user" if i == 1 else ("tool" if i % 2 else "assistant")
        recs.append(json.dumps({"index": i, "role": role, "text": rng.choice(words), "tokens": 10}))
    return parse_session_log("\n".join(recs))


def big_document(n, vulnerable):
    nodes = [{"id": i, "name": f"s{i}", "info": "", "vulnerability": i in vulnerable,
              "message_id": i} for i in range(1, n + 1)]
    edges = [{"source": i, "target": i + 1} for i in range(1, n)]
    edges += [{"source": 1, "target": i} for i in range(3, n + 1, 4)]
    return json.dumps({"nodes": nodes, "edges": edges})


def test_two_node_stub_response():
    log = chat_log(12)
    g = extract_graph(log, StaticCompletion(fixture_text("two_node.json")))
    assert len(g.nodes) == 2 and len(g.edges) == 1


def test_fenced_response_accepted():
    body = "Here you go:\n```json\n" + fixture_text("two_node.json") + "\n```\n"
    assert len(extract_graph(chat_log(12), StaticCompletion(body)).nodes) == 2


def test_cap_reduction_thirty_to_twentyfive():
    vulnerable = {7, 19, 30}
    client = StaticCompletion(big_document(30, vulnerable))
    g = extract_graph(chat_log(1000), client)
    assert len(g.nodes) == 25
    assert 1 in g.nodes and vulnerable <= set(g.nodes)
    assert validate_graph(g).ok


def test_enforce_cap_preserves_reachability():
    from cutrope import parse_graph_document
    g = parse_graph_document(big_document(30, {30}))
    small = enforce_cap(g, 8)
    assert len(small.nodes) == 8 and 30 in small.nodes
    before, after = g.to_networkx(), small.to_networkx()
    for u in small.nodes:
        assert nx.descendants(after, u) == nx.descendants(before, u) & set(small.nodes)


def test_cyclic_response_fails_without_retries():
    doc = {"nodes": [{"id": 1}, {"id": 2, "vulnerability": True}, {"id": 3}],
           "edges": [{"source": 1, "target": 2}, {"source": 2, "target": 3}, {"source": 3, "target": 2}]}
    client = StaticCompletion(json.dumps(doc))
    with pytest.raises(ExtractionError, match="cycle") as exc:
        extract_graph(chat_log(12), client, ExtractionConfig(max_retries=0))
    assert exc.value.code == "extraction_failed"
    assert len(client.calls) == 1


def test_retry_recovers():
    client = StaticCompletion("not json at all", fixture_text("two_node.json"))
    g = extract_graph(chat_log(12), client, ExtractionConfig(max_retries=1))
    assert len(g.nodes) == 2 and len(client.calls) == 2


def test_prompt_contents():
    log = chat_log(72)
    prompt = build_extraction_prompt(log)
    assert "at most 9 nodes" in prompt
    for f in ("id", "name", "info", "vulnerability", "message_id"):
        assert f'"{f}"' in prompt
    assert "acyclic" in prompt
    assert "acyclic" not in build_extraction_prompt(log, ExtractionConfig(forbid_cycles=False))
    assert "at most 6 nodes" in build_extraction_prompt(log, ExtractionConfig(cap=CapRange(4, 6)))


def test_keyword_stub_on_bundled_log():
    log = parse_session_log(fixture_text("session_log.jsonl"))
    g = keyword_extract(log)
    assert g.sources() == [1] and g.nodes[1].message_id == 1
    vulnerable = {g.nodes[n].message_id for n in g.nodes if g.nodes[n].vulnerable}
    # only tool messages confirm findings
    assert vulnerable == {9, 11}
    assert len(g.nodes) <= 5 + 4 and validate_graph(g).ok
    assert keyword_extract(log) == g  # pure function of the log


@pytest.mark.parametrize("seed", range(10))
def test_stub_deterministic_and_valid(seed):
    log = chat_log(random.Random(seed).randint(2, 300), seed)
    g = extract_graph(log)
    assert g == extract_graph(log)
    assert validate_graph(g).ok
    assert len(g.nodes) <= ExtractionConfig().cap_for(log).max_nodes
    names = [(n.name.split(" (msg")[0], n.vulnerable) for n in g.nodes.values()]
    assert len(names) == len(set(names))


def test_cap_unreachable_warns_and_keeps_vulnerable():
    from cutrope import parse_graph_document
    g = parse_graph_document(big_document(10, set(range(2, 11))))
    with pytest.warns(RuntimeWarning, match="unreachable"):
        small = enforce_cap(g, 5)
    assert small == g
