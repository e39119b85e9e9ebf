import json
import time

import pytest

from conftest import make_graph
from cutrope import (LoopConfig, ScriptedAgent, ScriptedGraphUpdater, fixture_text, load_fixture,
                     run_loop, serialize_graph_document)
from cutrope.loop import (DIGEST_BEGIN, DIGEST_END, digest_block_count, inject_digest,
                          should_trigger)


def steps(n, graph_at=None):
    out = []
    for i in range(1, n + 1):
        s = {"action": f"a{i}", "status": "ok", "observation": f"o{i}"}
        if graph_at and i in graph_at:
            s["graph"] = json.loads(serialize_graph_document(graph_at[i]))
        out.append(s)
    return out


def run(script, **cfg):
    agent = ScriptedAgent(script)
    cfg.setdefault("max_interactions", len(script))
    rec = run_loop(agent, ScriptedGraphUpdater(), LoopConfig(**cfg))
    return agent, rec


def test_should_trigger():
    assert should_trigger(5) and not should_trigger(4) and should_trigger(10)
    assert should_trigger(3, LoopConfig(trigger_every=3)) and not should_trigger(0)
    assert all(should_trigger(i, LoopConfig(trigger_every=1)) for i in range(1, 20))


def test_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(trigger_every=0)
    with pytest.raises(ValueError):
        LoopConfig(analysis_budget=0)
    with pytest.raises(ValueError):
        LoopConfig(max_interactions=-1)


def test_inject_digest():
    base = "You are an agent."
    once = inject_digest(base, "first")
    assert once.startswith(base) and digest_block_count(once) == 1
    assert inject_digest(once, "first") == once
    twice = inject_digest(once, "second")
    assert digest_block_count(twice) == 1 and "second" in twice and "first" not in twice
    assert twice.count(DIGEST_END) == 1
    assert inject_digest("", "x") == f"{DIGEST_BEGIN}\nx\n{DIGEST_END}\n"


def test_twelve_interactions_two_triggers():
    g = load_fixture("two_path")
    _, rec = run(steps(12, {1: g}))
    assert [t["i"] for t in rec.triggers] == [5, 10]
    assert all(t["status"] == "ok" for t in rec.triggers)
    assert rec.terminal_reason == "max_interactions"
    assert rec.strategic_position == pytest.approx(0.2, abs=1e-9)


def test_twenty_three_interactions_bundled_script():
    agent = ScriptedAgent.from_jsonl(fixture_text("scripted_steps.jsonl"))
    rec = run_loop(agent, ScriptedGraphUpdater(), LoopConfig(max_interactions=23))
    assert len(rec.interactions) == 23
    assert [t["i"] for t in rec.triggers] == [5, 10, 15, 20]
    assert all(digest_block_count(p) == 1 for p in agent.prompts)
    assert all(e["digest_blocks"] == 1 for e in rec.interactions)
    assert all(t.get("digest_blocks", 1) == 1 for t in rec.triggers)


def test_digest_visible_after_trigger_only():
    g = load_fixture("two_path")
    agent, rec = run(steps(7, {1: g}))
    assert all(d is None for d in agent.digests[:5])
    assert agent.digests[5] is not None
    assert rec.triggers[0]["digest"] in agent.prompts[5]


def test_strategic_position_constant_between_triggers():
    g1 = load_fixture("two_path")
    g2 = make_graph(3, [(1, 2), (2, 3)], {3})
    _, rec = run(steps(10, {1: g1, 6: g2}))
    assert [t["strategic_position"] for t in rec.triggers] == [pytest.approx(0.2), 0.0]
    assert rec.strategic_position == 0.0


def test_single_path_graph_at_first_trigger():
    single = make_graph(4, [(1, 2), (2, 3), (3, 4)], {4})
    _, rec = run(steps(8, {5: single}))
    t = rec.triggers[0]
    assert t["i"] == 5 and t["strategic_position"] == 0.0
    assert t["equilibrium"]["attacker"][0]["probability"] == 1.0
    assert len(rec.interactions) == 8  # the loop carries on


def test_zero_interactions():
    agent, rec = run(steps(3), max_interactions=0)
    assert rec.interactions == [] and rec.triggers == []
    assert rec.terminal_reason == "max_interactions" and agent.cursor == 0


def test_driver_error():
    script = steps(6)
    script[2]["error"] = "tool crashed"
    _, rec = run(script)
    assert rec.terminal_reason == "driver_error"
    assert rec.interactions[-1]["status"] == "error" and "tool crashed" in rec.interactions[-1]["observation"]
    assert len(rec.interactions) == 3


def test_agent_success_stops():
    script = steps(9)
    script[6]["success"] = True
    _, rec = run(script)
    assert rec.terminal_reason == "agent_success" and len(rec.interactions) == 7


def test_success_threshold():
    g = load_fixture("two_path")
    _, rec = run(steps(12, {1: g}), success_threshold=0.1)
    assert rec.terminal_reason == "success_threshold"
    assert len(rec.interactions) == 5


def test_analysis_error_keeps_stale_digest():
    # no vulnerable node yet: nothing to solve
    g = make_graph(3, [(1, 2), (2, 3)])
    agent, rec = run(steps(6, {1: g}))
    t = rec.triggers[0]
    assert t["status"] == "analysis_error" and t["stale_digest"]
    assert digest_block_count(agent.prompts[5]) == 1 and agent.digests[5] is None


def test_analysis_timeout_keeps_stale_digest(monkeypatch):
    import cutrope.loop as loop_mod

    real = loop_mod.analyse
    calls = []

    def slow(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            time.sleep(0.5)
        return real(*args, **kwargs)

    monkeypatch.setattr(loop_mod, "analyse", slow)
    g = load_fixture("two_path")
    agent, rec = run(steps(16, {1: g}), analysis_budget=0.2)
    first, second, third = rec.triggers
    assert first["status"] == "ok" and second["status"] == "analysis_timeout"
    assert agent.digests[10] is agent.digests[5] is not None
    assert second["latency"] < 0.5
    # the next trigger is not stuck behind the overrunning analysis
    assert third["status"] == "ok"


def test_run_record_serialisation():
    g = load_fixture("two_path")
    _, rec = run(steps(6, {1: g}))
    events = [json.loads(line) for line in rec.to_jsonl().splitlines()]
    assert [e["kind"] for e in events] == ["interaction"] * 5 + ["trigger", "interaction", "end"]
    assert events[-1]["terminal_reason"] == "max_interactions"
    text = rec.to_jsonl().lower()
    assert "api_key" not in text and "authorization" not in text
