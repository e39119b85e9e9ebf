"""Replay a scripted 23-step session through the feedback loop.

    python3 demos/feedback_loop.py
"""
from cutrope import LoopConfig, ScriptedAgent, ScriptedGraphUpdater, fixture_text, run_loop

agent = ScriptedAgent.from_jsonl(fixture_text("scripted_steps.jsonl"))
record = run_loop(agent, ScriptedGraphUpdater(), LoopConfig(trigger_every=5, max_interactions=23))

for t in record.triggers:
    extra = (f"position {t['strategic_position']:.6f}" if t["status"] == "ok"
             else t.get("error", "stale digest kept"))
    print(f"trigger at i={t['i']:2d}: {t['status']:14} {extra}")
print(f"terminal reason: {record.terminal_reason}, final position {record.strategic_position:.6f}")
print("\nlast digest seen by the agent:\n")
print(agent.prompts[-1])
