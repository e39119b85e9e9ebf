"""Render digests for each role, then show the llm fallback.

    python3 demos/digest.py
"""
from cutrope import fixture_text, generate_digest, load_fixture, normalize, parse_session_log, score_edges, solve_equilibrium
from cutrope.inference import FailingCompletion

log = parse_session_log(fixture_text("session_log.jsonl"))
norm = score_edges(normalize(load_fixture("five_path")), log)
sol = solve_equilibrium(norm)

print(generate_digest(norm, sol, role="merged").text)

d = generate_digest(norm, sol, mode="llm", role="defender", inference=FailingCompletion())
print(f"llm mode with a failing client: fallback_used={d.fallback_used} ({d.failure})")
