"""Closed feedback loop: agent steps, graph refresh, periodic re-analysis.

Every ``trigger_every`` interactions the current graph is normalised,
scored, solved and turned into a digest that replaces the previous one in
the agent's system prompt. Analysis runs on a worker thread; if it overruns
its budget the loop keeps going with the stale digest.
"""
from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .digest import Digest, generate_digest
from .effort import EffortWeights, SessionLog, score_edges
from .equilibrium import EquilibriumSolution, SolverConfig, solve_equilibrium
from .graph import AttackGraph
from .normalize import normalize

DIGEST_BEGIN = "<!-- strategic-digest:begin -->"
DIGEST_END = "<!-- strategic-digest:end -->"
# occupies the digest slot until the first analysis completes
PENDING_DIGEST = "## Game-Theoretic Security Analysis\n\nNo equilibrium computed yet; explore and record findings."


@dataclass(frozen=True)
class LoopConfig:
    trigger_every: int = 5
    max_interactions: int = 50
    success_threshold: float = 1.0
    digest_mode: str = "algorithmic"
    role: str = "attacker"
    analysis_budget: float = 50.0
    execution_budget: float = 70.0
    system_prompt: str = "You are a security testing agent."

    def __post_init__(self):
        if self.trigger_every < 1:
            raise ValueError("trigger_every must be >= 1")
        if self.max_interactions < 0:
            raise ValueError("max_interactions must be >= 0")
        if self.analysis_budget <= 0 or self.execution_budget <= 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True)
class Outcome:
    status: str
    observation: str = ""
    success: bool = False


class AgentDriver(Protocol):
    def select_action(self, graph: AttackGraph, digest: Digest | None, system_prompt: str) -> Any: ...

    def execute(self, action: Any) -> Outcome: ...


class GraphUpdater(Protocol):
    def update_graph(self, graph: AttackGraph, action: Any, outcome: Outcome) -> AttackGraph: ...


@dataclass
class LoopState:
    graph: AttackGraph
    digest: Digest | None = None
    strategic_position: float = 0.0
    interaction: int = 0
    system_prompt: str = ""


@dataclass
class RunRecord:
    interactions: list[dict] = field(default_factory=list)
    triggers: list[dict] = field(default_factory=list)
    terminal_reason: str = ""
    final_graph: AttackGraph | None = None
    strategic_position: float = 0.0

    def events(self) -> list[dict]:
        evs = [dict(kind="interaction", **e) for e in self.interactions]
        evs += [dict(kind="trigger", **t) for t in self.triggers]
        evs.sort(key=lambda e: (e["i"], e["kind"] != "interaction"))
        evs.append({"kind": "end", "terminal_reason": self.terminal_reason,
                    "strategic_position": self.strategic_position,
                    "interactions": len(self.interactions)})
        return evs

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, default=str) + "\n" for e in self.events())


def should_trigger(i: int, config: LoopConfig = LoopConfig()) -> bool:
    return i >= 1 and i % config.trigger_every == 0


def inject_digest(system_prompt: str, digest: Digest | str) -> str:
    """Replace (or append) the sentinel-delimited digest block."""
    text = digest.text if isinstance(digest, Digest) else digest
    block = f"{DIGEST_BEGIN}\n{text.rstrip()}\n{DIGEST_END}"
    start = system_prompt.find(DIGEST_BEGIN)
    if start == -1:
        base = system_prompt.rstrip()
        return f"{base}\n\n{block}\n" if base else block + "\n"
    end = system_prompt.find(DIGEST_END, start)
    end = len(system_prompt) if end == -1 else end + len(DIGEST_END)
    return system_prompt[:start] + block + system_prompt[end:]


def digest_block_count(system_prompt: str) -> int:
    return system_prompt.count(DIGEST_BEGIN)


@dataclass
class Analysis:
    solution: EquilibriumSolution
    digest: Digest


def analyse(graph: AttackGraph, config: LoopConfig, solver: SolverConfig = SolverConfig(),
            log: SessionLog | None = None, weights: EffortWeights = EffortWeights(),
            inference=None) -> Analysis:
    normalized = normalize(graph)
    if log is not None and len(log) >= 2:
        normalized = score_edges(normalized, log, weights)
    solution = solve_equilibrium(normalized, solver)
    digest = generate_digest(normalized, solution, config.digest_mode, config.role, inference,
                             timeout=config.analysis_budget)
    return Analysis(solution, digest)


def _snapshot(solution: EquilibriumSolution) -> dict:
    return {"value": solution.value,
            "defender": {str(k): v for k, v in solution.defender.items()},
            "attacker": [{"path": list(p.nodes), "probability": q}
                         for p, q in zip(solution.paths, solution.attacker)],
            "degenerate": solution.degenerate, "reason": solution.reason}


def run_loop(agent: AgentDriver, extractor: GraphUpdater, config: LoopConfig = LoopConfig(),
             initial_graph: AttackGraph | None = None, solver: SolverConfig = SolverConfig(),
             inference=None, session_log: Callable[[], SessionLog | None] | None = None,
             weights: EffortWeights = EffortWeights(), clock: Callable[[], float] = time.monotonic) -> RunRecord:
    """Drive the agent until success, the interaction limit or a driver error."""
    from .graph import AttackNode

    graph = initial_graph or AttackGraph.build([AttackNode(1, "User Prompt", "", False, 1)])
    state = LoopState(graph, system_prompt=inject_digest(config.system_prompt, PENDING_DIGEST))
    record = RunRecord()
    pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
    try:
        while state.strategic_position < config.success_threshold and state.interaction < config.max_interactions:
            t0 = clock()
            try:
                action = agent.select_action(state.graph, state.digest, state.system_prompt)
                outcome = agent.execute(action)
                state.graph = extractor.update_graph(state.graph, action, outcome)
            except Exception as exc:
                record.interactions.append({"i": state.interaction + 1, "action": None,
                                            "status": "error", "observation": str(exc),
                                            "started": t0, "finished": clock(),
                                            "digest_blocks": digest_block_count(state.system_prompt)})
                record.terminal_reason = "driver_error"
                break
            state.interaction += 1
            record.interactions.append({"i": state.interaction, "action": str(action),
                                        "status": outcome.status,
                                        "observation": outcome.observation[:200],
                                        "started": t0, "finished": clock(),
                                        "digest_blocks": digest_block_count(state.system_prompt)})
            if should_trigger(state.interaction, config):
                pool = _trigger(state, record, pool, config, solver, inference, session_log, weights, clock)
            if outcome.success:
                record.terminal_reason = "agent_success"
                break
        else:
            record.terminal_reason = ("success_threshold"
                                      if state.strategic_position >= config.success_threshold
                                      else "max_interactions")
    finally:
        pool.shutdown(wait=False)
    record.final_graph = state.graph
    record.strategic_position = state.strategic_position
    return record


def _trigger(state, record, pool, config, solver, inference, session_log, weights, clock):
    t0 = clock()
    graph = state.graph
    log = session_log() if session_log is not None else None
    entry: dict = {"i": state.interaction, "started": t0}
    fut = pool.submit(analyse, graph, config, solver, log, weights, inference)
    try:
        result = fut.result(timeout=config.analysis_budget)
    except concurrent.futures.TimeoutError:
        entry.update(status="analysis_timeout", latency=clock() - t0, stale_digest=True)
        record.triggers.append(entry)
        # the overrunning task keeps its thread; later triggers get a fresh one
        pool.shutdown(wait=False)
        return concurrent.futures.ThreadPoolExecutor(max_workers=1)
    except Exception as exc:
        entry.update(status="analysis_error", error=str(exc), latency=clock() - t0, stale_digest=True)
        record.triggers.append(entry)
        return pool
    state.strategic_position = result.solution.value
    state.digest = result.digest
    state.system_prompt = inject_digest(state.system_prompt, result.digest)
    entry.update(status="ok", latency=clock() - t0, equilibrium=_snapshot(result.solution),
                 digest=result.digest.text, digest_mode=result.digest.mode,
                 fallback_used=result.digest.fallback_used,
                 strategic_position=state.strategic_position,
                 digest_blocks=digest_block_count(state.system_prompt))
    record.triggers.append(entry)
    return pool


# --------------------------------------------------------------------------
# scripted drivers
# --------------------------------------------------------------------------

class ScriptedAgent:
    """Replays a list of steps ``{action, status, observation, success?, error?, graph?}``."""

    def __init__(self, steps: list[dict]):
        self.steps = list(steps)
        self.cursor = 0
        self.prompts: list[str] = []
        self.digests: list[Digest | None] = []

    @classmethod
    def from_jsonl(cls, text: str) -> "ScriptedAgent":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])

    def select_action(self, graph, digest, system_prompt):
        if self.cursor >= len(self.steps):
            raise RuntimeError("script exhausted")
        self.prompts.append(system_prompt)
        self.digests.append(digest)
        step = self.steps[self.cursor]
        self.cursor += 1
        if step.get("error"):
            raise RuntimeError(step["error"])
        return step

    def execute(self, action) -> Outcome:
        return Outcome(action.get("status", "ok"), action.get("observation", ""),
                       bool(action.get("success", False)))


class ScriptedGraphUpdater:
    """Adopts the ``graph`` document embedded in a scripted step, if any."""

    def update_graph(self, graph, action, outcome):
        from .graph import parse_graph_document

        doc = action.get("graph") if isinstance(action, dict) else None
        if doc is None:
            return graph
        return parse_graph_document(json.dumps(doc))
