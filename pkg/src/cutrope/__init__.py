"""Game-theoretic guidance for security-testing agents.

Attack graphs extracted from session logs are normalised, effort-scored and
solved as a zero-sum inspection game; the equilibrium is rendered as a
strategic digest that is fed back into the agent's system prompt.
"""
from importlib import resources

from .digest import (Digest, TransitionClassification, build_llm_prompt, classify_transitions,
                     generate_digest, render_algorithmic_digest)
from .effort import (EffortWeights, SessionLog, SessionLogError, cost_effort, effort_score,
                     estimate_cost, message_effort, parse_session_log, score_edges, token_effort)
from .equilibrium import (EquilibriumError, EquilibriumSolution, NoAttackSurface, SolverConfig,
                          SolverFailure, build_payoff_matrix, format_solution_tables,
                          poisson_pmf, position_distribution, solve_equilibrium, solve_zero_sum,
                          verify_equilibrium)
from .extraction import ExtractionConfig, ExtractionError, extract_graph, keyword_extract
from .graph import (AttackEdge, AttackGraph, AttackNode, GraphFormatError, parse_graph_document,
                    render_dot, serialize_graph_document, validate_graph)
from .loop import LoopConfig, RunRecord, ScriptedAgent, ScriptedGraphUpdater, run_loop
from .normalize import (AttackPath, CapRange, NormalizationError, NormalizedGraph,
                        PathLimitExceeded, enumerate_attack_paths, node_cap, normalize)

__version__ = "0.1.0"


def fixture_text(name: str) -> str:
    """Contents of a bundled example file, e.g. ``fixture_text("five_path.json")``."""
    return resources.files(__package__).joinpath("data", name).read_text(encoding="utf-8")


def load_fixture(name: str) -> AttackGraph:
    """Bundled example graph by stem, e.g. ``load_fixture("mercadolibre_human")``."""
    return parse_graph_document(fixture_text(name + ".json"))


__all__ = [n for n in dir() if not n.startswith("_") and n != "resources"]
