"""Command-line entry point: ``cutrope <subcommand> ...``.

Exit status 0 on success, 1 on domain errors, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace

from .digest import (BOTTLENECK_THRESHOLD, DEFAULT_TIMEOUT, HIGH_RISK_THRESHOLD, MODES, ROLES,
                     generate_digest)
from .effort import EffortWeights, SessionLogError, parse_session_log, score_edges
from .equilibrium import EquilibriumError, SolverConfig, format_solution_tables, solve_equilibrium
from .extraction import ExtractionConfig, ExtractionError, extract_graph
from .graph import (GraphFormatError, parse_graph_document, render_dot,
                    serialize_graph_document, validate_graph)
from .inference import ENV_MODEL, ENV_URL, HTTPCompletion
from .loop import LoopConfig, ScriptedAgent, ScriptedGraphUpdater, run_loop
from .normalize import NormalizationError, PathLimitExceeded, normalize

DOMAIN_ERRORS = (GraphFormatError, NormalizationError, PathLimitExceeded, EquilibriumError,
                 SessionLogError, ExtractionError)


@dataclass
class CliConfig:
    weights: EffortWeights = field(default_factory=EffortWeights)
    solver: SolverConfig = field(default_factory=SolverConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    inference_url: str | None = None
    inference_model: str = "default"
    bottleneck_threshold: float = BOTTLENECK_THRESHOLD
    high_risk_threshold: float = HIGH_RISK_THRESHOLD
    digest_timeout: float = DEFAULT_TIMEOUT

    def to_dict(self) -> dict:
        ext = asdict(self.extraction)
        ext.pop("patterns")
        return {"weights": asdict(self.weights), "solver": asdict(self.solver),
                "loop": asdict(self.loop), "extraction": ext,
                "inference": {"url": self.inference_url, "model": self.inference_model},
                "bottleneck_threshold": self.bottleneck_threshold,
                "high_risk_threshold": self.high_risk_threshold,
                "digest_timeout": self.digest_timeout}

    @classmethod
    def from_dict(cls, data: dict) -> "CliConfig":
        cfg = cls()
        if "weights" in data:
            cfg.weights = EffortWeights(**data["weights"])
        if "solver" in data:
            cfg.solver = SolverConfig(**data["solver"])
        if "loop" in data:
            cfg.loop = LoopConfig(**data["loop"])
        if "extraction" in data:
            ext = dict(data["extraction"])
            if ext.get("cap") is not None:
                from .normalize import CapRange
                ext["cap"] = CapRange(**ext["cap"])
            cfg.extraction = ExtractionConfig(**ext)
        inf = data.get("inference", {})
        cfg.inference_url = inf.get("url")
        cfg.inference_model = inf.get("model", "default")
        for key in ("bottleneck_threshold", "high_risk_threshold", "digest_timeout"):
            if key in data:
                setattr(cfg, key, float(data[key]))
        return cfg

    def inference_client(self):
        # credentials come from the environment only
        url = os.environ.get(ENV_URL) or self.inference_url
        if not url:
            return None
        return HTTPCompletion(url, os.environ.get("CUTROPE_INFERENCE_KEY"),
                              os.environ.get(ENV_MODEL, self.inference_model))


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_config(args) -> CliConfig:
    cfg = CliConfig.from_dict(json.loads(_read(args.config))) if args.config else CliConfig()
    if args.weights:
        cfg.weights = EffortWeights.parse(args.weights)
    if args.lam is not None:
        cfg.solver = replace(cfg.solver, lambda_attacker=args.lam)
    if getattr(args, "attacker_starts", None):
        cfg.solver = replace(cfg.solver, attacker_starts=args.attacker_starts)
    if getattr(args, "bottleneck_threshold", None) is not None:
        cfg.bottleneck_threshold = args.bottleneck_threshold
    if getattr(args, "high_risk_threshold", None) is not None:
        cfg.high_risk_threshold = args.high_risk_threshold
    loop_over = {}
    for arg, key in (("trigger_every", "trigger_every"), ("max_interactions", "max_interactions"),
                     ("mode", "digest_mode"), ("role", "role"),
                     ("analysis_budget", "analysis_budget"),
                     ("execution_budget", "execution_budget")):
        v = getattr(args, arg, None)
        if v is not None:
            loop_over[key] = v
    if loop_over:
        cfg.loop = replace(cfg.loop, **loop_over)
    if args.seed is not None:
        random.seed(args.seed)
    return cfg


def _prepared(args, cfg: CliConfig):
    """Normalised graph, scored when a session log is given."""
    graph = parse_graph_document(_read(args.graph))
    normalized = normalize(graph)
    if getattr(args, "log", None):
        log = parse_session_log(_read(args.log), total_cost=getattr(args, "total_cost", None))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            normalized = score_edges(normalized, log, cfg.weights)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    return normalized


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_validate(args, cfg) -> int:
    report = validate_graph(parse_graph_document(_read(args.graph)))
    for code, msg in report.errors:
        print(f"error [{code}] {msg}")
    for code, msg in report.warnings:
        print(f"warning [{code}] {msg}")
    print("valid" if report.ok else "invalid")
    return 0 if report.ok else 1


def cmd_normalize(args, cfg) -> int:
    n = normalize(parse_graph_document(_read(args.graph)))
    _write(serialize_graph_document(n.graph, {"_provenance": list(n.provenance)}), args.output)
    return 0


def cmd_score(args, cfg) -> int:
    n = _prepared(args, cfg)
    _write(serialize_graph_document(n.graph, {"_provenance": list(n.provenance)}), args.output)
    return 0


def cmd_solve(args, cfg) -> int:
    n = _prepared(args, cfg)
    solution = solve_equilibrium(n, cfg.solver)
    _write(format_solution_tables(solution, n), args.output)
    return 0


def cmd_digest(args, cfg) -> int:
    n = _prepared(args, cfg)
    solution = solve_equilibrium(n, cfg.solver)
    client = cfg.inference_client() if cfg.loop.digest_mode == "llm" else None
    digest = generate_digest(n, solution, cfg.loop.digest_mode, cfg.loop.role, client,
                             timeout=args.timeout or cfg.digest_timeout,
                             bottleneck_threshold=cfg.bottleneck_threshold,
                             high_risk_threshold=cfg.high_risk_threshold)
    if digest.fallback_used:
        print(f"note: llm digest unavailable ({digest.failure}); "
              "algorithmic fallback used", file=sys.stderr)
    _write(digest.text, args.output)
    return 0


def cmd_extract(args, cfg) -> int:
    log = parse_session_log(_read(args.log_file), total_cost=args.total_cost)
    extraction = replace(cfg.extraction, max_retries=args.max_retries
                         if args.max_retries is not None else cfg.extraction.max_retries)
    client = None if args.stub else cfg.inference_client()
    graph = extract_graph(log, client, extraction)
    _write(serialize_graph_document(graph), args.output)
    return 0


def cmd_render(args, cfg) -> int:
    if args.solve:
        n = _prepared(args, cfg)
        _write(render_dot(n.graph, solve_equilibrium(n, cfg.solver)), args.output)
    else:
        _write(render_dot(parse_graph_document(_read(args.graph))), args.output)
    return 0


def cmd_loop(args, cfg) -> int:
    kind, _, target = args.driver.partition(":")
    if kind != "scripted" or not target:
        raise SystemExit(_usage_error(f"unsupported driver {args.driver!r}; use scripted:<file>"))
    agent = ScriptedAgent.from_jsonl(_read(target))
    initial = parse_graph_document(_read(args.graph)) if args.graph else None
    session = None
    if args.log:
        log = parse_session_log(_read(args.log))
        session = lambda: log  # noqa: E731
    client = cfg.inference_client() if cfg.loop.digest_mode == "llm" else None
    loop_cfg = cfg.loop
    if args.max_interactions is None:
        loop_cfg = replace(loop_cfg, max_interactions=len(agent.steps))
    record = run_loop(agent, ScriptedGraphUpdater(), loop_cfg, initial, cfg.solver, client,
                      session, cfg.weights)
    _write(record.to_jsonl(), args.output)
    return 1 if record.terminal_reason == "driver_error" else 0


def _usage_error(msg: str) -> int:
    print(f"cutrope: error: {msg}", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--lambda", dest="lam", type=float, help="attacker Poisson rate (default 2)")
    common.add_argument("--weights", help="effort weights msg,tok,cost (default uniform)")
    common.add_argument("--seed", type=int, help="seed for any randomised step")
    common.add_argument("-o", "--output", help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    scored = argparse.ArgumentParser(add_help=False)
    scored.add_argument("graph", help="graph document ('-' for stdin)")
    scored.add_argument("--log", help="session log (JSON lines) used to score edges")
    scored.add_argument("--total-cost", type=float, help="log cost when messages carry none")
    scored.add_argument("--attacker-starts", choices=("root", "any"))

    digest_opts = argparse.ArgumentParser(add_help=False)
    digest_opts.add_argument("--mode", choices=MODES)
    digest_opts.add_argument("--role", choices=ROLES)
    digest_opts.add_argument("--bottleneck-threshold", type=float)
    digest_opts.add_argument("--high-risk-threshold", type=float)

    parser = argparse.ArgumentParser(prog="cutrope", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a graph document")
    p.add_argument("graph")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("normalize", parents=[common], help="canonicalise a graph")
    p.add_argument("graph")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("score", parents=[common, scored], help="normalise and effort-score a graph")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("solve", parents=[common, scored], help="print the equilibrium tables")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("digest", parents=[common, scored, digest_opts], help="render a strategic digest")
    p.add_argument("--timeout", type=float, help="inference timeout in seconds (default 50)")
    p.set_defaults(func=cmd_digest)

    p = sub.add_parser("extract", parents=[common], help="extract a graph from a session log")
    p.add_argument("log_file")
    p.add_argument("--stub", action="store_true", help="force the offline keyword extractor")
    p.add_argument("--max-retries", type=int)
    p.add_argument("--total-cost", type=float)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("render", parents=[common, scored], help="emit Graphviz DOT")
    p.add_argument("--solve", action="store_true", help="annotate with the equilibrium")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("loop", parents=[common, digest_opts], help="run the feedback loop")
    p.add_argument("--driver", required=True, help="scripted:<steps.jsonl>")
    p.add_argument("--graph", help="initial graph document")
    p.add_argument("--log", help="session log used to score edges at each trigger")
    p.add_argument("--trigger-every", type=int)
    p.add_argument("--max-interactions", type=int)
    p.add_argument("--analysis-budget", type=float)
    p.add_argument("--execution-budget", type=float)
    p.set_defaults(func=cmd_loop)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except DOMAIN_ERRORS as exc:
        print(f"cutrope: {getattr(exc, 'code', type(exc).__name__)}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"cutrope: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
