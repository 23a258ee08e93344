"""Command-line entry point: ``simulate``, ``compare``, ``complete`` and ``attack``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import completion as comp
from .edm import credibility_from_edmm, edmm_from_csv, edmm_to_csv
from .errors import ConfigError, InfeasibleAttack, PcefError
from .fusion import AttackReport, attack_feasible, attack_report_to_csv, infer_attack
from .network import NetworkGraph
from .scenario import (ScenarioConfig, aggregate_csv, credibility_csv, decisions_csv,
                       fusion_csv, generate_scenario, parse_config, profile_config,
                       rank_trace_csv, run_monte_carlo, run_pcef, run_pcef_on, timings_csv,
                       trials_csv)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load_config(args) -> ScenarioConfig:
    base = profile_config(getattr(args, "profile", "desk") or "desk")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        base = parse_config(text, base)
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(base, **overrides) if overrides else base


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    res = run_pcef(cfg, cfg.seed)
    out = _out_dir(args)
    (out / "credibility.csv").write_text(credibility_csv(res))
    (out / "fusion.csv").write_text(fusion_csv(res))
    (out / "rank_trace.csv").write_text(rank_trace_csv(res.rank_trace))
    (out / "graph.csv").write_text(res.graph.to_csv())
    (out / "timings.csv").write_text(timings_csv(res.timings))
    print(f"decisions: {res.decisions} truth={res.truth} "
          f"max cred error={res.cred_error.max():.4f} betp error={res.betp_error:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    summary = run_monte_carlo(cfg, args.trials, cfg.seed)
    out = _out_dir(args)
    (out / "trials.csv").write_text(trials_csv(summary.trial_rows))
    (out / "decisions.csv").write_text(decisions_csv(summary.trial_rows))
    (out / "aggregate.csv").write_text(aggregate_csv(summary.aggregate))
    (out / "timings.csv").write_text(timings_csv(summary.timings))
    for k, v in summary.aggregate.items():
        print(f"{k}: {v}")
    return EXIT_OK


def _read_matrix(path: str) -> np.ndarray:
    try:
        return edmm_from_csv(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad matrix in {path}: {exc}") from None


def cmd_complete(args) -> int:
    d = _read_matrix(args.matrix)
    mask = _read_matrix(args.mask) != 0
    if d.shape != mask.shape:
        raise ConfigError(f"matrix {d.shape} and mask {mask.shape} differ in shape")
    params = _load_config(args).completion if args.config else comp.CompletionParams()
    result = comp.complete_edmm(d, mask, params)
    out = _out_dir(args)
    (out / "completed.csv").write_text(edmm_to_csv(result.matrix))
    (out / "trace.csv").write_text(comp.trace_to_csv(result.trace))
    print(f"final rank {result.rank} after {len(result.trace)} iterations")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    if args.graph:
        try:
            g = NetworkGraph.from_csv(Path(args.graph).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read graph: {exc}") from None
        cfg = dataclasses.replace(cfg, n_agents=g.n_agents)
        sc = generate_scenario(cfg, cfg.seed)
    else:
        sc = generate_scenario(cfg, cfg.seed)
        g = sc.graph
    n = g.n_agents
    for who, v in (("adversary", args.adversary), ("target", args.target)):
        if not 0 <= v < n:
            raise ConfigError(f"{who} {v} outside 0..{n - 1}")
    res = run_pcef_on(sc.evidence, g, cfg, cfg.seed, truth=sc.truth)
    cred = credibility_from_edmm(res.completed)
    c = res.fusion.c
    feasible = attack_feasible(g, args.adversary, args.target)
    err = float("nan")
    try:
        rec = infer_attack(g, c, args.adversary, args.target, res.fusion.history,
                           cred[args.target], sc.evidence[0].frame)
        err = float(np.max(np.abs(rec.masses - sc.evidence[args.target].masses)))
    except InfeasibleAttack as exc:
        print(f"infeasible: {exc}")
    report = AttackReport(args.adversary, args.target, feasible, err)
    (_out_dir(args) / "attack_report.csv").write_text(attack_report_to_csv([report]))
    print(f"adversary {args.adversary} -> target {args.target}: feasible={feasible} error={err}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcef", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False):
        p.add_argument("--config", help="key = value scenario file")
        p.add_argument("--seed", type=int, help="scenario seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--mode", choices=("serial", "parallel"))
        p.add_argument("--profile", choices=("desk", "large"), default="desk")
        if trials:
            p.add_argument("--trials", type=int, default=10)

    common(sub.add_parser("simulate", help="one end-to-end run"))
    common(sub.add_parser("compare", help="Monte Carlo against the baselines"), trials=True)
    p = sub.add_parser("complete", help="standalone EDMM completion")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--config", help="completion.* keys are honoured")
    p.add_argument("--out", default=".")
    p = sub.add_parser("attack", help="neighbor inference attack on the fusion stage")
    common(p)
    p.add_argument("--adversary", type=int, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--graph", help="edge-list CSV overriding the random graph")
    return parser


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare,
            "complete": cmd_complete, "attack": cmd_attack}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if getattr(args, "trials", 1) < 1:
            raise ConfigError("--trials must be at least 1")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PcefError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
