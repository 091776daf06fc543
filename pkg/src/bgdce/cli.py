"""Command-line entry point: ``bgdce {run,validate,spanner,decompose}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .graph import Dag, GraphError
from .harness import ConfigError, load_config, run_experiment
from .oracle import validation_battery
from .polytope import DagSpace, DecompositionError
from .spanner import NotInPolytopeError, SpannerError


def _blue_arg(items):
    blue = {}
    for item in items or ():
        try:
            node, edge = item.split(":")
            blue[int(node)] = int(edge)
        except ValueError:
            raise argparse.ArgumentTypeError(f"--blue expects NODE:EDGE, got {item!r}") from None
    return blue or None


def _agent_space(args) -> tuple[Dag, DagSpace]:
    dag = Dag.load(args.graph)
    if not 0 <= args.agent < len(dag.agents):
        raise GraphError(f"agent {args.agent} not defined; the graph has {len(dag.agents)} agent(s)")
    return dag, DagSpace.for_agent(dag, args.agent, blue=_blue_arg(args.blue))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.out
    summary = run_experiment(cfg, out, workers=args.workers, quiet=args.quiet)
    for f in summary["failures"]:
        print(f"seed {f['seed']} failed:\n{f['error']}", file=sys.stderr)
    print(f"wrote {len(summary['seeds'])} seed file(s) and summary.json to {out}", file=sys.stderr)
    return 1 if summary["failures"] else 0


def cmd_validate(args) -> int:
    results = validation_battery(args.seed)
    ok = all(r["passed"] for r in results)
    json.dump({"passed": ok, "checks": results}, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
    return 0 if ok else 1


def cmd_spanner(args) -> int:
    dag, space = _agent_space(args)
    json.dump(space.spanner.to_dict(dag), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_decompose(args) -> int:
    dag, space = _agent_space(args)
    text = args.point
    if os.path.isfile(text):
        with open(text) as fh:
            text = fh.read()
    try:
        point = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"--point is not valid JSON: {exc.msg}") from None
    if isinstance(point, dict):
        point = point.get("x", point.get("point"))
    x = np.asarray(point, dtype=float)
    if x.shape != (dag.m,):
        raise ValueError(f"--point needs one value per edge ({dag.m}), got shape {x.shape}")
    atoms = space.decompose(x)
    out = {
        "atoms": [{"path": list(p), "named": dag.describe_path(p), "weight": w} for p, w in atoms],
        "spanner_coordinates": [float(a) for a in space.spanner_coords(x)],
    }
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgdce", description="Bandit learning in congestion games on DAGs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, default=None, help="parallel seeds (default: available CPUs)")
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="cross-check fast paths against brute-force oracles")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    for name, helptext in (("spanner", "print the barycentric spanner of an agent's path polytope"),
                           ("decompose", "write a flow point as a mixture of paths")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--graph", required=True)
        p.add_argument("--agent", type=int, default=0)
        p.add_argument("--blue", action="append", metavar="NODE:EDGE",
                       help="pin a node's designated out-edge (repeatable)")
        if name == "decompose":
            p.add_argument("--point", required=True, help="JSON list of per-edge flow values, or a file")
            p.set_defaults(func=cmd_decompose)
        else:
            p.set_defaults(func=cmd_spanner)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphError, SpannerError, NotInPolytopeError, DecompositionError,
            ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"bgdce {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
