"""Command-line front end.

Subcommands: generate, run, experiment, theory, check.
Exit codes: 0 ok, 2 usage/config error, 3 I/O error, 4 non-termination (run),
5 acceptance failure (check).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .graph import GraphError, check_theorem_preconditions, degree_report, save_graph
from .harness import (
    ConfigError,
    ExperimentConfig,
    SchemaError,
    build_graph,
    check_directory,
    default_output_dir,
    make_quotas,
    rounds_csv,
    run_experiment,
    theory_for,
    to_json,
    trial_row,
    write_experiment,
)
from .protocol import simulate
from .theory import EnvelopeError, TheoryParams, envelope, recommended_c

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NONTERM, EXIT_CHECK = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _c_value(s: str) -> int | str:
    return "auto" if s == "auto" else _positive_int(s)


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--graph", help="edge-list file to load")
    kind.add_argument("--regular", action="store_true", help="generate a regular graph")
    kind.add_argument("--almost-regular", action="store_true", help="generate an almost-regular graph")
    g.add_argument("--n", type=_positive_int)
    g.add_argument("--delta", type=_positive_int, help="degree (regular)")
    g.add_argument("--delta-min-c", type=_positive_int, help="minimum client degree (almost-regular)")
    g.add_argument("--heavy-fraction", type=float, default=None)
    g.add_argument("--graph-seed", type=int, default=None)


def _graph_spec(args: argparse.Namespace, base: dict | None = None) -> dict | None:
    if args.graph:
        return {"file": args.graph}
    if args.regular:
        if args.n is None or args.delta is None:
            raise UsageError("--regular needs --n and --delta")
        return {"type": "regular", "n": args.n, "delta": args.delta, "seed": args.graph_seed or 0}
    if args.almost_regular:
        if args.n is None or args.delta_min_c is None:
            raise UsageError("--almost-regular needs --n and --delta-min-c")
        return {
            "type": "almost_regular", "n": args.n, "delta_min_c": args.delta_min_c,
            "rho": args.rho if args.rho is not None else 1.0,
            "heavy_fraction": args.heavy_fraction or 0.0, "seed": args.graph_seed or 0,
        }
    return base


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=("SAER", "RAES"))
    p.add_argument("--c", type=_c_value, help="threshold constant or 'auto'")
    p.add_argument("--d", type=_positive_int)
    p.add_argument("--quotas", choices=("full", "zero", "random"))
    p.add_argument("--max-rounds", type=_positive_int)
    p.add_argument("--metrics", choices=("full", "light"))
    p.add_argument("--eta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--out-dir")


def _config(args: argparse.Namespace, file_cfg: dict | None = None) -> ExperimentConfig:
    data = dict(file_cfg or {})
    spec = _graph_spec(args, data.get("graph"))
    if spec is None:
        raise UsageError("no graph given: use --graph, --regular or --almost-regular (or a config file)")
    data["graph"] = spec
    for key in ("kind", "c", "d", "quotas", "max_rounds", "metrics", "eta", "rho", "out_dir",
                "trials", "base_seed", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "seed", None) is not None:
        data["base_seed"] = args.seed
    return ExperimentConfig.from_mapping(data)


def cmd_generate(args: argparse.Namespace) -> int:
    if not (args.regular or args.almost_regular):
        raise UsageError("generate needs --regular or --almost-regular")
    if args.seed is not None and args.graph_seed is None:
        args.graph_seed = args.seed
    g = build_graph(_graph_spec(args))
    out = Path(args.out) if args.out else default_output_dir() / "graph.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_graph(g, out)
    rep = check_theorem_preconditions(g, args.eta or 1.0, args.rho or 1.0)
    print(to_json({
        "file": str(out),
        "degree_report": asdict(degree_report(g)),
        "preconditions": {e.name: asdict(e) for e in rep.entries},
        "preconditions_pass": rep.passed,
    }), end="")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    g = build_graph(cfg.graph)
    c = cfg.resolved_c()
    quotas = make_quotas(cfg.quotas, g.n, cfg.d, cfg.base_seed)
    res = simulate(g, cfg.kind, c, cfg.d, cfg.base_seed, quotas=quotas,
                   max_rounds=cfg.max_rounds, metrics=cfg.metrics)
    env = theory_for(g, c, cfg.d, cfg.eta, cfg.rho)
    row = trial_row(0, cfg.base_seed, res, g.n * cfg.d, env)
    summary = res.summary() | {
        "non_terminated": not res.completed,
        "envelope_violations": row.envelope_violations,
        "degree_report": asdict(degree_report(g)),
        "theory": env.header() if env is not None else None,
    }
    out_dir = Path(cfg.out_dir) if cfg.out_dir else default_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rounds.csv").write_text(rounds_csv([(0, res)]))
    (out_dir / "run.json").write_text(to_json(summary))
    print(to_json(summary), end="")
    return EXIT_OK if res.completed else EXIT_NONTERM


def cmd_experiment(args: argparse.Namespace) -> int:
    file_cfg = None
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config file: {exc}") from None
    cfg = _config(args, file_cfg)
    out = run_experiment(cfg)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else default_output_dir()
    write_experiment(out, out_dir)
    print(to_json(out.summary.to_dict()), end="")
    return EXIT_OK


def cmd_theory(args: argparse.Namespace) -> int:
    n, d, eta, rho = args.n, args.d, args.eta, args.rho
    dmin = args.delta or math.ceil(eta * math.log(n) ** 2)
    dmax = args.delta_max_s or math.floor(rho * dmin)
    c = recommended_c(eta, rho, d) if args.c in (None, "auto") else args.c
    env = envelope(TheoryParams(n=n, d=d, c=c, eta=eta, rho=rho, delta_min_c=dmin, delta_max_s=dmax))
    buf = io.StringIO()
    buf.write("# " + json.dumps(env.header(), sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=("t", "gamma_t", "product_t", "delta_t"), lineterminator="\n")
    w.writeheader()
    for row in env.rows():
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    if args.out_dir:
        d_ = Path(args.out_dir)
        d_.mkdir(parents=True, exist_ok=True)
        (d_ / "envelope.csv").write_text(buf.getvalue().split("\n", 1)[1])
        (d_ / "envelope.json").write_text(to_json(env.header()))
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    verdicts = check_directory(args.dir, args.pass_rate)
    for v in verdicts:
        print(json.dumps(asdict(v), sort_keys=True))
    return EXIT_OK if all(v.ok for v in verdicts) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saer", description="SAER/RAES load-balancing simulator")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a bipartite graph file")
    _add_graph_args(g)
    g.add_argument("--rho", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one seeded trial")
    _add_graph_args(r)
    _add_run_args(r)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="run many seeded trials")
    _add_graph_args(e)
    _add_run_args(e)
    e.add_argument("--config", help="JSON config file; flags override it")
    e.add_argument("--trials", type=_positive_int)
    e.add_argument("--base-seed", type=int)
    e.add_argument("--workers", type=_positive_int)
    e.set_defaults(func=cmd_experiment)

    t = sub.add_parser("theory", help="print the K_t envelope")
    t.add_argument("--n", type=_positive_int, required=True)
    t.add_argument("--eta", type=float, default=1.0)
    t.add_argument("--rho", type=float, default=1.0)
    t.add_argument("--d", type=_positive_int, default=1)
    t.add_argument("--c", type=_c_value)
    t.add_argument("--delta", type=_positive_int, help="min client degree (default ceil(eta ln^2 n))")
    t.add_argument("--delta-max-s", type=_positive_int, help="max server degree (default floor(rho * delta))")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_theory)

    k = sub.add_parser("check", help="evaluate acceptance criteria on experiment output")
    k.add_argument("dir")
    k.add_argument("--pass-rate", type=float, default=0.99)
    k.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, GraphError, EnvelopeError, SchemaError, ValueError) as exc:
        print(f"saer {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"saer {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
