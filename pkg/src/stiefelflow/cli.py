"""Command-line experiment runner.

Subcommands: ``run`` (benchmark sweep), ``sweep-sigma`` (diffusion-strength
heat map), ``verify`` (identity checks), ``graph-gen`` (DIMACS output),
``cryoem-gen`` (synthetic common-line instances).  Exit codes: 0 success,
1 run failure, 2 configuration error, 3 verification failure.
"""

import argparse
import json
import os
import sys

from .errors import ConfigurationError, StiefelflowError
from .experiments import (
    ExperimentConfig,
    config_from_mapping,
    parse_config,
    run_experiment,
    sweep_sigma,
)
from .problems import cryoem_generate, graph_generators, save_instance, to_dimacs
from .rng import RngStream
from .verify import report_to_json, verify_all


def _load_config(args) -> ExperimentConfig:
    kv = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            kv.update(parse_config(fh.read()))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, val = (part.strip() for part in item.split("=", 1))
        kv[key] = val
    if getattr(args, "seed", None) is not None:
        kv["seed"] = str(args.seed)
    if getattr(args, "reps", None) is not None:
        kv["reps"] = str(args.reps)
    if getattr(args, "out", None):
        kv["out_dir"] = args.out
    return config_from_mapping(kv)


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    table = run_experiment(cfg)
    for row in table.rows:
        print(
            f"{row['family']} n={row['n']} {row['algorithm']}: "
            f"min {row['min']:.6e} mean {row['mean']:.6e} max {row['max']:.6e} "
            f"cpu {row['cpu_seconds']:.3f}s"
        )
    print(f"wrote {os.path.join(cfg.out_dir, 'results.csv')}")
    return 0


def _cmd_sweep_sigma(args) -> int:
    cfg = _load_config(args)
    grid = [float(v) for v in args.grid.split(",") if v != ""]
    mat = sweep_sigma(cfg, grid)
    for i, n in enumerate(cfg.n_values):
        cells = " ".join(f"{v:+.3f}" for v in mat[i])
        print(f"n={n}: {cells}")
    print(f"wrote {os.path.join(cfg.out_dir, 'sweep_sigma.csv')}")
    return 0


def _cmd_verify(args) -> int:
    report = verify_all(budget=args.budget, seed=args.seed)
    text = report_to_json(report)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}: estimate {check['estimate']:.6g} "
              f"target {check['target']:.6g} tol {check['tolerance']:.3g}",
              file=sys.stderr)
    return 0 if report["passed"] else 3


def _cmd_graph_gen(args) -> int:
    params = {}
    if args.m is not None:
        params["m"] = args.m
    if args.d is not None:
        params["d"] = args.d
    if args.threshold is not None:
        params["threshold"] = args.threshold
    g = graph_generators(args.kind, **params)
    text = to_dimacs(g)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({g.num_vertices} vertices, {g.num_edges} edges)")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_cryoem_gen(args) -> int:
    inst = cryoem_generate(args.n_images, args.corruption, RngStream(args.seed))
    save_instance(inst, args.out)
    print(f"wrote {args.out} (N={inst.N}, pairs={inst.num_pairs}, "
          f"corruption={inst.corruption_p})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stiefelflow",
        description="Global optimization with orthogonality constraints via "
                    "intermittent diffusion on Stiefel manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark experiment")
    run.add_argument("--config", help="key=value configuration file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a configuration key")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--reps", type=int, help="number of repetitions")
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep-sigma", help="diffusion-strength log-ratio sweep")
    sweep.add_argument("--config", help="key=value configuration file")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--reps", type=int)
    sweep.add_argument("--out", help="output directory")
    sweep.add_argument("--grid", required=True,
                       help="comma-separated initial diffusion strengths")
    sweep.set_defaults(func=_cmd_sweep_sigma)

    ver = sub.add_parser("verify", help="run the identity verification suite")
    ver.add_argument("--budget", choices=("quick", "full"), default="quick")
    ver.add_argument("--seed", type=int, default=20240901)
    ver.add_argument("--out", help="write the JSON report here")
    ver.set_defaults(func=_cmd_verify)

    gg = sub.add_parser("graph-gen", help="emit a benchmark graph in DIMACS format")
    gg.add_argument("--kind", required=True,
                    choices=("cycle", "complete", "empty", "petersen", "hamming"))
    gg.add_argument("--m", type=int, help="vertex count for cycle/complete/empty")
    gg.add_argument("--d", type=int, help="string length for hamming")
    gg.add_argument("--threshold", type=int, help="distance threshold for hamming")
    gg.add_argument("--out", help="output path (stdout when omitted)")
    gg.set_defaults(func=_cmd_graph_gen)

    cg = sub.add_parser("cryoem-gen", help="emit a synthetic common-line instance")
    cg.add_argument("--n-images", type=int, required=True)
    cg.add_argument("--corruption", type=float, default=0.0)
    cg.add_argument("--seed", type=int, default=0)
    cg.add_argument("--out", required=True)
    cg.set_defaults(func=_cmd_cryoem_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (StiefelflowError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
