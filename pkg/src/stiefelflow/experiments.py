"""Experiment harness: seeded benchmark sweeps, aggregation, CSV/JSON output.

A run is fully determined by its configuration: repetition r uses the
stream seeded with base_seed + r, initial points come from the stream's
child(0, trial, block), so equal configs reproduce equal results (and
byte-identical results CSVs).  Wall-clock timings are reported in the
aggregate table and JSON only, never in the per-repetition results CSV,
which keeps that file hashable.
"""

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .iddm import IddmConfig, iddm_run
from .local_solver import LocalSolverConfig, local_minimize, rslocal_run
from .manifold import ProductPoint, random_point
from .problems import (
    biquad_make,
    biquad_problem,
    cryoem_generate,
    cryoem_problem,
    cycle_graph,
    eigs_init,
    graph_generators,
    hp1_problem,
    load_instance,
    parse_dimacs,
    recovery_mse,
    stability_estimate,
    stability_problem,
)
from .rng import RngStream
from .schedules import Constant, PowerLaw
from .sde import SdeConfig

#: configuration keys understood by parse_config / ExperimentConfig
KNOWN_KEYS = {
    "problem.family", "problem.n", "problem.case", "problem.eta",
    "problem.graph", "problem.graph_file", "problem.m", "problem.d",
    "problem.threshold", "problem.N", "problem.corruption",
    "problem.instance_seed", "problem.file",
    "algo.kind", "algo.cycles", "algo.trials", "algo.init",
    "sde.alpha", "sde.dt", "sde.steps", "sde.schedule",
    "local.grad_tol", "local.max_iters",
    "seed", "reps", "workers", "out_dir",
}


@dataclass
class ExperimentConfig:
    family: str = "hp1"
    n_values: tuple = (20,)
    case: str = "I"
    eta: float = 0.5
    graph: str = "cycle"
    graph_params: dict = field(default_factory=lambda: {"m": 5})
    graph_file: str = ""
    num_images: int = 100
    corruption: float = 0.0
    instance_seed: int = 1
    instance_file: str = ""
    algo: str = "both"  # iddm | rslocal | local | both
    init: str = "random"  # random | eigs (cryoem only)
    cycles: int = 10
    trials: int = 10
    alpha: float = math.nan  # nan -> family default
    dt: float = 0.1
    steps: int = 250
    schedule: str = "powerlaw"
    grad_tol: float = 1e-6
    max_iters: int = 1000
    seed: int = 2024
    reps: int = 50
    workers: int = 1
    out_dir: str = "results"

    def to_flat(self) -> dict:
        return {
            "problem.family": self.family,
            "problem.n": ",".join(str(v) for v in self.n_values),
            "algo.kind": self.algo,
            "algo.cycles": self.cycles,
            "algo.trials": self.trials,
            "sde.alpha": self.alpha,
            "sde.dt": self.dt,
            "sde.steps": self.steps,
            "seed": self.seed,
            "reps": self.reps,
        }


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        out[key] = val
    return out


def config_from_mapping(kv: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    try:
        if "problem.family" in kv:
            cfg.family = kv["problem.family"].lower()
        if "problem.n" in kv:
            cfg.n_values = tuple(int(v) for v in str(kv["problem.n"]).split(",") if v)
        if "problem.case" in kv:
            cfg.case = kv["problem.case"]
        if "problem.eta" in kv:
            cfg.eta = float(kv["problem.eta"])
        if "problem.graph" in kv:
            cfg.graph = kv["problem.graph"].lower()
        if "problem.graph_file" in kv:
            cfg.graph_file = kv["problem.graph_file"]
        if "problem.m" in kv:
            cfg.graph_params = {**cfg.graph_params, "m": int(kv["problem.m"])}
        if "problem.d" in kv:
            cfg.graph_params = {**cfg.graph_params, "d": int(kv["problem.d"])}
        if "problem.threshold" in kv:
            cfg.graph_params = {**cfg.graph_params, "threshold": int(kv["problem.threshold"])}
        if "problem.N" in kv:
            cfg.num_images = int(kv["problem.N"])
        if "problem.corruption" in kv:
            cfg.corruption = float(kv["problem.corruption"])
        if "problem.instance_seed" in kv:
            cfg.instance_seed = int(kv["problem.instance_seed"])
        if "problem.file" in kv:
            cfg.instance_file = kv["problem.file"]
        if "algo.kind" in kv:
            cfg.algo = kv["algo.kind"].lower()
        if "algo.cycles" in kv:
            cfg.cycles = int(kv["algo.cycles"])
        if "algo.trials" in kv:
            cfg.trials = int(kv["algo.trials"])
        if "algo.init" in kv:
            cfg.init = kv["algo.init"].lower()
        if "sde.alpha" in kv:
            cfg.alpha = float(kv["sde.alpha"])
        if "sde.dt" in kv:
            cfg.dt = float(kv["sde.dt"])
        if "sde.steps" in kv:
            cfg.steps = int(kv["sde.steps"])
        if "sde.schedule" in kv:
            cfg.schedule = kv["sde.schedule"].lower()
        if "local.grad_tol" in kv:
            cfg.grad_tol = float(kv["local.grad_tol"])
        if "local.max_iters" in kv:
            cfg.max_iters = int(kv["local.max_iters"])
        if "seed" in kv:
            cfg.seed = int(kv["seed"])
        if "reps" in kv:
            cfg.reps = int(kv["reps"])
        if "workers" in kv:
            cfg.workers = int(kv["workers"])
        if "out_dir" in kv:
            cfg.out_dir = kv["out_dir"]
    except ValueError as err:
        raise ConfigurationError(f"bad configuration value: {err}") from err
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.family not in ("hp1", "biquad", "stability", "cryoem"):
        raise ConfigurationError(f"unknown problem family {cfg.family!r}")
    if cfg.algo not in ("iddm", "rslocal", "local", "both"):
        raise ConfigurationError(f"unknown algorithm {cfg.algo!r}")
    if cfg.reps < 1 or cfg.cycles < 1 or cfg.trials < 1:
        raise ConfigurationError("reps, cycles and trials must be >= 1")
    if cfg.dt <= 0 or cfg.steps < 0:
        raise ConfigurationError("sde.dt must be > 0 and sde.steps >= 0")
    if cfg.family == "biquad" and cfg.case.upper() not in ("I", "II"):
        raise ConfigurationError("problem.case must be I or II")
    if cfg.init not in ("random", "eigs"):
        raise ConfigurationError("algo.init must be random or eigs")
    if cfg.init == "eigs" and cfg.family != "cryoem":
        raise ConfigurationError("algo.init=eigs only applies to the cryoem family")


def default_alpha(cfg: ExperimentConfig, n: int) -> float:
    if not math.isnan(cfg.alpha):
        return cfg.alpha
    if cfg.family == "hp1":
        return 1.0 / n
    if cfg.family == "biquad":
        return 1.5
    if cfg.family == "stability":
        return 0.005
    return 0.1  # cryoem


def build_problem(cfg: ExperimentConfig, n: int):
    """Instantiate the problem (and auxiliary data) for one sweep row.

    Instance data (tensors, graphs, common lines) comes from a stream
    derived from the base seed but disjoint from every repetition stream.
    """
    data_rng = RngStream(cfg.seed, key=(0xDA7A,))
    if cfg.family == "hp1":
        return hp1_problem(n), None
    if cfg.family == "biquad":
        B = biquad_make(n, cfg.case, cfg.eta, data_rng.child(cfg.instance_seed))
        return biquad_problem(B), None
    if cfg.family == "stability":
        if cfg.graph_file:
            with open(cfg.graph_file) as fh:
                g = parse_dimacs(fh.read())
        elif cfg.graph == "cycle":
            g = cycle_graph(cfg.graph_params.get("m", n))
        else:
            g = graph_generators(cfg.graph, **cfg.graph_params)
        return stability_problem(g), g
    # cryoem
    if cfg.instance_file:
        inst = load_instance(cfg.instance_file)
    else:
        inst = cryoem_generate(cfg.num_images, cfg.corruption,
                               data_rng.child(cfg.instance_seed))
    return cryoem_problem(inst), inst


def _initial_point(problem, rng: RngStream, cfg: ExperimentConfig, aux):
    if cfg.init == "eigs":
        return eigs_init(aux)
    return ProductPoint(
        [random_point(nb, pb, rng.child(0, 0, b))
         for b, (nb, pb) in enumerate(problem.block_dims)]
    )


def run_single(cfg: ExperimentConfig, n: int, algo: str, rep: int):
    """One repetition of one algorithm; returns a plain-dict record."""
    problem, aux = build_problem(cfg, n)
    rng = RngStream(cfg.seed + rep)
    local_cfg = LocalSolverConfig(grad_tol=cfg.grad_tol, max_iters=cfg.max_iters)
    t0 = time.perf_counter()
    if algo == "rslocal":
        report = rslocal_run(problem, cfg.trials, local_cfg, rng)
        best = report.best_objective
        best_point = report.best_point
    elif algo == "local":
        start = _initial_point(problem, rng, cfg, aux)
        if cfg.family == "cryoem":
            from .problems import refine_orientations

            point, stats = refine_orientations(aux, start, local_cfg)
        else:
            point, stats = local_minimize(start, problem, local_cfg)
        best, best_point = stats.objective, point
    elif algo == "iddm":
        start = _initial_point(problem, rng, cfg, aux)
        n_eff = max(nb for nb, _ in problem.block_dims)
        alpha = default_alpha(cfg, n)
        if cfg.schedule == "constant":
            schedule = Constant(alpha)
        else:
            schedule = PowerLaw(alpha=alpha, dt=cfg.dt, n_eff=max(n_eff, 2))
        icfg = IddmConfig(
            num_cycles=cfg.cycles,
            sde=SdeConfig(dt=cfg.dt, num_steps=cfg.steps, schedule=schedule),
            local=local_cfg,
        )
        report = iddm_run(problem, start, icfg, rng)
        best = report.best_objective
        best_point = report.best_point
    else:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    cpu = time.perf_counter() - t0

    record = {
        "family": cfg.family, "n": n, "algorithm": algo, "rep": rep,
        "seed": cfg.seed + rep, "objective": best,
    }
    extras = {"cpu_seconds": cpu}
    if cfg.family == "stability":
        record["stability_estimate"] = stability_estimate(best)
    if cfg.family == "cryoem":
        record["mse"] = recovery_mse(best_point, aux.true_rotations)
    return record, extras


def _run_single_star(args):
    return run_single(*args)


@dataclass
class ResultsTable:
    """Per-(row, algorithm) aggregates plus the raw per-repetition records."""

    rows: list = field(default_factory=list)       # aggregate dicts
    records: list = field(default_factory=list)    # per-rep dicts (no timing)
    timings: list = field(default_factory=list)    # per-rep cpu seconds

    def results_csv(self) -> str:
        if not self.records:
            return ""
        cols = list(self.records[0].keys())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for rec in self.records:
            w.writerow([_fmt(rec[c]) for c in cols])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        cols = ["family", "n", "algorithm", "min", "mean", "max", "cpu_seconds"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "records": self.records, "timings": self.timings},
            indent=2, sort_keys=True,
        )


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ResultsTable:
    """Run the configured sweep; aggregates min/mean/max/cpu per row and
    writes results.csv, aggregate.csv and results.json under out_dir."""
    algos = ["rslocal", "iddm"] if cfg.algo == "both" else [cfg.algo]
    table = ResultsTable()
    tasks = [
        (cfg, n, algo, rep)
        for n in cfg.n_values
        for algo in algos
        for rep in range(cfg.reps)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_single_star, tasks))
    else:
        outputs = [run_single(*t) for t in tasks]

    by_row = {}
    for (c, n, algo, rep), (record, extras) in zip(tasks, outputs):
        table.records.append(record)
        table.timings.append(
            {"n": n, "algorithm": algo, "rep": rep, "cpu_seconds": extras["cpu_seconds"]}
        )
        by_row.setdefault((n, algo), []).append((record["objective"], extras["cpu_seconds"]))
    for (n, algo), vals in sorted(by_row.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        objs = np.array([v[0] for v in vals])
        cpus = np.array([v[1] for v in vals])
        table.rows.append({
            "family": cfg.family, "n": n, "algorithm": algo,
            "min": float(objs.min()), "mean": float(objs.mean()),
            "max": float(objs.max()), "cpu_seconds": float(cpus.mean()),
        })

    out_dir = out_dir if out_dir is not None else cfg.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "w") as fh:
            fh.write(table.results_csv())
        with open(os.path.join(out_dir, "aggregate.csv"), "w") as fh:
            fh.write(table.aggregate_csv())
        with open(os.path.join(out_dir, "results.json"), "w") as fh:
            fh.write(table.to_json())
    return table


def sweep_sigma(cfg: ExperimentConfig, sigma_grid, out_dir=None) -> np.ndarray:
    """-log10(mean_IDDM / mean_RSlocal) over (n, initial strength alpha).

    One RSlocal baseline per n (matched seeds); each grid value replaces
    the schedule amplitude.  Values are clipped to stay finite.
    """
    sigma_grid = list(sigma_grid)
    if not sigma_grid:
        raise ConfigurationError("sigma grid must be nonempty")
    out = np.empty((len(cfg.n_values), len(sigma_grid)))
    import dataclasses

    for i, n in enumerate(cfg.n_values):
        rs_cfg = dataclasses.replace(cfg, algo="rslocal", n_values=(n,))
        rs = run_experiment(rs_cfg, out_dir=None)
        rs_mean = next(r["mean"] for r in rs.rows if r["algorithm"] == "rslocal")
        for j, sig in enumerate(sigma_grid):
            id_cfg = dataclasses.replace(cfg, algo="iddm", n_values=(n,), alpha=float(sig))
            idt = run_experiment(id_cfg, out_dir=None)
            id_mean = next(r["mean"] for r in idt.rows if r["algorithm"] == "iddm")
            num = max(abs(id_mean), 1e-300)
            den = max(abs(rs_mean), 1e-300)
            out[i, j] = -math.log10(num / den)

    out_dir = out_dir if out_dir is not None else cfg.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n"] + [repr(float(s)) for s in sigma_grid])
        for i, n in enumerate(cfg.n_values):
            w.writerow([n] + [repr(float(v)) for v in out[i]])
        with open(os.path.join(out_dir, "sweep_sigma.csv"), "w") as fh:
            fh.write(buf.getvalue())
    return out
