"""Intermittent diminishing diffusion: the global-optimization driver.

Alternates noisy SDE cycles (diminishing strength within each cycle) with
deterministic local solves, tracking the best local minimizer found.  A
cycle whose schedule is identically zero skips the SDE phase outright,
which makes the zero-noise reduction to repeated local solves exact.
"""

import math
import time
from dataclasses import dataclass, field

from .errors import ContractViolationError, DivergedRunError
from .local_solver import LocalSolverConfig, RunReport, local_minimize
from .manifold import as_product
from .problems.base import Problem
from .rng import RngStream
from .sde import SdeConfig, sde_simulate_product


@dataclass
class IddmConfig:
    num_cycles: int = 10
    sde: SdeConfig = None
    local: LocalSolverConfig = field(default_factory=LocalSolverConfig)
    keep_incumbent_start: bool = True  # cycle k diffuses from X_k, not X_opt
    initial_local_solve: bool = True
    stop_after_stale_cycles: int = 0  # 0 disables the early stop

    def __post_init__(self):
        if self.num_cycles < 1:
            raise ContractViolationError("num_cycles must be >= 1")
        if self.sde is None:
            raise ContractViolationError("an SdeConfig is required")


@dataclass
class CycleRecord:
    index: int
    post_diffusion_objective: float
    post_local_objective: float
    wall_time: float
    diverged: bool = False


def incumbent_update(report: RunReport, candidate, value: float) -> RunReport:
    """Replace the incumbent iff strictly smaller; ties keep the earlier one."""
    if value < report.best_objective:
        report.best_objective = float(value)
        report.best_point = as_product(candidate)
    return report


def iddm_run(problem: Problem, X0, cfg: IddmConfig, rng: RngStream) -> RunReport:
    """Run exactly num_cycles diffusion + local-refinement cycles from X0.

    A diverged cycle is recorded and skipped (the walker restarts the next
    cycle from the last good point); it never aborts the run.
    """
    t0 = time.perf_counter()
    X = as_product(X0)
    report = RunReport(
        best_objective=problem.value_at(X),
        best_point=X,
        seed=rng.seed,
        config={"algorithm": "iddm", "num_cycles": cfg.num_cycles},
    )

    if cfg.initial_local_solve:
        t1 = time.perf_counter()
        X, stats = local_minimize(X, problem, cfg.local)
        incumbent_update(report, X, stats.objective)
        report.cycles.append(
            CycleRecord(0, math.nan, stats.objective, time.perf_counter() - t1)
        )

    skip_diffusion = getattr(cfg.sde.schedule, "is_null", False)
    stale = 0
    for cycle in range(1, cfg.num_cycles + 1):
        t1 = time.perf_counter()
        start = X if cfg.keep_incumbent_start else report.best_point
        diverged = False
        if skip_diffusion or cfg.sde.num_steps == 0:
            diffused = start
        else:
            try:
                diffused, _ = sde_simulate_product(
                    start, problem, cfg.sde, rng.child(1, cycle)
                )
            except DivergedRunError as err:
                diffused = err.last_point if err.last_point is not None else start
                diverged = True
        post_diff = problem.value_at(diffused)
        try:
            Xl, stats = local_minimize(diffused, problem, cfg.local)
        except DivergedRunError:
            report.cycles.append(
                CycleRecord(cycle, post_diff, math.nan,
                            time.perf_counter() - t1, diverged=True)
            )
            continue
        improved = stats.objective < report.best_objective
        incumbent_update(report, Xl, stats.objective)
        X = Xl
        report.cycles.append(
            CycleRecord(cycle, post_diff, stats.objective,
                        time.perf_counter() - t1, diverged=diverged)
        )
        stale = 0 if improved else stale + 1
        if cfg.stop_after_stale_cycles and stale >= cfg.stop_after_stale_cycles:
            break

    report.wall_time = time.perf_counter() - t0
    return report
