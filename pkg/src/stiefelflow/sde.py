"""Projected-noise SDE integrator on Stiefel products.

Each step projects an ambient Gaussian increment onto the tangent space
and applies the orthogonality-preserving Cayley update, so every iterate
stays feasible up to rounding.  Brownian increments for a whole cycle are
generated up front from the caller's stream; identical (seed, stream key,
config) reproduce the trajectory bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ConfigurationError, DimensionError, DivergedRunError
from .manifold import ProductPoint, StiefelPoint, as_product
from .problems.base import Problem, blocks_of
from .rng import RngStream
from .schedules import schedule_sigma


@dataclass
class SdeConfig:
    """Uniform time grid: K steps of length dt (cycle time T = K dt)."""

    dt: float
    num_steps: int
    schedule: object
    record_stride: int = 10
    reproject_every: int = 100
    reproject_tol: float = 1e-8

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        if self.num_steps < 0:
            raise ConfigurationError("num_steps must be >= 0")

    @property
    def total_time(self) -> float:
        return self.dt * self.num_steps


@dataclass
class Trajectory:
    """Per-stride record of (step, objective, sigma, feasibility residual)."""

    steps: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    feas_residuals: list = field(default_factory=list)

    def append(self, k, obj, sigma, res):
        self.steps.append(int(k))
        self.objectives.append(float(obj))
        self.sigmas.append(float(sigma))
        self.feas_residuals.append(float(res))


def brownian_increment(n: int, p: int, delta: float, rng: RngStream) -> np.ndarray:
    """n-by-p matrix of i.i.d. N(0, delta) entries, deterministic in the stream."""
    if delta <= 0:
        raise ConfigurationError("delta must be > 0")
    gen = rng.generator()
    return math.sqrt(delta) * gen.standard_normal((n, p))


def sde_step(Y: StiefelPoint, G, delta: float, sigma: float, dB) -> StiefelPoint:
    """Single update of the scheme; with sigma = 0 this is exactly the
    deterministic Cayley gradient step of length delta."""
    Yv = Y.value if isinstance(Y, StiefelPoint) else np.asarray(Y, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    dB = np.asarray(dB, dtype=np.float64)
    if G.shape != Yv.shape or dB.shape != Yv.shape:
        raise DimensionError(
            f"shape mismatch: Y {Yv.shape}, G {G.shape}, dB {dB.shape}"
        )
    out = _core.sde_step(Yv, G, float(delta), float(sigma), dB)
    tol = Y.feas_tol if isinstance(Y, StiefelPoint) else 1e-8
    return StiefelPoint(out, feas_tol=tol)


def _draw_increments(block_dims, K, dt, rng: RngStream):
    """One (K, n, p) increment array per block, each from its own sub-stream."""
    root = math.sqrt(dt)
    out = []
    for b, (n, p) in enumerate(block_dims):
        gen = rng.child(b).generator()
        out.append(root * gen.standard_normal((K, n, p)))
    return out


def sde_simulate_product(Y0, problem: Problem, cfg: SdeConfig, rng: RngStream):
    """Run K coupled block updates sharing sigma_k and the objective.

    Returns (final ProductPoint, Trajectory).  Raises DivergedRunError
    (carrying the last finite iterate) if the objective or gradient stops
    being finite.
    """
    point = as_product(Y0)
    blocks = [b.copy() for b in blocks_of(point)]
    problem.check_dims(blocks)
    K = cfg.num_steps
    traj = Trajectory()
    if K == 0:
        traj.append(0, problem.value(blocks), schedule_sigma(cfg.schedule, 0),
                    max(_core.feas_residual(b) for b in blocks))
        return point, traj

    dB = _draw_increments([b.shape for b in blocks], K, cfg.dt, rng)
    sigmas = np.array([schedule_sigma(cfg.schedule, k) for k in range(K)])

    def _record(k):
        obj = problem.value(blocks)
        res = max(_core.feas_residual(b) for b in blocks)
        traj.append(k, obj, sigmas[min(k, K - 1)], res)
        return obj

    # Iterates stay on the (compact) manifold, so the current blocks are
    # always the last finite iterate when the problem callbacks blow up.
    obj = _record(0)
    if not math.isfinite(obj):
        raise DivergedRunError("objective not finite at the initial point",
                               last_point=point)
    for k in range(K):
        G = problem.euclidean_gradient(blocks)
        if not all(np.all(np.isfinite(g)) for g in G):
            raise DivergedRunError(
                f"gradient diverged at step {k}",
                last_point=ProductPoint(blocks),
            )
        for b in range(len(blocks)):
            blocks[b] = _core.sde_step(blocks[b], G[b], cfg.dt, sigmas[k], dB[b][k])
        if cfg.reproject_every and (k + 1) % cfg.reproject_every == 0:
            for b in range(len(blocks)):
                if _core.feas_residual(blocks[b]) > cfg.reproject_tol:
                    blocks[b] = _core.qr_orthonormalize(blocks[b])
        if (k + 1) % cfg.record_stride == 0 or k == K - 1:
            obj = _record(k + 1)
            if not math.isfinite(obj):
                raise DivergedRunError(
                    f"objective diverged at step {k}",
                    last_point=ProductPoint(blocks),
                )
    return ProductPoint(blocks), traj


def sde_simulate(Y0: StiefelPoint, problem: Problem, cfg: SdeConfig, rng: RngStream):
    """Single-block convenience wrapper around sde_simulate_product."""
    out, traj = sde_simulate_product(Y0, problem, cfg, rng)
    return out.blocks[0], traj
