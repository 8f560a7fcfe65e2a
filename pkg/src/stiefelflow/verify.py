"""Independent checks of the geometric and stochastic identities.

Covers the extrinsic Laplace-Beltrami operator, the Ito drift correction
-(n-1)/2 sigma^2 X of the projected-noise diffusion, the half-order strong
convergence of the Cayley scheme, Gibbs stationarity on the circle, and
finite-difference validation of every problem gradient.  Monte-Carlo
tolerances combine 3 standard errors with an explicit O(h) bias allowance
of 5 h |target|, since the identities are exact only in the h -> 0 limit.
"""

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ContractViolationError
from .manifold import StiefelPoint
from .problems.base import Problem, blocks_of, zero_problem
from .rng import RngStream


@dataclass
class TestFunction:
    """Twice-differentiable scalar test function with explicit partials.

    value(X) -> float; grad(X) -> same-shape array of first partials;
    hess(X, (i, j), (u, v)) -> second partial d_ij d_uv.
    """

    value: callable
    grad: callable
    hess: callable
    name: str = "phi"


def linear_test_function(C: np.ndarray) -> TestFunction:
    C = np.asarray(C, dtype=np.float64)
    return TestFunction(
        value=lambda X: float(np.sum(C * X)),
        grad=lambda X: C.copy(),
        hess=lambda X, ij, uv: 0.0,
        name="linear",
    )


def quadratic_test_function(C: np.ndarray) -> TestFunction:
    """phi(X) = sum_ij C_ij X_ij^2."""
    C = np.asarray(C, dtype=np.float64)
    return TestFunction(
        value=lambda X: float(np.sum(C * X * X)),
        grad=lambda X: 2.0 * C * X,
        hess=lambda X, ij, uv: 2.0 * C[ij] if ij == uv else 0.0,
        name="quadratic",
    )


def frobenius_test_function() -> TestFunction:
    return TestFunction(
        value=lambda X: float(np.sum(X * X)),
        grad=lambda X: 2.0 * X,
        hess=lambda X, ij, uv: 2.0 if ij == uv else 0.0,
        name="frobenius-squared",
    )


def entry_squared_test_function(i: int = 0, j: int = 0) -> TestFunction:
    def hess(X, ij, uv):
        return 2.0 if ij == (i, j) and uv == (i, j) else 0.0

    return TestFunction(
        value=lambda X: float(X[i, j] ** 2),
        grad=lambda X: _entry_grad(X, i, j),
        hess=hess,
        name=f"entry({i},{j})^2",
    )


def _entry_grad(X, i, j):
    g = np.zeros_like(X)
    g[i, j] = 2.0 * X[i, j]
    return g


def lb_apply(f: TestFunction, X: StiefelPoint) -> float:
    """Extrinsic Laplace-Beltrami operator at X applied to f:

    sum_ij d2_ij - sum_ijuv X_iv X_uj d_ij d_uv - (n-1) sum_ij X_ij d_ij.
    """
    Xv = X.value if isinstance(X, StiefelPoint) else np.asarray(X, dtype=np.float64)
    n, p = Xv.shape
    G = f.grad(Xv)
    H = np.empty((n, p, n, p))
    for i in range(n):
        for j in range(p):
            for u in range(n):
                for v in range(p):
                    H[i, j, u, v] = f.hess(Xv, (i, j), (u, v))
    term1 = float(np.einsum("ijij->", H))
    term2 = float(np.einsum("iv,uj,ijuv->", Xv, Xv, H))
    term3 = (n - 1) * float(np.sum(Xv * G))
    return term1 - term2 - term3


@dataclass
class CheckResult:
    name: str
    estimate: float
    target: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "estimate": self.estimate,
            "target": self.target,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "detail": self.detail,
        }


def generator_mc_check(X0: StiefelPoint, f: TestFunction, h: float,
                       num_samples: int, rng: RngStream):
    """Monte-Carlo estimate of (E[phi(W_h)] - phi(X0)) / h for the pure
    diffusion (G = 0, sigma = 1), compared with 0.5 * lb_apply(f, X0).

    Returns (estimate, target, zscore) where the zscore is the studentized
    deviation after subtracting the O(h) bias allowance.
    """
    Xv = X0.value if isinstance(X0, StiefelPoint) else np.asarray(X0, dtype=np.float64)
    n, p = Xv.shape
    G = np.zeros((n, p))
    gen = rng.generator()
    dB = math.sqrt(h) * gen.standard_normal((num_samples, n, p))
    W = _core.sde_step_batch(Xv, G, h, 1.0, dB)
    phi0 = f.value(Xv)
    vals = np.array([f.value(W[s]) for s in range(num_samples)])
    incr = (vals - phi0) / h
    estimate = float(np.mean(incr))
    se = float(np.std(incr, ddof=1) / math.sqrt(num_samples))
    target = 0.5 * lb_apply(f, Xv)
    bias = 5.0 * h * abs(target)
    dev = max(abs(estimate - target) - bias, 0.0)
    zscore = dev / se if se > 0 else (0.0 if dev == 0.0 else math.inf)
    return estimate, target, zscore


def ito_drift_check(X0: StiefelPoint, h: float, sigma: float,
                    num_samples: int, rng: RngStream, _target_sign: float = 1.0):
    """Entry-wise comparison of E[W_h - X0] with -((n-1)/2) sigma^2 X0 h.

    ``_target_sign`` is a mutation-test hook: -1 flips the analytic target
    so the check must fail on a correct integrator.
    """
    Xv = X0.value if isinstance(X0, StiefelPoint) else np.asarray(X0, dtype=np.float64)
    n, p = Xv.shape
    G = np.zeros((n, p))
    gen = rng.generator()
    dB = math.sqrt(h) * gen.standard_normal((num_samples, n, p))
    W = _core.sde_step_batch(Xv, G, h, sigma, dB)
    incr = W - Xv[None, :, :]
    mean_incr = incr.mean(axis=0)
    se = incr.std(axis=0, ddof=1) / math.sqrt(num_samples)
    target = _target_sign * (-(n - 1) / 2.0) * sigma**2 * Xv * h
    bias = 5.0 * h * np.abs(target)
    dev = np.maximum(np.abs(mean_incr - target) - bias, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev == 0.0, 0.0, np.inf))
    return mean_incr, target, float(np.max(z))


def _diffusion_path(X0, G, T, K, dB, sigma):
    deltas = np.full(K, T / K)
    sigmas = np.full(K, sigma)
    return _core.sde_chain(X0, G, deltas, sigmas, dB)


def strong_order_check(problem: Problem, X0: StiefelPoint, T: float,
                       finest_K: int, levels: int, num_paths: int,
                       rng: RngStream, sigma: float = 1.0):
    """Self-convergence estimate of the strong (pathwise) error order.

    Each path is simulated on the finest grid and on 2^l-coarsened grids
    that reuse the same Brownian path through summed increments; the
    returned slope is the least-squares fit of log(rms error) against
    log(delta).  Only constant-gradient problems are supported here (zero
    and linear objectives cover the theorem's setting).
    """
    if finest_K % (2**levels) != 0:
        raise ContractViolationError("finest_K must be divisible by 2^levels")
    if problem.const_euclidean_gradient is None:
        raise ContractViolationError(
            "strong_order_check needs a constant-gradient problem"
        )
    Xv = X0.value if isinstance(X0, StiefelPoint) else np.asarray(X0, dtype=np.float64)
    G = problem.const_euclidean_gradient[0]
    n, p = Xv.shape
    sq_errs = np.zeros(levels)
    for path in range(num_paths):
        gen = rng.child(path).generator()
        dB = math.sqrt(T / finest_K) * gen.standard_normal((finest_K, n, p))
        ref = _diffusion_path(Xv, G, T, finest_K, dB, sigma)
        for lev in range(1, levels + 1):
            m = 2**lev
            K = finest_K // m
            dB_c = dB.reshape(K, m, n, p).sum(axis=1)
            Y = _diffusion_path(Xv, G, T, K, dB_c, sigma)
            sq_errs[lev - 1] += float(np.sum((ref - Y) ** 2))
    rms = np.sqrt(sq_errs / num_paths)
    deltas = np.array([T / (finest_K // 2**lev) for lev in range(1, levels + 1)])
    if np.all(rms == 0.0):
        return 0.0, list(zip(deltas, rms))
    slope = float(np.polyfit(np.log(deltas), np.log(np.maximum(rms, 1e-300)), 1)[0])
    return slope, list(zip(deltas.tolist(), rms.tolist()))


def gibbs_circle_check(c_height: float, sigma: float, burn_in: int,
                       num_samples: int, rng: RngStream, dt: float = 1e-2,
                       num_bins: int = 72) -> float:
    """Total-variation distance between the long-run angle histogram of the
    constant-sigma diffusion for F(x) = c x_1 on the circle and the Gibbs
    density proportional to exp(-2 c cos(theta) / sigma^2)."""
    X0 = np.array([[1.0], [0.0]])
    G = np.array([[c_height], [0.0]])
    K = burn_in + num_samples
    gen = rng.generator()
    dB = math.sqrt(dt) * gen.standard_normal((K, 2, 1))
    traj = np.empty((K, 2, 1))
    _core.sde_chain(X0, G, np.full(K, dt), np.full(K, sigma), dB, traj=traj)
    angles = np.arctan2(traj[burn_in:, 1, 0], traj[burn_in:, 0, 0])
    hist, edges = np.histogram(angles, bins=num_bins, range=(-math.pi, math.pi))
    empirical = hist / hist.sum()

    # Bin masses of the target by fine quadrature inside each bin.
    fine = 64
    theta = np.linspace(-math.pi, math.pi, num_bins * fine, endpoint=False)
    theta = theta + (theta[1] - theta[0]) / 2.0
    dens = np.exp(-2.0 * c_height * np.cos(theta) / sigma**2)
    dens /= dens.sum()
    target = dens.reshape(num_bins, fine).sum(axis=1)
    return float(0.5 * np.sum(np.abs(empirical - target)))


def finite_diff_gradient_check(problem: Problem, X, h: float = 1e-6) -> float:
    """Max over blocks of the Frobenius-relative error between the analytic
    Euclidean gradient and central differences with step h."""
    if not 1e-8 <= h <= 1e-4:
        raise ContractViolationError("h must lie in [1e-8, 1e-4]")
    blocks = [b.copy() for b in blocks_of(X)]
    analytic = problem.euclidean_gradient(blocks)
    worst = 0.0
    for b, Gb in enumerate(analytic):
        fd = np.empty_like(Gb)
        base = blocks[b]
        for idx in np.ndindex(*Gb.shape):
            orig = base[idx]
            base[idx] = orig + h
            fplus = problem.value(blocks)
            base[idx] = orig - h
            fminus = problem.value(blocks)
            base[idx] = orig
            fd[idx] = (fplus - fminus) / (2.0 * h)
        scale = max(float(np.linalg.norm(Gb)), 1e-12)
        worst = max(worst, float(np.linalg.norm(Gb - fd)) / scale)
    return worst


# ---------------------------------------------------------------------------
# Aggregated suite


def verify_all(budget: str = "quick", seed: int = 20240901) -> dict:
    """Run the verification suite; budget 'quick' shrinks sample counts and
    widens tolerances, 'full' uses the acceptance-grade budgets."""
    if budget not in ("quick", "full"):
        raise ContractViolationError("budget must be 'quick' or 'full'")
    full = budget == "full"
    results = []
    t0 = time.perf_counter()
    root = RngStream(seed)

    # Ito drift on M_{3,1}.
    X0 = _stiefel_from(root.child(0), 3, 1)
    samples = 100_000 if full else 20_000
    _, _, zmax = ito_drift_check(X0, 1e-3, 1.0, samples, root.child(1))
    ztol = 4.0 if full else 5.0
    results.append(CheckResult("ito-drift-m31", zmax, 0.0, ztol, zmax <= ztol,
                               {"samples": samples, "h": 1e-3}))

    # Generator identity on M_{3,2}, linear and quadratic test functions.
    X0 = _stiefel_from(root.child(2), 3, 2)
    gen_probe = root.child(3).generator()
    for tf in (linear_test_function(gen_probe.standard_normal((3, 2))),
               quadratic_test_function(gen_probe.standard_normal((3, 2)))):
        samples = 100_000 if full else 20_000
        est, tgt, z = generator_mc_check(X0, tf, 1e-3, samples, root.child(4))
        ztol = 3.0 if full else 4.0
        results.append(CheckResult(f"generator-{tf.name}", est, tgt, ztol,
                                   z <= ztol, {"zscore": z, "samples": samples}))

    # Strong order, pure diffusion on M_{3,2}.
    X0 = _stiefel_from(root.child(5), 3, 2)
    finest = 2**12 if full else 2**10
    paths = 200 if full else 60
    slope, pairs = strong_order_check(zero_problem(3, 2), X0, 0.5, finest, 4,
                                      paths, root.child(6))
    lo, hi = (0.35, 0.75) if full else (0.3, 0.8)
    results.append(CheckResult("strong-order-diffusion", slope, 0.5, hi - 0.5,
                               lo <= slope <= hi,
                               {"pairs": pairs, "window": [lo, hi]}))

    # Gibbs stationarity on the circle.
    samples = 1_000_000 if full else 200_000
    tv = gibbs_circle_check(1.0, 1.0, 10_000, samples, root.child(7))
    tvtol = 0.05 if full else 0.08
    results.append(CheckResult("gibbs-circle", tv, 0.0, tvtol, tv <= tvtol,
                               {"samples": samples}))

    # Gradient oracles for the four problem families.
    results.extend(_gradient_checks(root.child(8), 100 if full else 20))

    # Exact Laplace-Beltrami identities.
    X0 = _stiefel_from(root.child(9), 4, 2)
    lb_const = lb_apply(frobenius_test_function(), X0)
    results.append(CheckResult("lb-constant-on-manifold", lb_const, 0.0, 1e-10,
                               abs(lb_const) <= 1e-10))
    C = root.child(10).generator().standard_normal((4, 2))
    lb_lin = lb_apply(linear_test_function(C), X0)
    tgt = -(4 - 1) * float(np.sum(C * X0.value))
    results.append(CheckResult("lb-linear", lb_lin, tgt, 1e-10,
                               abs(lb_lin - tgt) <= 1e-10))

    report = {
        "budget": budget,
        "seed": seed,
        "backend": _core.BACKEND,
        "elapsed_seconds": time.perf_counter() - t0,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    return report


def _stiefel_from(stream: RngStream, n: int, p: int) -> StiefelPoint:
    from .manifold import random_point

    return random_point(n, p, stream)


def _gradient_checks(stream: RngStream, num_points: int):
    from .manifold import random_point
    from .problems import (
        biquad_make,
        biquad_problem,
        cryoem_generate,
        cryoem_problem,
        hp1_problem,
        petersen_graph,
        stability_problem,
    )
    from .manifold import ProductPoint

    cases = [
        ("hp1", hp1_problem(10)),
        ("biquad", biquad_problem(biquad_make(6, "I", rng=stream.child(0)))),
        ("stability", stability_problem(petersen_graph())),
        ("cryoem", cryoem_problem(cryoem_generate(5, 0.2, stream.child(1)))),
    ]
    out = []
    for ci, (name, prob) in enumerate(cases):
        worst = 0.0
        for t in range(num_points):
            pt = ProductPoint(
                [random_point(n, p, stream.child(2, ci, t, b))
                 for b, (n, p) in enumerate(prob.block_dims)]
            )
            worst = max(worst, finite_diff_gradient_check(prob, pt))
        out.append(CheckResult(f"gradient-fd-{name}", worst, 0.0, 1e-4,
                               worst <= 1e-4, {"points": num_points}))
    return out


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
