"""Compare the compiled kernels against the pure-NumPy fallback.

Run with ``python benchmarks/benchmark_kernels.py``.  Times the per-step
primitives and the fused serial chain on representative shapes; the chain
on tiny matrices is where the interpreter overhead dominates and the
extension pays off.
"""

import time

import numpy as np

from stiefelflow._core import _fallback

try:
    from stiefelflow._core import _kernels
except ImportError:
    _kernels = None


def _bench(fn, *args, repeat=5, min_time=0.2):
    # warm up, then time enough iterations to fill min_time
    fn(*args)
    n_iter = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n_iter):
            fn(*args)
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time or n_iter >= 1_000_000:
            return elapsed / n_iter
        n_iter = max(n_iter * 2, int(n_iter * min_time / max(elapsed, 1e-9)))


def main():
    gen = np.random.default_rng(0)
    rows = []

    def feasible(n, p):
        return np.linalg.qr(gen.standard_normal((n, p)))[0].copy()

    # single-step kernels
    for n, p in [(100, 1), (50, 5), (3, 2)]:
        Y = feasible(n, p)
        G = gen.standard_normal((n, p))
        dB = gen.standard_normal((n, p)) * 0.1
        args = (Y, G, 0.01, 1.0, dB)
        t_py = _bench(_fallback.sde_step, *args)
        t_c = _bench(_kernels.sde_step, *args) if _kernels else float("nan")
        rows.append((f"sde_step {n}x{p}", t_py, t_c))

    for n, p in [(100, 1), (50, 5)]:
        Y = feasible(n, p)
        Z = gen.standard_normal((n, p))
        t_py = _bench(_fallback.cayley_from_z, Y, Z)
        t_c = _bench(_kernels.cayley_from_z, Y, Z) if _kernels else float("nan")
        rows.append((f"cayley_from_z {n}x{p}", t_py, t_c))

    # fused serial chains (the hot loop of the Gibbs and order checks)
    for n, p, K in [(2, 1, 100_000), (3, 2, 20_000)]:
        Y = feasible(n, p)
        G = np.zeros((n, p))
        deltas = np.full(K, 1e-2)
        sigmas = np.ones(K)
        dB = gen.standard_normal((K, n, p)) * 0.1
        args = (Y, G, deltas, sigmas, dB)
        t_py = _bench(_fallback.sde_chain, *args, min_time=0.5) / K
        t_c = (_bench(_kernels.sde_chain, *args, min_time=0.5) / K
               if _kernels else float("nan"))
        rows.append((f"sde_chain/step {n}x{p} (K={K})", t_py, t_c))

    # batched one-step sampling (Monte-Carlo checks)
    Y = feasible(3, 1)
    dBb = gen.standard_normal((20_000, 3, 1)) * 0.03
    args = (Y, np.zeros((3, 1)), 1e-3, 1.0, dBb)
    t_py = _bench(_fallback.sde_step_batch, *args, min_time=0.5) / 20_000
    t_c = (_bench(_kernels.sde_step_batch, *args, min_time=0.5) / 20_000
           if _kernels else float("nan"))
    rows.append(("sde_step_batch/sample 3x1", t_py, t_c))

    print(f"{'kernel':<34} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for name, t_py, t_c in rows:
        speed = t_py / t_c if t_c == t_c and t_c > 0 else float("nan")
        print(f"{name:<34} {t_py * 1e6:>10.2f}us {t_c * 1e6:>10.2f}us {speed:>8.1f}x")
    if _kernels is None:
        print("compiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
