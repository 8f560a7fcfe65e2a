import math

import numpy as np
import pytest

import stiefelflow as sf
from stiefelflow import RngStream
from stiefelflow.problems import hp1_problem, linear_trace_problem, zero_problem
from stiefelflow.verify import (
    entry_squared_test_function,
    finite_diff_gradient_check,
    frobenius_test_function,
    generator_mc_check,
    gibbs_circle_check,
    ito_drift_check,
    lb_apply,
    linear_test_function,
    quadratic_test_function,
    report_to_json,
    strong_order_check,
    verify_all,
)

from conftest import make_matrix, make_point


def lb_basis_trace(f, X):
    """Independent evaluation of the Laplace-Beltrami operator: trace of the
    canonical Hessian quadratic form over an orthonormal tangent basis
    Q(E_ij - E_ji) (i < j <= p) and Q E_ij (i > p), with Q = [X, X_perp]."""
    Xv = X.value
    n, p = Xv.shape
    U_, _, _ = np.linalg.svd(Xv, full_matrices=True)
    Q = np.hstack([Xv, U_[:, p:]])
    assert np.linalg.norm(Q.T @ Q - np.eye(n)) <= 1e-12
    G = f.grad(Xv)
    H = np.empty((n, p, n, p))
    for i in range(n):
        for j in range(p):
            for u in range(n):
                for v in range(p):
                    H[i, j, u, v] = f.hess(Xv, (i, j), (u, v))
    basis = []
    for i in range(p):
        for j in range(i + 1, p):
            E = np.zeros((n, p))
            E[i, j] = 1.0
            E[j, i] = -1.0
            basis.append(Q @ E)
    for i in range(p, n):
        for j in range(p):
            E = np.zeros((n, p))
            E[i, j] = 1.0
            basis.append(Q @ E)
    M = Xv.T @ G + G.T @ Xv
    Pperp = np.eye(n) - Xv @ Xv.T
    total = 0.0
    for U in basis:
        eucl = float(np.einsum("ij,ijuv,uv->", U, H, U))
        cross = float(np.trace(G.T @ U @ Xv.T @ U))
        curv = -0.5 * float(np.trace(M @ U.T @ Pperp @ U))
        total += eucl + cross + curv
    return total


class TestLbApply:
    def test_constant_on_manifold_is_zero(self):
        X = make_point(5, 2, seed=1)
        assert lb_apply(frobenius_test_function(), X) == pytest.approx(0.0, abs=1e-10)

    def test_linear_function(self):
        X = make_point(4, 2, seed=2)
        C = make_matrix(4, 2, seed=3)
        out = lb_apply(linear_test_function(C), X)
        assert out == pytest.approx(-(4 - 1) * float(np.sum(C * X.value)), abs=1e-10)

    def test_matches_basis_trace_oracle(self):
        X = make_point(3, 2, seed=4)
        fns = [
            entry_squared_test_function(0, 0),
            quadratic_test_function(make_matrix(3, 2, seed=5)),
            linear_test_function(make_matrix(3, 2, seed=6)),
        ]
        for f in fns:
            assert lb_apply(f, X) == pytest.approx(lb_basis_trace(f, X), abs=1e-10)

    def test_matches_basis_trace_various_dims(self):
        for n, p, seed in [(4, 1, 7), (5, 3, 8), (4, 4, 9)]:
            X = make_point(n, p, seed=seed)
            f = quadratic_test_function(make_matrix(n, p, seed=seed + 50))
            assert lb_apply(f, X) == pytest.approx(lb_basis_trace(f, X), abs=1e-9)


class TestGeneratorCheck:
    def test_linear_function(self):
        X = make_point(3, 2, seed=10)
        C = make_matrix(3, 2, seed=11)
        est, target, z = generator_mc_check(X, linear_test_function(C), 1e-3,
                                            40_000, RngStream(12))
        assert target == pytest.approx(-0.5 * (3 - 1) * np.sum(C * X.value))
        assert z <= 4.0

    def test_constant_function(self):
        X = make_point(3, 2, seed=13)
        const = sf.verify.TestFunction(
            value=lambda M: 4.2, grad=lambda M: np.zeros_like(M),
            hess=lambda M, ij, uv: 0.0, name="const",
        )
        est, target, z = generator_mc_check(X, const, 1e-3, 5_000, RngStream(14))
        assert est == 0.0 and target == 0.0 and z == 0.0

    def test_square_orthogonal_case(self):
        # On M_{2,2} with phi = X_11 the drift gives -(n-1)/2 X_11 = -X_11/2.
        X = make_point(2, 2, seed=15)
        C = np.zeros((2, 2))
        C[0, 0] = 1.0
        f = linear_test_function(C)
        est, target, z = generator_mc_check(X, f, 1e-3, 40_000, RngStream(16))
        assert target == pytest.approx(-0.5 * X.value[0, 0])
        assert z <= 4.0


class TestItoDrift:
    def test_trivial_on_m11(self):
        X = sf.StiefelPoint(np.array([[1.0]]))
        mean_incr, target, z = ito_drift_check(X, 1e-3, 1.0, 2_000, RngStream(20))
        assert np.allclose(target, 0.0)
        assert np.allclose(mean_incr, 0.0, atol=1e-12)

    def test_m31(self):
        X = make_point(3, 1, seed=21)
        _, _, z = ito_drift_check(X, 1e-3, 1.0, 50_000, RngStream(22))
        assert z <= 4.0

    def test_drift_scales_with_sigma_squared(self):
        X = make_point(3, 1, seed=23)
        h, S = 1e-3, 400_000
        m1, _, _ = ito_drift_check(X, h, 1.0, S, RngStream(24))
        m2, _, _ = ito_drift_check(X, h, 2.0, S, RngStream(25))
        # project onto the radial direction where the drift lives
        r1 = float(np.sum(m1 * X.value))
        r2 = float(np.sum(m2 * X.value))
        assert r2 / r1 == pytest.approx(4.0, abs=1.2)

    def test_mutation_hook_flips_target(self):
        X = make_point(3, 1, seed=26)
        _, _, z = ito_drift_check(X, 1e-3, 1.0, 50_000, RngStream(27),
                                  _target_sign=-1.0)
        assert z > 4.0  # a sign-flipped target must fail the check


class TestStrongOrder:
    def test_pure_diffusion_half_order(self):
        X = make_point(3, 2, seed=30)
        slope, pairs = strong_order_check(zero_problem(3, 2), X, 0.5, 2**10, 4,
                                          60, RngStream(31))
        assert 0.3 <= slope <= 0.8
        deltas = [d for d, _ in pairs]
        assert deltas == sorted(deltas)

    def test_deterministic_drift_first_order(self):
        # Error against the finest grid behaves like C * (delta - delta_ref),
        # so the first-order rate only shows on levels well away from the
        # reference; fit on the four coarsest of six levels.
        X = make_point(3, 2, seed=32)
        C = make_matrix(3, 2, seed=33)
        _, pairs = strong_order_check(linear_trace_problem(C), X, 0.5, 2**12, 6,
                                      1, RngStream(34), sigma=0.0)
        deltas = np.log([d for d, _ in pairs[2:]])
        errs = np.log([r for _, r in pairs[2:]])
        slope = np.polyfit(deltas, errs, 1)[0]
        assert slope == pytest.approx(1.0, abs=0.15)

    def test_zero_noise_zero_gradient_exact(self):
        X = make_point(3, 2, seed=35)
        slope, pairs = strong_order_check(zero_problem(3, 2), X, 0.5, 2**8, 3,
                                          2, RngStream(36), sigma=0.0)
        assert all(r == 0.0 for _, r in pairs)

    def test_requires_divisible_grid(self):
        X = make_point(3, 2, seed=37)
        with pytest.raises(sf.ContractViolationError):
            strong_order_check(zero_problem(3, 2), X, 0.5, 100, 4, 1, RngStream(38))


class TestGibbs:
    def test_flat_target_when_no_objective(self):
        tv = gibbs_circle_check(0.0, 1.0, 5_000, 200_000, RngStream(40))
        assert tv <= 0.05

    def test_cosine_gibbs_density(self):
        tv = gibbs_circle_check(1.0, 1.0, 5_000, 200_000, RngStream(41))
        assert tv <= 0.08

    def test_large_sigma_flattens(self):
        tv_unif = gibbs_circle_check(1.0, 10.0, 5_000, 200_000, RngStream(42),
                                     num_bins=72)
        # compare against the uniform law directly
        assert tv_unif <= 0.05


class TestFiniteDiff:
    def test_quadratic_is_machine_exact(self):
        B = make_matrix(6, 6, seed=50)
        B = B + B.T
        prob = sf.problems.Problem(
            "quad", [(6, 1)],
            lambda b: float(b[0][:, 0] @ B @ b[0][:, 0]),
            lambda b: [2.0 * (B @ b[0])],
        )
        x = make_point(6, 1, seed=51)
        assert finite_diff_gradient_check(prob, x, h=1e-4) <= 1e-8

    def test_hp1(self):
        x = make_point(10, 1, seed=52)
        assert finite_diff_gradient_check(hp1_problem(10), x) <= 1e-4

    def test_h_range_enforced(self):
        x = make_point(4, 1, seed=53)
        with pytest.raises(sf.ContractViolationError):
            finite_diff_gradient_check(hp1_problem(4), x, h=1e-2)


class TestVerifyAll:
    def test_quick_suite_passes_and_serializes(self):
        report = verify_all(budget="quick", seed=123)
        assert report["passed"], [c for c in report["checks"] if not c["passed"]]
        text = report_to_json(report)
        assert '"checks"' in text
        names = {c["name"] for c in report["checks"]}
        assert "ito-drift-m31" in names
        assert "gibbs-circle" in names
        for c in report["checks"]:
            assert set(c) >= {"name", "estimate", "target", "tolerance", "passed"}

    def test_rejects_unknown_budget(self):
        with pytest.raises(sf.ContractViolationError):
            verify_all(budget="huge")

    def test_full_suite_passes(self):
        report = verify_all(budget="full", seed=123)
        assert report["passed"], [c for c in report["checks"] if not c["passed"]]
        for c in report["checks"]:
            assert set(c) >= {"name", "estimate", "target", "tolerance", "passed"}
