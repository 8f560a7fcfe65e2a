import numpy as np
import pytest

import stiefelflow as sf
from stiefelflow import (
    Constant,
    DimensionError,
    PowerLaw,
    RngStream,
    SdeConfig,
    StiefelPoint,
    sde_simulate,
    sde_simulate_product,
    sde_step,
)
from stiefelflow._core import ALPHA, cayley_from_z
from stiefelflow.problems import Problem, hp1_problem, zero_problem

from conftest import make_matrix, make_point


def rayleigh_problem(diag):
    D = np.diag(diag)
    n = len(diag)
    return Problem(
        name="rayleigh",
        block_dims=[(n, 1)],
        value=lambda b: float(b[0][:, 0] @ D @ b[0][:, 0]),
        euclidean_gradient=lambda b: [2.0 * (D @ b[0])],
    )


class TestSdeStep:
    def test_zero_noise_is_deterministic_cayley_step(self):
        Y = make_point(6, 2, seed=1)
        G = make_matrix(6, 2, seed=2)
        delta = 0.05
        out = sde_step(Y, G, delta, 0.0, np.zeros((6, 2)))
        ref = cayley_from_z(Y.value, -delta * G)
        assert np.array_equal(out.value, ref)

    def test_zero_delta_zero_sigma_fixed_point(self):
        Y = make_point(5, 2, seed=3)
        out = sde_step(Y, make_matrix(5, 2), 0.0, 0.0, make_matrix(5, 2))
        assert np.allclose(out.value, Y.value, atol=1e-15)

    def test_square_case_matches_general_formula(self):
        # For p = n, (I - beta Y Y^T) dB = alpha dB, so the general
        # projected noise and the simplified form agree exactly.
        stream = RngStream(4)
        for t in range(5):
            Y = sf.random_point(4, 4, stream.child(t, 0))
            G = stream.child(t, 1).generator().standard_normal((4, 4))
            dB = stream.child(t, 2).generator().standard_normal((4, 4))
            delta, sigma = 0.01, 0.8
            Z_general = -delta * G + sigma * (dB - (1 - ALPHA) * (Y.value @ (Y.value.T @ dB)))
            Z_simple = -delta * G + (ALPHA * sigma) * dB
            assert np.linalg.norm(Z_general - Z_simple) <= 1e-14 * max(1, np.linalg.norm(Z_simple))
            out = sde_step(Y, G, delta, sigma, dB)
            ref = cayley_from_z(Y.value, Z_simple)
            assert np.linalg.norm(out.value - ref) <= 1e-14

    def test_feasibility(self):
        stream = RngStream(5)
        Y = sf.random_point(50, 5, stream.child(0))
        for k in range(50):
            G = stream.child(1, k).generator().standard_normal((50, 5))
            dB = stream.child(2, k).generator().standard_normal((50, 5)) * 0.1
            Y = sde_step(Y, G, 0.01, 1.0, dB)
            assert Y.residual() <= 1e-10

    def test_shape_mismatch(self):
        Y = make_point(4, 2)
        with pytest.raises(DimensionError):
            sde_step(Y, np.zeros((3, 2)), 0.1, 0.0, np.zeros((4, 2)))


class TestSdeSimulate:
    def test_zero_steps_returns_start(self):
        Y0 = make_point(5, 1, seed=6)
        prob = zero_problem(5, 1)
        cfg = SdeConfig(dt=0.1, num_steps=0, schedule=Constant(1.0))
        out, traj = sde_simulate(Y0, prob, cfg, RngStream(7))
        assert np.array_equal(out.value, Y0.value)
        assert traj.steps == [0]

    def test_gradient_flow_reaches_smallest_eigenvector(self):
        prob = rayleigh_problem([1.0, 2.0, 3.0])
        Y0 = StiefelPoint(np.array([[1.0], [1.0], [1.0]]) / np.sqrt(3.0))
        cfg = SdeConfig(dt=1e-2, num_steps=10_000, schedule=Constant(0.0))
        out, traj = sde_simulate(Y0, prob, cfg, RngStream(8))
        assert prob.value_at(out) == pytest.approx(1.0, abs=1e-6)
        assert abs(out.value[0, 0]) == pytest.approx(1.0, abs=1e-3)

    def test_pure_diffusion_stays_feasible(self):
        prob = zero_problem(6, 2)
        Y0 = make_point(6, 2, seed=9)
        cfg = SdeConfig(dt=1e-2, num_steps=1000, schedule=Constant(1.0),
                        record_stride=1)
        out, traj = sde_simulate(Y0, prob, cfg, RngStream(10))
        assert max(traj.feas_residuals) <= 1e-8
        assert out.residual() <= 1e-8

    def test_deterministic_replay(self):
        prob = hp1_problem(8)
        Y0 = make_point(8, 1, seed=11)
        cfg = SdeConfig(dt=0.05, num_steps=200, schedule=PowerLaw(0.5, 0.05, 8))
        out1, _ = sde_simulate(Y0, prob, cfg, RngStream(12, key=(3,)))
        out2, _ = sde_simulate(Y0, prob, cfg, RngStream(12, key=(3,)))
        assert np.array_equal(out1.value, out2.value)


class TestSdeSimulateProduct:
    def test_single_block_matches_plain_simulate(self):
        prob = hp1_problem(9)
        Y0 = make_point(9, 1, seed=13)
        cfg = SdeConfig(dt=0.05, num_steps=100, schedule=Constant(0.7))
        rng = RngStream(14, key=(5,))
        a, _ = sf.sde_simulate(Y0, prob, cfg, rng)
        b, _ = sde_simulate_product(sf.ProductPoint([Y0]), prob, cfg, rng)
        assert np.array_equal(a.value, b.blocks[0].value)

    def test_separable_biquadratic_gradient_flow_monotone(self):
        # b(x, y) = x_1^2 y_1^2: zero-noise flow must not increase the value.
        n = 6
        T = np.zeros((n, n, n, n))
        T[0, 0, 0, 0] = 1.0
        from stiefelflow.problems import BiquadTensor, biquad_problem

        prob = biquad_problem(BiquadTensor(n, T))
        x0 = sf.ProductPoint([make_point(n, 1, seed=15), make_point(n, 1, seed=16)])
        cfg = SdeConfig(dt=1e-3, num_steps=1000, schedule=Constant(0.0),
                        record_stride=1)
        out, traj = sde_simulate_product(x0, prob, cfg, RngStream(17))
        objs = np.array(traj.objectives)
        assert np.all(np.diff(objs) <= 1e-12)

    def test_blocks_stay_feasible_with_noise(self):
        prob = sf.problems.biquad_problem(
            sf.problems.biquad_make(5, "I", rng=RngStream(18))
        )
        x0 = sf.ProductPoint([make_point(5, 1, seed=19), make_point(5, 1, seed=20)])
        cfg = SdeConfig(dt=1e-2, num_steps=1000, schedule=Constant(1.0),
                        record_stride=1)
        out, traj = sde_simulate_product(x0, prob, cfg, RngStream(21))
        assert max(traj.feas_residuals) <= 1e-8

    def test_diverged_run_carries_last_point(self):
        calls = {"n": 0}

        def bad_grad(blocks):
            calls["n"] += 1
            if calls["n"] > 3:
                return [np.full((4, 1), np.nan)]
            return [np.zeros((4, 1))]

        prob = Problem("explodes", [(4, 1)], lambda b: 0.0, bad_grad)
        x0 = sf.ProductPoint([make_point(4, 1, seed=22)])
        cfg = SdeConfig(dt=0.1, num_steps=50, schedule=Constant(0.5))
        with pytest.raises(sf.DivergedRunError) as exc:
            sde_simulate_product(x0, prob, cfg, RngStream(23))
        assert exc.value.last_point is not None
        for b in exc.value.last_point.blocks:
            assert b.residual() <= 1e-8
