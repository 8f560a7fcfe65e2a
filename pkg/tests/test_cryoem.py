import math

import numpy as np
import pytest
from scipy.stats import chisquare

import stiefelflow as sf
from stiefelflow import ContractViolationError, RngStream
from stiefelflow.problems import (
    complete_rotation,
    cryoem_generate,
    cryoem_problem,
    eigs_init,
    load_instance,
    mirror_blocks,
    procrustes_mse,
    recovery_mse,
    save_instance,
    smoothing_floor,
    truth_point,
)
from stiefelflow.problems.cryoem import random_rotation
from stiefelflow.verify import finite_diff_gradient_check


def rot_x(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestGeneration:
    def test_clean_data_truth_is_exact(self):
        inst = cryoem_generate(12, 0.0, RngStream(1))
        prob = cryoem_problem(inst)
        assert prob.value_at(truth_point(inst)) == pytest.approx(
            smoothing_floor(inst), rel=1e-12
        )
        # the coincidence identity holds pairwise
        for p in range(inst.num_pairs):
            i, j = inst.pair_i[p], inst.pair_j[p]
            u = inst.true_rotations[i][:, :2] @ inst.c_ij[p]
            v = inst.true_rotations[j][:, :2] @ inst.c_ji[p]
            assert np.linalg.norm(u - v) <= 1e-12

    def test_hand_computed_pair(self):
        # R_i = I, R_j = 90-degree rotation about x: thirds are e3 and
        # (0, -1, 0); unit cross is e1; both common lines equal (1, 0).
        Ri, Rj = np.eye(3), rot_x(math.pi / 2)
        t = np.cross(Ri[:, 2], Rj[:, 2])
        t /= np.linalg.norm(t)
        assert np.allclose(t, [1.0, 0.0, 0.0], atol=1e-12)
        cij = Ri.T[:2] @ t
        cji = Rj.T[:2] @ t
        assert np.allclose(cij, [1.0, 0.0], atol=1e-12)
        assert np.allclose(cji, [1.0, 0.0], atol=1e-12)

    def test_full_corruption_angles_uniform(self):
        inst = cryoem_generate(142, 1.0, RngStream(2))  # 10011 pairs
        angles = np.arctan2(inst.c_ij[:, 1], inst.c_ij[:, 0])
        hist, _ = np.histogram(angles[:10_000], bins=36, range=(-np.pi, np.pi))
        _, pvalue = chisquare(hist)
        assert pvalue > 0.01

    def test_rotations_are_proper_and_uniformish(self):
        gen = RngStream(3).generator()
        for _ in range(50):
            R = random_rotation(gen)
            assert np.linalg.norm(R.T @ R - np.eye(3)) <= 1e-10
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)

    def test_instance_roundtrip(self, tmp_path):
        inst = cryoem_generate(8, 0.4, RngStream(4))
        path = tmp_path / "inst.txt"
        save_instance(inst, path)
        back = load_instance(path)
        assert back.N == inst.N
        assert np.array_equal(back.c_ij, inst.c_ij)
        assert np.array_equal(back.c_ji, inst.c_ji)
        for a, b in zip(back.true_rotations, inst.true_rotations):
            assert np.array_equal(a, b)
        assert back.q == inst.q and back.smoothing_eps == inst.smoothing_eps


class TestObjective:
    def test_gradient_fd(self):
        inst = cryoem_generate(5, 0.2, RngStream(5))
        prob = cryoem_problem(inst)
        pt = sf.ProductPoint(
            [sf.random_point(3, 2, RngStream(6).child(b)) for b in range(5)]
        )
        assert finite_diff_gradient_check(prob, pt) <= 1e-4

    def test_global_rotation_invariance_at_exact_fit(self):
        # The coordinatewise q-power distance is rotation invariant wherever
        # residuals vanish (all global minimizers of clean data), so rotated
        # truths are equally optimal; away from exact fits only coordinate
        # sign flips are exact symmetries.
        inst = cryoem_generate(6, 0.0, RngStream(7))
        prob = cryoem_problem(inst)
        pt = truth_point(inst)
        O = rot_z(0.83) @ rot_x(-0.21)
        rotated = sf.ProductPoint([O @ b.value for b in pt.blocks])
        assert prob.value_at(rotated) == pytest.approx(prob.value_at(pt), abs=1e-10)

    def test_coordinate_flip_invariance_everywhere(self):
        inst = cryoem_generate(6, 0.3, RngStream(7))
        prob = cryoem_problem(inst)
        pt = sf.ProductPoint(
            [sf.random_point(3, 2, RngStream(77).child(b)) for b in range(6)]
        )
        for axis in range(3):
            D = np.eye(3)
            D[axis, axis] = -1.0
            flipped = sf.ProductPoint([D @ b.value for b in pt.blocks])
            assert prob.value_at(flipped) == pytest.approx(
                prob.value_at(pt), abs=1e-12
            )

    def test_mirror_invariance(self):
        # Flipping the third row of every block is an exact symmetry.
        inst = cryoem_generate(6, 0.3, RngStream(8))
        prob = cryoem_problem(inst)
        pt = sf.ProductPoint(
            [sf.random_point(3, 2, RngStream(9).child(b)) for b in range(6)]
        )
        assert prob.value_at(mirror_blocks(pt)) == pytest.approx(
            prob.value_at(pt), abs=1e-12
        )


class TestEigsInit:
    def test_blocks_feasible(self):
        inst = cryoem_generate(20, 0.0, RngStream(10))
        pt = eigs_init(inst)
        assert len(pt.blocks) == 20
        for b in pt.blocks:
            assert b.residual() <= 1e-10

    def test_clean_data_better_than_random(self):
        # The relaxation error at finite N is O(1); require it to beat the
        # random-rotations baseline (~6N) by an order of magnitude.
        inst = cryoem_generate(20, 0.0, RngStream(11))
        pt = eigs_init(inst)
        mse = recovery_mse(pt, inst.true_rotations)
        assert mse <= 0.6 * inst.N
        gen = RngStream(12).generator()
        rand = [random_rotation(gen)[:, :2] for _ in range(inst.N)]
        mse_rand = recovery_mse(sf.ProductPoint(rand), inst.true_rotations)
        assert mse <= mse_rand / 10

    def test_fully_corrupted_still_feasible(self):
        inst = cryoem_generate(12, 1.0, RngStream(13))
        pt = eigs_init(inst)
        for b in pt.blocks:
            assert b.residual() <= 1e-10

    def test_requires_three_images(self):
        inst = cryoem_generate(2, 0.0, RngStream(14))
        with pytest.raises(ContractViolationError):
            eigs_init(inst)


class TestProcrustes:
    def test_zero_on_equal(self):
        gen = RngStream(15).generator()
        rots = [random_rotation(gen) for _ in range(5)]
        assert procrustes_mse(rots, rots) == pytest.approx(0.0, abs=1e-20)

    def test_gauge_invariance(self):
        gen = RngStream(16).generator()
        rots = [random_rotation(gen) for _ in range(5)]
        O = random_rotation(gen)
        rotated = [O @ R for R in rots]
        assert procrustes_mse(rotated, rots) == pytest.approx(0.0, abs=1e-24)

    def test_matches_grid_search_oracle(self):
        # Multi-resolution search over Euler angles of O in SO(3); the
        # estimates are proper rotations so the optimal gauge is proper too.
        truth = [np.eye(3), rot_x(0.7)]
        est = [rot_z(0.01) @ truth[0], truth[1]]
        mse = procrustes_mse(est, truth)

        K = sum(np.asarray(e) @ np.asarray(t).T for e, t in zip(est, truth))
        const = sum(np.sum(np.asarray(e) ** 2) + np.sum(np.asarray(t) ** 2)
                    for e, t in zip(est, truth))

        def rot_z_batch(t):
            c, s = np.cos(t), np.sin(t)
            out = np.zeros((len(t), 3, 3))
            out[:, 0, 0] = c
            out[:, 0, 1] = -s
            out[:, 1, 0] = s
            out[:, 1, 1] = c
            out[:, 2, 2] = 1.0
            return out

        def rot_x_batch(t):
            c, s = np.cos(t), np.sin(t)
            out = np.zeros((len(t), 3, 3))
            out[:, 0, 0] = 1.0
            out[:, 1, 1] = c
            out[:, 1, 2] = -s
            out[:, 2, 1] = s
            out[:, 2, 2] = c
            return out

        center = np.array([0.0, 0.35, 0.0])
        width = np.pi
        best_val, best_abc = np.inf, center
        for _ in range(4):
            a = np.linspace(center[0] - width, center[0] + width, 100)
            b = np.linspace(center[1] - width, center[1] + width, 100)
            c = np.linspace(center[2] - width, center[2] + width, 100)
            Ra, Rb, Rc = rot_z_batch(a), rot_x_batch(b), rot_z_batch(c)
            # trace(O^T K) over the full 100^3 grid of O = Ra Rb Rc
            scores = np.einsum("aij,bjk,ckl,il->abc", Ra, Rb, Rc, K, optimize=True)
            idx = np.unravel_index(np.argmax(scores), scores.shape)
            best_val = const - 2.0 * float(scores[idx])
            best_abc = np.array([a[idx[0]], b[idx[1]], c[idx[2]]])
            center = best_abc
            width /= 40.0
        assert mse == pytest.approx(best_val, abs=1e-6)

    def test_length_mismatch(self):
        gen = RngStream(17).generator()
        with pytest.raises(ContractViolationError):
            procrustes_mse([random_rotation(gen)], [])


class TestCompleteRotation:
    def test_identity(self):
        assert np.allclose(complete_rotation(np.eye(3, 2)), np.eye(3))

    def test_e1_e3_columns(self):
        R = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        out = complete_rotation(R)
        assert np.allclose(out[:, 2], [0.0, -1.0, 0.0])
        assert np.linalg.det(out) == pytest.approx(1.0, abs=1e-12)

    def test_random_blocks_proper(self):
        stream = RngStream(18)
        for t in range(10):
            B = sf.random_point(3, 2, stream.child(t)).value
            out = complete_rotation(B)
            assert np.linalg.norm(out.T @ out - np.eye(3)) <= 1e-10
            assert np.linalg.det(out) == pytest.approx(1.0, abs=1e-10)


class TestRefinement:
    def test_refinement_from_eigs_recovers_truth(self):
        from stiefelflow.problems import refine_orientations

        inst = cryoem_generate(100, 0.0, RngStream(19))
        start = eigs_init(inst)
        mse0 = recovery_mse(start, inst.true_rotations)
        point, stats = refine_orientations(inst, start)
        mse1 = recovery_mse(point, inst.true_rotations)
        assert mse1 <= 1e-3
        assert mse1 <= mse0
        assert stats.objective <= smoothing_floor(inst) * (1 + 1e-6)
