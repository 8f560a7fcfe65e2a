"""Orientation recovery from synthetic common-line data.

N unknown rotations are estimated from the pairwise common lines of their
Fourier slices: at the truth, R_i c_ij = R_j c_ji for every pair.  Both
common-line vectors of a pair are derived from the same cross product
t_ij = unit(R3_i x R3_j), so the coincidence identity holds with zero
residual on clean data.  The objective is the smoothed q-th-power distance
sum_{i<j} sum_l ((u_l - v_l)^2 + eps^2)^(q/2) with u = R_i c_ij,
v = R_j c_ji, summed once per unordered pair.

Flipping the third row of every block (the handedness involution) leaves
the objective invariant, so rotation-recovery error should be assessed
modulo that involution; see mirror_blocks / mirror_rotations.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolationError, InitializationError
from ..manifold import ProductPoint, StiefelPoint
from ..rng import RngStream
from .base import Problem, blocks_of


@dataclass
class CryoEmInstance:
    N: int
    true_rotations: list  # N arrays (3, 3), det +1
    pair_i: np.ndarray  # (P,) int, 0-based, i < j
    pair_j: np.ndarray
    c_ij: np.ndarray  # (P, 2) unit vectors in image i's frame
    c_ji: np.ndarray  # (P, 2) unit vectors in image j's frame
    corruption_p: float = 0.0
    q: float = 0.5
    smoothing_eps: float = 1e-6

    def __post_init__(self):
        for R in self.true_rotations:
            if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-10 or abs(np.linalg.det(R) - 1.0) > 1e-10:
                raise ContractViolationError("true rotations must be in SO(3)")
        norms = np.linalg.norm(self.c_ij, axis=1)
        norms2 = np.linalg.norm(self.c_ji, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-10 or np.max(np.abs(norms2 - 1.0)) > 1e-10:
            raise ContractViolationError("common-line vectors must be unit length")

    @property
    def num_pairs(self) -> int:
        return len(self.pair_i)


def random_rotation(gen) -> np.ndarray:
    """Haar rotation: QR of a Gaussian with positive R diagonal, then a
    column flip when the determinant is -1 (right-multiplication preserves
    the Haar measure)."""
    Q, R = np.linalg.qr(gen.standard_normal((3, 3)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    Q = Q * d
    if np.linalg.det(Q) < 0:
        Q = Q.copy()
        Q[:, 2] = -Q[:, 2]
    return np.ascontiguousarray(Q)


def cryoem_generate(N: int, corruption_p: float, rng: RngStream,
                    q: float = 0.5, smoothing_eps: float = 1e-6) -> CryoEmInstance:
    """Draw N uniform rotations and their pairwise common lines; each pair
    is independently replaced by two uniform unit-circle vectors with
    probability corruption_p."""
    if N < 2:
        raise ContractViolationError("need N >= 2")
    if not 0.0 <= corruption_p <= 1.0:
        raise ContractViolationError("corruption probability must be in [0, 1]")
    gen_rot = rng.child(0).generator()
    for _ in range(100):
        rotations = [random_rotation(gen_rot) for _ in range(N)]
        thirds = np.stack([R[:, 2] for R in rotations])
        cross_ok = True
        for i in range(N):
            c = np.cross(thirds[i], thirds[i + 1:])
            if c.size and np.min(np.linalg.norm(c, axis=1)) < 1e-8:
                cross_ok = False
                break
        if cross_ok:
            break
    else:
        raise InitializationError("could not draw rotations with well-defined common lines")

    pair_i, pair_j = np.triu_indices(N, k=1)
    P = len(pair_i)
    c_ij = np.empty((P, 2))
    c_ji = np.empty((P, 2))
    for p in range(P):
        i, j = pair_i[p], pair_j[p]
        t = np.cross(thirds[i], thirds[j])
        t /= np.linalg.norm(t)
        c_ij[p] = rotations[i].T[:2] @ t
        c_ji[p] = rotations[j].T[:2] @ t

    if corruption_p > 0.0:
        gen_noise = rng.child(1).generator()
        corrupt = gen_noise.uniform(size=P) < corruption_p
        angles = gen_noise.uniform(0.0, 2.0 * math.pi, size=(P, 2))
        c_ij[corrupt] = np.stack(
            [np.cos(angles[corrupt, 0]), np.sin(angles[corrupt, 0])], axis=1
        )
        c_ji[corrupt] = np.stack(
            [np.cos(angles[corrupt, 1]), np.sin(angles[corrupt, 1])], axis=1
        )

    # Renormalize against rounding so the unit-norm invariant is exact-ish.
    c_ij /= np.linalg.norm(c_ij, axis=1, keepdims=True)
    c_ji /= np.linalg.norm(c_ji, axis=1, keepdims=True)
    return CryoEmInstance(
        N=N,
        true_rotations=rotations,
        pair_i=pair_i,
        pair_j=pair_j,
        c_ij=c_ij,
        c_ji=c_ji,
        corruption_p=corruption_p,
        q=q,
        smoothing_eps=smoothing_eps,
    )


def cryoem_problem(inst: CryoEmInstance) -> Problem:
    """N-block problem, each block a (3, 2) frame (first two rotation columns)."""
    pi, pj = inst.pair_i, inst.pair_j
    Cij, Cji = inst.c_ij, inst.c_ji
    q, eps2 = inst.q, inst.smoothing_eps ** 2
    N = inst.N

    def value(blocks):
        R = np.stack(blocks)
        D = np.einsum("pab,pb->pa", R[pi], Cij) - np.einsum("pab,pb->pa", R[pj], Cji)
        return float(np.sum((D * D + eps2) ** (0.5 * q)))

    def gradient(blocks):
        R = np.stack(blocks)
        D = np.einsum("pab,pb->pa", R[pi], Cij) - np.einsum("pab,pb->pa", R[pj], Cji)
        W = q * D * (D * D + eps2) ** (0.5 * q - 1.0)
        grad = np.zeros((N, 3, 2))
        np.add.at(grad, pi, W[:, :, None] * Cij[:, None, :])
        np.add.at(grad, pj, -W[:, :, None] * Cji[:, None, :])
        return [np.ascontiguousarray(grad[b]) for b in range(N)]

    return Problem(
        name=f"cryoem(N={N})",
        block_dims=[(3, 2)] * N,
        value=value,
        euclidean_gradient=gradient,
    )


def smoothing_floor(inst: CryoEmInstance) -> float:
    """Objective value at an exact solution: 3 * (#pairs) * eps^q."""
    return 3.0 * inst.num_pairs * inst.smoothing_eps ** inst.q


def eigs_init(inst: CryoEmInstance) -> ProductPoint:
    """Eigenvector-relaxation initializer.

    Builds the 2N-by-2N symmetric matrix with off-diagonal 2x2 blocks
    c_ij c_ji^T, takes the top-3 eigenvectors, reshapes to per-image 3x2
    blocks, and rounds each block to the Stiefel manifold via SVD.
    """
    if inst.N < 3:
        raise ContractViolationError("need N >= 3 for the eigenvector relaxation")
    N = inst.N
    S = np.zeros((2 * N, 2 * N))
    for p in range(inst.num_pairs):
        i, j = inst.pair_i[p], inst.pair_j[p]
        blockij = np.outer(inst.c_ij[p], inst.c_ji[p])
        S[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = blockij
        S[2 * j : 2 * j + 2, 2 * i : 2 * i + 2] = blockij.T
    try:
        vals, vecs = np.linalg.eigh(S)
    except np.linalg.LinAlgError as err:
        raise InitializationError(f"eigensolver failed: {err}") from err
    if not np.all(np.isfinite(vecs)):
        raise InitializationError("eigensolver produced non-finite vectors")
    top = vecs[:, -3:]  # columns for the three largest eigenvalues
    blocks = []
    for i in range(N):
        B = top[2 * i : 2 * i + 2, :].T  # (3, 2)
        U, _, Vt = np.linalg.svd(B, full_matrices=False)
        blocks.append(StiefelPoint(np.ascontiguousarray(U @ Vt), feas_tol=1e-10))
    return ProductPoint(blocks)


def complete_rotation(R) -> np.ndarray:
    """Append the cross product of the two columns; det is +1 by construction."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 2):
        raise ContractViolationError(f"expected a (3, 2) block, got {R.shape}")
    third = np.cross(R[:, 0], R[:, 1])
    out = np.column_stack([R, third])
    return np.ascontiguousarray(out)


def complete_point(point) -> list:
    return [complete_rotation(b) for b in blocks_of(point)]


def procrustes_mse(estimated, truth) -> float:
    """min over orthogonal O of sum_i ||Rhat_i - O Rtrue_i||_F^2.

    Solved in closed form: O = U V^T from the SVD of sum_i Rhat_i
    Rtrue_i^T; O ranges over all of O(3) (no determinant correction).
    """
    if len(estimated) != len(truth):
        raise ContractViolationError("rotation lists must have equal length")
    K = np.zeros((3, 3))
    for Rh, Rt in zip(estimated, truth):
        K += np.asarray(Rh) @ np.asarray(Rt).T
    U, _, Vt = np.linalg.svd(K)
    O = U @ Vt
    return float(sum(np.sum((np.asarray(Rh) - O @ np.asarray(Rt)) ** 2)
                     for Rh, Rt in zip(estimated, truth)))


_MIRROR = np.diag([1.0, 1.0, -1.0])


def mirror_blocks(point) -> ProductPoint:
    """Apply the handedness involution (flip the third row) to every block."""
    return ProductPoint(
        [StiefelPoint(np.ascontiguousarray(_MIRROR @ b)) for b in blocks_of(point)]
    )


def recovery_mse(point, truth_rotations) -> float:
    """Procrustes MSE of the completed blocks against the truth, minimized
    over the global handedness ambiguity (common lines cannot determine it)."""
    direct = procrustes_mse(complete_point(point), truth_rotations)
    mirrored = procrustes_mse(complete_point(mirror_blocks(point)), truth_rotations)
    return min(direct, mirrored)


def truth_point(inst: CryoEmInstance) -> ProductPoint:
    return ProductPoint(
        [StiefelPoint(np.ascontiguousarray(R[:, :2])) for R in inst.true_rotations]
    )


def refine_orientations(inst: CryoEmInstance, start, solver_cfg=None,
                        eps_schedule=(1e-2, 1e-4, None)):
    """Local refinement with graduated smoothing.

    The q-power distance is nearly nonsmooth at exact fits, and descending
    it directly from an eigenvector start can crawl; solving a heavily
    smoothed surrogate first and shrinking eps toward the instance value
    (None in the schedule) reaches the same minimizers in a few hundred
    iterations.  Returns (point, stats) of the final stage, whose objective
    is the instance's own.
    """
    import dataclasses

    from ..local_solver import LocalSolverConfig, local_minimize

    solver_cfg = solver_cfg or LocalSolverConfig(max_iters=2000)
    point = start
    stats = None
    for eps in eps_schedule:
        eps = inst.smoothing_eps if eps is None else eps
        stage = dataclasses.replace(inst, smoothing_eps=eps)
        point, stats = local_minimize(point, cryoem_problem(stage), solver_cfg)
    return point, stats


def save_instance(inst: CryoEmInstance, path) -> None:
    """Plain-text serialization: header, rotations row-major, then the
    common-line table (one unordered pair per line)."""
    lines = ["cryoem-instance v1"]
    lines.append(f"N {inst.N}")
    lines.append(f"q {inst.q!r}")
    lines.append(f"eps {inst.smoothing_eps!r}")
    lines.append(f"corruption_p {inst.corruption_p!r}")
    lines.append("rotations")
    for R in inst.true_rotations:
        lines.append(" ".join(repr(float(v)) for v in R.ravel()))
    lines.append("commonlines")
    for p in range(inst.num_pairs):
        vals = [inst.c_ij[p, 0], inst.c_ij[p, 1], inst.c_ji[p, 0], inst.c_ji[p, 1]]
        lines.append(
            f"{inst.pair_i[p]} {inst.pair_j[p]} " + " ".join(repr(float(v)) for v in vals)
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> CryoEmInstance:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "cryoem-instance v1":
        raise ContractViolationError("not a cryoem-instance v1 file")
    header = {}
    idx = 1
    while idx < len(lines) and lines[idx] != "rotations":
        key, val = lines[idx].split(None, 1)
        header[key] = val
        idx += 1
    N = int(header["N"])
    idx += 1  # skip "rotations"
    rotations = []
    for _ in range(N):
        rotations.append(np.array([float(v) for v in lines[idx].split()]).reshape(3, 3))
        idx += 1
    if lines[idx] != "commonlines":
        raise ContractViolationError("missing commonlines section")
    idx += 1
    pi, pj, cij, cji = [], [], [], []
    for ln in lines[idx:]:
        parts = ln.split()
        pi.append(int(parts[0]))
        pj.append(int(parts[1]))
        vals = [float(v) for v in parts[2:6]]
        cij.append(vals[:2])
        cji.append(vals[2:])
    return CryoEmInstance(
        N=N,
        true_rotations=rotations,
        pair_i=np.array(pi, dtype=int),
        pair_j=np.array(pj, dtype=int),
        c_ij=np.array(cij),
        c_ji=np.array(cji),
        corruption_p=float(header.get("corruption_p", 0.0)),
        q=float(header.get("q", 0.5)),
        smoothing_eps=float(header.get("eps", 1e-6)),
    )
