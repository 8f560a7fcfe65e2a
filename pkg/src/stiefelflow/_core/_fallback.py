"""Pure-NumPy implementations of the hot numerical kernels.

Semantics reference for ``stiefelflow._core._kernels`` (the compiled
extension); selected at import time when the extension is missing or
``STIEFELFLOW_PURE_PYTHON=1``.

All matrices are C-contiguous float64 arrays, row-major element order.
"""

import math

import numpy as np

ALPHA = math.sqrt(2.0) / 2.0
BETA = 1.0 - ALPHA


def feas_residual(Y):
    """Frobenius norm of Y^T Y - I."""
    G = Y.T @ Y
    G[np.diag_indices(G.shape[0])] -= 1.0
    return float(np.linalg.norm(G))


def qr_orthonormalize(X):
    """Reduced QR factor with the non-negative-diagonal-R sign convention."""
    Q, R = np.linalg.qr(X)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def cayley_dense(Y, A):
    """(I - A/2)^{-1} (I + A/2) Y by a dense solve.  A is n-by-n skew."""
    n = A.shape[0]
    B = -0.5 * A
    B[np.diag_indices(n)] += 1.0
    return np.linalg.solve(B, Y + 0.5 * (A @ Y))


def cayley_vector(y, z):
    """Closed-form rank-2 Cayley update for a single column (p = 1).

    Equals cayley_dense(y, z y^T - y z^T); the 2x2 inverse is expanded by
    hand so the cost is O(n).  The y^T y term is kept (not assumed 1) so
    the map stays exact for slightly infeasible y; otherwise rounding-level
    infeasibility is amplified geometrically along a chain.
    """
    yv = y[:, 0]
    zv = z[:, 0]
    a = float(np.dot(yv, zv))
    b = float(np.dot(zv, zv))
    c = float(np.dot(yv, yv))
    den = 1.0 - 0.25 * a * a + 0.25 * c * b
    return y + (c * z - (a + 0.5 * c * b - 0.5 * a * a) * y) / den


def cayley_smw(Y, Z):
    """Low-rank Cayley update via a 2p-by-2p solve.

    With U = [Z, Y], V = [Y, -Z] (so that A = U V^T = Z Y^T - Y Z^T),
    returns Y + U (I - V^T U / 2)^{-1} V^T Y.  Exact for any Y, not only
    feasible ones; cost O(n p^2).
    """
    p = Y.shape[1]
    YtZ = Y.T @ Z
    YtY = Y.T @ Y
    ZtZ = Z.T @ Z
    M = np.empty((2 * p, 2 * p))
    M[:p, :p] = -0.5 * YtZ
    M[:p, p:] = -0.5 * YtY
    M[p:, :p] = 0.5 * ZtZ
    M[p:, p:] = 0.5 * YtZ.T
    M[np.diag_indices(2 * p)] += 1.0
    rhs = np.vstack((YtY, -YtZ.T))
    W = np.linalg.solve(M, rhs)
    return Y + Z @ W[:p] + Y @ W[p:]


def cayley_from_z(Y, Z):
    """Orthogonality-preserving step generated by A = Z Y^T - Y Z^T.

    Routing policy: closed form for p = 1, the 2p-by-2p low-rank solve
    while 2p < n, dense n-by-n solve otherwise.
    """
    n, p = Y.shape
    if p == 1:
        return cayley_vector(Y, Z)
    if 2 * p < n:
        return cayley_smw(Y, Z)
    return cayley_dense(Y, Z @ Y.T - Y @ Z.T)


def sde_step(Y, G, delta, sigma, dB):
    """One diffusion step: Z = -delta*G + sigma*(I - beta Y Y^T) dB, then
    the Cayley update generated by Z.

    Special cases: sigma = 0 skips the noise term entirely (bit-identical
    to the deterministic gradient step); p = n uses Z = -delta*G +
    alpha*sigma*dB; p = 1 uses the unprojected dB (the projection terms
    cancel inside A when p = 1).
    """
    n, p = Y.shape
    if sigma == 0.0:
        Z = -delta * G
    elif p == n:
        Z = -delta * G + (ALPHA * sigma) * dB
    elif p == 1:
        Z = -delta * G + sigma * dB
    else:
        Z = -delta * G + sigma * (dB - BETA * (Y @ (Y.T @ dB)))
    return cayley_from_z(Y, Z)


def sde_chain(Y0, G, deltas, sigmas, dB, reproject_every=100,
              reproject_tol=1e-8, traj=None):
    """Run K = len(deltas) steps with a constant Euclidean gradient G.

    Covers pure diffusion (G = 0) and linear objectives.  Every
    ``reproject_every`` steps the iterate is re-orthonormalized when its
    feasibility residual exceeds ``reproject_tol``.  When ``traj`` is a
    (K, n, p) array the iterate after every step is stored into it.
    """
    Y = Y0.copy()
    K = len(deltas)
    for k in range(K):
        Y = sde_step(Y, G, deltas[k], sigmas[k], dB[k])
        if reproject_every and (k + 1) % reproject_every == 0:
            if feas_residual(Y) > reproject_tol:
                Y = qr_orthonormalize(Y)
        if traj is not None:
            traj[k] = Y
    return Y


def sde_step_batch(Y0, G, delta, sigma, dB_batch):
    """Independent single steps from a common start point, one per sample."""
    S = dB_batch.shape[0]
    out = np.empty_like(dB_batch)
    for s in range(S):
        out[s] = sde_step(Y0, G, delta, sigma, dB_batch[s])
    return out
