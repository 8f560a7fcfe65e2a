"""Stiefel-manifold geometry under the canonical metric.

Points are n-by-p float64 matrices X with X^T X = I_p (row-major element
order everywhere, including file I/O).  The module provides feasibility
checks, the tangent-noise projector, the canonical gradient and inner
product, orthogonality-preserving Cayley steps (dense and low-rank), QR
retraction and Haar-random points.

All operations are pure functions of their inputs; nothing mutates shared
state, so values may be shared read-only across threads.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import (
    ContractViolationError,
    DimensionError,
    NumericalRankError,
)

#: Coefficients of the tangent-noise projector P_X(Z) = Z - alpha X Z^T X
#: - beta X X^T Z.  alpha + beta = 1 exactly.
ALPHA = _core.ALPHA
BETA = _core.BETA

DEFAULT_FEAS_TOL = 1e-8
SKEW_TOL = 1e-10
TANGENT_TOL = 1e-8


@dataclass(frozen=True)
class ProjectionCoefficients:
    """The (alpha, beta) pair of the tangent-noise projector."""

    alpha: float = ALPHA
    beta: float = BETA

    def __post_init__(self):
        if abs(self.alpha + self.beta - 1.0) > 1e-15:
            raise ContractViolationError("projector coefficients must sum to 1")


def _as_matrix(X) -> np.ndarray:
    A = np.ascontiguousarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise DimensionError(f"expected a nonempty 2-d matrix, got shape {A.shape}")
    return A


def check_feasible(X, tol: float) -> bool:
    """True iff ||X^T X - I_p||_F <= tol."""
    X = _as_matrix(X)
    return _core.feas_residual(X) <= tol


class StiefelPoint:
    """A feasible point: n-by-p matrix with orthonormal columns.

    Feasibility is validated on construction against ``feas_tol``.
    ``meta`` carries operation metadata (e.g. whether a low-rank Cayley
    step fell back to the dense solve).
    """

    __slots__ = ("value", "feas_tol", "meta")

    def __init__(self, value, feas_tol: float = DEFAULT_FEAS_TOL, meta=None):
        value = _as_matrix(value)
        n, p = value.shape
        if not 1 <= p <= n:
            raise DimensionError(f"need 1 <= p <= n, got n={n}, p={p}")
        res = _core.feas_residual(value)
        if res > feas_tol:
            raise ContractViolationError(
                f"matrix is not on the Stiefel manifold: residual {res:.3e} > {feas_tol:.3e}"
            )
        self.value = value
        self.feas_tol = feas_tol
        self.meta = meta

    @property
    def n(self) -> int:
        return self.value.shape[0]

    @property
    def p(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self):
        return self.value.shape

    def residual(self) -> float:
        return _core.feas_residual(self.value)

    def copy(self) -> "StiefelPoint":
        return StiefelPoint(self.value.copy(), self.feas_tol, self.meta)

    def __repr__(self):
        return f"StiefelPoint(n={self.n}, p={self.p})"


class TangentVector:
    """Element of the tangent space at ``base``: Z^T X + X^T Z = 0."""

    __slots__ = ("base", "value")

    def __init__(self, base: StiefelPoint, value):
        value = _as_matrix(value)
        if value.shape != base.shape:
            raise DimensionError(
                f"tangent shape {value.shape} != base shape {base.shape}"
            )
        res = np.linalg.norm(value.T @ base.value + base.value.T @ value)
        if res > TANGENT_TOL:
            raise ContractViolationError(
                f"matrix is not tangent at the base point: residual {res:.3e}"
            )
        self.base = base
        self.value = value

    def __repr__(self):
        return f"TangentVector(n={self.base.n}, p={self.base.p})"


@dataclass
class ProductPoint:
    """Ordered tuple of feasible blocks, one per orthogonality constraint."""

    blocks: list

    def __post_init__(self):
        if not self.blocks:
            raise DimensionError("a product point needs at least one block")
        self.blocks = [
            b if isinstance(b, StiefelPoint) else StiefelPoint(b) for b in self.blocks
        ]

    @property
    def block_dims(self):
        return [b.shape for b in self.blocks]

    def arrays(self):
        return [b.value for b in self.blocks]

    def copy(self) -> "ProductPoint":
        return ProductPoint([b.copy() for b in self.blocks])

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def as_product(point) -> ProductPoint:
    """Coerce a StiefelPoint, array, or list of either into a ProductPoint."""
    if isinstance(point, ProductPoint):
        return point
    if isinstance(point, (StiefelPoint, np.ndarray)):
        return ProductPoint([point])
    return ProductPoint(list(point))


def _base_array(X) -> np.ndarray:
    if isinstance(X, StiefelPoint):
        return X.value
    return _as_matrix(X)


def project_tangent(X: StiefelPoint, Z) -> TangentVector:
    """Tangent-noise projector P_X(Z) = Z - alpha X Z^T X - beta X X^T Z.

    This is the canonical-metric noise projector, not the Euclidean
    orthogonal projector; it is not idempotent on tangents, but its output
    is always tangent and P_X(X) = 0 because alpha + beta = 1.
    """
    Xv = _base_array(X)
    Z = _as_matrix(Z)
    if Z.shape != Xv.shape:
        raise DimensionError(f"shape mismatch: {Z.shape} vs {Xv.shape}")
    P = Z - ALPHA * (Xv @ (Z.T @ Xv)) - BETA * (Xv @ (Xv.T @ Z))
    if not isinstance(X, StiefelPoint):
        X = StiefelPoint(Xv)
    return TangentVector(X, P)


def canonical_gradient(X: StiefelPoint, G) -> TangentVector:
    """Gradient with respect to the canonical metric: G - X G^T X."""
    Xv = _base_array(X)
    G = _as_matrix(G)
    if G.shape != Xv.shape:
        raise DimensionError(f"shape mismatch: {G.shape} vs {Xv.shape}")
    grad = G - Xv @ (G.T @ Xv)
    if not isinstance(X, StiefelPoint):
        X = StiefelPoint(Xv)
    return TangentVector(X, grad)


def canonical_inner(X: StiefelPoint, Z1, Z2) -> float:
    """Canonical inner product tr(Z1^T (I - X X^T / 2) Z2)."""
    if isinstance(Z1, TangentVector):
        if isinstance(X, StiefelPoint) and Z1.base is not X:
            if not np.array_equal(Z1.base.value, _base_array(X)):
                raise ContractViolationError("Z1 is based at a different point")
        Z1 = Z1.value
    if isinstance(Z2, TangentVector):
        if isinstance(X, StiefelPoint) and Z2.base is not X:
            if not np.array_equal(Z2.base.value, _base_array(X)):
                raise ContractViolationError("Z2 is based at a different point")
        Z2 = Z2.value
    Xv = _base_array(X)
    Z1 = _as_matrix(Z1)
    Z2 = _as_matrix(Z2)
    return float(np.sum(Z1 * Z2) - 0.5 * np.sum((Xv.T @ Z1) * (Xv.T @ Z2)))


def canonical_norm(X, Z) -> float:
    return math.sqrt(max(canonical_inner(X, Z, Z), 0.0))


def cayley_step(Y: StiefelPoint, A) -> StiefelPoint:
    """Dense Cayley update Y+ = (I - A/2)^{-1} (I + A/2) Y for skew A.

    Preserves feasibility exactly in exact arithmetic; for n = p the
    determinant sign of Y is preserved (the transform is a rotation).
    """
    Yv = _base_array(Y)
    A = _as_matrix(A)
    n = Yv.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"generator must be {n}x{n}, got {A.shape}")
    skew = np.linalg.norm(A + A.T)
    if skew > SKEW_TOL * max(1.0, np.linalg.norm(A)):
        raise ContractViolationError(f"generator is not skew-symmetric: {skew:.3e}")
    out = _core.cayley_dense(Yv, A)
    tol = Y.feas_tol if isinstance(Y, StiefelPoint) else DEFAULT_FEAS_TOL
    return StiefelPoint(out, feas_tol=tol)


def cayley_step_smw(Y: StiefelPoint, Z) -> StiefelPoint:
    """Low-rank Cayley update with generator A = Z Y^T - Y Z^T.

    Uses the 2p-by-2p solve (closed form when p = 1); if the small system
    is numerically unusable the dense path is taken instead and the result
    carries ``meta={"smw_fallback": True}``.
    """
    Yv = _base_array(Y)
    Z = _as_matrix(Z)
    if Z.shape != Yv.shape:
        raise DimensionError(f"shape mismatch: {Z.shape} vs {Yv.shape}")
    tol = Y.feas_tol if isinstance(Y, StiefelPoint) else DEFAULT_FEAS_TOL
    meta = None
    try:
        if Yv.shape[1] == 1:
            out = _core.cayley_vector(Yv, Z)
        else:
            out = _core.cayley_smw(Yv, Z)
        if not np.all(np.isfinite(out)) or _core.feas_residual(out) > 1e-6:
            raise np.linalg.LinAlgError("low-rank Cayley solve unusable")
    except np.linalg.LinAlgError:
        warnings.warn(
            "low-rank Cayley system was singular; using the dense solve",
            RuntimeWarning,
            stacklevel=2,
        )
        out = _core.cayley_dense(Yv, Z @ Yv.T - Yv @ Z.T)
        meta = {"smw_fallback": True}
    return StiefelPoint(out, feas_tol=tol, meta=meta)


def qr_retract(X) -> StiefelPoint:
    """Q factor of the reduced QR of X, with non-negative diagonal of R.

    Identity on already-feasible points (up to rounding); raises
    NumericalRankError when X is numerically rank-deficient.
    """
    X = _base_array(X)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    scale = max(np.linalg.norm(X, ord="fro"), 1e-300)
    if np.min(diag) <= 1e-12 * scale:
        raise NumericalRankError("matrix is numerically rank-deficient")
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return StiefelPoint(np.ascontiguousarray(Q * d))


def random_point(n: int, p: int, rng) -> StiefelPoint:
    """Haar-distributed point: QR factor of an n-by-p standard Gaussian."""
    if not 1 <= p <= n:
        raise DimensionError(f"need 1 <= p <= n, got n={n}, p={p}")
    gen = rng.generator() if hasattr(rng, "generator") else rng
    return qr_retract(gen.standard_normal((n, p)))


def random_tangent(X: StiefelPoint, rng) -> TangentVector:
    """Random tangent vector: projected Gaussian (test helper)."""
    gen = rng.generator() if hasattr(rng, "generator") else rng
    return project_tangent(X, gen.standard_normal(X.shape))
