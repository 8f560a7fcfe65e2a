# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Cayley updates and fused SDE stepping.

Mirrors stiefelflow._core._fallback exactly (same routing policy and the
same formulas); the chain/batch entry points avoid per-step Python
overhead, which dominates for the small matrices this package works with.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()

ALPHA = sqrt(2.0) / 2.0
BETA = 1.0 - ALPHA

cdef double C_ALPHA = sqrt(2.0) / 2.0
cdef double C_BETA = 1.0 - C_ALPHA


cdef double _feas_residual(double* Y, Py_ssize_t n, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc, g
    acc = 0.0
    for i in range(p):
        for j in range(p):
            g = 0.0
            for k in range(n):
                g += Y[k * p + i] * Y[k * p + j]
            if i == j:
                g -= 1.0
            acc += g * g
    return sqrt(acc)


cdef int _solve_lu(double* M, double* B, Py_ssize_t m, Py_ssize_t nrhs) noexcept nogil:
    """In-place LU solve with partial pivoting: M (m x m), B (m x nrhs).
    Returns 0 on success, 1 on (numerical) singularity."""
    cdef Py_ssize_t i, j, k, piv
    cdef double best, cur, factor, tmp
    for k in range(m):
        piv = k
        best = M[k * m + k]
        if best < 0:
            best = -best
        for i in range(k + 1, m):
            cur = M[i * m + k]
            if cur < 0:
                cur = -cur
            if cur > best:
                best = cur
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(m):
                tmp = M[k * m + j]
                M[k * m + j] = M[piv * m + j]
                M[piv * m + j] = tmp
            for j in range(nrhs):
                tmp = B[k * nrhs + j]
                B[k * nrhs + j] = B[piv * nrhs + j]
                B[piv * nrhs + j] = tmp
        for i in range(k + 1, m):
            factor = M[i * m + k] / M[k * m + k]
            M[i * m + k] = factor
            for j in range(k + 1, m):
                M[i * m + j] -= factor * M[k * m + j]
            for j in range(nrhs):
                B[i * nrhs + j] -= factor * B[k * nrhs + j]
    # back substitution
    for k in range(m - 1, -1, -1):
        for j in range(nrhs):
            tmp = B[k * nrhs + j]
            for i in range(k + 1, m):
                tmp -= M[k * m + i] * B[i * nrhs + j]
            B[k * nrhs + j] = tmp / M[k * m + k]
    return 0


cdef int _cayley_dense_raw(double* Y, double* A, double* out,
                           Py_ssize_t n, Py_ssize_t p,
                           double* scratch) noexcept nogil:
    """out = (I - A/2)^{-1} (I + A/2) Y.  scratch needs n*n doubles."""
    cdef Py_ssize_t i, j, k
    cdef double acc
    # rhs (into out): Y + (A @ Y) / 2
    for i in range(n):
        for j in range(p):
            acc = Y[i * p + j]
            for k in range(n):
                acc += 0.5 * A[i * n + k] * Y[k * p + j]
            out[i * p + j] = acc
    # M = I - A/2
    for i in range(n):
        for j in range(n):
            scratch[i * n + j] = -0.5 * A[i * n + j]
        scratch[i * n + i] += 1.0
    return _solve_lu(scratch, out, n, p)


cdef void _cayley_vector_raw(double* y, double* z, double* out,
                             Py_ssize_t n) noexcept nogil:
    # y^T y is carried through (not assumed 1) so slight infeasibility is
    # preserved rather than amplified along chains.
    cdef Py_ssize_t i
    cdef double a = 0.0, b = 0.0, c = 0.0, den, coef
    for i in range(n):
        a += y[i] * z[i]
        b += z[i] * z[i]
        c += y[i] * y[i]
    den = 1.0 - 0.25 * a * a + 0.25 * c * b
    coef = a + 0.5 * c * b - 0.5 * a * a
    for i in range(n):
        out[i] = y[i] + (c * z[i] - coef * y[i]) / den


cdef int _cayley_smw_raw(double* Y, double* Z, double* out,
                         Py_ssize_t n, Py_ssize_t p,
                         double* scratch) noexcept nogil:
    """Low-rank update; scratch needs (2p)*(2p) + (2p)*p doubles."""
    cdef Py_ssize_t i, j, k, m = 2 * p
    cdef double acc
    cdef double* M = scratch
    cdef double* W = scratch + m * m
    # Gram blocks: M = I - 0.5 * [[Y^T Z, Y^T Y], [-Z^T Z, -Z^T Y]]
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += Y[k * p + i] * Z[k * p + j]
            M[i * m + j] = -0.5 * acc            # Y^T Z
            M[(j + p) * m + (i + p)] = 0.5 * acc  # (Z^T Y)_{ji}
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += Y[k * p + i] * Y[k * p + j]
            M[i * m + (j + p)] = -0.5 * acc
            W[i * p + j] = acc                    # top of V^T Y
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += Z[k * p + i] * Z[k * p + j]
            M[(i + p) * m + j] = 0.5 * acc
    for i in range(m):
        M[i * m + i] += 1.0
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += Z[k * p + i] * Y[k * p + j]
            W[(i + p) * p + j] = -acc             # bottom of V^T Y
    if _solve_lu(M, W, m, p):
        return 1
    # out = Y + Z @ W_top + Y @ W_bot
    for i in range(n):
        for j in range(p):
            acc = Y[i * p + j]
            for k in range(p):
                acc += Z[i * p + k] * W[k * p + j]
                acc += Y[i * p + k] * W[(k + p) * p + j]
            out[i * p + j] = acc
    return 0


cdef int _cayley_from_z_raw(double* Y, double* Z, double* out,
                            Py_ssize_t n, Py_ssize_t p,
                            double* scratch, double* A) noexcept nogil:
    """Routing: p = 1 closed form, SMW while 2p < n, dense otherwise.
    A is n*n workspace used only on the dense path."""
    cdef Py_ssize_t i, j
    if p == 1:
        _cayley_vector_raw(Y, Z, out, n)
        return 0
    if 2 * p < n:
        return _cayley_smw_raw(Y, Z, out, n, p, scratch)
    for i in range(n):
        for j in range(n):
            A[i * n + j] = 0.0
    cdef Py_ssize_t k
    for i in range(n):
        for j in range(n):
            for k in range(p):
                A[i * n + j] += Z[i * p + k] * Y[j * p + k] - Y[i * p + k] * Z[j * p + k]
    return _cayley_dense_raw(Y, A, out, n, p, scratch)


cdef void _form_z(double* Y, double* G, double delta, double sigma,
                  double* dB, double* Z, Py_ssize_t n, Py_ssize_t p,
                  double* ytb) noexcept nogil:
    """Z = -delta*G + sigma * (I - beta Y Y^T) dB with the p=1 / p=n
    special cases; ytb needs p*p doubles."""
    cdef Py_ssize_t i, j, k
    cdef double acc
    if sigma == 0.0:
        for i in range(n * p):
            Z[i] = -delta * G[i]
        return
    if p == n:
        for i in range(n * p):
            Z[i] = -delta * G[i] + C_ALPHA * sigma * dB[i]
        return
    if p == 1:
        for i in range(n):
            Z[i] = -delta * G[i] + sigma * dB[i]
        return
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += Y[k * p + i] * dB[k * p + j]
            ytb[i * p + j] = acc
    for i in range(n):
        for j in range(p):
            acc = dB[i * p + j]
            for k in range(p):
                acc -= C_BETA * Y[i * p + k] * ytb[k * p + j]
            Z[i * p + j] = -delta * G[i * p + j] + sigma * acc


cdef void _mgs_orthonormalize(double* Y, Py_ssize_t n, Py_ssize_t p) noexcept nogil:
    """In-place modified Gram-Schmidt with positive-diagonal convention."""
    cdef Py_ssize_t i, j, k
    cdef double r
    for j in range(p):
        for i in range(j):
            r = 0.0
            for k in range(n):
                r += Y[k * p + i] * Y[k * p + j]
            for k in range(n):
                Y[k * p + j] -= r * Y[k * p + i]
        r = 0.0
        for k in range(n):
            r += Y[k * p + j] * Y[k * p + j]
        r = sqrt(r)
        if r > 0.0:
            for k in range(n):
                Y[k * p + j] /= r


# ---------------------------------------------------------------------------
# Python-visible entry points (NumPy in, NumPy out)


def feas_residual(Y):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y, dtype=np.float64)
    return _feas_residual(&Ya[0, 0], Ya.shape[0], Ya.shape[1])


def qr_orthonormalize(X):
    """Matches the fallback's QR sign convention via numpy's QR."""
    Q, R = np.linalg.qr(np.ascontiguousarray(X, dtype=np.float64))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return np.ascontiguousarray(Q * d)


def cayley_dense(Y, A):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Aa = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    cdef double* scratch = <double*> malloc(n * n * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    cdef int status
    try:
        status = _cayley_dense_raw(&Ya[0, 0], &Aa[0, 0], &out[0, 0], n, p, scratch)
    finally:
        free(scratch)
    if status:
        raise np.linalg.LinAlgError("singular Cayley system")
    return out


def cayley_vector(y, z):
    cdef cnp.ndarray[double, ndim=2, mode="c"] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] za = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = ya.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, 1))
    _cayley_vector_raw(&ya[0, 0], &za[0, 0], &out[0, 0], n)
    return out


def cayley_smw(Y, Z):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Za = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    cdef Py_ssize_t need = 4 * p * p + 2 * p * p
    cdef double* scratch = <double*> malloc(need * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    cdef int status
    try:
        status = _cayley_smw_raw(&Ya[0, 0], &Za[0, 0], &out[0, 0], n, p, scratch)
    finally:
        free(scratch)
    if status:
        raise np.linalg.LinAlgError("singular low-rank Cayley system")
    return out


cdef Py_ssize_t _scratch_size(Py_ssize_t n, Py_ssize_t p) noexcept nogil:
    # enough for both the SMW (6p^2) and dense (n^2) paths, plus Z, the
    # p*p noise projection buffer, and the n*n generator
    cdef Py_ssize_t a = 6 * p * p
    if n * n > a:
        a = n * n
    return a + n * p + p * p + n * n


def cayley_from_z(Y, Z):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Za = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    cdef Py_ssize_t need = _scratch_size(n, p)
    cdef double* scratch = <double*> malloc(need * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    cdef int status
    try:
        status = _cayley_from_z_raw(&Ya[0, 0], &Za[0, 0], &out[0, 0], n, p,
                                    scratch, scratch + 6 * p * p if 6 * p * p > n * n else scratch + n * n)
    finally:
        free(scratch)
    if status:
        raise np.linalg.LinAlgError("singular Cayley system")
    return out


cdef int _sde_step_raw(double* Y, double* G, double delta, double sigma,
                       double* dB, double* out, Py_ssize_t n, Py_ssize_t p,
                       double* work) noexcept nogil:
    """work layout: [small scratch | Z (n*p) | ytb (p*p) | A (n*n)]."""
    cdef Py_ssize_t small = 6 * p * p
    if n * n > small:
        small = n * n
    cdef double* Z = work + small
    cdef double* ytb = Z + n * p
    cdef double* A = ytb + p * p
    _form_z(Y, G, delta, sigma, dB, Z, n, p, ytb)
    return _cayley_from_z_raw(Y, Z, out, n, p, work, A)


def sde_step(Y, G, double delta, double sigma, dB):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ba = np.ascontiguousarray(dB, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    cdef double* work = <double*> malloc(_scratch_size(n, p) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef int status
    try:
        status = _sde_step_raw(&Ya[0, 0], &Ga[0, 0], delta, sigma, &Ba[0, 0],
                               &out[0, 0], n, p, work)
    finally:
        free(work)
    if status:
        raise np.linalg.LinAlgError("singular Cayley system")
    return out


def sde_chain(Y0, G, deltas, sigmas, dB, int reproject_every=100,
              double reproject_tol=1e-8, traj=None):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y0, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] da = np.ascontiguousarray(deltas, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] sa = np.ascontiguousarray(sigmas, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Ba = np.ascontiguousarray(dB, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1], K = da.shape[0]
    cdef cnp.ndarray[double, ndim=3, mode="c"] Ta
    cdef double* traj_ptr = NULL
    cdef bint record = traj is not None
    if record:
        Ta = traj
        if Ta.shape[0] < K or Ta.shape[1] != n or Ta.shape[2] != p:
            raise ValueError("trajectory buffer has the wrong shape")
        traj_ptr = &Ta[0, 0, 0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    cdef double* work = <double*> malloc(_scratch_size(n, p) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef Py_ssize_t k
    cdef int status = 0
    cdef double* cur = &Ya[0, 0]
    cdef double* nxt = &out[0, 0]
    cdef double* tmp
    try:
        with nogil:
            for k in range(K):
                status = _sde_step_raw(cur, &Ga[0, 0], da[k], sa[k],
                                       &Ba[0, 0, 0] + k * n * p, nxt, n, p, work)
                if status:
                    break
                tmp = cur
                cur = nxt
                nxt = tmp
                if reproject_every > 0 and (k + 1) % reproject_every == 0:
                    if _feas_residual(cur, n, p) > reproject_tol:
                        _mgs_orthonormalize(cur, n, p)
                if record:
                    memcpy(traj_ptr + k * n * p, cur, n * p * sizeof(double))
    finally:
        free(work)
    if status:
        raise np.linalg.LinAlgError("singular Cayley system in chain")
    if cur == &Ya[0, 0]:
        return Ya
    return out


def sde_step_batch(Y0, G, double delta, double sigma, dB_batch):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ya = np.ascontiguousarray(Y0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Ba = np.ascontiguousarray(dB_batch, dtype=np.float64)
    cdef Py_ssize_t n = Ya.shape[0], p = Ya.shape[1], S = Ba.shape[0]
    cdef cnp.ndarray[double, ndim=3, mode="c"] out = np.empty((S, n, p))
    cdef double* work = <double*> malloc(_scratch_size(n, p) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef Py_ssize_t s
    cdef int status = 0
    try:
        with nogil:
            for s in range(S):
                status = _sde_step_raw(&Ya[0, 0], &Ga[0, 0], delta, sigma,
                                       &Ba[0, 0, 0] + s * n * p,
                                       &out[0, 0, 0] + s * n * p, n, p, work)
                if status:
                    break
    finally:
        free(work)
    if status:
        raise np.linalg.LinAlgError("singular Cayley system in batch")
    return out
