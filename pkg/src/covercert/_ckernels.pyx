# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: cyclic complex Jacobi and expander walk stepping.

Signatures mirror :mod:`covercert._pykernels` exactly.
"""
import numpy as np

from libc.math cimport sqrt, fabs


cdef inline double _abs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef double _offdiag_norm(double complex[:, ::1] a) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double s = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                s += _abs2(a[i, j])
    return sqrt(s)


cdef double _fro_norm(double complex[:, ::1] a) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double s = 0.0
    for i in range(n):
        for j in range(n):
            s += _abs2(a[i, j])
    return sqrt(s)


cdef int _jacobi(double complex[:, ::1] a, double complex[:, ::1] v,
                 bint vectors, double tol, int max_sweeps) noexcept nogil:
    """In-place cyclic Jacobi. Returns sweeps used, or -1 if not converged."""
    cdef Py_ssize_t n = a.shape[0], p, q, k
    cdef double thresh = tol * _fro_norm(a)
    cdef double mag, app, aqq, tau, t, c, s
    cdef double complex ph, cph, x, y
    cdef int sweep
    for sweep in range(max_sweeps + 1):
        if _offdiag_norm(a) <= thresh:
            return sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                mag = sqrt(_abs2(a[p, q]))
                if mag == 0.0:
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                if sweep > 3 and fabs(app) + 100.0 * mag == fabs(app) \
                        and fabs(aqq) + 100.0 * mag == fabs(aqq):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                ph = a[p, q] / mag
                cph = ph.conjugate()
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    x = a[k, p]
                    y = a[k, q]
                    a[k, p] = c * x - s * cph * y
                    a[k, q] = s * x + c * cph * y
                for k in range(n):
                    x = a[p, k]
                    y = a[q, k]
                    a[p, k] = c * x - s * ph * y
                    a[q, k] = s * x + c * ph * y
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
                if vectors:
                    for k in range(n):
                        x = v[k, p]
                        y = v[k, q]
                        v[k, p] = c * x - s * cph * y
                        v[k, q] = s * x + c * cph * y
    return -1


def jacobi_eigh(a, double tol=1e-13, int max_sweeps=100, bint vectors=True):
    """Eigendecomposition of a complex Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    descending order; ``eigenvectors`` is None when ``vectors`` is False.
    ``sweeps`` is -1 if the off-diagonal mass never fell below threshold.
    """
    cdef double complex[:, ::1] work = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t n = work.shape[0], i
    vmat = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] vv = vmat
    cdef int sweeps
    with nogil:
        sweeps = _jacobi(work, vv, vectors, tol, max_sweeps)
    w = np.empty(n, dtype=np.float64)
    for i in range(n):
        w[i] = work[i, i].real
    order = np.argsort(-w, kind="stable")
    w = w[order]
    if vectors:
        return w, vmat[:, order], sweeps
    return w, None, sweeps


def eigvalsh_batch(stack, double tol=1e-13, int max_sweeps=100):
    """Descending eigenvalues of every matrix in an ``(m, d, d)`` stack."""
    buf = np.array(stack, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, :, ::1] work = buf
    cdef Py_ssize_t m = work.shape[0], n = work.shape[1], j, i
    cdef double complex[:, ::1] dummy = np.zeros((1, 1), dtype=np.complex128)
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef int failed = 0
    with nogil:
        for j in range(m):
            if _jacobi(work[j], dummy, False, tol, max_sweeps) < 0:
                failed += 1
            for i in range(n):
                o[j, i] = work[j, i, i].real
    out = -np.sort(-out, axis=1)
    return out, failed


def walk_slots(neighbors, Py_ssize_t start, slots):
    """Follow neighbor ``slots`` from ``start``; returns the visited vertices."""
    nb = np.ascontiguousarray(neighbors, dtype=np.int64)
    sl = np.ascontiguousarray(slots, dtype=np.int64)
    cdef const long long[:, ::1] nbv = nb
    cdef const long long[::1] slv = sl
    cdef Py_ssize_t k = slv.shape[0], j
    out = np.empty(k + 1, dtype=np.int64)
    cdef long long[::1] ov = out
    cdef long long cur = start
    ov[0] = cur
    with nogil:
        for j in range(k):
            cur = nbv[cur, slv[j]]
            ov[j + 1] = cur
    return out
