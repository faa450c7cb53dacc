"""Pure numpy versions of the hot kernels in ``_ckernels.pyx``.

Same algorithm and same signatures; used when the extension is not built
or when ``COVERCERT_PURE_PYTHON`` is set.
"""
import numpy as np


def _offdiag_norm(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return np.linalg.norm(off)


def _jacobi(a, v, tol, max_sweeps):
    n = a.shape[0]
    thresh = tol * np.linalg.norm(a)
    for sweep in range(max_sweeps + 1):
        if _offdiag_norm(a) <= thresh:
            return sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                if (sweep > 3 and abs(app) + 100.0 * mag == abs(app)
                        and abs(aqq) + 100.0 * mag == abs(aqq)):
                    a[p, q] = a[q, p] = 0.0
                    continue
                ph = apq / mag
                cph = ph.conjugate()
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                x = a[:, p].copy()
                y = a[:, q]
                a[:, p] = c * x - s * cph * y
                a[:, q] = s * x + c * cph * y
                x = a[p, :].copy()
                y = a[q, :]
                a[p, :] = c * x - s * ph * y
                a[q, :] = s * x + c * ph * y
                a[p, q] = a[q, p] = 0.0
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
                if v is not None:
                    x = v[:, p].copy()
                    y = v[:, q]
                    v[:, p] = c * x - s * cph * y
                    v[:, q] = s * x + c * cph * y
    return -1


def jacobi_eigh(a, tol=1e-13, max_sweeps=100, vectors=True):
    work = np.array(a, dtype=np.complex128, copy=True)
    n = work.shape[0]
    v = np.eye(n, dtype=np.complex128) if vectors else None
    sweeps = _jacobi(work, v, tol, max_sweeps)
    w = np.diag(work).real.copy()
    order = np.argsort(-w, kind="stable")
    w = w[order]
    if vectors:
        return w, v[:, order], sweeps
    return w, None, sweeps


def eigvalsh_batch(stack, tol=1e-13, max_sweeps=100):
    stack = np.asarray(stack, dtype=np.complex128)
    out = np.empty(stack.shape[:2], dtype=np.float64)
    failed = 0
    for j in range(stack.shape[0]):
        w, _, sweeps = jacobi_eigh(stack[j], tol, max_sweeps, vectors=False)
        out[j] = w
        failed += sweeps < 0
    return out, failed


def walk_slots(neighbors, start, slots):
    neighbors = np.asarray(neighbors, dtype=np.int64)
    slots = np.asarray(slots, dtype=np.int64)
    out = np.empty(len(slots) + 1, dtype=np.int64)
    cur = int(start)
    out[0] = cur
    for j, s in enumerate(slots):
        cur = neighbors[cur, s]
        out[j + 1] = cur
    return out
