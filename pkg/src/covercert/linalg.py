"""Dense complex Hermitian matrix arithmetic.

Operators are immutable: the entries are stored read-only and the spectrum
is computed once, at construction, by the cyclic Jacobi kernel.

All logarithms are base 2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from covercert import kernels
from covercert.errors import (
    ConvergenceError,
    DimMismatch,
    InvalidP,
    InvalidState,
    NegativeEigenvalue,
    NonFiniteEntry,
    NotHermitian,
    SupportViolation,
)

HERMITIAN_ATOL = 1e-12
JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
RANK_CUTOFF = 1e-10  # relative to the largest |eigenvalue|
SUPPORT_ATOL = 1e-8
PSD_ATOL = 1e-12
TRACE_ATOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order and matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _jacobi_spectrum(a: np.ndarray) -> Spectrum:
    w, v, sweeps = kernels.jacobi_eigh(a, JACOBI_TOL, JACOBI_MAX_SWEEPS, True)
    if sweeps < 0:
        raise ConvergenceError(
            f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (dim {a.shape[0]})"
        )
    return Spectrum(_readonly(w), _readonly(v))


def eigvalsh(a: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of a raw Hermitian array (no operator wrapper)."""
    w, _, sweeps = kernels.jacobi_eigh(a, JACOBI_TOL, JACOBI_MAX_SWEEPS, False)
    if sweeps < 0:
        raise ConvergenceError("Jacobi did not converge")
    return w


def trace_norm_array(a: np.ndarray) -> float:
    """Schatten 1-norm of a raw Hermitian array; the Monte Carlo fast path."""
    return float(np.sum(np.abs(eigvalsh(a))))


def trace_norms(stack: np.ndarray) -> np.ndarray:
    """Schatten 1-norms of every matrix in an ``(m, d, d)`` Hermitian stack."""
    w, failed = kernels.eigvalsh_batch(stack, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if failed:
        raise ConvergenceError(f"Jacobi did not converge on {failed} matrices")
    return np.sum(np.abs(w), axis=1)


class HermitianOperator:
    """Immutable dense Hermitian matrix with its spectrum.

    Parameters
    ----------
    entries : array_like, shape (d, d)
        Complex entries. Must be Hermitian within ``atol`` (scaled by the
        largest entry magnitude when that exceeds 1); the stored matrix is
        the exact symmetrization ``(M + M^dag) / 2``.
    atol : float
        Hermiticity tolerance. Use :meth:`ingest` to symmetrize
        unconditionally, as for data read from files.
    """

    __slots__ = ("_entries", "_spectrum", "hermiticity_correction")

    def __init__(self, entries, atol: float = HERMITIAN_ATOL):
        a = np.array(entries, dtype=np.complex128, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteEntry("matrix contains NaN or Inf")
        sym = (a + a.conj().T) / 2
        correction = float(np.max(np.abs(a - sym)))
        if atol is not None:
            scale = max(1.0, float(np.max(np.abs(a))))
            if correction > atol * scale:
                raise NotHermitian(f"deviation from Hermiticity {correction:.3e}")
        self.hermiticity_correction = correction
        self._entries = _readonly(sym)
        self._spectrum = _jacobi_spectrum(sym)

    @classmethod
    def ingest(cls, entries) -> "HermitianOperator":
        """Symmetrize without a tolerance check, recording the correction."""
        return cls(entries, atol=None)

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def spectrum(self) -> Spectrum:
        return self._spectrum

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._spectrum.eigenvalues

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def support_projector(self) -> np.ndarray:
        w, v = self.eigenvalues, self._spectrum.eigenvectors
        keep = np.abs(w) > RANK_CUTOFF * _lam_max(w)
        vk = v[:, keep]
        return vk @ vk.conj().T

    def __array__(self, dtype=None, copy=None):
        return self._entries if dtype is None else self._entries.astype(dtype)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim}, trace={self.trace():.6g})"


class DensityOperator:
    """Positive semidefinite operator with trace at most one.

    Eigenvalues in ``[-1e-12, 0)`` are clamped to zero (the stored matrix is
    rebuilt from the clamped spectrum). ``normalization`` is ``"normalized"``
    when the trace is one within 1e-12, else ``"subnormalized"``.
    """

    __slots__ = ("op", "normalization")

    def __init__(self, op, atol: float = HERMITIAN_ATOL):
        if not isinstance(op, HermitianOperator):
            op = HermitianOperator(op, atol=atol)
        w = op.eigenvalues
        if np.any(w < -PSD_ATOL):
            raise InvalidState(f"negative eigenvalue {w.min():.3e}")
        if np.any(w < 0):
            clamped = Spectrum(np.clip(w, 0.0, None), op.spectrum.eigenvectors)
            op = HermitianOperator.ingest(clamped.reconstruct())
        tr = op.trace()
        if tr > 1 + TRACE_ATOL:
            raise InvalidState(f"trace {tr!r} exceeds 1")
        self.op = op
        self.normalization = "normalized" if abs(tr - 1) <= TRACE_ATOL else "subnormalized"

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @property
    def normalized(self) -> bool:
        return self.normalization == "normalized"

    def trace(self) -> float:
        return self.op.trace()

    def __array__(self, dtype=None, copy=None):
        return self.op.__array__(dtype)

    def __repr__(self):
        return f"DensityOperator(dim={self.dim}, {self.normalization})"


def as_operator(x) -> HermitianOperator:
    if isinstance(x, HermitianOperator):
        return x
    if isinstance(x, DensityOperator):
        return x.op
    return HermitianOperator(x)


def _lam_max(w: np.ndarray) -> float:
    return float(np.max(np.abs(w))) if w.size else 0.0


def eigendecompose(op) -> Spectrum:
    """Spectrum of ``op``, eigenvalues descending.

    Raises :class:`NonFiniteEntry` for NaN/Inf input.
    """
    return as_operator(op).spectrum


def schatten_norm(op, p: float) -> float:
    """Schatten p-norm, i.e. the l_p norm of the |eigenvalue| vector."""
    if not p >= 1:
        raise InvalidP(f"Schatten norm needs p >= 1, got {p}")
    s = np.abs(as_operator(op).eigenvalues)
    if math.isinf(p):
        return float(s.max())
    if p == 1:
        return float(s.sum())
    m = s.max()
    if m == 0:
        return 0.0
    return float(m * np.sum((s / m) ** p) ** (1.0 / p))


def _spectral_map(op: HermitianOperator, fn, alpha_is_integer: bool) -> HermitianOperator:
    w, v = op.eigenvalues, op.spectrum.eigenvectors
    cut = RANK_CUTOFF * _lam_max(w)
    support = np.abs(w) > cut
    if not alpha_is_integer and np.any(w < -cut):
        raise NegativeEigenvalue(f"eigenvalue {w.min():.3e} below -tau*lambda_max")
    out = np.zeros_like(w)
    out[support] = fn(w[support])
    return HermitianOperator.ingest((v * out) @ v.conj().T)


def pseudo_power(op, alpha: float) -> HermitianOperator:
    """Moore-Penrose power: eigenvalues below ``1e-10 * lambda_max`` map to 0.

    Negative or fractional exponents act only on the support; the zero
    eigenspace is kept as the zero eigenspace of the result.
    """
    op = as_operator(op)
    is_int = float(alpha).is_integer()
    if is_int and alpha >= 0:
        if alpha == 0:
            return HermitianOperator.ingest(op.support_projector())
        return _spectral_map(op, lambda w: w ** int(alpha), True)
    if is_int:
        return _spectral_map(op, lambda w: w ** float(alpha), True)
    return _spectral_map(op, lambda w: np.clip(w, 0, None) ** alpha, False)


def matrix_log2(op) -> HermitianOperator:
    """Base-2 logarithm on the support; the kernel stays zero."""
    op = as_operator(op)
    return _spectral_map(op, lambda w: np.log2(np.clip(w, np.finfo(float).tiny, None)), False)


def trace_distance(a, b) -> float:
    """Unnormalized trace distance ``||a - b||_1`` (no factor 1/2)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimMismatch(f"shapes {a.shape} and {b.shape} differ")
    d = a - b
    return trace_norm_array((d + d.conj().T) / 2)


def support_residual(a, b) -> float:
    """Frobenius norm of the part of ``a`` outside ``supp(b)``.

    Zero (up to rounding) exactly when ``supp(a)`` is contained in ``supp(b)``.
    """
    a = np.asarray(a, dtype=np.complex128)
    proj = as_operator(b).support_projector()
    comp = np.eye(a.shape[0]) - proj
    return float(np.linalg.norm(comp @ a))


def weighted_cs_bound(m, sigma) -> tuple[float, float]:
    """Both sides of the matrix weighted Cauchy-Schwarz inequality.

    Returns ``(||m||_1, ||sigma^{-1/4} m sigma^{-1/4}||_2)``; the first never
    exceeds the second when ``supp(m)`` lies in ``supp(sigma)``.
    """
    m = as_operator(m)
    if not isinstance(sigma, DensityOperator):
        sigma = DensityOperator(sigma)
    if m.dim != sigma.dim:
        raise DimMismatch(f"dims {m.dim} and {sigma.dim} differ")
    if support_residual(m.entries, sigma.op) > SUPPORT_ATOL:
        raise SupportViolation("supp(m) is not contained in supp(sigma)")
    s = pseudo_power(sigma.op, -0.25).entries
    weighted = s @ m.entries @ s
    return schatten_norm(m, 1), float(np.linalg.norm(weighted))


def matrix_to_json(m) -> dict:
    a = np.asarray(m, dtype=np.complex128)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; ``im`` may be omitted for real data.

    Round trips hold to 1e-12 (values pass through decimal text).
    """
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    a = re + 1j * im
    dim = int(obj.get("dim", a.shape[0]))
    if a.shape != (dim, dim):
        raise DimMismatch(f"declared dim {dim} but data has shape {a.shape}")
    return a
