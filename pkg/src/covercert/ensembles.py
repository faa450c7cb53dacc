"""Classical-quantum ensembles, control states and sample-average covering.

A cq ensemble pairs a (possibly subnormalized) distribution ``p`` over an
alphabet with one state per symbol; as a block-diagonal operator it is the
control state ``sum_x p(x) |x><x| (x) rho_x``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from covercert.errors import (
    DimMismatch,
    InvalidDistribution,
    InvalidState,
    SupportViolation,
    ZeroReferenceWeight,
)
from covercert.linalg import PSD_ATOL, TRACE_ATOL, DensityOperator, eigvalsh

NORM_ATOL = 1e-12
DENSE_PRODUCT_LIMIT = 2 ** 16


class Distribution:
    """Nonnegative weights with total in ``(0, 1 + 1e-12]``."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.array(weights, dtype=float, copy=True).ravel()
        if w.size < 1:
            raise InvalidDistribution("empty alphabet")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidDistribution("weights must be finite and nonnegative")
        total = float(w.sum())
        if not 0 < total <= 1 + NORM_ATOL:
            raise InvalidDistribution(f"total weight {total!r} outside (0, 1]")
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @property
    def alphabet_size(self) -> int:
        return self.weights.size

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def normalized(self) -> bool:
        return abs(self.total - 1) <= NORM_ATOL

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def __len__(self):
        return self.alphabet_size

    def __repr__(self):
        return f"Distribution(n={self.alphabet_size}, total={self.total:.6g})"


def _check_state_stack(states: np.ndarray) -> np.ndarray:
    states = np.array(states, dtype=np.complex128, copy=True)
    if states.ndim != 3 or states.shape[1] != states.shape[2]:
        raise DimMismatch(f"expected a (n, d, d) stack of states, got {states.shape}")
    states = (states + np.conj(np.swapaxes(states, 1, 2))) / 2
    for x, s in enumerate(states):
        w = eigvalsh(s)
        if w[-1] < -PSD_ATOL:
            raise InvalidState(f"state {x} has eigenvalue {w[-1]:.3e}")
        if w.sum() > 1 + TRACE_ATOL:
            raise InvalidState(f"state {x} has trace {w.sum()!r} > 1")
    states.setflags(write=False)
    return states


class CqEnsemble:
    """Distribution over symbols plus a state for each symbol.

    Parameters
    ----------
    dist : Distribution or array_like
        Symbol weights ``p(x)``.
    states : array_like, shape (n, d, d)
        ``rho_x``; PSD with trace at most one (subnormalized allowed).
    """

    def __init__(self, dist, states, *, validate: bool = True):
        self.dist = dist if isinstance(dist, Distribution) else Distribution(dist)
        if validate:
            states = _check_state_stack(states)
        else:
            states = np.asarray(states, dtype=np.complex128)
        if states.shape[0] != self.dist.alphabet_size:
            raise DimMismatch(
                f"{states.shape[0]} states for an alphabet of {self.dist.alphabet_size}"
            )
        self.states = states

    @property
    def p(self) -> np.ndarray:
        return self.dist.weights

    @property
    def size(self) -> int:
        return self.dist.alphabet_size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def state(self, x: int) -> DensityOperator:
        return DensityOperator(self.states[x])

    def traces(self) -> np.ndarray:
        return np.einsum("xii->x", self.states).real

    def trace(self) -> float:
        """Trace of the control state, ``sum_x p(x) tr rho_x``."""
        return float(self.p @ self.traces())

    def average_array(self) -> np.ndarray:
        return np.tensordot(self.p, self.states, axes=1)

    def average_state(self) -> DensityOperator:
        return DensityOperator(self.average_array())

    def control_array(self) -> np.ndarray:
        """Dense block-diagonal control state of size ``n*d``."""
        n, d = self.size, self.dim
        out = np.zeros((n * d, n * d), dtype=np.complex128)
        for x in range(n):
            out[x * d:(x + 1) * d, x * d:(x + 1) * d] = self.p[x] * self.states[x]
        return out

    def __repr__(self):
        return f"CqEnsemble(size={self.size}, dim={self.dim})"


class MultipartiteEnsemble:
    """Joint distribution over ``X_1 x ... x X_k`` with product references.

    Parameters
    ----------
    joint : array_like
        ``p(x_1, ..., x_k)``, shape ``alphabets`` (or flat in C order).
    refs : sequence of array_like
        Reference distributions ``q^{X_i}``; each marginal of ``joint``
        must be supported inside the matching reference.
    states : ndarray or callable
        For ``k <= 2`` a dense table of shape ``(*alphabets, d, d)``. For
        larger ``k`` either such a table or a pure function from a symbol
        tuple to a ``(d, d)`` array, together with ``dim``.
    """

    def __init__(self, joint, refs: Sequence, states, dim: int | None = None,
                 alphabets: Sequence[int] | None = None):
        self.refs = tuple(r if isinstance(r, Distribution) else Distribution(r) for r in refs)
        if any(not r.normalized for r in self.refs):
            raise InvalidDistribution("reference distributions must be normalized")
        self.alphabets = tuple(alphabets) if alphabets else tuple(len(r) for r in self.refs)
        self.k = len(self.alphabets)
        if self.k < 1 or len(self.refs) != self.k:
            raise DimMismatch("need one reference distribution per party")
        if math.prod(self.alphabets) > DENSE_PRODUCT_LIMIT:
            raise DimMismatch(f"product alphabet exceeds {DENSE_PRODUCT_LIMIT}")
        joint = np.asarray(joint, dtype=float).reshape(self.alphabets)
        self.joint = Distribution(joint.ravel())
        if not self.joint.normalized:
            raise InvalidDistribution("joint distribution must be normalized")
        for i in range(self.k):
            marg = self.marginal(i)
            if np.any((marg > 0) & (self.refs[i].weights == 0)):
                raise SupportViolation(f"marginal {i} not supported inside q^{{X_{i}}}")
        if callable(states):
            if dim is None:
                raise DimMismatch("dim is required with a callable state map")
            self._table = None
            self._fn = states
            self.dim = int(dim)
        else:
            flat = _check_state_stack(
                np.asarray(states, dtype=np.complex128).reshape((-1,) + np.shape(states)[-2:])
            )
            if flat.shape[0] != self.joint.alphabet_size:
                raise DimMismatch("state table does not match the product alphabet")
            self._table = flat.reshape(self.alphabets + flat.shape[1:])
            self._fn = None
            self.dim = flat.shape[1]

    @property
    def p(self) -> np.ndarray:
        return self.joint.weights.reshape(self.alphabets)

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(j for j in range(self.k) if j != i)
        return self.joint.weights.reshape(self.alphabets).sum(axis=axes)

    def state(self, x: tuple) -> np.ndarray:
        if self._table is not None:
            return self._table[tuple(x)]
        return np.asarray(self._fn(tuple(int(v) for v in x)), dtype=np.complex128)

    def state_table(self) -> np.ndarray:
        """Dense ``(*alphabets, d, d)`` table (materialized for callables)."""
        if self._table is not None:
            return self._table
        table = np.empty(self.alphabets + (self.dim, self.dim), dtype=np.complex128)
        for x in itertools.product(*(range(a) for a in self.alphabets)):
            table[x] = self.state(x)
        return table

    def trace(self) -> float:
        tr = np.einsum("...ii->...", self.state_table()).real
        return float(np.sum(self.p * tr))

    def cq_marginal(self, subset: Sequence[int]) -> CqEnsemble:
        """The cq state on ``X_S M`` as an ensemble over the flattened ``X_S``.

        Symbol ``x_S`` carries weight ``p(x_S)`` and the conditional state
        ``sum_{x_rest} p(x) rho_x / p(x_S)``.
        """
        subset = tuple(sorted(subset))
        rest = tuple(j for j in range(self.k) if j not in subset)
        weighted = self.p[..., None, None] * self.state_table()
        block = weighted.sum(axis=rest) if rest else weighted
        pw = self.p.sum(axis=rest) if rest else self.p
        block = block.reshape((-1, self.dim, self.dim))
        pw = pw.ravel()
        states = np.zeros_like(block)
        nz = pw > 0
        states[nz] = block[nz] / pw[nz, None, None]
        return CqEnsemble(Distribution(pw), states, validate=False)

    def reference_product(self, subset: Sequence[int]) -> np.ndarray:
        """Flattened ``q^{X_S}`` in the same symbol order as :meth:`cq_marginal`."""
        out = np.ones(1)
        for i in sorted(subset):
            out = np.multiply.outer(out, self.refs[i].weights).ravel()
        return out

    def __repr__(self):
        return f"MultipartiteEnsemble(k={self.k}, alphabets={self.alphabets}, dim={self.dim})"


@dataclass(frozen=True)
class SampleTuples:
    """One tuple of sampled symbols per party; tuple ``i`` has length ``A_i``."""

    tuples: tuple = field()

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=np.int64) for t in self.tuples)
        if any(t.ndim != 1 or t.size < 1 for t in ts):
            raise ValueError("every tuple needs at least one entry")
        object.__setattr__(self, "tuples", ts)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(t.size for t in self.tuples)


def as_multipartite(e) -> MultipartiteEnsemble:
    """View a :class:`CqEnsemble` as a one-party ensemble with ``q = p``."""
    if isinstance(e, MultipartiteEnsemble):
        return e
    if not e.dist.normalized:
        raise InvalidDistribution("a one-party ensemble needs a normalized p")
    return MultipartiteEnsemble(e.p, [e.p], e.states)


def control_state(e: MultipartiteEnsemble) -> dict[tuple, np.ndarray]:
    """Map each symbol tuple with nonzero weight to ``p(x) rho_x``."""
    e = as_multipartite(e)
    p = e.p
    return {idx: p[idx] * e.state(idx) for idx in zip(*np.nonzero(p))}


def average_state(e) -> DensityOperator:
    """The ideal state ``rho^M = sum_x p(x) rho_x``."""
    e = as_multipartite(e)
    table = e.state_table()
    return DensityOperator(np.tensordot(e.p, table, axes=e.k))


def _log_q(e: MultipartiteEnsemble, i: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(e.refs[i].weights)


def covering_array(e: MultipartiteEnsemble, s: SampleTuples) -> np.ndarray:
    """Raw ``(d, d)`` array of the sample-average covering state.

    The index-tuple sum is regrouped by symbol counts, which is exact:
    ``sigma = sum_x prod_i (n_i(x_i) / A_i) * ratio(x) * rho_x``.
    """
    if len(s.tuples) != e.k:
        raise DimMismatch(f"{len(s.tuples)} tuples for {e.k} parties")
    freqs, logq = [], []
    for i, t in enumerate(s.tuples):
        lq = _log_q(e, i)
        if np.any(np.isneginf(lq[t])):
            raise ZeroReferenceWeight(f"party {i} sampled a symbol with q = 0")
        freqs.append(np.bincount(t, minlength=e.alphabets[i]) / t.size)
        logq.append(lq)
    p = e.p
    if e._table is not None:
        with np.errstate(divide="ignore"):
            logr = np.log(p)
        for i in range(e.k):
            shape = [1] * e.k
            shape[i] = -1
            logr = logr - np.where(freqs[i] > 0, logq[i], 0.0).reshape(shape)
        ratio = np.exp(logr)
        w = ratio
        for i in range(e.k):
            shape = [1] * e.k
            shape[i] = -1
            w = w * freqs[i].reshape(shape)
        return np.tensordot(w, e._table, axes=e.k)
    out = np.zeros((e.dim, e.dim), dtype=np.complex128)
    support = [np.flatnonzero(f) for f in freqs]
    for x in itertools.product(*support):
        px = p[x]
        if px == 0:
            continue
        lr = math.log(px) - sum(logq[i][xi] for i, xi in enumerate(x))
        coef = math.exp(lr) * math.prod(freqs[i][xi] for i, xi in enumerate(x))
        out += coef * e.state(x)
    return out


def covering_state(e, s: SampleTuples) -> DensityOperator:
    """Sample-average covering state with the change-of-measure ratio.

    The result is PSD; its trace may exceed one for unlucky samples, so it is
    returned as a validated Hermitian PSD operator without the trace cap.
    """
    e = as_multipartite(e)
    arr = covering_array(e, s)
    return _psd_operator(arr)


def _psd_operator(arr):
    from covercert.linalg import HermitianOperator

    op = HermitianOperator.ingest(arr)
    if op.eigenvalues[-1] < -1e-10 * max(1.0, op.eigenvalues[0]):
        raise InvalidState("covering state is not PSD")
    return op


def sample_tuples_iid(e, sizes: Sequence[int], rng: np.random.Generator) -> SampleTuples:
    """Draw each entry of tuple ``i`` independently from ``q^{X_i}``."""
    e = as_multipartite(e)
    if len(sizes) != e.k or any(int(a) < 1 for a in sizes):
        raise ValueError("need one positive size per party")
    out = []
    for i, a in enumerate(sizes):
        q = e.refs[i].weights
        q = q / q.sum()
        out.append(rng.choice(q.size, size=int(a), p=q))
    return SampleTuples(tuple(out))


def nonempty_subsets(k: int) -> list[tuple[int, ...]]:
    return [s for r in range(1, k + 1) for s in itertools.combinations(range(k), r)]


def sample_size_requirements(e, eps: float, *, certificates: bool = False):
    """Exponent thresholds that ``sum_{s in S} log2 A_s`` must exceed.

    For each non-empty subset ``S`` the threshold is the smooth Renyi-2
    divergence of the cq marginal on ``X_S M`` against ``q^{X_S} (x) rho^M``
    plus ``log2(1/eps^2)``. Weight-reduction smoothing can make that
    divergence slightly negative; it is floored at zero, which only makes
    the requirement stricter. With ``certificates=True`` the divergence
    values with their smoothing certificates are returned alongside.
    """
    from covercert.divergences import SmoothingBudget, smooth_divergence

    e = as_multipartite(e)
    budget = SmoothingBudget(eps)
    rho = np.tensordot(e.p, e.state_table(), axes=e.k)
    out, certs = {}, {}
    for subset in nonempty_subsets(e.k):
        cq = e.cq_marginal(subset)
        dv = smooth_divergence("renyi2", cq, e.reference_product(subset), rho, budget)
        out[subset] = max(dv.bits, 0.0) + math.log2(eps ** -2)
        certs[subset] = dv
    if certificates:
        return out, certs
    return out


# -- built-in families -------------------------------------------------------

def random_pure_states(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Haar-random pure states as a ``(n, dim, dim)`` stack."""
    v = rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.einsum("xi,xj->xij", v, v.conj())


def depolarized_states(n: int, dim: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Random pure states mixed with ``noise`` weight of the maximally mixed state."""
    if not 0 <= noise <= 1:
        raise ValueError("noise must lie in [0, 1]")
    return (1 - noise) * random_pure_states(n, dim, rng) + noise * np.eye(dim) / dim


def classical_diagonal_states(probs) -> np.ndarray:
    """Diagonal states from a ``(n, dim)`` array of probability rows."""
    probs = np.asarray(probs, dtype=float)
    n, d = probs.shape
    out = np.zeros((n, d, d), dtype=np.complex128)
    out[:, np.arange(d), np.arange(d)] = probs
    return out


def orthogonal_pure_states(n: int, dim: int | None = None) -> np.ndarray:
    """Basis states ``|x mod dim><x mod dim|``."""
    dim = n if dim is None else dim
    out = np.zeros((n, dim, dim), dtype=np.complex128)
    idx = np.arange(n) % dim
    out[np.arange(n), idx, idx] = 1.0
    return out


def random_weights(n: int, rng: np.random.Generator, kind: str = "uniform") -> np.ndarray:
    if kind == "uniform":
        return np.full(n, 1.0 / n)
    if kind == "dirichlet":
        w = rng.dirichlet(np.ones(n))
        return w / w.sum()
    raise ValueError(f"unknown weight kind {kind!r}")


def cq_ensemble_from_spec(spec: dict, base_dir=None) -> CqEnsemble:
    """Build a :class:`CqEnsemble` from a JSON/TOML-style mapping.

    Either explicit ``weights`` plus ``states`` (inline matrix objects or
    paths to matrix files), or a ``generator`` table with ``family`` in
    ``random-pure``, ``depolarized``, ``classical-diagonal``,
    ``orthogonal-pure``, ``identical`` and a mandatory ``seed``.
    """
    from covercert.linalg import matrix_from_json
    from pathlib import Path

    if "generator" in spec:
        g = spec["generator"]
        if "seed" not in g:
            raise InvalidDistribution("generator section needs an explicit seed")
        rng = np.random.default_rng(int(g["seed"]))
        n = int(g["size"])
        states = _family_states(g, n, rng)
        weights = random_weights(n, rng, g.get("weights", "uniform"))
        return CqEnsemble(weights, states)
    states = []
    for item in spec["states"]:
        if isinstance(item, str):
            path = Path(item)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            item = path
        states.append(matrix_from_json(item))
    return CqEnsemble(spec["weights"], np.stack(states))


def _family_states(g: dict, n: int, rng) -> np.ndarray:
    family = g.get("family", "random-pure")
    dim = int(g.get("dim", n))
    if family == "random-pure":
        return random_pure_states(n, dim, rng)
    if family == "depolarized":
        return depolarized_states(n, dim, float(g.get("noise", 0.5)), rng)
    if family == "classical-diagonal":
        return classical_diagonal_states(rng.dirichlet(np.ones(dim), size=n))
    if family == "orthogonal-pure":
        return orthogonal_pure_states(n, dim)
    if family == "identical":
        return np.repeat(random_pure_states(1, dim, rng), n, axis=0)
    raise InvalidDistribution(f"unknown ensemble family {family!r}")


def multipartite_from_spec(spec: dict) -> MultipartiteEnsemble:
    """Multipartite counterpart of :func:`cq_ensemble_from_spec`.

    A one-party spec (no ``alphabets`` key) yields ``q = p``. A generator
    with ``alphabets`` draws a joint distribution (``joint``: ``uniform``,
    ``product`` or ``dirichlet``) and uses its marginals as references.
    """
    gen = spec.get("generator", {})
    if "alphabets" not in gen and "alphabets" not in spec:
        return as_multipartite(cq_ensemble_from_spec(spec))
    if gen:
        if "seed" not in gen:
            raise InvalidDistribution("generator section needs an explicit seed")
        rng = np.random.default_rng(int(gen["seed"]))
        alph = tuple(int(a) for a in gen["alphabets"])
        total = math.prod(alph)
        kind = gen.get("joint", "dirichlet")
        if kind == "product":
            joint = np.ones(1)
            for a in alph:
                joint = np.multiply.outer(joint, rng.dirichlet(np.ones(a))).ravel()
        else:
            joint = random_weights(total, rng, kind)
        joint = joint.reshape(alph)
        states = _family_states(gen, total, rng)
        states = states.reshape(alph + states.shape[1:])
        refs = [joint.sum(axis=tuple(j for j in range(len(alph)) if j != i)) for i in range(len(alph))]
        return MultipartiteEnsemble(joint, refs, states)
    from covercert.linalg import matrix_from_json

    alph = tuple(int(a) for a in spec["alphabets"])
    states = np.stack([matrix_from_json(m) for m in spec["states"]])
    return MultipartiteEnsemble(
        np.asarray(spec["joint"], dtype=float), spec["refs"],
        states.reshape(alph + states.shape[1:]), alphabets=alph,
    )
