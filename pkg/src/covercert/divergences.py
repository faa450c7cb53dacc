"""Entropic quantities in bits: Shannon, Renyi-2 and max divergences, their
smooth versions on cq states, mutual informations, conditional entropies and
hypothesis-testing divergences.

Block-diagonal (cq) pairs are handled symbol by symbol through
:class:`BlockPair`; the dense functions accept arbitrary density operators
and serve as the reference definitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from covercert.errors import DimMismatch, FactorizationViolation, InvalidEps
from covercert.linalg import (
    RANK_CUTOFF,
    SUPPORT_ATOL,
    HermitianOperator,
    as_operator,
    eigvalsh,
    matrix_log2,
    pseudo_power,
    support_residual,
)

KINDS = ("shannon", "renyi2", "max")
COMMUTE_ATOL = 1e-10
SCAN_POINTS = 400
FACTOR_ATOL = 1e-10


@dataclass(frozen=True)
class SmoothingBudget:
    eps: float

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise InvalidEps(f"eps must lie strictly inside (0, 1), got {self.eps}")


def _budget(eps) -> SmoothingBudget:
    return eps if isinstance(eps, SmoothingBudget) else SmoothingBudget(float(eps))


@dataclass(frozen=True)
class SmoothingCertificate:
    """Weight-reduced cq state ``rho' = sum_x p'(x) |x><x| (x) rho_x``.

    ``distance`` is ``||rho' - rho||_1`` and never exceeds ``budget``.
    """

    kind: str
    weights: np.ndarray
    original: np.ndarray
    distance: float
    budget: float
    level: float

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "distance": self.distance,
            "budget": self.budget,
        }


@dataclass(frozen=True)
class DivergenceValue:
    """A divergence in bits.

    ``upper_bound`` marks smooth values computed from a certificate (the true
    minimum can only be lower); ``lower_bound`` marks hypothesis-testing values
    from the threshold-projector scan.
    """

    bits: float
    certificate: SmoothingCertificate | None = None
    upper_bound: bool = False
    lower_bound: bool = False

    def __float__(self):
        return float(self.bits)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.bits) and self.bits > 0


def _log2(x: float) -> float:
    if x <= 0:
        return -math.inf
    return math.log2(x)


# -- dense definitions -------------------------------------------------------

def _pair(a, b):
    a, b = as_operator(a), as_operator(b)
    if a.dim != b.dim:
        raise DimMismatch(f"dims {a.dim} and {b.dim} differ")
    return a, b


def _supported(a: HermitianOperator, b: HermitianOperator) -> bool:
    return support_residual(a.entries, b) <= SUPPORT_ATOL


def shannon_divergence(a, b) -> DivergenceValue:
    """``tr[a (log a - log b)]``, or +inf when ``supp(a)`` leaves ``supp(b)``."""
    a, b = _pair(a, b)
    if not _supported(a, b):
        return DivergenceValue(math.inf)
    w = a.eigenvalues
    w = w[w > RANK_CUTOFF * max(abs(w[0]), abs(w[-1]))]
    ent = float(np.sum(w * np.log2(w)))
    cross = float(np.real(np.trace(a.entries @ matrix_log2(b).entries)))
    return DivergenceValue(ent - cross)


def renyi2_divergence(a, b) -> DivergenceValue:
    """``2 log ||b^{-1/4} a b^{-1/4}||_2`` with Moore-Penrose powers."""
    a, b = _pair(a, b)
    if not _supported(a, b):
        return DivergenceValue(math.inf)
    s = pseudo_power(b, -0.25).entries
    return DivergenceValue(2 * _log2(float(np.linalg.norm(s @ a.entries @ s))))


def max_divergence(a, b) -> DivergenceValue:
    """``log ||b^{-1/2} a b^{-1/2}||_inf`` with Moore-Penrose powers."""
    a, b = _pair(a, b)
    if not _supported(a, b):
        return DivergenceValue(math.inf)
    s = pseudo_power(b, -0.5).entries
    w = eigvalsh(_herm(s @ a.entries @ s))
    return DivergenceValue(_log2(float(np.max(np.abs(w)))))


def _herm(m):
    return (m + m.conj().T) / 2


DENSE = {"shannon": shannon_divergence, "renyi2": renyi2_divergence, "max": max_divergence}


# -- block-diagonal pairs ----------------------------------------------------

class BlockPair:
    """Block-diagonal pair ``(sum_x w_x |x><x| (x) rho_x, sum_x v_x |x><x| (x) R_{r(x)})``.

    Parameters
    ----------
    weights : (n,) array
        Classical weights of the first argument.
    states : (n, d, d) array
        Per-symbol states of the first argument.
    ref_weights : (n,) array
        Classical weights of the reference.
    ref_states : (d, d) or (r, d, d) array
        Reference states; a single matrix is shared by every symbol.
    ref_index : (n,) int array, optional
        Which reference state each symbol uses.
    """

    def __init__(self, weights, states, ref_weights, ref_states, ref_index=None):
        self.weights = np.asarray(weights, dtype=float).ravel()
        self.states = np.asarray(states, dtype=np.complex128)
        self.ref_weights = np.asarray(ref_weights, dtype=float).ravel()
        refs = np.asarray(ref_states, dtype=np.complex128)
        if refs.ndim == 2:
            refs = refs[None]
        self.ref_states = refs
        n = self.weights.size
        self.ref_index = (np.zeros(n, dtype=np.int64) if ref_index is None
                          else np.asarray(ref_index, dtype=np.int64).ravel())
        if self.states.shape[0] != n or self.ref_weights.size != n or self.ref_index.size != n:
            raise DimMismatch("weights, states, reference weights and indices disagree in length")
        if self.states.shape[1:] != refs.shape[1:]:
            raise DimMismatch("state and reference dimensions differ")
        self._refcache = {}
        self._scores = {}

    @classmethod
    def from_ensemble(cls, e, ref_weights, ref_state) -> "BlockPair":
        return cls(e.p, e.states, ref_weights, ref_state)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def traces(self) -> np.ndarray:
        return np.einsum("xii->x", self.states).real

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        n, d = self.size, self.dim
        a = np.zeros((n * d, n * d), dtype=np.complex128)
        b = np.zeros_like(a)
        for x in range(n):
            sl = slice(x * d, (x + 1) * d)
            a[sl, sl] = self.weights[x] * self.states[x]
            b[sl, sl] = self.ref_weights[x] * self.ref_states[self.ref_index[x]]
        return a, b

    def _ref(self, r: int) -> dict:
        if r not in self._refcache:
            op = HermitianOperator.ingest(self.ref_states[r])
            self._refcache[r] = {
                "op": op,
                "proj": op.support_projector(),
                "m14": pseudo_power(op, -0.25).entries,
                "m12": pseudo_power(op, -0.5).entries,
            }
        return self._refcache[r]

    def _symbol_supported(self, x: int) -> bool:
        if self.ref_weights[x] <= 0:
            return False
        ref = self._ref(self.ref_index[x])
        comp = np.eye(self.dim) - ref["proj"]
        return float(np.linalg.norm(comp @ self.states[x])) <= SUPPORT_ATOL

    def scores(self, kind: str) -> np.ndarray:
        """Per-unit-weight contribution of each symbol.

        ``max``: ``lambda_max(R^{-1/2} rho_x R^{-1/2}) / v_x``;
        ``renyi2``: ``||R^{-1/4} rho_x R^{-1/4}||_2^2 / v_x``. Symbols outside
        the reference support score +inf.
        """
        if kind in self._scores:
            return self._scores[kind]
        out = np.zeros(self.size)
        for x in range(self.size):
            tr = float(np.trace(self.states[x]).real)
            if tr <= 0:
                continue
            if not self._symbol_supported(x):
                out[x] = math.inf
                continue
            ref = self._ref(self.ref_index[x])
            if kind == "max":
                s = ref["m12"]
                val = float(np.max(np.abs(eigvalsh(_herm(s @ self.states[x] @ s)))))
            elif kind == "renyi2":
                s = ref["m14"]
                val = float(np.linalg.norm(s @ self.states[x] @ s)) ** 2
            else:
                raise ValueError(f"no score for kind {kind!r}")
            out[x] = val / self.ref_weights[x]
        self._scores[kind] = out
        return out

    def value(self, kind: str, weights=None) -> float:
        """Divergence in bits of the pair with first-argument weights ``weights``."""
        w = self.weights if weights is None else np.asarray(weights, dtype=float)
        active = w > 0
        if kind == "shannon":
            return self._shannon(w)
        sc = self.scores(kind)
        if np.any(np.isinf(sc[active])):
            return math.inf
        if kind == "max":
            vals = w[active] * sc[active]
            return _log2(float(vals.max())) if vals.size else -math.inf
        if kind == "renyi2":
            return _log2(float(np.sum(w[active] ** 2 * sc[active])))
        raise ValueError(f"unknown kind {kind!r}")

    def _shannon(self, w) -> float:
        total = 0.0
        for x in range(self.size):
            if w[x] <= 0:
                continue
            rho = self.states[x]
            lam = eigvalsh(rho)
            lam = lam[lam > RANK_CUTOFF * max(abs(lam[0]), 1e-300)]
            if lam.size == 0:
                continue
            if not self._symbol_supported(x):
                return math.inf
            ref = self._ref(self.ref_index[x])
            if "log" not in ref:
                ref["log"] = matrix_log2(ref["op"]).entries
            t = float(lam.sum())
            ent = float(np.sum(lam * np.log2(lam)))
            cross = float(np.real(np.trace(rho @ ref["log"])))
            total += w[x] * (ent + t * math.log2(w[x]) - cross - t * math.log2(self.ref_weights[x]))
        return float(total)


def cq_divergence(kind: str, pair: BlockPair) -> DivergenceValue:
    """Non-smooth divergence of a block pair, symbol by symbol."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    return DivergenceValue(pair.value(kind))


def waterfill(p, score, cost, budget: float) -> tuple[np.ndarray, float]:
    """Reduce weights to ``min(p, L / score)`` at the lowest affordable level.

    Minimizes ``max_x p'_x score_x`` (and, through the KKT conditions, any
    objective ``sum_x score_x cost_x p'_x^2``) over ``0 <= p' <= p`` subject
    to ``sum_x cost_x (p_x - p'_x) <= budget``. Infinite scores are zeroed
    first. Returns ``(p', L)``; ``L`` is inf if the budget cannot remove every
    infinite-score symbol.
    """
    p = np.asarray(p, dtype=float)
    score = np.asarray(score, dtype=float)
    cost = np.asarray(cost, dtype=float)
    out = p.copy()
    relevant = (p > 0) & (cost > 0) & (score > 0)
    inf = relevant & np.isinf(score)
    inf_cost = float(np.sum(p[inf] * cost[inf]))
    if inf_cost > budget:
        return out, math.inf
    out[inf] = 0.0
    left = budget - inf_cost
    fin = np.flatnonzero(relevant & ~inf)
    if fin.size == 0:
        return out, 0.0
    v = p[fin] * score[fin]
    order = np.argsort(-v, kind="stable")
    idx = fin[order]
    v = v[order]
    a = np.cumsum(p[idx] * cost[idx])
    b = np.cumsum(cost[idx] / score[idx])
    levels = (a - left) / b
    nxt = np.append(v[1:], 0.0)
    j = int(np.argmax(levels >= nxt))
    level = max(float(levels[j]), 0.0)
    out[fin] = np.minimum(p[fin], level / score[fin])
    return out, level


def smooth_block_divergence(kind: str, pair: BlockPair, budget) -> DivergenceValue:
    """Smooth Renyi-2 or max divergence via an exact weight-reduction certificate.

    The certificate lowers symbol weights only, so ``||rho' - rho||_1`` is
    ``sum_x tr(rho_x) (p_x - p'_x) <= eps * tr(rho)``. The value is exact for
    the certificate and an upper bound on the smooth divergence.
    """
    if kind not in ("renyi2", "max"):
        raise ValueError("smoothing is defined for kind 'renyi2' or 'max'")
    budget = _budget(budget)
    t = pair.traces()
    trace = float(pair.weights @ t)
    allowance = budget.eps * trace
    sc = pair.scores(kind)
    unit = sc if kind == "max" else np.divide(sc, t, out=np.full_like(sc, np.inf), where=t > 0)
    unit = np.where(np.isinf(sc), np.inf, unit)
    new, level = waterfill(pair.weights, unit, t, allowance)
    dist = float(np.sum(t * (pair.weights - new)))
    cert = SmoothingCertificate(kind, new, pair.weights.copy(), dist, allowance, level)
    return DivergenceValue(pair.value(kind, new), cert, upper_bound=True)


def smooth_divergence(kind: str, e, ref_weights, ref_state, budget) -> DivergenceValue:
    """Smooth divergence of the cq state of ``e`` against ``q (x) sigma``.

    ``ref_weights`` is the classical reference ``q`` (one weight per symbol)
    and ``ref_state`` the quantum reference ``sigma``.
    """
    return smooth_block_divergence(kind, BlockPair.from_ensemble(e, ref_weights, ref_state), budget)


# -- mutual informations and conditional entropies ---------------------------

@dataclass(frozen=True)
class MutualInformations:
    I: float
    I2: float
    Imax: float
    I2_eps: float
    Imax_eps: float
    certificates: dict = field(default_factory=dict, repr=False)

    def as_dict(self):
        return {"I": self.I, "I2": self.I2, "Imax": self.Imax,
                "I2_eps": self.I2_eps, "Imax_eps": self.Imax_eps}


@dataclass(frozen=True)
class ConditionalEntropies:
    H: float
    H2: float
    Hmin: float
    H2_eps: float
    Hmin_eps: float
    certificates: dict = field(default_factory=dict, repr=False)

    def as_dict(self):
        return {"H": self.H, "H2": self.H2, "Hmin": self.Hmin,
                "H2_eps": self.H2_eps, "Hmin_eps": self.Hmin_eps}


def mutual_information_pair(e) -> BlockPair:
    """``sigma^{XE}`` against ``sigma^X (x) sigma^E`` for a cq ensemble."""
    return BlockPair(e.p, e.states, e.p, e.average_array())


def mutual_informations(e, eps) -> MutualInformations:
    """I, I_2, I_max and their smooth versions for the cq state of ``e``."""
    budget = _budget(eps)
    pair = mutual_information_pair(e)
    i2 = smooth_block_divergence("renyi2", pair, budget)
    imax = smooth_block_divergence("max", pair, budget)
    return MutualInformations(
        pair.value("shannon"), pair.value("renyi2"), pair.value("max"),
        i2.bits, imax.bits, {"I2_eps": i2.certificate, "Imax_eps": imax.certificate},
    )


def max_mutual_information_per_symbol(e) -> float:
    """``max_x D_max(rho_x || rho)`` over symbols with nonzero weight."""
    avg = e.average_array()
    return max(max_divergence(e.states[x], avg).bits for x in np.flatnonzero(e.p > 0))


def conditional_entropies(e, eps) -> ConditionalEntropies:
    """H, H_2, H_min and smooth H_2, H_min for the cq state of ``e``.

    The smooth values are evaluated for the weight-reduction certificate
    found against ``(1/|X|) (x) sigma^E`` but measured against the smoothed
    marginal ``sigma'^E``, so that the certificate satisfies
    ``p'(x) rho_x <= 2^{-H} sigma'^E`` for ``H = Hmin_eps``.
    """
    budget = _budget(eps)
    n = e.size
    logn = math.log2(n)
    u = np.full(n, 1.0 / n)
    pair = BlockPair(e.p, e.states, u, e.average_array())
    out, certs = {}, {}
    for name, kind in (("H2_eps", "renyi2"), ("Hmin_eps", "max")):
        dv = smooth_block_divergence(kind, pair, budget)
        smoothed = np.tensordot(dv.certificate.weights, e.states, axes=1)
        resmoothed = BlockPair(dv.certificate.weights, e.states, u, smoothed)
        out[name] = logn - resmoothed.value(kind)
        certs[name] = dv.certificate
    return ConditionalEntropies(
        logn - pair.value("shannon"), logn - pair.value("renyi2"), logn - pair.value("max"),
        out["H2_eps"], out["Hmin_eps"], certs,
    )


# -- hypothesis testing ------------------------------------------------------

def neyman_pearson(a, b, eps: float) -> float:
    """Exact ``D_H^eps`` in bits for commuting (diagonal) probability vectors.

    Outcomes are taken in decreasing likelihood ratio ``a_i / b_i`` until the
    type-I constraint ``sum Pi_i a_i >= 1 - eps`` is met, the last one
    fractionally.
    """
    _budget(eps)
    a = np.clip(np.asarray(a, dtype=float).ravel(), 0.0, None)
    b = np.clip(np.asarray(b, dtype=float).ravel(), 0.0, None)
    need = 1.0 - eps
    if a.sum() < need * (1 - 1e-15):
        return -math.inf
    use = a > 0
    a, b = a[use], b[use]
    free = b <= 0
    got = float(a[free].sum())
    if got >= need:
        return math.inf
    a, b = a[~free], b[~free]
    order = np.argsort(-(a / b), kind="stable")
    a, b = a[order], b[order]
    ca = np.cumsum(a)
    j = int(np.searchsorted(ca + got, need, side="left"))
    j = min(j, a.size - 1)
    before_a = got + (ca[j - 1] if j > 0 else 0.0)
    before_b = float(b[:j].sum())
    frac = min(max((need - before_a) / a[j], 0.0), 1.0)
    return -_log2(before_b + frac * b[j])


def _blocks_commute(blocks) -> bool:
    for al, be in blocks:
        if np.linalg.norm(al @ be - be @ al) >= COMMUTE_ATOL:
            return False
    return True


def _joint_diagonal(al: np.ndarray, be: np.ndarray):
    """Common eigenbasis diagonals of two commuting Hermitian matrices."""
    off = lambda m: float(np.max(np.abs(m - np.diag(np.diag(m))))) if m.size > 1 else 0.0
    if off(al) == 0 and off(be) == 0:
        return np.diag(al).real.copy(), np.diag(be).real.copy()
    mix = HermitianOperator.ingest(al + (math.sqrt(5) - 1) / 2 * be)
    v = mix.spectrum.eigenvectors
    da = v.conj().T @ al @ v
    db = v.conj().T @ be @ v
    if off(da) > 1e-8 or off(db) > 1e-8:
        return None
    return np.diag(da).real.copy(), np.diag(db).real.copy()


def _breakpoints(al: np.ndarray, be: np.ndarray) -> np.ndarray:
    """log2 of the nonzero generalized eigenvalues of ``(al, be)`` on ``supp(be)``."""
    s = pseudo_power(HermitianOperator.ingest(be), -0.5).entries
    w = eigvalsh(_herm(s @ al @ s))
    w = w[w > RANK_CUTOFF * max(float(np.max(np.abs(w))), 1e-300)]
    return np.log2(w)


def threshold_scan(blocks, eps: float, points: int = SCAN_POINTS) -> float:
    """Lower bound on ``D_H^eps`` from threshold projectors ``{a >= 2^R b}``.

    ``R`` runs over a uniform grid of ``points`` values on
    ``[-2 log2(dim) - 20, D_max]`` plus midpoints between all generalized
    eigenvalue breakpoints. Tests at adjacent scan points are mixed to meet
    ``tr[Pi a] = 1 - eps`` exactly; for commuting inputs this reproduces the
    Neyman-Pearson optimum.
    """
    _budget(eps)
    blocks = [(_herm(np.asarray(a, dtype=np.complex128)), _herm(np.asarray(b, dtype=np.complex128)))
              for a, b in blocks]
    dim = sum(a.shape[0] for a, _ in blocks)
    bps = np.concatenate([_breakpoints(a, b) for a, b in blocks] + [np.zeros(0)])
    bps = np.unique(bps)
    lo = -2 * math.log2(dim) - 20
    hi = float(bps.max()) if bps.size else 0.0
    grid = np.linspace(lo, max(hi, lo + 1), points)
    extra = []
    if bps.size:
        extra = np.concatenate([[bps[0] - 1.0], (bps[1:] + bps[:-1]) / 2, [bps[-1] + 1.0]])
    rs = np.concatenate([grid, extra])
    pts = [(0.0, 0.0)]
    tra = sum(float(np.trace(a).real) for a, _ in blocks)
    trb = sum(float(np.trace(b).real) for _, b in blocks)
    pts.append((tra, trb))
    for r in rs:
        ta = tb = 0.0
        scale = 2.0 ** r
        for a, b in blocks:
            hop = HermitianOperator.ingest(a - scale * b)
            w, v = hop.eigenvalues, hop.spectrum.eigenvectors
            vp = v[:, w > 0]
            if vp.shape[1] == 0:
                continue
            ta += float(np.einsum("ij,ik,kj->", vp.conj(), a, vp).real)
            tb += float(np.einsum("ij,ik,kj->", vp.conj(), b, vp).real)
        pts.append((ta, tb))
    pts = np.array(pts)
    need = 1.0 - eps
    feas = pts[pts[:, 0] >= need]
    infeas = pts[pts[:, 0] < need]
    if feas.size == 0:
        return -math.inf
    best = float(feas[:, 1].min())
    if infeas.size:
        fa, fb = feas[:, 0][:, None], feas[:, 1][:, None]
        ia, ib = infeas[:, 0][None, :], infeas[:, 1][None, :]
        theta = (need - ia) / (fa - ia)
        best = min(best, float(np.min(ib + theta * (fb - ib))))
    return -_log2(best)


def ht_divergence_blocks(blocks, eps) -> DivergenceValue:
    """``D_H^eps`` of block-diagonal ``(sum alpha_j, sum beta_j)``.

    Exact when every block pair commutes, otherwise the threshold-scan lower
    bound (flagged as such).
    """
    eps = _budget(eps).eps
    blocks = [(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))
              for a, b in blocks]
    if _blocks_commute(blocks):
        diag = [_joint_diagonal(a, b) for a, b in blocks]
        if all(d is not None for d in diag):
            av = np.concatenate([d[0] for d in diag])
            bv = np.concatenate([d[1] for d in diag])
            return DivergenceValue(neyman_pearson(av, bv, eps))
    return DivergenceValue(threshold_scan(blocks, eps), lower_bound=True)


def hypothesis_testing_divergence(a, b, eps) -> DivergenceValue:
    """Smooth hypothesis-testing divergence ``D_H^eps(a || b)`` in bits."""
    a, b = _pair(a, b)
    return ht_divergence_blocks([(a.entries, b.entries)], eps)


def pair_blocks(pair: BlockPair):
    return [
        (pair.weights[x] * pair.states[x],
         pair.ref_weights[x] * pair.ref_states[pair.ref_index[x]])
        for x in range(pair.size) if pair.weights[x] > 0 or pair.ref_weights[x] > 0
    ]


def ht_mutual_information(e, eps) -> DivergenceValue:
    """``I_H^eps(X:B) = D_H^eps(rho^{XB} || rho^X (x) rho^B)``."""
    return ht_divergence_blocks(pair_blocks(mutual_information_pair(e)), eps)


# -- conditional (timesharing) cq states -------------------------------------

class ConditionalCq:
    """``sum_{qxy} p(q) p(x|q) p(y|q) |q,x,y><q,x,y| (x) sigma_{xy}``.

    Parameters
    ----------
    p_q : (nQ,) array
    p_x_given_q : (nQ, nX) array
    p_y_given_q : (nQ, nY) array
    states : (nX, nY, d, d) array
    """

    def __init__(self, p_q, p_x_given_q, p_y_given_q, states):
        self.p_q = np.asarray(p_q, dtype=float).ravel()
        self.p_x = np.atleast_2d(np.asarray(p_x_given_q, dtype=float))
        self.p_y = np.atleast_2d(np.asarray(p_y_given_q, dtype=float))
        self.states = np.asarray(states, dtype=np.complex128)
        nq = self.p_q.size
        if self.p_x.shape[0] != nq or self.p_y.shape[0] != nq:
            raise DimMismatch("conditional distributions must have one row per q")
        if self.states.shape[:2] != (self.p_x.shape[1], self.p_y.shape[1]):
            raise DimMismatch("state table must be indexed by (x, y)")
        for name, arr in (("p(q)", self.p_q[None]), ("p(x|q)", self.p_x), ("p(y|q)", self.p_y)):
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1) > FACTOR_ATOL):
                raise FactorizationViolation(f"{name} rows must be normalized distributions")

    @classmethod
    def from_joint(cls, joint, states) -> "ConditionalCq":
        """Factor ``p(q, x, y)``; raises if X and Y are not independent given Q."""
        joint = np.asarray(joint, dtype=float)
        if joint.ndim != 3:
            raise DimMismatch("joint must have shape (nQ, nX, nY)")
        pq = joint.sum(axis=(1, 2))
        if np.any(pq <= 0):
            raise FactorizationViolation("every timesharing symbol needs positive weight")
        px = joint.sum(axis=2) / pq[:, None]
        py = joint.sum(axis=1) / pq[:, None]
        recon = pq[:, None, None] * px[:, :, None] * py[:, None, :]
        if np.max(np.abs(recon - joint)) > FACTOR_ATOL:
            raise FactorizationViolation("p(q,x,y) does not factor as p(q)p(x|q)p(y|q)")
        return cls(pq, px, py, states)

    @property
    def shape(self):
        return self.p_q.size, self.p_x.shape[1], self.p_y.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    def joint(self) -> np.ndarray:
        return self.p_q[:, None, None] * self.p_x[:, :, None] * self.p_y[:, None, :]

    def state_q(self) -> np.ndarray:
        """``sigma_q = sum_{xy} p(x|q) p(y|q) sigma_{xy}``, shape (nQ, d, d)."""
        return np.einsum("qx,qy,xyij->qij", self.p_x, self.p_y, self.states)

    def ht_pair(self, which: str) -> BlockPair:
        """Block pair for ``I_H(T : rest C | Q)`` with ``T`` in X, Y or XY."""
        nq, nx, ny = self.shape
        w = self.joint().ravel()
        st = np.broadcast_to(self.states, (nq, nx, ny) + self.states.shape[2:])
        st = st.reshape((-1,) + self.states.shape[2:])
        if which == "XY":
            refs = self.state_q()
            idx = np.repeat(np.arange(nq), nx * ny)
        elif which == "X":
            refs = np.einsum("qx,xyij->qyij", self.p_x, self.states).reshape((-1,) + self.states.shape[2:])
            idx = (np.arange(nq)[:, None, None] * ny + np.arange(ny)[None, None, :]) + 0 * np.arange(nx)[None, :, None]
        elif which == "Y":
            refs = np.einsum("qy,xyij->qxij", self.p_y, self.states).reshape((-1,) + self.states.shape[2:])
            idx = (np.arange(nq)[:, None, None] * nx + np.arange(nx)[None, :, None]) + 0 * np.arange(ny)[None, None, :]
        else:
            raise ValueError(f"which must be 'X', 'Y' or 'XY', got {which!r}")
        return BlockPair(w, st, w, refs, np.asarray(idx).ravel())

    def eve_pair(self, which: str) -> BlockPair:
        """Block pair for ``I(T : C | Q)`` on the reduced state with the other input traced out."""
        nq, nx, ny = self.shape
        refs = self.state_q()
        d = self.states.shape[2:]
        if which == "XY":
            w = self.joint().ravel()
            st = np.broadcast_to(self.states, (nq, nx, ny) + d).reshape((-1,) + d)
            idx = np.repeat(np.arange(nq), nx * ny)
        elif which == "X":
            w = (self.p_q[:, None] * self.p_x).ravel()
            st = np.einsum("qy,xyij->qxij", self.p_y, self.states).reshape((-1,) + d)
            idx = np.repeat(np.arange(nq), nx)
        elif which == "Y":
            w = (self.p_q[:, None] * self.p_y).ravel()
            st = np.einsum("qx,xyij->qyij", self.p_x, self.states).reshape((-1,) + d)
            idx = np.repeat(np.arange(nq), ny)
        else:
            raise ValueError(f"which must be 'X', 'Y' or 'XY', got {which!r}")
        return BlockPair(w, st, w, refs, idx)


def conditional_ht_mutual_information(s: ConditionalCq, eps, which: str = "XY") -> DivergenceValue:
    """``I_H^eps(T : rest C | Q)``; the default ``which='XY'`` is ``I_H^eps(XY:C|Q)``."""
    return ht_divergence_blocks(pair_blocks(s.ht_pair(which)), eps)


def conditional_max_mutual_information(s: ConditionalCq, eps, which: str = "XY") -> DivergenceValue:
    """Smooth ``I_max^eps(T : C | Q)`` via the weight-reduction certificate."""
    return smooth_block_divergence("max", s.eve_pair(which), eps)


def conditional_mutual_information(s: ConditionalCq, which: str = "XY", side: str = "ht") -> float:
    """Shannon ``I(T : rest C | Q)`` (``side='ht'``) or ``I(T : C | Q)`` (``side='eve'``)."""
    pair = s.ht_pair(which) if side == "ht" else s.eve_pair(which)
    return pair.value("shannon")


def divergence_report(e, eps_grid) -> dict:
    """Every quantity for a cq ensemble at each smoothing parameter."""
    rows = []
    for eps in eps_grid:
        mi = mutual_informations(e, eps)
        ce = conditional_entropies(e, eps)
        ih = ht_mutual_information(e, eps)
        row = {"eps": float(eps)}
        row.update(mi.as_dict())
        row.update(ce.as_dict())
        row["IH_eps"] = ih.bits
        row["IH_is_lower_bound"] = ih.lower_bound
        row["ordering_ok"] = bool(
            mi.I <= mi.I2 + 1e-9 and mi.I2 <= mi.Imax + 1e-9
            and ce.H + 1e-9 >= ce.H2 and ce.H2 + 1e-9 >= ce.Hmin
            and mi.I2_eps <= mi.Imax_eps + 1e-9
        )
        rows.append(row)
    return {"size": e.size, "dim": e.dim, "rows": rows}
