"""Regular graphs, their walk spectra and stationary random walks.

Graphs are stored as neighbor-slot tables: row ``v`` lists the ``d``
endpoints of the edge slots at ``v``. Self-loops and multi-edges are
allowed, and a walk step picks a slot uniformly, so parallel edges weight
transitions correctly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from covercert import kernels
from covercert.errors import ExpanderResampleError, GraphError, ParityError

EXPANDER_GAP_ATOL = 1e-10
MAX_RESAMPLES = 50
GAP_REQUIREMENT = 0.25


class RegularGraph:
    """Undirected ``d``-regular multigraph on vertices ``0..n-1``.

    Parameters
    ----------
    neighbors : array_like of int, shape (n, d)
        Slot table. Undirectedness is checked as multiset symmetry of the
        directed slot list: ``v`` appears in row ``u`` as often as ``u``
        appears in row ``v``. A self-loop from a permutation fixed point
        occupies two slots of its vertex.
    family : str
        Construction label, used for analytic spectra.
    """

    def __init__(self, neighbors, family: str = "custom"):
        nb = np.array(neighbors, dtype=np.int64)
        if nb.ndim != 2 or nb.shape[0] < 1 or nb.shape[1] < 1:
            raise GraphError("neighbor table must have shape (n, d) with n, d >= 1")
        n, d = nb.shape
        if nb.min() < 0 or nb.max() >= n:
            raise GraphError("neighbor index out of range")
        src = np.repeat(np.arange(n), d)
        dst = nb.ravel()
        fwd = np.sort(src * n + dst)
        bwd = np.sort(dst * n + src)
        if not np.array_equal(fwd, bwd):
            raise GraphError("slot table is not symmetric (graph is not undirected)")
        nb.setflags(write=False)
        self.neighbors = nb
        self.family = family

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    @property
    def degree(self) -> int:
        return self.neighbors.shape[1]

    def degree_sum(self) -> int:
        return int(self.neighbors.size)

    def adjacency(self) -> np.ndarray:
        """Edge-multiplicity matrix (self-loops count their slots)."""
        a = np.zeros((self.n, self.n))
        np.add.at(a, (np.repeat(np.arange(self.n), self.degree), self.neighbors.ravel()), 1.0)
        return a

    def transition_matrix(self) -> np.ndarray:
        return self.adjacency() / self.degree

    def to_json(self) -> dict:
        return {"n": self.n, "degree": self.degree, "family": self.family,
                "neighbors": self.neighbors.tolist()}

    @classmethod
    def from_json(cls, obj) -> "RegularGraph":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        return cls(obj["neighbors"], obj.get("family", "custom"))

    def __repr__(self):
        return f"RegularGraph(n={self.n}, degree={self.degree}, family={self.family!r})"


def build_cycle(n: int) -> RegularGraph:
    if n < 3:
        raise GraphError("a cycle needs n >= 3")
    v = np.arange(n)
    return RegularGraph(np.stack([(v - 1) % n, (v + 1) % n], axis=1), "cycle")


def build_complete(n: int) -> RegularGraph:
    if n < 3:
        raise GraphError("complete graph needs n >= 3")
    v = np.arange(n)
    nb = np.array([np.concatenate([v[:i], v[i + 1:]]) for i in range(n)])
    return RegularGraph(nb, "complete")


def build_random_regular(n: int, d: int, rng: np.random.Generator) -> RegularGraph:
    """Permutation-model random ``d``-regular multigraph.

    Each of ``d // 2`` uniform permutations ``pi`` contributes slots
    ``pi(v)`` and ``pi^{-1}(v)``; odd ``d`` adds one uniform perfect matching.
    """
    if n < 3 or d < 1:
        raise GraphError("need n >= 3 and d >= 1")
    if (n * d) % 2:
        raise ParityError(f"n*d = {n * d} is odd; no {d}-regular graph on {n} vertices")
    cols = []
    for _ in range(d // 2):
        perm = rng.permutation(n)
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        cols += [perm, inv]
    if d % 2:
        order = rng.permutation(n)
        match = np.empty(n, dtype=np.int64)
        match[order[0::2]] = order[1::2]
        match[order[1::2]] = order[0::2]
        cols.append(match)
    return RegularGraph(np.stack(cols, axis=1), "random-regular")


def graph_from_spec(spec: dict, rng: np.random.Generator | None = None) -> RegularGraph:
    """``{"family": "cycle"|"complete"|"random-regular", "n", "d", "seed"}`` or ``{"path"}``."""
    if "path" in spec:
        return RegularGraph.from_json(spec["path"])
    if "neighbors" in spec:
        return RegularGraph.from_json(spec)
    family = spec.get("family", "random-regular")
    n = int(spec["n"])
    if family == "cycle":
        return build_cycle(n)
    if family == "complete":
        return build_complete(n)
    if family == "random-regular":
        if rng is None:
            rng = np.random.default_rng(int(spec["seed"]))
        return build_random_regular(n, int(spec["d"]), rng)
    raise GraphError(f"unknown graph family {family!r}")


@dataclass(frozen=True)
class SpectralProfile:
    """Walk spectrum summary.

    ``lam`` is the second largest absolute eigenvalue of ``A/d`` (the mixing
    parameter); ``second`` is the second largest signed eigenvalue, which
    differs from ``lam`` for bipartite or near-bipartite graphs.
    """

    lam: float
    second: float
    method: str

    @property
    def is_expander(self) -> bool:
        return self.lam < 1 - EXPANDER_GAP_ATOL

    def satisfies_gap(self, bound: float = GAP_REQUIREMENT) -> bool:
        return self.lam < bound


def _analytic_spectrum(g: RegularGraph) -> np.ndarray | None:
    n = g.n
    if g.family == "cycle":
        return np.cos(2 * np.pi * np.arange(n) / n)
    if g.family == "complete":
        return np.concatenate([[1.0], np.full(n - 1, -1.0 / (n - 1))])
    return None


def second_eigenvalue(g: RegularGraph, method: str = "exact-dense") -> SpectralProfile:
    """Second eigenvalue data of the walk matrix ``A/d``.

    ``method='exact-dense'`` uses a dense symmetric eigensolver;
    ``'analytic'`` uses the closed-form spectrum of cycles and complete
    graphs.
    """
    if method == "analytic":
        w = _analytic_spectrum(g)
        if w is None:
            raise GraphError(f"no analytic spectrum for family {g.family!r}")
    elif method == "exact-dense":
        w = np.linalg.eigvalsh(g.transition_matrix())
    else:
        raise ValueError(f"unknown method {method!r}")
    w = np.sort(w)[::-1]
    mags = np.sort(np.abs(w))[::-1]
    lam = float(mags[1]) if w.size > 1 else 0.0
    second = float(w[1]) if w.size > 1 else 0.0
    return SpectralProfile(min(lam, 1.0), second, method)


def sample_expander(n: int, d: int, rng: np.random.Generator, bound: float = GAP_REQUIREMENT,
                    attempts: int = MAX_RESAMPLES) -> tuple[RegularGraph, SpectralProfile]:
    """Random ``d``-regular graph with ``lambda < bound``, resampling up to ``attempts`` times."""
    best = math.inf
    for _ in range(attempts):
        g = build_random_regular(n, d, rng)
        prof = second_eigenvalue(g)
        if prof.lam < bound:
            return g, prof
        best = min(best, prof.lam)
    raise ExpanderResampleError(
        f"no {d}-regular graph on {n} vertices with lambda < {bound} in {attempts} draws "
        f"(best {best:.4f})"
    )


def stationary_walk(g: RegularGraph, K: int, rng: np.random.Generator) -> np.ndarray:
    """Length-``K`` walk from a uniform start, one uniform slot per step."""
    if K < 1:
        raise ValueError("walk length must be at least 1")
    start = int(rng.integers(g.n))
    slots = rng.integers(g.degree, size=K - 1)
    return kernels.walk_slots(g.neighbors, start, slots)


def deviation_table(g: RegularGraph, tmax: int) -> np.ndarray:
    """``max_v ||p_v(t) - u||_2`` for ``t = 0..tmax``, by exact iteration.

    ``p_v(t)`` is the walk distribution after ``t`` steps from vertex ``v``.
    All ``n`` initial point masses are propagated together as the rows of
    ``(I - J/n) T^t``.
    """
    if tmax < 0:
        raise ValueError("t must be nonnegative")
    t_mat = g.transition_matrix()
    q = np.eye(g.n) - 1.0 / g.n
    out = np.empty(tmax + 1)
    for t in range(tmax + 1):
        out[t] = float(np.max(np.linalg.norm(q, axis=1)))
        if t < tmax:
            q = q @ t_mat
    return out


def walk_deviation(g: RegularGraph, t: int) -> float:
    return float(deviation_table(g, t)[t])


def conservation_residual(g: RegularGraph, tmax: int) -> float:
    """Largest ``|<1, q(t)>|`` over start vertices and ``t <= tmax``."""
    t_mat = g.transition_matrix()
    q = np.eye(g.n) - 1.0 / g.n
    worst = 0.0
    for _ in range(tmax + 1):
        worst = max(worst, float(np.max(np.abs(q.sum(axis=1)))))
        q = q @ t_mat
    return worst
