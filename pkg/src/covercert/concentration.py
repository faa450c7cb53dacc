"""Monte Carlo tail estimation, closed-form concentration bounds and the
bounded-excision machinery for expander walks.

Trials draw from per-index Philox streams keyed on ``(seed, index)``, so
results do not depend on how trials are split across threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from covercert.errors import InvalidEps, LambdaOutOfRange
from covercert.linalg import trace_norm_array, trace_norms

Z95 = 1.959963984540054
MIN_TRIALS = 100


# -- Monte Carlo harness -----------------------------------------------------

def wilson_interval(hits: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    """Empirical ``Pr[value > threshold]`` with a 95% Wilson interval."""

    threshold: float
    hits: int
    trials: int
    point: float
    ci95: tuple[float, float]

    @property
    def half_width(self) -> float:
        return (self.ci95[1] - self.ci95[0]) / 2

    def respects(self, bound: float, widths: float = 3.0) -> bool:
        """``point <= bound + widths * half_width``."""
        return self.point <= bound + widths * self.half_width

    def as_dict(self) -> dict:
        return {"threshold": self.threshold, "hits": self.hits, "trials": self.trials,
                "point": self.point, "ci_lo": self.ci95[0], "ci_hi": self.ci95[1]}


def tail_from_values(values, threshold: float) -> TailEstimate:
    values = np.asarray(values, dtype=float)
    hits = int(np.count_nonzero(values > threshold))
    n = values.size
    return TailEstimate(float(threshold), hits, n, hits / n, wilson_interval(hits, n))


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def mc_run(trial: Callable[[np.random.Generator], float], trials: int, seed: int,
           threads: int = 1) -> np.ndarray:
    """Values of ``trial(rng_i)`` for ``i < trials``, in index order."""
    out = np.empty(trials)

    def work(chunk):
        for i in chunk:
            out[i] = trial(trial_rng(seed, i))

    threads = max(1, int(threads))
    if threads == 1:
        work(range(trials))
    else:
        chunks = np.array_split(np.arange(trials), threads)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, chunks))
    return out


def mc_tail(trial, threshold: float, trials: int, seed: int, threads: int = 1) -> TailEstimate:
    if trials < MIN_TRIALS:
        raise ValueError(f"mc_tail needs at least {MIN_TRIALS} trials, got {trials}")
    return tail_from_values(mc_run(trial, trials, seed, threads), threshold)


# -- bound evaluators --------------------------------------------------------

def bound_mcdiarmid(c_vec, delta: float) -> float:
    """``exp(-2 delta^2 / sum c_i^2)``."""
    c2 = float(np.sum(np.square(np.asarray(c_vec, dtype=float))))
    if delta == 0:
        return 1.0
    if c2 == 0:
        return 0.0
    return math.exp(-2 * delta * delta / c2)


def hoeffding_mgf_check(values, h: float, probs=None, a: float | None = None,
                        b: float | None = None) -> tuple[float, float]:
    """``(E[exp(h X)], exp(h^2 (b - a)^2 / 8))`` for a zero-mean variable.

    With ``probs`` the expectation is exact over the support ``values``;
    otherwise ``values`` are equally weighted samples. The range defaults to
    the observed ``[min, max]``.
    """
    x = np.asarray(values, dtype=float)
    w = np.full(x.size, 1.0 / x.size) if probs is None else np.asarray(probs, dtype=float)
    lo = float(x.min()) if a is None else a
    hi = float(x.max()) if b is None else b
    return float(np.sum(w * np.exp(h * x))), math.exp(h * h * (hi - lo) ** 2 / 8)


@dataclass(frozen=True)
class ChernoffBoundParams:
    """Sample sizes and tolerances for the multipartite covering bound."""

    sizes: tuple
    eps: float
    delta: float
    trace: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(a) for a in self.sizes))
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("sizes must be positive integers")
        if not 0 < self.eps < 1:
            raise InvalidEps(f"eps must lie in (0, 1), got {self.eps}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def harmonic_mean(self) -> float:
        return self.k / sum(1.0 / a for a in self.sizes)


def multipartite_threshold(p: ChernoffBoundParams) -> float:
    return 2 * (3 ** p.k - 1) * p.eps * p.trace + p.delta


def multipartite_expectation(k: int, eps: float, trace: float = 1.0) -> float:
    """Expected covering error guaranteed when every subset condition holds."""
    return 2 * (3 ** k - 1) * eps * trace


def bound_multipartite_conc(p: ChernoffBoundParams) -> float:
    """``exp(-Abar delta^2 / (2 k (tr rho)^2))``."""
    return math.exp(-p.harmonic_mean * p.delta ** 2 / (2 * p.k * p.trace ** 2))


def bound_unipartite_chernoff(A: float, delta: float) -> float:
    """``exp(-A delta^2 / 2)``."""
    return math.exp(-A * delta * delta / 2)


def unipartite_threshold(eps: float, delta: float) -> float:
    return 3 * eps + delta


def unipartite_condition(A: float, i2_eps: float, eps: float) -> tuple[float, float, bool]:
    """``(log A, I_2^eps + log eps^-2, holds)``."""
    lhs, rhs = math.log2(A), i2_eps + 2 * math.log2(1 / eps)
    return lhs, rhs, lhs > rhs


def _expander_exponent(alphabet: int, K: int, lam: float, delta: float, constant: float) -> float:
    if alphabet < 2:
        raise ValueError("alphabet size must be at least 2")
    if not 0 <= lam <= 1:
        raise LambdaOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    if delta == 0 or lam == 1:
        return 0.0
    if lam == 0:
        return math.inf
    loglam = math.log2(1 / lam)
    denom = constant * (math.log2(alphabet) + math.log2(K) - math.log2(math.log2(alphabet))) ** 2
    return K * delta * delta * loglam * loglam / denom


def bound_expander_conc(alphabet: int, K: int, lam: float, delta: float, constant: float = 10.0) -> float:
    """``2 exp(-K delta^2 (log 1/lambda)^2 / (C (log|X| + log K - log log|X|)^2))``.

    ``constant`` is 10 as stated; 8 is what the excision argument yields.
    """
    return 2 * math.exp(-_expander_exponent(alphabet, K, lam, delta, constant))


def expander_condition(alphabet: int, K: int, hmin_eps: float, eps: float) -> tuple[float, float, bool]:
    """``(log K, log|X| + log log|X| - H_min^eps + log 1/eps, holds)``."""
    lhs = math.log2(K)
    rhs = math.log2(alphabet) + math.log2(math.log2(alphabet)) - hmin_eps + math.log2(1 / eps)
    return lhs, rhs, lhs > rhs


def expander_expectation(eps: float) -> float:
    return 2 * math.sqrt(eps)


def bound_garg_baseline(d: float, eps: float, lam: float, K: float, C: float = 1.0) -> float:
    """``d exp(-C eps^2 (1 - lambda) K)``; ``C`` is an unspecified universal constant."""
    return d * math.exp(-C * eps * eps * (1 - lam) * K)


# -- bounded excision --------------------------------------------------------

def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-12))


@dataclass(frozen=True)
class ExcisionParameters:
    """Derived constants of the excision bound.

    ``b[i-1]`` and ``d[i-1]`` belong to walk index ``i``.
    """

    K: int
    alphabet: int
    lam: float
    c: float
    a: int
    b: np.ndarray
    d: np.ndarray
    c1: Callable = field(repr=False, compare=False)
    c2: Callable = field(repr=False, compare=False)

    def window_constant(self, l1: int, l2: int) -> float:
        return self.c1(l1, l2) - self.c2(l1, l2)

    def sum_d2(self) -> float:
        return float(np.sum(self.d ** 2))


def excision_parameters(K: int, alphabet: int, lam: float, c: float, c_bounds) -> ExcisionParameters:
    """``a = ceil(log|X| / log 1/lambda)``, ``b(i) = ceil(log(c / c_{i,a+i}) / log 1/lambda)``
    and ``d_i = 2 c_{i,a+i} + c_{a+i+1,a+i+b(i)}``.

    ``c_bounds`` is a pair of callables ``(c1, c2)`` of ``(l1, l2)`` with
    ``c_{l1 l2} = c1 - c2``. Window constants are evaluated by formula even
    where a window runs past ``K``. ``a`` and ``b`` are at least 1.
    """
    if not 0 < lam < 1:
        raise LambdaOutOfRange(f"lambda must lie strictly inside (0, 1), got {lam}")
    c1, c2 = c_bounds
    loglam = math.log2(1 / lam)
    a = max(1, _ceil(math.log2(alphabet) / loglam))
    bs, ds = np.empty(K, dtype=np.int64), np.empty(K)
    for i in range(1, K + 1):
        ci = c1(i, a + i) - c2(i, a + i)
        b = max(1, _ceil(math.log2(c / ci) / loglam))
        bs[i - 1] = b
        ds[i - 1] = 2 * ci + (c1(a + i + 1, a + i + b) - c2(a + i + 1, a + i + b))
    return ExcisionParameters(K, alphabet, lam, c, a, bs, ds, c1, c2)


def bound_bounded_excision(p: ExcisionParameters, eps: float) -> float:
    """``2 exp(-2 eps^2 / sum d_i^2)``."""
    return 2 * math.exp(-2 * eps * eps / p.sum_d2())


def trace_distance_window_bounds(K: int):
    """``(c1, c2)`` with ``c1 = (l2 - l1 + 1) / K`` and ``c2 = -c1``."""
    return (lambda l1, l2: (l2 - l1 + 1) / K), (lambda l1, l2: -(l2 - l1 + 1) / K)


class ExcisionFamily:
    """Function family ``f_i`` with excision sandwich functions ``g1``, ``g2``.

    ``f(seq)`` evaluates ``f_{len(seq)}``; ``g1(window, l1, l2)`` and
    ``g2(window, l1, l2)`` act on the excised block.
    """

    def __init__(self, K: int, f, g1, g2, c1, c2, c: float):
        self.K, self.f, self.g1, self.g2 = int(K), f, g1, g2
        self.c1, self.c2, self.c = c1, c2, float(c)

    def window_terms(self, walk: np.ndarray, windows: np.ndarray) -> dict:
        """Per-window ``diff = f_K(x) - f_short(x \\ window)``, ``g1``, ``g2``, ``f_short``."""
        full = self.f(walk)
        out = {k: np.empty(len(windows)) for k in ("diff", "g1", "g2", "short", "c1", "c2")}
        for j, (l1, l2) in enumerate(windows):
            rest = np.concatenate([walk[:l1 - 1], walk[l2:]])
            win = walk[l1 - 1:l2]
            short = self.f(rest)
            out["diff"][j] = full - short
            out["short"][j] = short
            out["g1"][j] = self.g1(win, l1, l2)
            out["g2"][j] = self.g2(win, l1, l2)
            out["c1"][j] = self.c1(l1, l2)
            out["c2"][j] = self.c2(l1, l2)
        return out


class TraceDistanceFamily(ExcisionFamily):
    """``f_i = ||(1/K) sum_{j<=i} rho_{x_j} - rho||_1`` and ``g1 = ||(1/K) sum_window rho||_1 = -g2``.

    Window terms are computed from prefix sums of the walk states.
    """

    def __init__(self, states, target, K: int):
        self.states = np.asarray(states, dtype=np.complex128)
        self.target = np.asarray(target, dtype=np.complex128)
        c1, c2 = trace_distance_window_bounds(K)
        super().__init__(K, self._f, self._g1, self._g2, c1, c2, 2.0)

    def _f(self, seq):
        s = self.states[np.asarray(seq, dtype=np.int64)].sum(axis=0) / self.K
        return trace_norm_array(s - self.target)

    def _g1(self, win, l1, l2):
        return trace_norm_array(self.states[np.asarray(win, dtype=np.int64)].sum(axis=0) / self.K)

    def _g2(self, win, l1, l2):
        return -self._g1(win, l1, l2)

    def window_terms(self, walk, windows):
        walk = np.asarray(walk, dtype=np.int64)
        windows = np.asarray(windows, dtype=np.int64)
        d = self.states.shape[1]
        prefix = np.concatenate([np.zeros((1, d, d), dtype=np.complex128),
                                 np.cumsum(self.states[walk], axis=0)])
        total = prefix[-1]
        win = prefix[windows[:, 1]] - prefix[windows[:, 0] - 1]
        full = trace_norm_array(total / self.K - self.target)
        short = trace_norms((total[None] - win) / self.K - self.target[None])
        g1 = trace_norms(win / self.K)
        lens = (windows[:, 1] - windows[:, 0] + 1) / self.K
        return {"diff": full - short, "g1": g1, "g2": -g1, "short": short,
                "c1": lens, "c2": -lens}


def trace_distance_excision_family(e, K: int) -> TraceDistanceFamily:
    """Built-in family for the covering error of a cq ensemble ``e`` with ``K`` samples."""
    return TraceDistanceFamily(e.states, e.average_array(), K)


@dataclass(frozen=True)
class ExcisionReport:
    windows: int
    violations: int
    worst_slack: float
    passed: bool

    def as_dict(self):
        return {"windows": self.windows, "violations": self.violations,
                "worst_slack": self.worst_slack, "passed": self.passed}


def verify_excision_family(fam: ExcisionFamily, g, samples: int, rng: np.random.Generator,
                           windows_per_walk: int = 100, atol: float = 1e-10) -> ExcisionReport:
    """Randomized check of the excision sandwich on stationary walks of ``g``.

    Checks ``g2 <= f_K - f_short <= g1``, ``g1 <= c1``, ``g2 >= c2`` and
    ``|f_short| <= c`` on ``samples`` random windows. ``worst_slack`` is the
    smallest margin seen (negative means violated).
    """
    from covercert.expander import stationary_walk

    K = fam.K
    slack = math.inf
    bad = 0
    done = 0
    while done < samples:
        m = min(windows_per_walk, samples - done)
        walk = stationary_walk(g, K, rng)
        l1 = rng.integers(1, K + 1, size=m)
        l2 = np.array([rng.integers(a, K + 1) for a in l1])
        t = fam.window_terms(walk, np.stack([l1, l2], axis=1))
        margins = np.stack([
            t["g1"] - t["diff"], t["diff"] - t["g2"],
            t["c1"] - t["g1"], t["g2"] - t["c2"], fam.c - np.abs(t["short"]),
        ])
        worst = margins.min(axis=0)
        slack = min(slack, float(worst.min()))
        bad += int(np.count_nonzero(worst < -atol))
        done += m
    return ExcisionReport(samples, bad, slack, bad == 0)


# -- covering experiments ----------------------------------------------------

@dataclass
class CoveringRecord:
    """Outcome of a covering experiment at one parameter point.

    ``checks`` maps a theorem id to ``(hypothesis_holds, passed)``; a check
    whose hypothesis fails always passes.
    """

    kind: str
    params: dict
    mean_distance: float
    mean_stderr: float
    expectation_bound: float
    tails: dict
    bounds: dict
    conditions: dict
    hypothesis: bool
    checks: dict

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks.values())

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "params": self.params, "mean_distance": self.mean_distance,
            "mean_stderr": self.mean_stderr, "expectation_bound": self.expectation_bound,
            "tails": {k: v.as_dict() for k, v in self.tails.items()},
            "bounds": self.bounds, "conditions": self.conditions,
            "hypothesis": self.hypothesis,
            "checks": {k: {"hypothesis": h, "passed": ok} for k, (h, ok) in self.checks.items()},
            "passed": self.passed,
        }


def _mean_check(values, bound: float) -> tuple[float, float, bool]:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se, mean <= bound + 3 * se


def covering_experiment_iid(e, sizes: Sequence[int], eps: float, delta: float, trials: int,
                            seed: int, threads: int = 1, requirements: dict | None = None) -> CoveringRecord:
    """Sampled covering error for iid tuples, against the multipartite bounds.

    ``e`` is a :class:`MultipartiteEnsemble` (a :class:`CqEnsemble` is
    promoted to one party). ``requirements`` may pass precomputed subset
    thresholds from :func:`sample_size_requirements`.
    """
    from covercert.ensembles import (CqEnsemble, as_multipartite, covering_array,
                                     sample_size_requirements, sample_tuples_iid)

    if isinstance(e, CqEnsemble):
        e = as_multipartite(e)
    sizes = tuple(int(a) for a in sizes)
    if len(sizes) != e.k:
        raise ValueError(f"need {e.k} sample sizes, got {len(sizes)}")
    reqs = sample_size_requirements(e, eps) if requirements is None else requirements
    conds = {}
    for subset, thr in reqs.items():
        lhs = sum(math.log2(sizes[i]) for i in subset)
        conds["".join(str(i + 1) for i in subset)] = {"lhs": lhs, "rhs": float(thr), "holds": lhs > thr}
    hyp = all(c["holds"] for c in conds.values())
    target = average_target(e)
    tr = float(np.trace(target).real)

    def trial(rng):
        s = sample_tuples_iid(e, sizes, rng)
        return trace_norm_array(_herm(covering_array(e, s) - target))

    values = mc_run(trial, trials, seed, threads)
    params = ChernoffBoundParams(sizes, eps, delta, tr)
    exp_bound = multipartite_expectation(e.k, eps, tr)
    mean, se, mean_ok = _mean_check(values, exp_bound)
    tails = {"multipartite": tail_from_values(values, multipartite_threshold(params))}
    bounds = {"multipartite": bound_multipartite_conc(params)}
    checks = {
        "covering-expectation": (hyp, (not hyp) or mean_ok),
        "multipartite-concentration": (hyp, (not hyp) or tails["multipartite"].respects(bounds["multipartite"])),
    }
    if e.k == 1:
        tails["unipartite"] = tail_from_values(values, unipartite_threshold(eps, delta))
        bounds["unipartite"] = bound_unipartite_chernoff(sizes[0], delta)
        checks["unipartite-chernoff"] = (hyp, (not hyp) or tails["unipartite"].respects(bounds["unipartite"]))
    return CoveringRecord(
        "iid", {"sizes": list(sizes), "eps": eps, "delta": delta, "trials": trials, "seed": seed},
        mean, se, exp_bound, tails, bounds, conds, hyp, checks,
    )


def average_target(e) -> np.ndarray:
    from covercert.ensembles import average_state

    return np.asarray(average_state(e).entries)


def _herm(m):
    return (m + m.conj().T) / 2


def covering_experiment_expander(e, g, K: int, eps: float, delta: float, trials: int, seed: int,
                                 threads: int = 1, hmin_eps: float | None = None,
                                 profile=None) -> CoveringRecord:
    """Covering error of ``(|X|/K) sum_i p(x_i) rho_{x_i}`` along stationary walks on ``g``.

    The vertices of ``g`` index the alphabet of ``e``. The expectation claim
    needs ``lambda < 1/4`` and the ``log K`` condition built from
    ``H_min^eps(X|M)``; both are reported and gate the checks.
    """
    from covercert.divergences import conditional_entropies
    from covercert.expander import GAP_REQUIREMENT, second_eigenvalue, stationary_walk

    n = e.size
    if g.n != n:
        raise ValueError(f"graph has {g.n} vertices but the alphabet has {n} symbols")
    prof = second_eigenvalue(g) if profile is None else profile
    if hmin_eps is None:
        hmin_eps = conditional_entropies(e, eps).Hmin_eps
    lhs, rhs, cond = expander_condition(n, K, hmin_eps, eps)
    gap = prof.lam < GAP_REQUIREMENT
    hyp = bool(cond and gap)
    weighted = e.p[:, None, None] * np.asarray(e.states)
    target = e.average_array()

    def trial(rng):
        walk = stationary_walk(g, K, rng)
        counts = np.bincount(walk, minlength=n).astype(float)
        est = np.tensordot(counts, weighted, axes=1) * (n / K)
        return trace_norm_array(_herm(est - target))

    values = mc_run(trial, trials, seed, threads)
    exp_bound = expander_expectation(eps)
    mean, se, mean_ok = _mean_check(values, exp_bound)
    tail = tail_from_values(values, exp_bound + delta)
    bound = bound_expander_conc(n, K, prof.lam, delta)
    bounds = {"expander": bound, "expander_const8": bound_expander_conc(n, K, prof.lam, delta, 8.0)}
    checks = {
        "expander-expectation": (hyp, (not hyp) or mean_ok),
        "expander-concentration": (hyp, (not hyp) or tail.respects(bound)),
    }
    conds = {"K": {"lhs": lhs, "rhs": rhs, "holds": cond},
             "gap": {"lambda": prof.lam, "required_below": GAP_REQUIREMENT, "holds": gap},
             "hmin_eps": hmin_eps}
    return CoveringRecord(
        "expander", {"K": K, "eps": eps, "delta": delta, "trials": trials, "seed": seed, "n": n},
        mean, se, exp_bound, {"expander": tail}, bounds, conds, hyp, checks,
    )
