"""The twelve acceptance criteria, one test each.

Each test prints a single ``criterion N: PASS|FAIL ...`` line before
asserting, so ``pytest -v`` output doubles as the acceptance report.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import rand_density
from covercert import cli
from covercert.concentration import (ChernoffBoundParams, bound_bounded_excision, bound_expander_conc,
                                     bound_multipartite_conc, bound_unipartite_chernoff,
                                     covering_experiment_expander, covering_experiment_iid,
                                     excision_parameters, hoeffding_mgf_check, mc_tail,
                                     trace_distance_excision_family, trace_distance_window_bounds,
                                     verify_excision_family)
from covercert.divergences import (conditional_entropies, ht_mutual_information, hypothesis_testing_divergence,
                                   mutual_informations, neyman_pearson, threshold_scan)
from covercert.ensembles import (CqEnsemble, Distribution, multipartite_from_spec, random_pure_states,
                                 sample_size_requirements)
from covercert.expander import (build_complete, build_cycle, build_random_regular, deviation_table,
                                second_eigenvalue)
from covercert.linalg import weighted_cs_bound
from covercert.rates import QmacInstance, WiretapInstance, qmac_rate_region, wiretap_rate_bound

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
EPS = 0.1


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {n} failed: {detail}"
    return emit


@pytest.fixture(scope="module")
def unipartite_setup():
    rng = np.random.default_rng(20240401)
    e = CqEnsemble(Distribution.uniform(64), random_pure_states(64, 4, rng))
    reqs = sample_size_requirements(e, EPS)
    A = 2 ** (math.ceil(reqs[(0,)]) + 1)
    return e, reqs, A


@pytest.fixture(scope="module")
def expander_setup():
    rng = np.random.default_rng(7)
    n = 64
    e = CqEnsemble(Distribution.uniform(n), random_pure_states(n, 4, rng))
    g = build_complete(n)
    prof = second_eigenvalue(g)
    hmin = conditional_entropies(e, EPS).Hmin_eps
    cond = math.log2(n) + math.log2(math.log2(n)) - hmin + math.log2(1 / EPS)
    K = 2 ** (math.ceil(cond) + 1)
    return e, g, prof, hmin, K


def test_criterion_01_divergence_ordering(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(2, 17)), int(rng.integers(2, 9))
        states = np.stack([rand_density(rng, d, int(rng.integers(1, d + 1))) for _ in range(n)])
        e = CqEnsemble(rng.dirichlet(np.ones(n)), states)
        mi = mutual_informations(e, EPS)
        ce = conditional_entropies(e, EPS)
        gaps = [mi.I2 - mi.I, mi.Imax - mi.I2, ce.H - ce.H2, ce.H2 - ce.Hmin]
        worst = min(worst, min(gaps))
    elapsed = time.perf_counter() - t0
    report(1, worst >= -1e-9 and elapsed < 30, f"worst ordering gap {worst:.3g}, {elapsed:.1f}s")


def test_criterion_02_weighted_cauchy_schwarz(report):
    rng = np.random.default_rng(2)
    worst = -math.inf
    for _ in range(200):
        d = int(rng.integers(2, 9))
        m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        m = m + m.conj().T
        sigma = rand_density(rng, d)
        lhs, rhs = weighted_cs_bound(m, sigma)
        worst = max(worst, lhs - rhs)
    report(2, worst <= 1e-9, f"max ||M||_1 - weighted 2-norm = {worst:.3g}")


def test_criterion_03_expander_mixing(report):
    rng = np.random.default_rng(3)
    graphs = [build_cycle(32), build_complete(32)] + [build_random_regular(256, 8, rng) for _ in range(10)]
    worst = -math.inf
    for g in graphs:
        lam = second_eigenvalue(g).lam
        dev = deviation_table(g, 40)
        worst = max(worst, float(np.max(dev - lam ** np.arange(41))))
    k = second_eigenvalue(build_complete(32)).lam
    c = second_eigenvalue(build_cycle(32)).second
    lam_err = max(abs(k - 1 / 31), abs(c - math.cos(2 * math.pi / 32)))
    report(3, worst <= 1e-10 and lam_err <= 1e-8,
           f"max deviation excess {worst:.3g}, lambda error {lam_err:.3g}")


def test_criterion_04_covering_in_expectation(report, unipartite_setup):
    t0 = time.perf_counter()
    e, reqs, A = unipartite_setup
    rec1 = covering_experiment_iid(e, [A], EPS, 0.3, 500, seed=4, requirements=reqs)
    m = multipartite_from_spec({"generator": {"family": "random-pure", "alphabets": [16, 16],
                                              "joint": "product", "dim": 4, "seed": 44}})
    reqs2 = sample_size_requirements(m, EPS)
    A2 = 2 ** (math.ceil(max(reqs2.values())) + 1)
    rec2 = covering_experiment_iid(m, [A2, A2], EPS, 0.3, 500, seed=4, requirements=reqs2)
    elapsed = time.perf_counter() - t0
    ok = (rec1.hypothesis and rec2.hypothesis and rec1.mean_distance < 0.4
          and rec2.mean_distance < 1.6 and elapsed < 120)
    report(4, ok, f"k=1 A={A} mean {rec1.mean_distance:.4f} < 0.4; "
                  f"k=2 A={A2} mean {rec2.mean_distance:.4f} < 1.6; {elapsed:.1f}s")


def test_criterion_05_multipartite_concentration(report, unipartite_setup):
    e, reqs, A = unipartite_setup
    rec = covering_experiment_iid(e, [A], EPS, 0.3, 2000, seed=5, requirements=reqs)
    tail = rec.tails["multipartite"]
    bound = math.exp(-A * 0.09 / 2)
    formula_ok = abs(bound_multipartite_conc(ChernoffBoundParams((A,), EPS, 0.3)) - bound) <= 1e-12
    ok = rec.hypothesis and formula_ok and abs(tail.threshold - 0.7) < 1e-12 and tail.respects(bound)
    report(5, ok, f"tail {tail.point:.4g} (hw {tail.half_width:.3g}) vs bound {bound:.3g} at 0.7")


def test_criterion_06_unipartite_chernoff(report, unipartite_setup):
    hand = bound_unipartite_chernoff(200, 0.3)
    e, reqs, A = unipartite_setup
    rec = covering_experiment_iid(e, [A], EPS, 0.3, 500, seed=6, requirements=reqs)
    tail = rec.tails["unipartite"]
    ok = (abs(hand - math.exp(-9)) <= 1e-12 and abs(hand - 1.2341e-4) < 1e-8
          and rec.hypothesis and tail.respects(rec.bounds["unipartite"]))
    report(6, ok, f"exp(-9) -> {hand:.6g}; tail {tail.point:.4g} at {tail.threshold:.2f} "
                  f"vs {rec.bounds['unipartite']:.3g}")


def test_criterion_07_expander_covering_expectation(report, expander_setup):
    e, g, prof, hmin, K = expander_setup
    rec = covering_experiment_expander(e, g, K, EPS, 0.5, 500, seed=7, hmin_eps=hmin, profile=prof)
    bound = 2 * math.sqrt(EPS)
    ok = rec.hypothesis and abs(prof.lam - 1 / 63) < 1e-10 and rec.mean_distance < bound
    report(7, ok, f"K={K}, Hmin_eps={hmin:.3f}, mean {rec.mean_distance:.4f} < {bound:.4f}")


def test_criterion_08_expander_concentration(report, expander_setup):
    e, g, prof, hmin, K = expander_setup
    rec = covering_experiment_expander(e, g, K, EPS, 0.5, 500, seed=8, hmin_eps=hmin, profile=prof)
    tail = rec.tails["expander"]
    n = e.size
    expected = 2 * math.exp(-K * 0.25 * math.log2(1 / prof.lam) ** 2
                            / (10 * (math.log2(n) + math.log2(K) - math.log2(math.log2(n))) ** 2))
    bound = bound_expander_conc(n, K, prof.lam, 0.5)
    p = excision_parameters(4096, 1024, 0.5, 2.0, trace_distance_window_bounds(4096))
    params_ok = p.a == 10 and np.all(p.b == 9) and np.max(np.abs(p.d - 62 / 4096)) <= 1e-12
    ok = (rec.hypothesis and abs(bound - expected) <= 1e-12 and tail.respects(bound) and params_ok
          and abs(tail.threshold - (2 * math.sqrt(EPS) + 0.5)) < 1e-12)
    report(8, ok, f"tail {tail.point:.4g} vs bound {bound:.4g}; a={p.a} b={int(p.b[0])} d_i={p.d[0]:.7f}")


def test_criterion_09_bounded_excision(report, expander_setup):
    e, g, prof, hmin, K = expander_setup
    fam = trace_distance_excision_family(e, 256)
    rep = verify_excision_family(fam, g, 10_000, np.random.default_rng(9))
    tail = mc_tail(lambda r: float(r.uniform(size=100).sum() - 50.0), 10.0, 2000, seed=9)
    mcd = math.exp(-2 * 100 / 100)
    hs = np.round(np.arange(1, 21) * 0.1, 10)
    mgf_ok = True
    for h in hs:
        first, second = hoeffding_mgf_check([-1.0, 1.0], h, probs=[0.5, 0.5], a=-1.0, b=1.0)
        mgf_ok &= abs(first - math.cosh(h)) < 1e-12 and first <= second
    ok = rep.passed and rep.windows == 10_000 and tail.respects(mcd) and mgf_ok
    report(9, ok, f"{rep.windows} windows, {rep.violations} violations; McDiarmid tail "
                  f"{tail.point:.4g} vs {mcd:.4g}; MGF grid ok={mgf_ok}")


def test_criterion_10_hypothesis_testing_oracle(report):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 7))
        a, b = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        eps = float(rng.uniform(0.01, 0.99))
        worst = max(worst, abs(threshold_scan([(np.diag(a), np.diag(b))], eps) - neyman_pearson(a, b, eps)))
    ex = hypothesis_testing_divergence(np.diag([0.5, 0.5]), np.diag([0.9, 0.1]), 0.5).bits
    ok = worst <= 1e-9 and abs(ex - math.log2(10)) <= 1e-9
    report(10, ok, f"max |scan - NP| {worst:.3g}; example {ex:.10f}")


def test_criterion_11_rates_sanity(report):
    rng = np.random.default_rng(11)
    p = rng.dirichlet(np.ones(3))
    bob = np.stack([rand_density(rng, 2) for _ in range(3)])
    eve = np.repeat(rand_density(rng, 2)[None], 3, axis=0)
    rate = wiretap_rate_bound(WiretapInstance(p, bob, [eve], EPS)).rate
    ih = ht_mutual_information(CqEnsemble(p, bob), EPS).bits
    wiretap_ok = abs(rate - ih) <= 1e-9

    eve2 = np.stack([rand_density(rng, 2) for _ in range(3)])
    q = QmacInstance([1.0], p[None], [[1.0]], bob[:, None], [eve2[:, None]], EPS)
    region = qmac_rate_region(q)
    ptp = wiretap_rate_bound(WiretapInstance(p, bob, [eve2], EPS)).rate
    collapse_ok = abs(region.r1 - ptp) <= 1e-9 and abs(region.r12 - ptp) <= 1e-9

    closed_ok = True
    for _ in range(3):
        nq, nx, ny = 2, 2, 2
        tab = lambda: np.stack([rand_density(rng, 2) for _ in range(nx * ny)]).reshape(nx, ny, 2, 2)
        reg = qmac_rate_region(QmacInstance(rng.dirichlet(np.ones(nq)), rng.dirichlet(np.ones(nx), nq),
                                            rng.dirichlet(np.ones(ny), nq), tab(), [tab()], EPS))
        for r1, r2 in rng.uniform(-0.2, 1.5, size=(300, 2)):
            if reg.contains(r1, r2):
                for s1, s2 in rng.uniform(0, 1, size=(5, 2)):
                    closed_ok &= reg.contains(s1 * r1, s2 * r2)
    report(11, wiretap_ok and collapse_ok and closed_ok,
           f"wiretap - I_H = {rate - ih:.3g}; QMAC collapse error {abs(region.r1 - ptp):.3g}; "
           f"downward closed={closed_ok}")


def test_criterion_12_determinism(report, tmp_path):
    runs = [("covering-iid", "covering_iid.toml"), ("covering-expander", "covering_expander.toml"),
            ("excision-verify", "excision.toml"), ("bounds", "bounds.toml"), ("rates", "rates_qmac.toml")]
    same = []
    for sub, name in runs:
        blobs = []
        for tag in ("first", "second"):
            out = tmp_path / sub / tag
            cli.main([sub, "--config", str(CONFIGS / name), "--out-dir", str(out), "--trials", "200"])
            blobs.append((out / f"{sub}.csv").read_bytes())
        same.append(blobs[0] == blobs[1] and len(blobs[0]) > 0)
    report(12, all(same), f"{sum(same)}/{len(runs)} subcommands byte-identical across reruns")
