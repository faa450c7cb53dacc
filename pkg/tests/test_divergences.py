import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import block_diag
from scipy.optimize import linprog

from conftest import rand_density
from covercert.divergences import (BlockPair, ConditionalCq, conditional_entropies,
                                   conditional_ht_mutual_information, divergence_report,
                                   hypothesis_testing_divergence, ht_mutual_information, max_divergence,
                                   max_mutual_information_per_symbol, mutual_information_pair,
                                   mutual_informations, neyman_pearson, renyi2_divergence,
                                   shannon_divergence, smooth_divergence, threshold_scan, waterfill)
from covercert.ensembles import CqEnsemble, Distribution, orthogonal_pure_states, random_pure_states
from covercert.errors import DimMismatch, FactorizationViolation, InvalidEps

DIAG_P = np.diag([1.0, 0.0])
DIAG_Q = np.diag([0.5, 0.5])


def random_ensemble(rng, n=None, d=None):
    n = n or int(rng.integers(2, 17))
    d = d or int(rng.integers(2, 9))
    states = np.stack([rand_density(rng, d, int(rng.integers(1, d + 1))) for _ in range(n)])
    return CqEnsemble(rng.dirichlet(np.ones(n)), states)


def lp_ht(a, b, eps):
    """min b.pi s.t. a.pi >= 1 - eps, 0 <= pi <= 1, solved by HiGHS."""
    res = linprog(b, A_ub=[-a], b_ub=[-(1 - eps)], bounds=[(0, 1)] * a.size, method="highs")
    return -math.log2(res.fun)


@pytest.mark.parametrize("fn", [shannon_divergence, renyi2_divergence, max_divergence])
def test_dense_examples(fn, rng):
    rho = rand_density(rng, 3)
    assert fn(rho, rho).bits == pytest.approx(0.0, abs=1e-9)
    assert fn(DIAG_P, DIAG_Q).bits == pytest.approx(1.0, abs=1e-12)
    assert fn(DIAG_Q, DIAG_P).infinite
    with pytest.raises(DimMismatch):
        fn(np.eye(2) / 2, np.eye(3) / 3)


def test_dense_ordering_and_positivity(rng):
    for _ in range(30):
        d = int(rng.integers(2, 6))
        a, b = rand_density(rng, d), rand_density(rng, d)
        vals = [f(a, b).bits for f in (shannon_divergence, renyi2_divergence, max_divergence)]
        assert vals[0] >= -1e-9
        assert vals[0] <= vals[1] + 1e-9 <= vals[2] + 2e-9


def test_orthogonal_max_divergence():
    n = 5
    o = CqEnsemble(Distribution.uniform(n), orthogonal_pure_states(n))
    a = block_diag(*(o.states / n))
    b = np.kron(np.eye(n) / n, np.eye(n) / n)
    assert max_divergence(a, b).bits == pytest.approx(math.log2(n), abs=1e-9)
    mi = mutual_informations(o, 0.1)
    assert (mi.I, mi.I2, mi.Imax) == pytest.approx((math.log2(n),) * 3, abs=1e-9)
    ce = conditional_entropies(o, 0.1)
    assert ce.Hmin == pytest.approx(0.0, abs=1e-9)


def test_block_pair_matches_dense(rng):
    e = random_ensemble(rng, 4, 3)
    pair = mutual_information_pair(e)
    a, b = pair.dense()
    for kind, fn in (("shannon", shannon_divergence), ("renyi2", renyi2_divergence), ("max", max_divergence)):
        assert pair.value(kind) == pytest.approx(fn(a, b).bits, abs=1e-9)


def test_product_state_values(rng):
    rho = rand_density(rng, 3)
    e = CqEnsemble(rng.dirichlet(np.ones(4)), np.repeat(rho[None], 4, axis=0))
    mi = mutual_informations(e, 0.1)
    assert (mi.I, mi.I2, mi.Imax) == pytest.approx((0, 0, 0), abs=1e-9)
    assert mi.Imax_eps <= 1e-9 and mi.I2_eps <= 1e-9
    u = CqEnsemble(Distribution.uniform(4), np.repeat(rho[None], 4, axis=0))
    assert conditional_entropies(u, 0.1).Hmin == pytest.approx(2.0, abs=1e-9)


def test_imax_identity_matches_definition(rng):
    for _ in range(20):
        e = random_ensemble(rng, int(rng.integers(2, 6)), int(rng.integers(2, 5)))
        a, b = mutual_information_pair(e).dense()
        assert max_mutual_information_per_symbol(e) == pytest.approx(max_divergence(a, b).bits, abs=1e-9)


def test_ordering_chain(rng):
    for _ in range(40):
        row = divergence_report(random_ensemble(rng), [0.1])["rows"][0]
        assert row["ordering_ok"]


def test_smooth_tiny_eps_matches_unsmoothed(rng):
    e = random_ensemble(rng, 5, 3)
    for kind in ("renyi2", "max"):
        dv = smooth_divergence(kind, e, e.p, e.average_array(), 1e-9)
        assert dv.bits == pytest.approx(mutual_information_pair(e).value(kind), abs=1e-6)
        assert dv.upper_bound


def test_two_symbol_smoothing_against_grid():
    p = np.array([0.1, 0.9])
    e = CqEnsemble(p, orthogonal_pure_states(2))
    rho_m = np.diag([0.1, 0.9])
    dv = smooth_divergence("max", e, p, rho_m, 0.1)
    # reference diagonal of p (x) rho^M on |x, m>: x=0 lives on m=0, x=1 on m=1
    ref = np.array([0.1 * 0.1, 0.9 * 0.9])
    g1 = np.arange(0, 0.1 + 1e-12, 1e-3)
    g2 = np.arange(0, 0.9 + 1e-12, 1e-3)
    w1, w2 = np.meshgrid(g1, g2, indexing="ij")
    ok = (0.1 - w1) + (0.9 - w2) <= 0.1 + 1e-12
    vals = np.log2(np.maximum(w1 / ref[0], w2 / ref[1])[ok & ((w1 > 0) | (w2 > 0))])
    assert abs(dv.bits - vals.min()) <= 0.02
    w = dv.certificate.weights
    assert 0.1 - w[0] > 0.9 - w[1]


def test_certificates_respect_budget(rng):
    for _ in range(30):
        e = random_ensemble(rng)
        eps = float(rng.uniform(0.01, 0.9))
        for kind in ("renyi2", "max"):
            c = smooth_divergence(kind, e, e.p, e.average_array(), eps).certificate
            assert c.distance <= eps * e.trace() + 1e-10
            assert np.all(c.weights >= 0) and np.all(c.weights <= c.original + 1e-15)


def test_smoothing_monotone_in_eps(rng):
    grid = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    for _ in range(50):
        e = random_ensemble(rng, int(rng.integers(2, 9)), int(rng.integers(2, 5)))
        for kind in ("renyi2", "max"):
            vals = [smooth_divergence(kind, e, e.p, e.average_array(), x).bits for x in grid]
            assert np.all(np.diff(vals) <= 1e-9)


def test_smooth_support_violation_budget():
    e = CqEnsemble([0.95, 0.05], orthogonal_pure_states(2))
    ref = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    dv = smooth_divergence("max", e, [0.5, 0.5], ref, 0.1)
    assert dv.bits == pytest.approx(math.log2(0.9 * 2))
    assert dv.certificate.weights[1] == 0
    assert smooth_divergence("max", e, [0.5, 0.5], np.diag([1.0, 0.0]), 0.01).infinite


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.5))
def test_waterfill_budget_and_cap(seed, frac):
    rng = np.random.default_rng(seed)
    n = 6
    p, score, cost = rng.dirichlet(np.ones(n)), rng.uniform(0.1, 5, n), rng.uniform(0.5, 1.5, n)
    budget = frac * float(p @ cost)
    new, level = waterfill(p, score, cost, budget)
    assert np.all(new <= p + 1e-15) and np.all(new >= 0)
    assert float(cost @ (p - new)) <= budget + 1e-12
    assert np.max(new * score) <= level + 1e-12 or level == 0


def test_conditional_entropy_ordering(rng):
    for _ in range(40):
        ce = conditional_entropies(random_ensemble(rng), 0.1)
        assert ce.H + 1e-9 >= ce.H2 >= ce.Hmin - 1e-9
        assert ce.Hmin_eps >= ce.Hmin - 1e-9


def test_invalid_eps():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidEps):
            hypothesis_testing_divergence(DIAG_P, DIAG_Q, bad)


def test_ht_examples(rng):
    assert hypothesis_testing_divergence(np.diag([0.5, 0.5]), np.diag([0.9, 0.1]), 0.5).bits == \
        pytest.approx(math.log2(10), abs=1e-12)
    # Pi = diag(1/2, 0) is an admissible test, beating the projector diag(1, 0)
    assert hypothesis_testing_divergence(DIAG_P, DIAG_Q, 0.5).bits == pytest.approx(2.0, abs=1e-12)
    rho = rand_density(rng, 3)
    for eps in (0.1, 0.3, 0.7):
        v = hypothesis_testing_divergence(rho, rho, eps)
        assert v.bits == pytest.approx(-math.log2(1 - eps), abs=1e-9)
        assert not v.lower_bound


def test_neyman_pearson_against_linprog(rng):
    for _ in range(40):
        d = int(rng.integers(2, 7))
        a, b = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        eps = float(rng.uniform(0.01, 0.95))
        assert neyman_pearson(a, b, eps) == pytest.approx(lp_ht(a, b, eps), abs=1e-9)


def test_scan_equals_np_on_diagonal(rng):
    for _ in range(20):
        d = int(rng.integers(2, 7))
        a, b = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        eps = float(rng.uniform(0.05, 0.9))
        assert threshold_scan([(np.diag(a), np.diag(b))], eps) == pytest.approx(neyman_pearson(a, b, eps), abs=1e-9)


def test_noncommuting_scan_is_bounded(rng):
    for _ in range(20):
        a, b = rand_density(rng, 3), rand_density(rng, 3)
        eps = 0.2
        v = hypothesis_testing_divergence(a, b, eps)
        assert v.lower_bound
        # any test with tr(Pi a) >= 1-eps has tr(Pi b) >= 2^{-Dmax} (1-eps)
        assert v.bits <= max_divergence(a, b).bits - math.log2(1 - eps) + 1e-9
        assert v.bits >= -math.log2(1 - eps) - 1e-9 or v.bits >= 0


def test_ht_monotone_in_eps(rng):
    grid = np.linspace(0.05, 0.9, 12)
    for _ in range(10):
        e = random_ensemble(rng, 3, 2)
        vals = [ht_mutual_information(e, x).bits for x in grid]
        assert np.all(np.diff(vals) >= -1e-9)


def random_conditional(rng, nq=2, nx=2, ny=2, d=2, diagonal=False):
    pq = rng.dirichlet(np.ones(nq))
    px = rng.dirichlet(np.ones(nx), size=nq)
    py = rng.dirichlet(np.ones(ny), size=nq)
    if diagonal:
        states = np.zeros((nx, ny, d, d), dtype=complex)
        for x in range(nx):
            for y in range(ny):
                states[x, y] = np.diag(rng.dirichlet(np.ones(d)))
    else:
        states = np.stack([rand_density(rng, d) for _ in range(nx * ny)]).reshape(nx, ny, d, d)
    return ConditionalCq(pq, px, py, states)


def test_conditional_ht_matches_lp_on_classical_toy(rng):
    for _ in range(10):
        s = random_conditional(rng, diagonal=True)
        joint = s.joint()
        sq = s.state_q()
        a, b = [], []
        for q in range(2):
            for x in range(2):
                for y in range(2):
                    a.append(joint[q, x, y] * np.diag(s.states[x, y]).real)
                    b.append(joint[q, x, y] * np.diag(sq[q]).real)
        a, b = np.concatenate(a), np.concatenate(b)
        for eps in (0.1, 0.4):
            v = conditional_ht_mutual_information(s, eps)
            assert not v.lower_bound
            assert v.bits == pytest.approx(lp_ht(a, b, eps), abs=1e-9)


def test_conditional_ht_independent_output(rng):
    rho = rand_density(rng, 2)
    s = ConditionalCq([0.3, 0.7], rng.dirichlet(np.ones(2), 2), rng.dirichlet(np.ones(3), 2),
                      np.broadcast_to(rho, (2, 3, 2, 2)))
    for which in ("X", "Y", "XY"):
        assert conditional_ht_mutual_information(s, 0.2, which).bits == pytest.approx(-math.log2(0.8), abs=1e-9)


def test_conditional_ht_trivial_q_reduces(rng):
    s = random_conditional(rng, nq=1)
    flat = CqEnsemble(s.joint().ravel(), s.states.reshape(-1, 2, 2))
    assert conditional_ht_mutual_information(s, 0.2).bits == pytest.approx(ht_mutual_information(flat, 0.2).bits,
                                                                          abs=1e-9)


def test_factorization_violation(rng):
    joint = np.zeros((1, 2, 2))
    joint[0, 0, 0] = joint[0, 1, 1] = 0.5
    with pytest.raises(FactorizationViolation):
        ConditionalCq.from_joint(joint, np.broadcast_to(np.eye(2) / 2, (2, 2, 2, 2)))
    s = random_conditional(rng)
    back = ConditionalCq.from_joint(s.joint(), s.states)
    assert np.allclose(back.joint(), s.joint())
