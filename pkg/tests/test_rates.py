import json
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import rand_density
from covercert.divergences import ht_mutual_information
from covercert.ensembles import CqEnsemble
from covercert.errors import ConfigError, FactorizationViolation, InvalidState
from covercert.rates import (QmacInstance, WiretapInstance, penalty, qmac_from_json, qmac_iid_region,
                             qmac_rate_region, wiretap_from_json, wiretap_rate_bound)


def h2(x):
    return 0.0 if x in (0, 1) else -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def bsc(f):
    return np.stack([np.diag([1 - f, f]), np.diag([f, 1 - f])]).astype(complex)


def lp_ht(a, b, eps):
    res = linprog(b, A_ub=[-a], b_ub=[-(1 - eps)], bounds=[(0, 1)] * a.size, method="highs")
    return -math.log2(res.fun)


def test_penalty():
    assert penalty(1, 0.1) == 0
    assert penalty(4, 0.5) == pytest.approx(32)


def test_wiretap_independent_eve(rng):
    p = rng.dirichlet(np.ones(3))
    bob = np.stack([rand_density(rng, 2) for _ in range(3)])
    eve = np.repeat(rand_density(rng, 2)[None], 3, axis=0)
    w = WiretapInstance(p, bob, [eve], 0.1)
    rep = wiretap_rate_bound(w)
    assert rep.rate == pytest.approx(ht_mutual_information(CqEnsemble(p, bob), 0.1).bits, abs=1e-9)
    assert rep.guarantees == pytest.approx({"error": 0.2, "privacy": 0.4})
    w2 = WiretapInstance(p, bob, [eve, eve], 0.1)
    assert wiretap_rate_bound(w2).rate == pytest.approx(rep.rate - penalty(2, 0.1), abs=1e-9)


def test_wiretap_useless_channel(rng):
    rho = rand_density(rng, 2)
    same = np.repeat(rho[None], 2, axis=0)
    rep = wiretap_rate_bound(WiretapInstance([0.5, 0.5], same, [same], 0.2))
    assert rep.rate == pytest.approx(-math.log2(0.8), abs=1e-9)
    assert rep.rate < 0.33


def test_adding_eavesdropper_copy_never_helps(rng):
    for _ in range(5):
        p = rng.dirichlet(np.ones(3))
        bob = np.stack([rand_density(rng, 2) for _ in range(3)])
        eves = [np.stack([rand_density(rng, 2) for _ in range(3)]) for _ in range(2)]
        base = wiretap_rate_bound(WiretapInstance(p, bob, eves, 0.1)).rate
        more = wiretap_rate_bound(WiretapInstance(p, bob, eves + [eves[0]], 0.1)).rate
        assert more <= base + 1e-12


def test_wiretap_validation(rng):
    with pytest.raises(InvalidState):
        WiretapInstance([0.5, 0.5], 2 * bsc(0.1), [bsc(0.2)], 0.1)


def random_qmac(rng, nq=2, nx=2, ny=2, d=2, t=1, eps=0.1, diagonal=False):
    def table():
        if diagonal:
            return np.stack([np.diag(rng.dirichlet(np.ones(d))) for _ in range(nx * ny)]).reshape(nx, ny, d, d)
        return np.stack([rand_density(rng, d) for _ in range(nx * ny)]).reshape(nx, ny, d, d)

    return QmacInstance(rng.dirichlet(np.ones(nq)), rng.dirichlet(np.ones(nx), nq),
                        rng.dirichlet(np.ones(ny), nq), table(), [table() for _ in range(t)], eps)


def test_region_downward_closed(rng):
    for _ in range(5):
        region = qmac_rate_region(random_qmac(rng))
        pts = rng.uniform(-0.5, 2.0, size=(200, 2))
        for r1, r2 in pts:
            if region.contains(r1, r2):
                for s in (0.0, 0.3, 0.9):
                    assert region.contains(s * r1, s * r2)
                    assert region.contains(s * r1, r2) and region.contains(r1, s * r2)
        if min(region.r1, region.r2, region.r12) >= 0:
            assert region.contains(0.0, 0.0)


def test_region_reduces_to_point_to_point(rng):
    p = rng.dirichlet(np.ones(3))
    bob = np.stack([rand_density(rng, 2) for _ in range(3)])
    eve = np.stack([rand_density(rng, 2) for _ in range(3)])
    q = QmacInstance([1.0], p[None], [[1.0]], bob[:, None], [eve[:, None]], 0.1)
    region = qmac_rate_region(q)
    w = wiretap_rate_bound(WiretapInstance(p, bob, [eve], 0.1))
    assert region.r1 == pytest.approx(w.rate, abs=1e-9)
    assert region.r12 == pytest.approx(w.rate, abs=1e-9)


def test_qmac_diagonal_lp_oracle(rng):
    for _ in range(4):
        q = random_qmac(rng, diagonal=True)
        # eavesdropper sees nothing about the inputs
        q = QmacInstance(q.p_q, q.p_x_given_q, q.p_y_given_q, q.charlie,
                         [np.broadcast_to(np.diag([0.3, 0.7]).astype(complex), (2, 2, 2, 2))], 0.1)
        region = qmac_rate_region(q)
        s = q.receiver
        joint = s.joint()
        cd = np.einsum("xyii->xyi", s.states).real
        eps = q.eps
        for which, got in (("X", region.r1), ("Y", region.r2), ("XY", region.r12)):
            a, b = [], []
            for qq in range(2):
                for x in range(2):
                    for y in range(2):
                        if which == "XY":
                            ref = np.einsum("x,y,xyi->i", s.p_x[qq], s.p_y[qq], cd)
                        elif which == "X":
                            ref = np.einsum("x,xi->i", s.p_x[qq], cd[:, y])
                        else:
                            ref = np.einsum("y,yi->i", s.p_y[qq], cd[x])
                        a.append(joint[qq, x, y] * cd[x, y])
                        b.append(joint[qq, x, y] * ref)
            assert got == pytest.approx(lp_ht(np.concatenate(a), np.concatenate(b), eps), abs=0.02)


def test_qmac_iid_binary_symmetric():
    f, g = 0.1, 0.3
    q = QmacInstance([1.0], [[0.5, 0.5]], [[1.0]], bsc(f)[:, None], [bsc(g)[:, None]], 0.1)
    r1, r2, r12 = qmac_iid_region(q)
    assert r1 == pytest.approx(h2(g) - h2(f), abs=1e-9)
    assert r12 == pytest.approx(h2(g) - h2(f), abs=1e-9)
    assert r2 == pytest.approx(0.0, abs=1e-9)


def test_qmac_iid_product_channel(rng):
    q = random_qmac(rng)
    rho = rand_density(rng, 2)
    q2 = QmacInstance(q.p_q, q.p_x_given_q, q.p_y_given_q, np.broadcast_to(rho, (2, 2, 2, 2)), q.eves, 0.1)
    assert all(v <= 1e-12 for v in qmac_iid_region(q2))


def test_qmac_factorization_check(rng):
    joint = np.zeros((1, 2, 2))
    joint[0, 0, 0] = joint[0, 1, 1] = 0.5
    st = np.broadcast_to(np.eye(2) / 2, (2, 2, 2, 2))
    with pytest.raises(FactorizationViolation):
        QmacInstance.from_joint(joint, st, [st], 0.1)


def test_loaders(tmp_path):
    obj = {"p": [0.5, 0.5], "eps": 0.1,
           "B": [{"dim": 2, "re": [[1, 0], [0, 0]]}, {"dim": 2, "re": [[0, 0], [0, 1]]}],
           "E": [[{"dim": 2, "re": [[0.5, 0], [0, 0.5]]}] * 2]}
    path = tmp_path / "w.json"
    path.write_text(json.dumps(obj))
    rep = wiretap_rate_bound(wiretap_from_json(path))
    assert rep.rate == pytest.approx(-math.log2(0.45), abs=1e-12)
    with pytest.raises(ConfigError):
        wiretap_from_json({"p": [1.0], "eps": 0.1})
    qobj = {"joint": [[[0.25, 0.25], [0.25, 0.25]]], "eps": 0.1,
            "C": [[[[1, 0], [0, 0]], [[0.5, 0], [0, 0.5]]], [[[0.5, 0], [0, 0.5]], [[0, 0], [0, 1]]]],
            "E": [[[[[0.5, 0], [0, 0.5]]] * 2] * 2]}
    region = qmac_rate_region(qmac_from_json(qobj))
    assert region.as_dict()["terms"]["penalty"] == 0
