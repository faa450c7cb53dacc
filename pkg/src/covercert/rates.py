"""Achievable private rates for wiretap channels and the two-sender wiretap
multiple access channel.

Channels are given extensionally: one output state per input symbol (per
input pair for the multiple access channel) on the legitimate receiver and
on each eavesdropper.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from covercert.divergences import (
    BlockPair,
    ConditionalCq,
    _budget,
    conditional_ht_mutual_information,
    conditional_max_mutual_information,
    conditional_mutual_information,
    ht_divergence_blocks,
    pair_blocks,
    smooth_block_divergence,
)
from covercert.errors import ConfigError, DimMismatch, InvalidState
from covercert.linalg import matrix_from_json

NORMALIZATION_ATOL = 1e-10
WIRETAP_GUARANTEES = {"error": 2.0, "privacy": 4.0}
QMAC_GUARANTEES = {"decoding_sqrt_eps": 50.0, "privacy_sqrt_eps": 16.0}


def penalty(t: int, eps: float) -> float:
    """``4 log2(t) / eps^2``, the price of ``t`` separate eavesdroppers."""
    return 4 * math.log2(t) / (eps * eps)


def leakage(imax) -> float:
    """Worst eavesdropper term, floored at zero.

    Weight-reduction smoothing can push ``I_max^eps`` of a product state down
    to ``log2(1 - eps) < 0``; using zero instead only lowers the rate bound.
    """
    return max(0.0, max(imax))


def _check_outputs(states: np.ndarray, name: str):
    tr = np.einsum("...ii->...", states).real
    if np.any(np.abs(tr - 1) > NORMALIZATION_ATOL):
        raise InvalidState(f"{name} output states must be normalized")


@dataclass
class WiretapInstance:
    """Input distribution ``p`` with outputs on ``B`` and each ``E_i``.

    ``bob`` has shape ``(n, dB, dB)``; ``eves`` is a list of ``(n, dE, dE)``.
    """

    p: np.ndarray
    bob: np.ndarray
    eves: list
    eps: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).ravel()
        self.bob = np.asarray(self.bob, dtype=np.complex128)
        self.eves = [np.asarray(e, dtype=np.complex128) for e in self.eves]
        _budget(self.eps)
        if not self.eves:
            raise DimMismatch("need at least one eavesdropper")
        if abs(self.p.sum() - 1) > NORMALIZATION_ATOL or np.any(self.p < 0):
            raise InvalidState("input distribution must be normalized")
        for name, st in [("B", self.bob)] + [(f"E{i + 1}", e) for i, e in enumerate(self.eves)]:
            if st.shape[0] != self.p.size:
                raise DimMismatch(f"{name} needs one output state per input symbol")
            _check_outputs(st, name)

    @property
    def t(self) -> int:
        return len(self.eves)

    def pair(self, states) -> BlockPair:
        avg = np.tensordot(self.p, states, axes=1)
        return BlockPair(self.p, states, self.p, avg)


@dataclass(frozen=True)
class WiretapReport:
    rate: float
    ih: float
    ih_is_lower_bound: bool
    imax: tuple
    penalty: float
    guarantees: dict

    @property
    def positive(self) -> bool:
        return self.rate > 0

    def as_dict(self) -> dict:
        return {"rate_bound": self.rate, "IH_eps_XB": self.ih, "IH_is_lower_bound": self.ih_is_lower_bound,
                "Imax_eps_XE": list(self.imax), "leakage": leakage(self.imax), "penalty": self.penalty,
                "positive_rate_certified": self.positive, "guarantees": self.guarantees}


def wiretap_rate_bound(w: WiretapInstance) -> WiretapReport:
    """``I_H^eps(X:B) - max_i I_max^eps(X:E_i) - 4 log t / eps^2`` (may be negative)."""
    ih = ht_divergence_blocks(pair_blocks(w.pair(w.bob)), w.eps)
    imax = tuple(smooth_block_divergence("max", w.pair(e), w.eps).bits for e in w.eves)
    pen = penalty(w.t, w.eps)
    guarantees = {"error": WIRETAP_GUARANTEES["error"] * w.eps,
                  "privacy": WIRETAP_GUARANTEES["privacy"] * w.eps}
    return WiretapReport(ih.bits - leakage(imax) - pen, ih.bits, ih.lower_bound, imax, pen, guarantees)


@dataclass
class QmacInstance:
    """Timesharing ``p(q)``, conditionals ``p(x|q)``, ``p(y|q)`` and outputs.

    ``charlie`` has shape ``(nX, nY, dC, dC)``; ``eves`` is a list of
    ``(nX, nY, dE, dE)`` tables.
    """

    p_q: np.ndarray
    p_x_given_q: np.ndarray
    p_y_given_q: np.ndarray
    charlie: np.ndarray
    eves: list
    eps: float

    def __post_init__(self):
        _budget(self.eps)
        if not self.eves:
            raise DimMismatch("need at least one eavesdropper")
        self.charlie = np.asarray(self.charlie, dtype=np.complex128)
        self.eves = [np.asarray(e, dtype=np.complex128) for e in self.eves]
        _check_outputs(self.charlie, "C")
        for i, e in enumerate(self.eves):
            _check_outputs(e, f"E{i + 1}")
        self.receiver = ConditionalCq(self.p_q, self.p_x_given_q, self.p_y_given_q, self.charlie)
        self.eavesdroppers = [ConditionalCq(self.p_q, self.p_x_given_q, self.p_y_given_q, e)
                              for e in self.eves]

    @classmethod
    def from_joint(cls, joint, charlie, eves, eps) -> "QmacInstance":
        c = ConditionalCq.from_joint(joint, charlie)
        return cls(c.p_q, c.p_x, c.p_y, charlie, eves, eps)

    @property
    def t(self) -> int:
        return len(self.eves)


@dataclass(frozen=True)
class QmacRegion:
    """``R1 <= r1``, ``R2 <= r2``, ``R1 + R2 <= r12`` over nonnegative rates.

    Rate pairs on the boundary count as inside (the region is reported as
    its closure).
    """

    r1: float
    r2: float
    r12: float
    terms: dict
    guarantees: dict

    def contains(self, R1: float, R2: float) -> bool:
        return (R1 >= 0 and R2 >= 0 and R1 <= self.r1 and R2 <= self.r2 and R1 + R2 <= self.r12)

    def as_dict(self) -> dict:
        return {"R1_bound": self.r1, "R2_bound": self.r2, "R12_bound": self.r12,
                "terms": self.terms, "guarantees": self.guarantees,
                "origin_inside": self.contains(0.0, 0.0)}


_TARGETS = (("R1", "X"), ("R2", "Y"), ("R12", "XY"))


def qmac_rate_region(q: QmacInstance) -> QmacRegion:
    """One-shot inner bound; each bound subtracts ``4 log t / eps^2``."""
    pen = penalty(q.t, q.eps)
    vals, terms = {}, {"penalty": pen}
    for name, which in _TARGETS:
        ih = conditional_ht_mutual_information(q.receiver, q.eps, which)
        imax = [conditional_max_mutual_information(e, q.eps, which).bits for e in q.eavesdroppers]
        vals[name] = ih.bits - leakage(imax) - pen
        terms[name] = {"IH_eps": ih.bits, "IH_is_lower_bound": ih.lower_bound, "Imax_eps": imax}
    s = math.sqrt(q.eps)
    guarantees = {"decoding_error": QMAC_GUARANTEES["decoding_sqrt_eps"] * s,
                  "privacy": QMAC_GUARANTEES["privacy_sqrt_eps"] * s}
    return QmacRegion(vals["R1"], vals["R2"], vals["R12"], terms, guarantees)


def qmac_iid_region(q: QmacInstance) -> tuple[float, float, float]:
    """Per-channel-use bounds from Shannon conditional mutual informations."""
    out = []
    for _, which in _TARGETS:
        legit = conditional_mutual_information(q.receiver, which, "ht")
        eve = leakage([conditional_mutual_information(e, which, "eve") for e in q.eavesdroppers])
        out.append(legit - eve)
    return tuple(out)


# -- loaders -----------------------------------------------------------------

def _matrix(obj, base_dir=None) -> np.ndarray:
    if isinstance(obj, str):
        path = Path(obj)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return matrix_from_json(path)
    if isinstance(obj, dict):
        return matrix_from_json(obj)
    return np.asarray(obj, dtype=np.complex128)


def _stack(items, base_dir=None) -> np.ndarray:
    return np.stack([_matrix(m, base_dir) for m in items])


def _load(obj):
    if isinstance(obj, (str, Path)):
        path = Path(obj)
        return json.loads(path.read_text()), path.parent
    return obj, None


def wiretap_from_json(obj, eps: float | None = None) -> WiretapInstance:
    """``{"p": [...], "B": [matrix...], "E": [[matrix...], ...], "eps": ...}``."""
    obj, base = _load(obj)
    try:
        eps = obj["eps"] if eps is None else eps
        return WiretapInstance(obj["p"], _stack(obj["B"], base),
                               [_stack(e, base) for e in obj["E"]], float(eps))
    except KeyError as exc:
        raise ConfigError(f"wiretap instance is missing {exc}") from None


def qmac_from_json(obj, eps: float | None = None) -> QmacInstance:
    """``{"p_q", "p_x_given_q", "p_y_given_q"}`` (or ``"joint"``) plus ``"C"`` and ``"E"``.

    ``C`` is a nested ``[x][y]`` list of matrices and ``E`` a list of such
    tables, one per eavesdropper.
    """
    obj, base = _load(obj)

    def table(nested):
        return np.stack([_stack(row, base) for row in nested])

    try:
        eps = float(obj["eps"] if eps is None else eps)
        charlie = table(obj["C"])
        eves = [table(e) for e in obj["E"]]
        if "joint" in obj:
            return QmacInstance.from_joint(np.asarray(obj["joint"], dtype=float), charlie, eves, eps)
        return QmacInstance(obj["p_q"], obj["p_x_given_q"], obj["p_y_given_q"], charlie, eves, eps)
    except KeyError as exc:
        raise ConfigError(f"QMAC instance is missing {exc}") from None
