"""Interactions: support-indexed families of local operators and their calculus."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import DEFAULT_DECAY, DecayFunction, diam, set_dist
from .opalg import LocalOperator, WindowAlgebra, _canon, embed, op_commutator

PRUNE = 1e-14


class QuadratureError(RuntimeError):
    pass


class Interaction:
    """Map S -> h_S; keys are sorted site tuples and h_S has support exactly S."""

    def __init__(self, terms=None, decay: DecayFunction = DEFAULT_DECAY, anchor=None, d=2):
        self.d = d
        self.decay = decay
        self.anchor = None if anchor is None else frozenset(tuple(x) for x in anchor)
        self.terms: dict = {}
        for S, op in (terms or {}).items():
            self.add(S, op)

    def add(self, S, op):
        S = _canon(S)
        if op is None or op.is_zero:
            return
        if op.support != S:
            op = embed(op, S)
        if S in self.terms:
            self.terms[S] = LocalOperator(S, self.terms[S].matrix + op.matrix, self.d)
        else:
            self.terms[S] = op

    def copy(self, anchor="same"):
        out = Interaction(decay=self.decay, anchor=self.anchor if anchor == "same" else anchor, d=self.d)
        out.terms = dict(self.terms)
        return out

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def __len__(self):
        return len(self.terms)

    def scaled(self, c):
        out = self.copy()
        out.terms = {S: op.scaled(c) for S, op in self.terms.items()}
        return out

    def __add__(self, other):
        out = self.copy(anchor=None)
        for S, op in other.terms.items():
            out.add(S, op)
        return out

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def __neg__(self):
        return self.scaled(-1.0)

    def pruned(self, tol=PRUNE):
        out = self.copy()
        out.terms = {S: op for S, op in self.terms.items() if op.norm() > tol}
        return out

    def max_term_norm(self):
        return max((op.norm() for op in self.terms.values()), default=0.0)

    def window_operator(self, alg: WindowAlgebra):
        """sum_S h_S inside the window, as a BlockOp."""
        if not self.terms:
            return alg.zero()
        total = None
        for S, op in self:
            m = alg.local_sparse(op)
            total = m if total is None else total + m
        return alg.to_block(total)

    def to_json(self):
        return {
            "schema_version": 1,
            "d": self.d,
            "decay": self.decay.to_json(),
            "anchor": None if self.anchor is None else [list(x) for x in sorted(self.anchor)],
            "terms": [
                {
                    "support": [list(s) for s in S],
                    "shape": list(op.matrix.shape),
                    "data": base64.b64encode(np.ascontiguousarray(op.matrix, dtype="<c16").tobytes()).decode(),
                }
                for S, op in self
            ],
        }

    @classmethod
    def from_json(cls, doc):
        d = int(doc.get("d", 2))
        out = cls(decay=DecayFunction.from_json(doc.get("decay", {})), anchor=doc.get("anchor"), d=d)
        for t in doc["terms"]:
            raw = base64.b64decode(t["data"])
            m = np.frombuffer(raw, dtype="<c16").reshape(t["shape"])
            out.add([tuple(s) for s in t["support"]], LocalOperator([tuple(s) for s in t["support"]], m, d))
        return out

    def dumps(self):
        return json.dumps(self.to_json())


@dataclass
class ChargeInteraction:
    """On-site charges q_x = diag(charges), integer spectrum, zero on non-singletons."""

    sites: tuple
    charges: tuple = (0, 1)

    def __post_init__(self):
        c = np.asarray(self.charges, dtype=float)
        if not np.allclose(c, np.round(c)):
            raise ValueError("charge must have integer spectrum")

    @property
    def d(self):
        return len(self.charges)

    def q(self, x):
        return LocalOperator([x], np.diag(np.asarray(self.charges, dtype=complex)), self.d)

    def as_interaction(self, region=None):
        region = None if region is None else set(tuple(s) for s in region)
        out = Interaction(d=self.d)
        for x in self.sites:
            if region is None or tuple(x) in region:
                out.add((x,), self.q(x))
        return out

    def total(self, support):
        """Q_support as a LocalOperator on the given support."""
        support = _canon(support)
        n = len(support)
        c = np.asarray(self.charges, dtype=float)
        diag = np.zeros(self.d**n)
        for pos in range(n):
            diag += np.tile(np.repeat(c, self.d ** (n - 1 - pos)), self.d**pos)
        return LocalOperator(support, np.diag(diag.astype(complex)), self.d)


def f_norm(h: Interaction, f: DecayFunction, sites):
    best = 0.0
    per_site = {tuple(x): 0.0 for x in sites}
    for S, op in h.terms.items():
        w = op.norm() / float(f(1 + diam(S)))
        for x in S:
            if x in per_site:
                per_site[x] += w
    if per_site:
        best = max(per_site.values())
    return float(best)


def is_anchored(h: Interaction, X):
    X = set(tuple(x) for x in X)
    for S, op in h:
        if not (set(S) & X) and op.norm() > PRUNE:
            return False, S
    return True, None


def commutator(h: Interaction, hp: Interaction):
    """[h, h']_S = sum over S1 u S2 = S with S1 n S2 nonempty of [h_S1, h'_S2]."""
    out = Interaction(decay=h.decay, anchor=h.anchor, d=h.d)
    by_site: dict = {}
    for S2 in hp.terms:
        for x in S2:
            by_site.setdefault(x, set()).add(S2)
    for S1, a in h.terms.items():
        partners = set()
        for x in S1:
            partners |= by_site.get(x, set())
        for S2 in sorted(partners):
            c = op_commutator(a, hp.terms[S2])
            if not c.is_zero:
                out.add(c.support, c)
    return out


def restrict(h: Interaction, region):
    region = set(tuple(x) for x in region)
    out = Interaction(decay=h.decay, anchor=h.anchor, d=h.d)
    for S, op in h.terms.items():
        if set(S) <= region:
            out.terms[S] = op
    return out


def derivation(h: Interaction, X, A: LocalOperator):
    """delta^h_X(A) = sum over S meeting X of i[h_S, A]."""
    X = None if X is None else set(tuple(x) for x in X)
    out = None
    for S, op in h:
        if X is not None and not (set(S) & X):
            continue
        c = op_commutator(op, A)
        if c.is_zero:
            continue
        c = c.scaled(1j)
        out = c if out is None else out + c
    if out is None:
        return LocalOperator.zero(A.support, A.d)
    return out


def quadrature_sum(family, weights=None):
    family = list(family)
    weights = [1.0] * len(family) if weights is None else list(weights)
    out = Interaction(decay=family[0].decay if family else DEFAULT_DECAY, d=family[0].d if family else 2)
    for h, w in zip(family, weights):
        for S, op in h.terms.items():
            out.add(S, op.scaled(w))
    return out.pruned()


def quadrature_integral(sampler: Callable, a, b, weight=None, tol=1e-8, max_level=12):
    """int_a^b h_t w(t) dt term by term, composite Simpson with doubling per term."""
    weight = weight or (lambda t: 1.0)

    def simpson(n):
        ts = np.linspace(a, b, n + 1)
        c = np.ones(n + 1)
        c[1:-1:2], c[2:-1:2] = 4.0, 2.0
        c *= (b - a) / (3.0 * n)
        fam = [sampler(t) for t in ts]
        return quadrature_sum(fam, [ci * weight(t) for ci, t in zip(c, ts)])

    n = 2
    prev = simpson(n)
    for _ in range(max_level):
        n *= 2
        cur = simpson(n)
        keys = set(prev.terms) | set(cur.terms)
        err = 0.0
        for S in keys:
            x = cur.terms[S].dense() if S in cur.terms else 0.0
            y = prev.terms[S].dense() if S in prev.terms else 0.0
            err = max(err, float(np.max(np.abs(x - y))))
        if err <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"term-wise quadrature did not reach tol={tol} (last change {err:.2e})")


@dataclass
class TDI:
    """Time dependent interaction s -> h_s on [s0, s1]."""

    interval: tuple
    sampler: Callable
    label: str = ""

    def __call__(self, s):
        return self.sampler(s)

    def uniform_norm(self, f, sites, n=9):
        s0, s1 = self.interval
        return max(f_norm(self.sampler(s), f, sites) for s in np.linspace(s0, s1, n))

    def continuity(self, n=17):
        """max term jump between neighbouring samples, a crude continuity probe."""
        s0, s1 = self.interval
        ss = np.linspace(s0, s1, n)
        hs = [self.sampler(s) for s in ss]
        worst = 0.0
        for h0, h1 in zip(hs, hs[1:]):
            for S in set(h0.terms) | set(h1.terms):
                x = h0.terms[S].dense() if S in h0.terms else 0.0
                y = h1.terms[S].dense() if S in h1.terms else 0.0
                worst = max(worst, float(np.max(np.abs(x - y))))
        return worst


def _two_site_terms(X, rng, d, radius, decay, amplitude=1.0, sites_ok=None):
    """Random Hermitian two-site terms {x, x+v} with x in X and |v| <= radius."""
    h = Interaction(decay=decay, anchor=X, d=d)
    for x in sorted(X):
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                y = (x[0] + dx, x[1] + dy)
                if y == x or (sites_ok is not None and y not in sites_ok):
                    continue
                r = max(abs(dx), abs(dy))
                m = rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d))
                m = 0.5 * (m + m.conj().T)
                m *= amplitude * float(decay(1 + r)) / np.linalg.norm(m, 2)
                h.add((x, y), LocalOperator([x, y], m, d))
    return h


@dataclass
class SummabilityReport:
    geometry: str
    sizes: list
    partial_sums: list
    increments: list
    tail_exponent: float
    hypothesis_holds: bool
    cauchy: bool
    verdict: str

    def to_json(self):
        return dict(self.__dict__)


def commutator_summability_check(h: Interaction, hp: Interaction, sizes, geometry="", hypothesis=None, tol=1e-3):
    """Partial sums of ||[h, h']_S|| over S inside the squares [-n, n]^2.

    Pass requires the geometric hypothesis (sum over X, X' of f(|x - x'|)
    finite, e.g. two non-parallel strips) and Cauchy partial sums: the last
    increment is below tol relative to the total. Without the hypothesis the
    report carries no verdict.
    """
    comm = commutator(h, hp)
    norms = [(S, op.norm()) for S, op in comm.terms.items()]
    sums = []
    for n in sizes:
        sums.append(float(sum(v for S, v in norms if all(abs(s[0]) <= n and abs(s[1]) <= n for s in S))))
    inc = [sums[0]] + [b - a for a, b in zip(sums, sums[1:])]
    pos = [(n, i) for n, i in zip(sizes, inc) if i > 0]
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    else:
        slope = -math.inf
    cauchy = bool(inc[-1] <= tol * max(sums[-1], 1e-300))
    if hypothesis is None:
        verdict = "report-only"
    elif not hypothesis:
        verdict = "non-decaying" if not cauchy else "report-only"
    else:
        verdict = "pass" if cauchy else "fail"
    return SummabilityReport(
        geometry=geometry,
        sizes=list(sizes),
        partial_sums=sums,
        increments=inc,
        tail_exponent=slope,
        hypothesis_holds=bool(hypothesis) if hypothesis is not None else False,
        cauchy=cauchy,
        verdict=verdict,
    )


def strip_hypothesis(X, Xp, f: DecayFunction = DEFAULT_DECAY, grow=(1, 2, 4)):
    """Numerical proxy for sum_{x in X, x' in X'} f(|x - x'|) < inf.

    X and X' are given as callables n -> finite realization inside [-n, n]^2;
    the double sum must stabilise as n grows.
    """
    vals = []
    for n in grow:
        a, b = np.asarray(sorted(X(n))), np.asarray(sorted(Xp(n)))
        dist = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)
        vals.append(float(np.sum(f(dist))))
    return vals, bool(vals[-1] - vals[-2] <= 1e-3 * vals[-1])


def set_distance(X, Y):
    return set_dist(set(X), set(Y))
