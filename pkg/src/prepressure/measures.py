"""Invariant measures on bundle systems and their pre-image entropies.

Three representations are supported:

* :class:`RandomMarkovMeasure` for symbolic systems: per-omega initial laws
  and step matrices;
* :class:`ExplicitMeasure` for finite fibers: per-omega probability vectors;
* :class:`EmpiricalMeasure`: weighted atoms per fiber, or (for long orbits)
  the exact depth-2 cylinder marginals of such an atomic measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base_space import BaseSpace
from .bundle_system import (
    ExplicitFiniteSystem,
    Observable,
    RandomSFTSystem,
    SymbolicPoint,
    preimage_set,
)
from .errors import CapacityError, InputError
from .logspace import logsumexp, xlogx_entropy
from .separated import SeparationInstance, near_maximal_family

ROW_TOL = 1e-12
INVARIANCE_TOL = 1e-10
ATOM_LIMIT = 4096


def stationary_for_cycle(mats) -> np.ndarray:
    """Left fixed probability vector of the product ``mats[0] @ mats[1] @ ...``.

    When the fixed vector is not unique the least-squares solution with
    minimal norm is returned, clipped to be nonnegative and renormalised.
    """
    M = np.identity(mats[0].shape[0])
    for Q in mats:
        M = M @ Q
    m = M.shape[0]
    lhs = np.vstack([(M - np.identity(m)).T, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


# --------------------------------------------------------------------------
# Markov measures


class RandomMarkovMeasure:
    """Fiber laws of Markov chains with initial law ``p[omega]`` and step ``i``
    matrix ``Q[theta^i omega]``.

    Rows of ``Q[omega]`` for symbols that are inactive at ``omega`` may be
    zero; every other row must be stochastic.
    """

    def __init__(self, base: BaseSpace, p, Q):
        self.base = base
        self.p = np.array(p, dtype=float)
        self.Q = np.array(Q, dtype=float)
        if self.Q.ndim == 2:
            self.Q = np.broadcast_to(self.Q, (base.omega_count,) + self.Q.shape).copy()
        if self.p.ndim == 1:
            self.p = np.broadcast_to(self.p, (base.omega_count, self.p.shape[0])).copy()
        if self.Q.shape[0] != base.omega_count or self.p.shape != self.Q.shape[:2] or self.Q.shape[1] != self.Q.shape[2]:
            raise InputError(f"p {self.p.shape} and Q {self.Q.shape} do not match the base")

    @property
    def alphabet_size(self) -> int:
        return self.Q.shape[1]

    def th(self, omega, n):
        return self.base.theta_power(omega, n)

    @classmethod
    def from_transitions(cls, base: BaseSpace, Q) -> "RandomMarkovMeasure":
        """Invariant measure with step matrices ``Q``; ``p`` is solved per theta-cycle."""
        Q = np.array(Q, dtype=float)
        if Q.ndim == 2:
            Q = np.broadcast_to(Q, (base.omega_count,) + Q.shape).copy()
        p = np.zeros(Q.shape[:2])
        for cyc in base.cycles():
            v = stationary_for_cycle([Q[w] for w in cyc])
            for w in cyc:
                p[w] = v
                v = v @ Q[w]
        return cls(base, p, Q)

    @classmethod
    def bernoulli(cls, sys: RandomSFTSystem, weights) -> "RandomMarkovMeasure":
        w = np.asarray(weights, dtype=float)
        m = sys.alphabet_size
        Q = np.broadcast_to(w, (sys.base.omega_count, m, m)).copy()
        return cls(sys.base, np.broadcast_to(w, (sys.base.omega_count, m)).copy(), Q)

    def validate(self, sys: RandomSFTSystem | None = None) -> list[str]:
        v = []
        if np.any(self.p < -ROW_TOL) or np.any(self.Q < -ROW_TOL):
            v.append("negative probabilities")
        for w in range(self.base.omega_count):
            if abs(self.p[w].sum() - 1.0) > ROW_TOL:
                v.append(f"p_{w} does not sum to 1")
            rows = self.Q[w].sum(axis=1)
            live = rows > 0
            if np.any(np.abs(rows[live] - 1.0) > ROW_TOL):
                v.append(f"Q_{w} has a row not summing to 1")
            if sys is not None:
                if sys.alphabet_size != self.alphabet_size:
                    v.append("alphabet size differs from the system")
                    break
                if np.any((self.Q[w] > 0) & (sys.trans[w] == 0)):
                    v.append(f"Q_{w} charges a forbidden transition")
                need = sys.active[w]
                if np.any(np.abs(rows[need] - 1.0) > ROW_TOL):
                    v.append(f"Q_{w} has a non-stochastic row for an active symbol")
                if np.any(self.p[w][~need] > 0):
                    v.append(f"p_{w} charges an inactive symbol")
        res = invariance_residual(self)
        if res > INVARIANCE_TOL:
            v.append(f"measure not invariant (residual {res:.3g})")
        return v

    def marginal(self, omega: int, i: int) -> np.ndarray:
        """Law of the symbol at position ``i`` of the fiber chain at ``omega``."""
        v = self.p[omega].copy()
        for j in range(i):
            v = v @ self.Q[self.th(omega, j)]
        return v

    def window_law(self, omega: int, W: int) -> np.ndarray:
        """Probabilities of all length-``W`` windows, indexed base ``m``."""
        law = self.p[omega].copy()
        m = self.alphabet_size
        for j in range(1, W):
            Q = self.Q[self.th(omega, j - 1)]
            law = (law.reshape(-1, m)[:, :, None] * Q[None, :, :]).reshape(-1) if j > 1 else (law[:, None] * Q).reshape(-1)
        return law

    def to_json(self) -> dict:
        return {
            "p": {str(w): self.p[w].tolist() for w in range(self.base.omega_count)},
            "Q": {str(w): self.Q[w].tolist() for w in range(self.base.omega_count)},
        }

    @classmethod
    def from_json(cls, obj, base: BaseSpace) -> "RandomMarkovMeasure":
        try:
            p = [obj["p"][str(w)] for w in range(base.omega_count)]
            Q = [obj["Q"][str(w)] for w in range(base.omega_count)]
        except (KeyError, TypeError) as exc:
            raise InputError(f"measure: missing entry {exc}") from exc
        return cls(base, p, Q)


@dataclass
class ExplicitMeasure:
    sys: ExplicitFiniteSystem
    vectors: list

    def __post_init__(self):
        self.vectors = [np.asarray(v, dtype=float) for v in self.vectors]
        if len(self.vectors) != self.sys.base.omega_count:
            raise InputError("one vector per base point is required")
        for w, v in enumerate(self.vectors):
            if v.shape != (self.sys.fiber_sizes[w],):
                raise InputError(f"vector for omega={w} must have length {self.sys.fiber_sizes[w]}")

    def pushforward(self, omega: int, k: int = 1) -> np.ndarray:
        target = self.sys.th(omega, k)
        out = np.zeros(self.sys.fiber_sizes[target])
        np.add.at(out, self.sys.image(omega, k), self.vectors[omega])
        return out

    def validate(self) -> list[str]:
        v = []
        for w, vec in enumerate(self.vectors):
            if np.any(vec < -ROW_TOL):
                v.append(f"negative mass on fiber {w}")
            if abs(vec.sum() - 1.0) > ROW_TOL:
                v.append(f"fiber {w} mass does not sum to 1")
        res = invariance_residual(self)
        if res > INVARIANCE_TOL:
            v.append(f"measure not invariant (residual {res:.3g})")
        return v

    def to_json(self) -> dict:
        return {"vectors": {str(w): v.tolist() for w, v in enumerate(self.vectors)}}

    @classmethod
    def from_json(cls, obj, sys) -> "ExplicitMeasure":
        try:
            return cls(sys, [obj["vectors"][str(w)] for w in range(sys.base.omega_count)])
        except (KeyError, TypeError) as exc:
            raise InputError(f"measure: missing entry {exc}") from exc


@dataclass
class EmpiricalMeasure:
    """Atomic fiber measures, or their depth-2 cylinder marginals.

    Exactly one of ``atoms`` (``omega -> [(point, weight), ...]``) and
    ``pairs`` (``(omega_count, m, m)`` laws of the first two symbols) is set.
    """

    sys: object
    atoms: dict | None = None
    pairs: np.ndarray | None = None

    @property
    def mode(self) -> str:
        return "atoms" if self.atoms is not None else "cylinders"

    def symbol_law(self, omega: int) -> np.ndarray:
        if self.pairs is not None:
            return self.pairs[omega].sum(axis=1)
        m = _point_space(self.sys, omega)
        out = np.zeros(m)
        for y, wt in self.atoms[omega]:
            out[_first(y)] += wt
        return out

    def pair_law(self, omega: int) -> np.ndarray:
        if self.pairs is not None:
            return self.pairs[omega]
        if self.sys.kind != "sft":
            raise InputError("pair laws are defined for symbolic fibers")
        m = self.sys.alphabet_size
        out = np.zeros((m, m))
        for y, wt in self.atoms[omega]:
            word = self.sys.extend(y, 2).word
            out[word[0], word[1]] += wt
        return out

    def validate(self) -> list[str]:
        v = []
        for w in range(self.sys.base.omega_count):
            total = self.symbol_law(w).sum()
            if abs(total - 1.0) > 1e-9:
                v.append(f"fiber {w} weights sum to {total}")
            if self.atoms is not None:
                for y, wt in self.atoms[w]:
                    if wt < 0:
                        v.append(f"negative atom weight on fiber {w}")
                    if isinstance(y, SymbolicPoint) and y.owner != w:
                        v.append(f"atom of fiber {y.owner} stored under fiber {w}")
        return v

    def to_json(self) -> dict:
        if self.pairs is not None:
            return {"pairs": {str(w): self.pairs[w].tolist() for w in range(self.pairs.shape[0])}}
        out = {}
        for w, items in self.atoms.items():
            out[str(w)] = [
                {"point": list(y.word) if isinstance(y, SymbolicPoint) else int(y), "weight": wt}
                for y, wt in items
            ]
        return {"atoms": out}


def _point_space(sys, omega):
    return sys.alphabet_size if sys.kind == "sft" else sys.fiber_sizes[omega]


def _first(y):
    return y.word[0] if isinstance(y, SymbolicPoint) else int(y)


# --------------------------------------------------------------------------
# invariance and integrals


def _tv(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def invariance_residual(mu) -> float:
    """Max over omega of the total variation between ``T_omega mu_omega`` and ``mu_{theta omega}``.

    Empirical measures in cylinder mode are compared on first-symbol
    cylinders; atomic ones are compared point by point.
    """
    if isinstance(mu, RandomMarkovMeasure):
        return max(_tv(mu.p[w] @ mu.Q[w], mu.p[mu.th(w, 1)]) for w in range(mu.base.omega_count))
    if isinstance(mu, ExplicitMeasure):
        return max(_tv(mu.pushforward(w), mu.vectors[mu.sys.th(w, 1)]) for w in range(mu.sys.base.omega_count))
    if isinstance(mu, EmpiricalMeasure):
        sys = mu.sys
        Om = sys.base.omega_count
        if mu.pairs is not None:
            return max(_tv(mu.pairs[w].sum(axis=0), mu.pairs[sys.th(w, 1)].sum(axis=1)) for w in range(Om))
        worst = 0.0
        for w in range(Om):
            pushed = [(_apply(sys, w, y, 1), wt) for y, wt in mu.atoms[w]]
            worst = max(worst, _atom_tv(sys, pushed, mu.atoms[sys.th(w, 1)]))
        return worst
    raise InputError(f"unsupported measure type {type(mu).__name__}")


def _apply(sys, omega, y, j):
    if sys.kind == "sft":
        return sys.shift(sys.extend(y, j + 1), j)
    return int(sys.image(omega, j)[int(y)])


def _atom_key(sys, y, length):
    return sys.extend(y, length).word if sys.kind == "sft" else int(y)


def _atom_tv(sys, left, right) -> float:
    length = 0
    if sys.kind == "sft":
        length = max(len(y.word) for y, _ in list(left) + list(right))
    acc: dict = {}
    for y, wt in left:
        key = _atom_key(sys, y, length)
        acc[key] = acc.get(key, 0.0) + wt
    for y, wt in right:
        key = _atom_key(sys, y, length)
        acc[key] = acc.get(key, 0.0) - wt
    return 0.5 * sum(abs(v) for v in acc.values())


def integral_f(mu, f: Observable, sys=None) -> float:
    """``sum_omega P(omega) E_{mu_omega} f(omega, .)``, computed from window laws."""
    if isinstance(mu, RandomMarkovMeasure):
        base = mu.base
        total = 0.0
        for w in range(base.omega_count):
            law = mu.window_law(w, f.window)
            if law.shape[0] != f.values.shape[1]:
                raise InputError("observable table does not match the measure alphabet")
            total += base.prob[w] * _expect(law, f.values[w])
        return float(total)
    if isinstance(mu, ExplicitMeasure):
        return float(sum(mu.sys.base.prob[w] * _expect(v, f.values[w, : v.shape[0]])
                         for w, v in enumerate(mu.vectors)))
    if isinstance(mu, EmpiricalMeasure):
        s = mu.sys
        total = 0.0
        for w in range(s.base.omega_count):
            if mu.pairs is not None:
                if f.window > 2:
                    raise InputError("cylinder marginals cover windows of length at most 2")
                law = mu.pairs[w].sum(axis=1) if f.window == 1 else mu.pairs[w].reshape(-1)
                total += s.base.prob[w] * _expect(law, f.values[w])
            else:
                acc = 0.0
                for y, wt in mu.atoms[w]:
                    if s.kind == "sft":
                        acc += wt * f.value(s, w, s.extend(y, f.window).word[: f.window])
                    else:
                        acc += wt * f.values[w, int(y)]
                total += s.base.prob[w] * acc
        return float(total)
    raise InputError(f"unsupported measure type {type(mu).__name__}")


def _expect(law, vals) -> float:
    live = law > 0
    v = vals[: law.shape[0]][live]
    if not np.all(np.isfinite(v)):
        raise InputError("observable undefined on a window charged by the measure")
    return float(np.dot(law[live], v))


# --------------------------------------------------------------------------
# entropies


def _row_entropies(Q) -> np.ndarray:
    return np.array([xlogx_entropy(row) for row in Q])


def conditional_block_entropy(mu: RandomMarkovMeasure, omega: int, n: int, k: int, partition_depth: int = 1) -> float:
    """``H(block of the first n cells | symbol at position k)`` in nats.

    Cells are first symbols (``partition_depth=1``) or symbol blocks of the
    given length, so the block covers positions ``0 .. n + depth - 2``. For a
    Markov fiber chain, conditioning on the symbol at ``k`` equals
    conditioning on the whole future from ``k`` on.
    """
    if k < n:
        raise InputError("conditional block entropy needs k >= n")
    if n < 1 or partition_depth < 1:
        raise InputError("n and partition_depth must be >= 1")
    # positions at or past k are already known from the future
    N = min(n + partition_depth - 1, k)
    Qs = [mu.Q[mu.th(omega, i)] for i in range(k)]
    law = mu.p[omega].copy()
    joint = xlogx_entropy(law)
    for i in range(N - 1):
        joint += float(np.dot(law, _row_entropies(Qs[i])))
        law = law @ Qs[i]
    # law is now the marginal at N-1
    R = np.identity(mu.alphabet_size)
    for i in range(N - 1, k):
        R = R @ Qs[i]
    cond_future = float(np.dot(law, _row_entropies(R)))
    h_k = xlogx_entropy(law @ R)
    return max(joint + cond_future - h_k, 0.0)


def block_entropy(mu: RandomMarkovMeasure, omega: int, n: int) -> float:
    """Unconditional ``H(symbols 0 .. n-1)`` of the fiber chain."""
    law = mu.p[omega].copy()
    total = xlogx_entropy(law)
    for i in range(n - 1):
        Q = mu.Q[mu.th(omega, i)]
        total += float(np.dot(law, _row_entropies(Q)))
        law = law @ Q
    return total


@dataclass
class EntropyEstimate:
    value: float
    fit_b: float
    curve: dict
    k_used: dict
    stabilised: bool

    def to_json(self) -> dict:
        return {"extrapolated": self.value, "fit_b": self.fit_b,
                "curve": [{"n": n, "value": v, "k": self.k_used.get(n)} for n, v in sorted(self.curve.items())],
                "stabilised": self.stabilised}


def _fit(ns, vals):
    from .pressure import fit_inverse_n

    half = ns[len(ns) - (len(ns) + 1) // 2:]
    sel = [vals[ns.index(n)] for n in half]
    return fit_inverse_n(half, sel)


def _stable_k(mu, omega, n, depth, max_extra=512, tol=1e-12):
    """Smallest tested k after which the conditional entropy changes by < ``tol``."""
    prev = conditional_block_entropy(mu, omega, n, n, depth)
    k = n
    step = 1
    while k - n < max_extra:
        k2 = k + step
        cur = conditional_block_entropy(mu, omega, n, k2, depth)
        if abs(cur - prev) < tol:
            return k2, cur, True
        prev, k = cur, k2
        step = min(step * 2, 64)
    return k, prev, False


def preimage_metric_entropy(mu, n_list, k_rule=None, partition_depth: int = 1) -> EntropyEstimate:
    """Pre-image entropy of ``mu`` from finite conditional block entropies.

    ``k_rule(n)`` fixes the conditioning position; by default ``k`` grows
    until the conditional entropy stabilises (change below 1e-12), which is
    reported in ``stabilised``. Values ``(1/n) sum_omega P(omega) H(...)``
    are extrapolated with ``a + b/n`` over the larger half of ``n_list``.
    """
    from .pressure import check_n_list

    ns = check_n_list(n_list)
    if isinstance(mu, ExplicitMeasure):
        # finite fibers: T^k is injective, so the future determines the past
        curve = {n: 0.0 for n in ns}
        return EntropyEstimate(0.0, 0.0, curve, {}, True)
    if not isinstance(mu, RandomMarkovMeasure):
        raise InputError("metric entropy needs a Markov or explicit measure")
    prob = mu.base.prob
    curve, k_used, ok = {}, {}, True
    for n in ns:
        total = 0.0
        for w in range(mu.base.omega_count):
            if k_rule is None:
                k, h, st = _stable_k(mu, w, n, partition_depth)
                ok &= st
            else:
                k = int(k_rule(n))
                h = conditional_block_entropy(mu, w, n, k, partition_depth)
            k_used[n] = max(k_used.get(n, 0), k)
            total += prob[w] * h
        curve[n] = total / n
    a, b = _fit(ns, [curve[n] for n in ns])
    return EntropyEstimate(a, b, curve, k_used, ok)


def block_entropy_rate(mu: RandomMarkovMeasure, n_list) -> EntropyEstimate:
    """Unconditional fiber entropy rate, extrapolated like the pre-image one."""
    from .pressure import check_n_list

    ns = check_n_list(n_list)
    curve = {n: sum(mu.base.prob[w] * block_entropy(mu, w, n) for w in range(mu.base.omega_count)) / n for n in ns}
    a, b = _fit(ns, [curve[n] for n in ns])
    return EntropyEstimate(a, b, curve, {}, True)


# --------------------------------------------------------------------------
# candidate measures from separated sets


@dataclass
class CandidateMeasures:
    nu: EmpiricalMeasure
    mu_hat: EmpiricalMeasure
    fitted: object

    @property
    def residual(self) -> float:
        return invariance_residual(self.mu_hat)


def fit_markov(sys: RandomSFTSystem, pair_laws) -> RandomMarkovMeasure:
    """Row-normalised pair frequencies; empty rows of active symbols become
    the uniform admissible row. ``p`` is the invariant law of the fitted steps."""
    m = sys.alphabet_size
    Om = sys.base.omega_count
    Q = np.zeros((Om, m, m))
    for w in range(Om):
        C = np.asarray(pair_laws[w], dtype=float) * sys.trans[w]
        for a in range(m):
            s = C[a].sum()
            if s > 0:
                Q[w, a] = C[a] / s
            elif sys.active[w, a]:
                row = sys.trans[w, a].astype(float)
                Q[w, a] = row / row.sum()
    return RandomMarkovMeasure.from_transitions(sys.base, Q)


def _default_anchors(sys, k, anchors):
    Om = sys.base.omega_count
    if sys.kind == "sft":
        if anchors is None:
            common = np.nonzero(sys.active.all(axis=0))[0]
            sym = int(common[0]) if common.size else None
            anchors = {w: sym if sym is not None else int(np.argmax(sys.active[sys.th(w, k)])) for w in range(Om)}
        elif np.isscalar(anchors):
            anchors = {w: int(anchors) for w in range(Om)}
        return {w: a if isinstance(a, SymbolicPoint) else sys.anchor(sys.th(w, k), int(a), 1)
                for w, a in anchors.items()}
    if anchors is None:
        return {w: 0 for w in range(Om)}
    if np.isscalar(anchors):
        return {w: int(anchors) for w in range(Om)}
    return dict(anchors)


def _preimage_size(sys, omega, k, x) -> int:
    if sys.kind == "explicit":
        return int((sys.image(omega, k) == int(x)).sum())
    ok_end = sys.trans[sys.th(omega, k - 1), :, x.word[0]].astype(bool)
    return sys._count_words(omega, k, ok_end)


def extract_candidate_measure(sys, f: Observable, n: int, t: int, k: int | None = None, anchors=None,
                              delta: float = 0.5, mode: str = "auto") -> CandidateMeasures:
    """Weighted separated sets, their orbit average, and a fitted Markov measure.

    ``nu_omega`` puts mass proportional to ``exp S_n f`` on a maximal
    separated subset of the pre-image set; ``mu_hat`` averages the
    pushforwards ``T^j nu`` over ``j < n``. In ``"cylinders"`` mode (symbolic
    systems with ``W = 1`` and ``t >= 2``) only the exact first-two-symbol
    laws are kept, which is all the invariance check and the fit need.
    """
    if k is None:
        k = n + t - 1
    if k < n:
        raise InputError("k must be >= n")
    anchors = _default_anchors(sys, k, anchors)
    if mode == "auto":
        big = any(_preimage_size(sys, w, k, anchors[w]) > ATOM_LIMIT for w in range(sys.base.omega_count))
        mode = "cylinders" if big else "atoms"
    if mode == "cylinders":
        return _extract_cylinders(sys, f, n, t, k, anchors)
    if mode != "atoms":
        raise InputError(f"unknown mode {mode!r}")
    return _extract_atoms(sys, f, n, t, k, anchors, delta)


def _extract_atoms(sys, f, n, t, k, anchors, delta):
    Om = sys.base.omega_count
    insts = {}
    for w in range(Om):
        x = anchors[w]
        if sys.kind == "sft":
            x = sys.extend(x, max(t + f.window, 2))
        pts = preimage_set(sys, w, k, x)
        if len(pts) > ATOM_LIMIT * 16:
            raise CapacityError(f"{len(pts)} pre-images exceed the atom budget", where=(w, k, x))
        insts[w] = SeparationInstance.from_points(sys, f, w, n, t, pts)
    family = near_maximal_family(insts, delta)
    nu = {}
    for w in range(Om):
        inst, sub = insts[w], family[w]
        lw = inst.log_weights[list(sub.indices)]
        z = logsumexp(lw)
        nu[w] = [(inst.points[i], float(math.exp(l - z))) for i, l in zip(sub.indices, lw)]
    mu = {}
    for w2 in range(Om):
        acc: dict = {}
        order = []
        for j in range(n):
            src = sys.th(w2, -j)
            for y, wt in nu[src]:
                z = _apply(sys, src, y, j) if j else y
                key = z.word if sys.kind == "sft" else int(z)
                if key not in acc:
                    acc[key] = [z, 0.0]
                    order.append(key)
                acc[key][1] += wt / n
        mu[w2] = [(acc[key][0], acc[key][1]) for key in order]
    nu_m = EmpiricalMeasure(sys, atoms=nu)
    mu_m = EmpiricalMeasure(sys, atoms=mu)
    if sys.kind == "sft":
        fitted = fit_markov(sys, [mu_m.pair_law(w) for w in range(Om)])
    else:
        vecs = []
        for w in range(Om):
            v = np.zeros(sys.fiber_sizes[w])
            for y, wt in mu[w]:
                v[int(y)] += wt
            vecs.append(v)
        fitted = ExplicitMeasure(sys, vecs)
    return CandidateMeasures(nu_m, mu_m, fitted)


def _prefix_pair_laws(sys: RandomSFTSystem, f: Observable, omega: int, n: int, L: int, k: int, a: int):
    """Exact laws of consecutive symbol pairs ``(j, j+1)``, ``j < L-1``, under
    ``nu_omega``: prefixes of length ``L`` weighted by ``exp S_n f`` and
    restricted to those that reach symbol ``a`` at position ``k``."""
    m = sys.alphabet_size
    with np.errstate(divide="ignore"):
        logA = [np.log(sys.trans[sys.th(omega, i)].astype(float)) for i in range(L - 1)]
    vals = np.where(np.isfinite(f.values), f.values, 0.0)
    g = [vals[sys.th(omega, i)] if i < n else np.zeros(m) for i in range(L)]
    start = np.where(sys.active[omega], 0.0, -np.inf)
    reach = sys.transfer_product(omega, L - 1, k)[:, a]
    end = np.where(reach, 0.0, -np.inf)
    fwd = [start + g[0]]
    for i in range(L - 1):
        fwd.append(_lse_cols(fwd[-1][:, None] + logA[i]) + g[i + 1])
    bwd = [None] * L
    bwd[L - 1] = end
    for i in range(L - 2, -1, -1):
        bwd[i] = _lse_rows(logA[i] + (g[i + 1] + bwd[i + 1])[None, :])
    logZ = logsumexp(fwd[L - 1] + end)
    out = []
    for i in range(L - 1):
        lp = fwd[i][:, None] + logA[i] + (g[i + 1] + bwd[i + 1])[None, :] - logZ
        out.append(np.exp(lp))
    return out


def _lse_cols(M):
    top = M.max(axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(top), safe + np.log(np.exp(M - safe).sum(axis=0)), -np.inf)


def _lse_rows(M):
    return _lse_cols(M.T)


def _extract_cylinders(sys, f, n, t, k, anchors):
    if sys.kind != "sft" or f.window != 1 or t < 2:
        raise InputError("cylinder mode needs a symbolic system, window 1 and t >= 2")
    L = n + t - 1
    if k < L:
        raise InputError("cylinder mode needs k >= n + t - 1")
    Om = sys.base.omega_count
    laws = {w: _prefix_pair_laws(sys, f, w, n, L, k, anchors[w].word[0]) for w in range(Om)}
    m = sys.alphabet_size
    nu_pairs = np.array([laws[w][0] for w in range(Om)])
    mu_pairs = np.zeros((Om, m, m))
    for w2 in range(Om):
        for j in range(n):
            mu_pairs[w2] += laws[sys.th(w2, -j)][j]
        mu_pairs[w2] /= n
    nu = EmpiricalMeasure(sys, pairs=nu_pairs)
    mu = EmpiricalMeasure(sys, pairs=mu_pairs)
    return CandidateMeasures(nu, mu, fit_markov(sys, mu_pairs))


def measure_from_json(obj, sys):
    if sys.kind == "sft":
        mu = RandomMarkovMeasure.from_json(obj, sys.base)
        if mu.alphabet_size != sys.alphabet_size:
            raise InputError("measure alphabet does not match the system")
        return mu
    return ExplicitMeasure.from_json(obj, sys)
