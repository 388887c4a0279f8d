"""Independent oracles and the two-sided variational check.

The oracles here share no numerics with the pressure pipeline: the
symbolic oracle uses power iteration on weighted transfer matrices, and the
finite-fiber oracle runs Karp's maximum cycle mean in exact rational
arithmetic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bundle_system import ExplicitFiniteSystem, Observable, RandomSFTSystem, require_valid
from .errors import InputError, InternalError, OracleUnavailable
from .measures import (
    ExplicitMeasure,
    RandomMarkovMeasure,
    extract_candidate_measure,
    integral_f,
    preimage_metric_entropy,
)
from .pressure import power_transform, pressure_curve

POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000

GAP_TOL = 0.02
UPPER_ORACLE_TOL = 0.03
LOWER_ORACLE_TOL = 0.02
POWER_RULE_TOL = 0.05

DEFAULT_SFT_N = (4, 8, 16, 24, 32, 48, 64)
DEFAULT_EXPLICIT_N = tuple(range(100, 201, 5))
ENTROPY_SCHEDULE = (8, 16, 24, 32)


# --------------------------------------------------------------------------
# oracles


def _weighted_matrix(sys: RandomSFTSystem, f: Observable, omega: int) -> np.ndarray:
    vals = np.where(np.isfinite(f.values[omega]), f.values[omega], 0.0)
    return sys.trans[omega].astype(float) * np.exp(vals)[:, None]


def _is_primitive(M: np.ndarray) -> bool:
    """Some power of the support of ``M`` (restricted to live states) is positive."""
    live = M.any(axis=1) | M.any(axis=0)
    B = (M[np.ix_(live, live)] > 0).astype(np.int64)
    s = B.shape[0]
    if s == 0:
        return False
    P = B.copy()
    # Wielandt bound on the primitivity exponent
    for _ in range((s - 1) ** 2 + 1):
        if P.all():
            return True
        P = ((P @ B) > 0).astype(np.int64)
    return bool(P.all())


def spectral_radius(M: np.ndarray) -> float:
    """Perron root by power iteration on a nonnegative primitive matrix."""
    if not _is_primitive(M):
        raise OracleUnavailable("transfer product is not primitive; power iteration has no unique limit")
    v = np.ones(M.shape[0])
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = M @ v
        norm = w.sum()
        if norm <= 0:
            raise OracleUnavailable("power iteration collapsed to zero")
        w = w / norm
        if abs(norm - lam) <= POWER_TOL * max(1.0, norm) and np.abs(w - v).max() <= POWER_TOL:
            return float(norm)
        v, lam = w, norm
    raise OracleUnavailable("power iteration did not converge")


def oracle_sft_pressure(sys: RandomSFTSystem, f: Observable) -> float:
    """Cycle-weighted ``(1/c) log rho(M_0 ... M_{c-1})`` with ``M(a, b) = A(a, b) e^{f(a)}``."""
    if sys.kind != "sft":
        raise InputError("the transfer oracle needs a symbolic system")
    if f.window != 1:
        raise OracleUnavailable("the transfer oracle takes symbol potentials (window 1)")
    total = 0.0
    prob = sys.base.prob
    for cyc in sys.base.cycles():
        M = np.identity(sys.alphabet_size)
        for w in cyc:
            M = M @ _weighted_matrix(sys, f, w)
        weight = sum(prob[w] for w in cyc)
        total += weight * math.log(spectral_radius(M)) / len(cyc)
    return total


def _skew_component(sys: ExplicitFiniteSystem, f: Observable, cyc):
    nodes = [(w, y) for w in cyc for y in range(sys.fiber_sizes[w])]
    index = {v: i for i, v in enumerate(nodes)}
    edges = []
    for (w, y), i in index.items():
        j = index[(sys.th(w, 1), int(sys.maps[w][y]))]
        edges.append((i, j, Fraction(float(f.values[w, y]))))
    return nodes, edges


def _karp(num_nodes: int, edges) -> Fraction:
    # D[k][v]: best weight of a walk with exactly k edges ending at v, from any start
    NEG = None
    D = [[Fraction(0)] * num_nodes]
    for _ in range(num_nodes):
        prev = D[-1]
        cur = [NEG] * num_nodes
        for u, v, wt in edges:
            if prev[u] is not NEG:
                cand = prev[u] + wt
                if cur[v] is NEG or cand > cur[v]:
                    cur[v] = cand
        D.append(cur)
    N = num_nodes
    best = None
    for v in range(N):
        if D[N][v] is NEG:
            continue
        worst = None
        for k in range(N):
            if D[k][v] is NEG:
                continue
            val = (D[N][v] - D[k][v]) / (N - k)
            if worst is None or val < worst:
                worst = val
        if worst is not None and (best is None or worst > best):
            best = worst
    if best is None:
        raise InternalError("skew-product graph has no cycle")
    return best


def oracle_max_cycle_mean(sys: ExplicitFiniteSystem, f: Observable) -> float:
    """Maximum mean weight of skew-product cycles, averaged over base cycles.

    Each base cycle carries its own skew-product component; its best cycle
    mean is weighted by the base mass of the component.
    """
    if sys.kind != "explicit":
        raise InputError("the cycle-mean oracle needs an explicit system")
    total = Fraction(0)
    for cyc in sys.base.cycles():
        nodes, edges = _skew_component(sys, f, cyc)
        weight = Fraction(sum(sys.base.prob[w] for w in cyc))
        total += weight * _karp(len(nodes), edges)
    return float(total)


def brute_force_cycle_mean(sys: ExplicitFiniteSystem, f: Observable) -> float:
    """Same quantity by listing every simple cycle; for small graphs only."""
    import networkx as nx

    total = 0.0
    for cyc in sys.base.cycles():
        nodes, edges = _skew_component(sys, f, cyc)
        G = nx.DiGraph()
        G.add_nodes_from(range(len(nodes)))
        wt = {}
        for u, v, w in edges:
            G.add_edge(u, v)
            wt[(u, v)] = w
        best = None
        for c in nx.simple_cycles(G):
            s = sum((wt[(c[i], c[(i + 1) % len(c)])] for i in range(len(c))), Fraction(0))
            mean = s / len(c)
            if best is None or mean > best:
                best = mean
        total += sum(sys.base.prob[w] for w in cyc) * float(best)
    return total


def gibbs_markov_measure(sys: RandomSFTSystem, f: Observable) -> RandomMarkovMeasure:
    """Markov measure built from right Perron vectors of the transfer products."""
    m = sys.alphabet_size
    Om = sys.base.omega_count
    Q = np.zeros((Om, m, m))
    for cyc in sys.base.cycles():
        Ms = {w: _weighted_matrix(sys, f, w) for w in cyc}
        P = np.identity(m)
        for w in cyc:
            P = P @ Ms[w]
        r = np.ones(m)
        for _ in range(POWER_MAX_ITER):
            r2 = P @ r
            r2 /= r2.sum()
            if np.abs(r2 - r).max() < POWER_TOL:
                r = r2
                break
            r = r2
        # r_w for w = cyc[0]; walk backwards so that M_w r_{theta w} is proportional to r_w
        rv = {cyc[0]: r}
        nxt = r
        for w in reversed(cyc[1:]):
            nxt = Ms[w] @ nxt
            nxt = nxt / nxt.sum()
            rv[w] = nxt
        for w in cyc:
            right = rv[sys.th(w, 1)]
            num = Ms[w] * right[None, :]
            rows = num.sum(axis=1)
            for a in range(m):
                if rows[a] > 0:
                    Q[w, a] = num[a] / rows[a]
    return RandomMarkovMeasure.from_transitions(sys.base, Q)


# --------------------------------------------------------------------------
# lower bound search


@dataclass
class Candidate:
    label: str
    entropy: float
    integral: float
    measure: object = field(repr=False)

    @property
    def total(self) -> float:
        return self.entropy + self.integral


def _objective(mu, f, schedule, k_offset):
    h = preimage_metric_entropy(mu, schedule, k_rule=lambda n: n + k_offset).value
    return h, integral_f(mu, f)


def _uniform_admissible(sys: RandomSFTSystem) -> np.ndarray:
    A = sys.trans.astype(float)
    rows = A.sum(axis=2, keepdims=True)
    return np.divide(A, rows, out=np.zeros_like(A), where=rows > 0)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u * idx > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


class _Ascent:
    """Projected coordinate ascent over the supported entries of each row."""

    def __init__(self, sys, f, schedule, k_offset, budget, step=1e-4, stop=1e-7):
        self.sys, self.f = sys, f
        self.schedule, self.k_offset = schedule, k_offset
        self.budget, self.step, self.stop = budget, step, stop
        self.evals = 0

    def value(self, Q):
        self.evals += 1
        mu = RandomMarkovMeasure.from_transitions(self.sys.base, Q)
        h, i = _objective(mu, self.f, self.schedule, self.k_offset)
        return h + i, h, i, mu

    def run(self, Q0):
        sys = self.sys
        Q = Q0.copy()
        best = self.value(Q)
        rows = [(w, a) for w in range(sys.base.omega_count) for a in range(sys.alphabet_size)
                if sys.trans[w, a].sum() > 1]
        rate = 0.05
        while self.evals < self.budget:
            gained = 0.0
            for w, a in rows:
                if self.evals >= self.budget:
                    break
                supp = np.nonzero(sys.trans[w, a])[0]
                grad = np.zeros(supp.size)
                for j, b in enumerate(supp):
                    Qp = Q.copy()
                    Qp[w, a, supp] = _project_simplex(Q[w, a, supp] + self.step * np.eye(supp.size)[j])
                    grad[j] = (self.value(Qp)[0] - best[0]) / self.step
                grad -= grad.mean()
                lr = rate
                while lr > 1e-6 and self.evals < self.budget:
                    Qn = Q.copy()
                    Qn[w, a, supp] = _project_simplex(Q[w, a, supp] + lr * grad)
                    cand = self.value(Qn)
                    if cand[0] > best[0]:
                        gained += cand[0] - best[0]
                        Q, best = Qn, cand
                        break
                    lr /= 2
            if gained < self.stop:
                break
        return best


@dataclass
class LowerBound:
    measure: object
    value: float
    entropy: float
    integral: float
    candidates: list
    evaluations: int
    entropy_tolerance: float


def lower_bound_search(sys, f: Observable, budget: int = 200, seed: int = 0, schedule=ENTROPY_SCHEDULE,
                       k_offset: int = 24, jobs: int = 1) -> LowerBound:
    """Best ``h_pre(mu) + int f dmu`` over Markov measures (symbolic) or the
    invariant polytope (finite fibers).

    Symbolic search seeds with the transfer-matrix Gibbs measure, the measure
    fitted from weighted separated sets, and the uniform admissible chain, in
    a seeded random order, then improves the best seed by projected ascent
    with finite-difference gradients. ``budget`` caps objective evaluations.
    """
    require_valid(sys, f)
    if sys.kind == "explicit":
        return _explicit_lower_bound(sys, f)
    seeds = []
    try:
        seeds.append(("gibbs", gibbs_markov_measure(sys, f).Q))
    except OracleUnavailable:
        pass
    if f.window == 1:
        cand = extract_candidate_measure(sys, f, 16, 2, mode="cylinders")
        seeds.append(("separated-sets", cand.fitted.Q))
    seeds.append(("uniform", _uniform_admissible(sys)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(seeds))
    seeds = [seeds[i] for i in order]

    def score(item):
        label, Q = item
        mu = RandomMarkovMeasure.from_transitions(sys.base, Q)
        h, i = _objective(mu, f, schedule, k_offset)
        return Candidate(label, h, i, mu)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cands = list(pool.map(score, seeds))
    else:
        cands = [score(s) for s in seeds]
    start = max(cands, key=lambda c: c.total)
    asc = _Ascent(sys, f, schedule, k_offset, budget)
    total, h, i, mu = asc.run(start.measure.Q)
    if total > start.total:
        cands.append(Candidate("ascent", h, i, mu))
    best = max(cands, key=lambda c: c.total)
    # residual mutual information between block and far future bounds the entropy error
    tol = abs(preimage_metric_entropy(best.measure, schedule, k_rule=lambda n: n + 2 * k_offset).value - best.entropy)
    return LowerBound(best.measure, best.total, best.entropy, best.integral, cands,
                      asc.evals + len(seeds), tol)


def _explicit_lower_bound(sys: ExplicitFiniteSystem, f: Observable) -> LowerBound:
    from scipy.optimize import linprog

    Om = sys.base.omega_count
    offs = np.concatenate([[0], np.cumsum(sys.fiber_sizes)])
    nv = int(offs[-1])
    c = np.zeros(nv)
    for w in range(Om):
        c[offs[w]:offs[w + 1]] = -sys.base.prob[w] * f.values[w, : sys.fiber_sizes[w]]
    A_eq, b_eq = [], []
    for w in range(Om):
        row = np.zeros(nv)
        row[offs[w]:offs[w + 1]] = 1.0
        A_eq.append(row)
        b_eq.append(1.0)
        nxt = sys.th(w, 1)
        for z in range(sys.fiber_sizes[nxt]):
            row = np.zeros(nv)
            for y in np.nonzero(sys.maps[w] == z)[0]:
                row[offs[w] + y] += 1.0
            row[offs[nxt] + z] -= 1.0
            A_eq.append(row)
            b_eq.append(0.0)
    res = linprog(c, A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    if res.status != 0:
        raise InternalError(f"invariant polytope search failed: {res.message}")
    vecs = [np.clip(res.x[offs[w]:offs[w + 1]], 0.0, None) for w in range(Om)]
    vecs = [v / v.sum() for v in vecs]
    mu = ExplicitMeasure(sys, vecs)
    integ = integral_f(mu, f)
    cand = Candidate("invariant-polytope", 0.0, integ, mu)
    return LowerBound(mu, integ, 0.0, integ, [cand], 1, 0.0)


# --------------------------------------------------------------------------
# reports


@dataclass
class GapReport:
    upper: float
    lower_best: float
    oracle: float | None
    candidates: list
    checks: dict
    tolerances: dict
    curve: dict
    entropy_tolerance: float = 0.0
    system_id: str = ""

    @property
    def gap_upper_lower(self) -> float:
        return self.upper - self.lower_best

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def case(self) -> str:
        if abs(self.gap_upper_lower) <= self.tolerances["upper_lower"]:
            return "sup attained within tolerance"
        return "lower bound certified only"

    def to_json(self) -> dict:
        return {
            "system": self.system_id,
            "upper": self.upper,
            "lower_best": self.lower_best,
            "oracle": self.oracle,
            "gap_upper_lower": self.gap_upper_lower,
            "gap_upper_oracle": None if self.oracle is None else self.upper - self.oracle,
            "gap_lower_oracle": None if self.oracle is None else self.lower_best - self.oracle,
            "case": self.case,
            "entropy_tolerance": self.entropy_tolerance,
            "tolerances": dict(self.tolerances),
            "checks": dict(self.checks),
            "passed": self.passed,
            "candidates": [{"id": c.label, "entropy": c.entropy, "integral": c.integral, "total": c.total}
                           for c in self.candidates],
            "curve": [{"n": n, "value": v} for n, v in sorted(self.curve.items())],
        }

    def csv_header(self):
        return ["system", "upper", "lower", "oracle", "gap_upper_lower", "gap_upper_oracle", "gap_lower_oracle", "pass"]

    def csv_row(self):
        o = self.oracle
        return [self.system_id, self.upper, self.lower_best, "" if o is None else o, self.gap_upper_lower,
                "" if o is None else self.upper - o, "" if o is None else self.lower_best - o,
                "pass" if self.passed else "fail"]


def explicit_upper_tolerance(f: Observable, t: int, k_depth: int, n_max: int) -> float:
    return 2.0 * f.max_abs() * (t + k_depth) / n_max


def variational_gap(sys, f: Observable, t: int = 2, n_list=None, k_depth: int = 4, budget: int = 200,
                    seed: int = 0, jobs: int = 1, system_id: str = "") -> GapReport:
    """Upper (pressure extrapolation), lower (best measure) and oracle, with checks.

    Failed checks are recorded in the report, never clamped or raised.
    """
    require_valid(sys, f)
    if n_list is None:
        n_list = DEFAULT_EXPLICIT_N if sys.kind == "explicit" else DEFAULT_SFT_N
    rep = pressure_curve(sys, f, t, n_list, k_depth, jobs=jobs)
    lb = lower_bound_search(sys, f, budget=budget, seed=seed, jobs=jobs)
    upper, lower = rep.fit_a, lb.value
    oracle = None
    try:
        oracle = oracle_max_cycle_mean(sys, f) if sys.kind == "explicit" else oracle_sft_pressure(sys, f)
    except OracleUnavailable:
        oracle = None
    checks = {"lower_le_upper": lower <= upper + GAP_TOL}
    tols = {"lower_le_upper": GAP_TOL, "upper_lower": UPPER_ORACLE_TOL}
    if oracle is not None:
        if sys.kind == "explicit":
            up_tol = explicit_upper_tolerance(f, t, k_depth, max(n_list))
            lo_tol = 1e-6
        else:
            up_tol, lo_tol = UPPER_ORACLE_TOL, LOWER_ORACLE_TOL
        tols["upper_oracle"] = up_tol
        tols["lower_oracle"] = lo_tol
        checks["upper_near_oracle"] = abs(upper - oracle) <= up_tol
        checks["lower_near_oracle"] = abs(lower - oracle) <= lo_tol
    return GapReport(upper, lower, oracle, lb.candidates, checks, tols, rep.curve,
                     lb.entropy_tolerance, system_id)


@dataclass
class PowerRuleReport:
    m: int
    base_value: float
    power_value: float
    tolerance: float

    @property
    def difference(self) -> float:
        return self.power_value - self.m * self.base_value

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= self.tolerance

    def to_json(self) -> dict:
        return {"m": self.m, "pressure": self.base_value, "power_pressure": self.power_value,
                "m_times_pressure": self.m * self.base_value, "difference": self.difference,
                "tolerance": self.tolerance, "passed": self.passed}


def power_rule_check(sys, f: Observable, m: int, t: int = 2, n_list=None, k_depth: int = 4,
                     jobs: int = 1) -> PowerRuleReport:
    """Compare the extrapolated pressure of ``(T^m, S_m f)`` with ``m`` times that of ``(T, f)``."""
    if m < 1:
        raise InputError("m must be >= 1")
    if n_list is None:
        n_list = DEFAULT_EXPLICIT_N if sys.kind == "explicit" else DEFAULT_SFT_N
    base = pressure_curve(sys, f, t, n_list, k_depth, jobs=jobs).fit_a
    if m == 1:
        return PowerRuleReport(1, base, base, POWER_RULE_TOL)
    sys_m, f_m = power_transform(sys, f, m)
    t_m = max(t, f_m.window)
    power = pressure_curve(sys_m, f_m, t_m, n_list, k_depth, jobs=jobs).fit_a
    return PowerRuleReport(m, base, power, POWER_RULE_TOL * m)

