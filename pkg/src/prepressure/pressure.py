"""Fiberwise partition functions and the finite-n pre-image pressure.

The partition function of ``(omega, n, eps)``-separated subsets of the
pre-image set ``(T_omega^k)^{-1} x`` is evaluated either by enumerating the
pre-image set (``backend="enumerate"``) or, for symbolic systems, by a
log-space transfer recursion over prefix windows (``backend="dp"``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .base_space import BaseSpace
from .bundle_system import (
    ENUMERATION_CAP,
    ExplicitFiniteSystem,
    Observable,
    RandomSFTSystem,
    SymbolicPoint,
    require_valid,
)
from .errors import CapacityError, InputError, InternalError
from .logspace import logsumexp
from .separated import SeparationInstance, bnb_max_weight

NEG_INF = -math.inf


@dataclass(frozen=True)
class PressureParams:
    n: int
    t: int
    k_window: tuple[int, ...]
    anchor_policy: str = "auto"
    backend: str = "dp"

    def check(self):
        if self.n < 1 or self.t < 1:
            raise InputError("n and t must be >= 1")
        if not self.k_window:
            raise InputError("k_window is empty")
        if any(k < self.n for k in self.k_window):
            raise InputError("every k in k_window must satisfy k >= n")
        if self.backend not in ("dp", "enumerate"):
            raise InputError(f"unknown backend {self.backend!r}")
        if self.anchor_policy not in ("auto", "shared", "per_omega"):
            raise InputError(f"unknown anchor policy {self.anchor_policy!r}")


def default_k_window(n: int, t: int, k_depth: int) -> tuple[int, ...]:
    """``n .. n + t - 1 + k_depth``: every k >= n up to ``k_depth`` past the dp minimum."""
    return tuple(range(n, n + t - 1 + k_depth + 1))


def resolve_policy(sys, policy: str) -> str:
    if policy == "auto":
        return "shared" if sys.kind == "sft" else "per_omega"
    return policy


# --------------------------------------------------------------------------
# symbolic dp


class _WindowSpace:
    """Window states of length ``W`` over an alphabet of size ``m``."""

    def __init__(self, m: int, W: int):
        self.m, self.W = m, W
        self.size = m ** W
        idx = np.arange(self.size)
        self.last = idx % m
        self.first = idx // (m ** (W - 1))
        if W == 1:
            self.shift_ok = np.ones((self.size, self.size), dtype=bool)
        else:
            self.shift_ok = (idx[:, None] % (m ** (W - 1))) == (idx[None, :] // m)


_WS_CACHE: dict = {}


def _ws(m, W):
    key = (m, W)
    if key not in _WS_CACHE:
        _WS_CACHE[key] = _WindowSpace(m, W)
    return _WS_CACHE[key]


def prefix_log_weights(sys: RandomSFTSystem, f: Observable, omega: int, n: int, L: int) -> np.ndarray:
    """Forward messages over final windows of admissible length-``L`` words.

    Entry ``w`` is ``log sum exp S_n f(p)`` over admissible words ``p`` of
    length ``L`` at ``omega`` whose last ``W`` symbols form window ``w``.
    Requires ``L >= n + W - 1`` so every weight is determined by ``p``.
    """
    W = f.window
    if L < n + W - 1:
        raise InputError(f"prefix length {L} cannot determine S_{n} f with window {W}")
    ws = _ws(sys.alphabet_size, W)
    vals = np.where(np.isfinite(f.values), f.values, 0.0)
    start_words = sys.admissible_words(omega, W)
    alpha0 = np.full(ws.size, NEG_INF)
    idx0 = sys.window_index(start_words, 0, W)
    alpha0[idx0] = vals[omega, idx0] if n >= 1 else 0.0
    steps = L - W
    if steps == 0:
        return alpha0
    masks = np.empty((steps, ws.size, ws.size), dtype=np.uint8)
    adds = np.zeros((steps, ws.size))
    for s in range(steps):
        # window at position s -> window at position s+1
        A = sys.trans[sys.th(omega, s + W - 1)].astype(bool)
        masks[s] = ws.shift_ok & A[ws.last[:, None], ws.last[None, :]]
        if s + 1 < n:
            adds[s] = vals[sys.th(omega, s + 1)]
    return kernels.lse_chain(alpha0, masks, adds)


def _dp_case(n, t, k, W):
    if t >= W and k >= n + t - 1:
        return "classes"
    if k < n + t - 1 and n + W - 1 <= k:
        return "singletons"
    return None


def _dp_log_partition(sys, f, omega, n, t, k, symbols, alpha_cache=None):
    """Log partition functions for anchors starting with each of ``symbols``."""
    W = f.window
    case = _dp_case(n, t, k, W)
    if case is None:
        raise InputError("dp preconditions unmet")
    L = n + t - 1 if case == "classes" else n + W - 1
    key = (omega, n, L)
    if alpha_cache is not None and key in alpha_cache:
        alpha = alpha_cache[key]
    else:
        alpha = prefix_log_weights(sys, f, omega, n, L)
        if alpha_cache is not None:
            alpha_cache[key] = alpha
    ws = _ws(sys.alphabet_size, W)
    out = []
    if case == "classes":
        R = sys.transfer_product(omega, L - 1, k)
        for a in symbols:
            ok = R[ws.last, a]
            out.append(logsumexp(alpha[ok]) if ok.any() else NEG_INF)
    else:
        N = sys.transfer_product(omega, L - 1, k, counts=True)
        for a in symbols:
            cnt = np.array([float(N[s, a]) for s in ws.last])
            ok = cnt > 0
            out.append(logsumexp(alpha[ok] + np.log(cnt[ok])) if ok.any() else NEG_INF)
    return out


def _sft_log_weights(sys, f, omega, words, n) -> np.ndarray:
    W = f.window
    lw = np.zeros(words.shape[0])
    for i in range(n):
        idx = sys.window_index(words, i, W)
        lw += f.values[sys.th(omega, i), idx]
    return lw


def _enumerate_sft(sys, f, omega, n, t, k, x: SymbolicPoint, cap=ENUMERATION_CAP):
    need = max(n + f.window - 1, n + t - 1) - k
    if len(x.word) < need:
        raise InputError(f"anchor stores {len(x.word)} symbols, the weights read {need} past the pre-image word")
    try:
        words = sys.admissible_words(omega, k, last_to=(k - 1, x.word[0]), cap=cap)
    except CapacityError as exc:
        raise CapacityError(str(exc), where=(omega, k, x.word[0])) from exc
    if words.shape[0] == 0:
        raise InternalError(f"empty pre-image set at omega={omega}, k={k}")
    full = np.concatenate([words, np.broadcast_to(np.array(x.word), (words.shape[0], len(x.word)))], axis=1)
    lw = _sft_log_weights(sys, f, omega, full, n)
    # rows are lexicographic, so each prefix class is a contiguous run
    L = n + t - 1
    pre = full[:, :L]
    starts = np.concatenate([[0], np.nonzero((pre[1:] != pre[:-1]).any(axis=1))[0] + 1])
    return logsumexp(np.maximum.reduceat(lw, starts))


# --------------------------------------------------------------------------
# explicit


class _ExplicitTables:
    def __init__(self, sys: ExplicitFiniteSystem, f: Observable, horizon: int):
        self.sums = sys.prefix_sums(f, horizon)
        self.bowen = [sys.bowen_table(w, horizon) for w in range(sys.base.omega_count)]
        self.horizon = horizon


def _explicit_log_partition(sys, f, omega, n, t, k, x, tables=None):
    if tables is None or tables.horizon < n:
        tables = _ExplicitTables(sys, f, n)
    ys = np.nonzero(sys.image(omega, k) == int(x))[0]
    if ys.size == 0:
        raise InternalError(f"empty pre-image set at omega={omega}, k={k}, x={x}")
    lw = tables.sums[omega][ys, n]
    if ys.size == 1:
        return float(lw[0])
    eps = sys.epsilon(t)
    C = tables.bowen[omega][n][np.ix_(ys, ys)] <= eps
    np.fill_diagonal(C, False)
    if not C.any():
        return logsumexp(lw)
    inst = SeparationInstance(sys, omega, n, t, [int(y) for y in ys], lw)
    try:
        return bnb_max_weight(inst, conflicts=C).log_value
    except CapacityError as exc:
        raise CapacityError(str(exc), where=(omega, k, int(x))) from exc


# --------------------------------------------------------------------------
# public operations


def log_partition_function(sys, f: Observable, omega: int, n: int, t: int, k: int, x, backend: str = "dp") -> float:
    """``log`` of the max over separated subsets of the pre-image set of ``sum exp S_n f``."""
    if k < n:
        raise InputError("the partition function needs k >= n")
    if sys.kind == "explicit":
        target = sys.th(omega, k)
        if not 0 <= int(x) < sys.fiber_sizes[target]:
            raise InputError(f"anchor {x} is not a point of fiber {target}")
        return _explicit_log_partition(sys, f, omega, n, t, k, x)
    if not isinstance(x, SymbolicPoint) or x.owner != sys.th(omega, k):
        raise InputError(f"anchor must be a symbolic point of fiber {sys.th(omega, k)}")
    if not sys.is_admissible(x.owner, x.word):
        raise InputError("anchor word is not admissible in its fiber")
    if backend == "dp" and _dp_case(n, t, k, f.window) is not None:
        return _dp_log_partition(sys, f, omega, n, t, k, [x.word[0]])[0]
    if backend not in ("dp", "enumerate"):
        raise InputError(f"unknown backend {backend!r}")
    return _enumerate_sft(sys, f, omega, n, t, k, x)


def partition_function(sys, f, omega, n, t, k, x, backend="dp") -> float:
    return math.exp(log_partition_function(sys, f, omega, n, t, k, x, backend))


@dataclass
class PressureRow:
    n: int
    t: int
    value: float
    integrated: float
    k_star: int
    anchor_star: object
    breakdown: dict = field(default_factory=dict, repr=False)


def _anchor_candidates(sys, policy, k):
    """Anchors per fiber ``theta^k omega``; shared policy returns one common list."""
    if sys.kind == "sft":
        if policy == "shared":
            common = np.nonzero(sys.active.all(axis=0))[0].tolist()
            if not common:
                raise InputError("no symbol occurs in every fiber; use the per_omega anchor policy")
            return common
        return {w: np.nonzero(sys.active[sys.th(w, k)])[0].tolist() for w in range(sys.base.omega_count)}
    if policy == "shared":
        return list(range(min(sys.fiber_sizes)))
    return {w: list(range(sys.fiber_sizes[sys.th(w, k)])) for w in range(sys.base.omega_count)}


def _log_partitions(sys, f, params, k, omega, anchors, ctx):
    n, t = params.n, params.t
    if sys.kind == "explicit":
        return [_explicit_log_partition(sys, f, omega, n, t, k, a, ctx["tables"]) for a in anchors]
    if params.backend == "dp" and _dp_case(n, t, k, f.window) is not None:
        return _dp_log_partition(sys, f, omega, n, t, k, anchors, ctx["alpha"])
    target = sys.th(omega, k)
    length = t + f.window
    return [_enumerate_sft(sys, f, omega, n, t, k, sys.anchor(target, a, length)) for a in anchors]


def finite_n_pressure(sys, f: Observable, params: PressureParams, _ctx=None) -> PressureRow:
    """``(1/n) max_k max_x sum_omega P(omega) log Z_omega(n, t, k, x)``."""
    params.check()
    policy = resolve_policy(sys, params.anchor_policy)
    prob = sys.base.prob_array()
    ctx = _ctx if _ctx is not None else {}
    ctx.setdefault("alpha", {})
    if sys.kind == "explicit" and ("tables" not in ctx or ctx["tables"].horizon < params.n):
        ctx["tables"] = _ExplicitTables(sys, f, params.n)
    Om = sys.base.omega_count
    best = None
    breakdown = {}
    for k in params.k_window:
        cands = _anchor_candidates(sys, policy, k)
        if policy == "shared":
            table = np.array([_log_partitions(sys, f, params, k, w, cands, ctx) for w in range(Om)])
            # table[omega, anchor]
            for j, a in enumerate(cands):
                col = table[:, j]
                integ = float(np.dot(prob, col)) if np.all(np.isfinite(col[prob > 0])) else NEG_INF
                breakdown[(k, a)] = col.tolist()
                if best is None or integ > best[0]:
                    best = (integ, k, a)
        else:
            integ = 0.0
            chosen = []
            for w in range(Om):
                logs = _log_partitions(sys, f, params, k, w, cands[w], ctx)
                j = int(np.argmax(logs))
                chosen.append(cands[w][j])
                breakdown[(k, w)] = dict(zip(cands[w], logs))
                integ += prob[w] * logs[j]
            if best is None or integ > best[0]:
                best = (float(integ), k, tuple(chosen))
    integ, k_star, a_star = best
    return PressureRow(params.n, params.t, integ / params.n, integ, k_star, a_star, breakdown)


@dataclass
class PressureReport:
    t: int
    rows: list
    fit_a: float
    fit_b: float
    fit_ns: tuple

    @property
    def value(self) -> float:
        return self.fit_a

    @property
    def curve(self) -> dict:
        return {r.n: r.value for r in self.rows}

    def csv_rows(self):
        for r in self.rows:
            anchor = r.anchor_star if not isinstance(r.anchor_star, tuple) else " ".join(map(str, r.anchor_star))
            yield [r.n, r.t, r.k_star, anchor, r.value]

    def to_json(self, verbose: bool = False) -> dict:
        rows = []
        for r in self.rows:
            row = {"n": r.n, "t": r.t, "k_star": r.k_star,
                   "anchor_star": list(r.anchor_star) if isinstance(r.anchor_star, tuple) else r.anchor_star,
                   "integrated": r.integrated, "value": r.value}
            if verbose:
                row["breakdown"] = [
                    {"k": key[0], "anchor_or_omega": key[1],
                     "log_partition": val if isinstance(val, list) else {str(a): v for a, v in val.items()}}
                    for key, val in r.breakdown.items()
                ]
            rows.append(row)
        return {"t": self.t, "extrapolated": self.fit_a, "fit_b": self.fit_b,
                "fit_n": list(self.fit_ns), "rows": rows}


def fit_inverse_n(ns, values) -> tuple[float, float]:
    """Least squares ``v(n) = a + b / n``."""
    ns = np.asarray(ns, dtype=float)
    X = np.column_stack([np.ones_like(ns), 1.0 / ns])
    coef, *_ = np.linalg.lstsq(X, np.asarray(values, dtype=float), rcond=None)
    return float(coef[0]), float(coef[1])


def check_n_list(n_list) -> list[int]:
    ns = [int(n) for n in n_list]
    if len(ns) < 3:
        raise InputError("need ≥ 3 n values")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("n_list must be strictly increasing")
    if ns[0] < 1:
        raise InputError("n values must be positive")
    return ns


def pressure_curve(sys, f: Observable, t: int, n_list, k_depth: int = 4, backend: str = "dp",
                   anchor_policy: str = "auto", jobs: int = 1) -> PressureReport:
    """Finite-n pressures over ``n_list`` and the ``a + b/n`` extrapolation.

    The fit uses the larger half of ``n_list``; ``fit_a`` is the reported
    estimate of the pressure at scale ``metric_base ** t``.
    """
    ns = check_n_list(n_list)
    if t < 1 or k_depth < 0:
        raise InputError("need t >= 1 and k_depth >= 0")
    require_valid(sys, f)
    tables = _ExplicitTables(sys, f, ns[-1]) if sys.kind == "explicit" else None

    def one(n):
        params = PressureParams(n, t, default_k_window(n, t, k_depth), anchor_policy, backend)
        ctx = {"alpha": {}} if tables is None else {"alpha": {}, "tables": tables}
        return finite_n_pressure(sys, f, params, _ctx=ctx)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, ns))
    else:
        rows = [one(n) for n in ns]
    half = ns[len(ns) - (len(ns) + 1) // 2:]
    vals = [r.value for r in rows if r.n in half]
    a, b = fit_inverse_n(half, vals)
    return PressureReport(t, rows, a, b, tuple(half))


def entropy_curve(sys, t, n_list, k_depth=4, backend="dp", anchor_policy="auto", jobs=1) -> PressureReport:
    """Pre-image topological entropy: the pressure pipeline at ``f = 0``."""
    return pressure_curve(sys, Observable.zero(sys), t, n_list, k_depth, backend, anchor_policy, jobs)


def pressure_vs_t(sys, f, t_list, n_list, k_depth=4, backend="dp", anchor_policy="auto", jobs=1) -> dict:
    """Extrapolated pressure per separation exponent ``t`` (scale ``metric_base**t``)."""
    return {t: pressure_curve(sys, f, t, n_list, k_depth, backend, anchor_policy, jobs).fit_a for t in t_list}


# --------------------------------------------------------------------------
# power rule


def power_transform(sys, f: Observable, m: int):
    """System ``T^m`` over ``theta^m`` with the observable ``S_m f``."""
    if m < 1:
        raise InputError("m must be >= 1")
    if m == 1:
        return sys, f
    b = sys.base
    base_m = BaseSpace(b.omega_count, tuple(sys.th(w, m) for w in range(b.omega_count)), b.prob)
    if sys.kind == "explicit":
        maps = [sys.image(w, m) for w in range(b.omega_count)]
        sums = sys.prefix_sums(f, m)
        vals = np.full(f.values.shape, math.nan)
        for w in range(b.omega_count):
            vals[w, : sys.fiber_sizes[w]] = sums[w][:, m]
        new = ExplicitFiniteSystem(base_m, sys.fiber_sizes, maps, sys.metric, sys.metric_base)
        return new, Observable(1, vals)
    blocks = sorted({tuple(int(s) for s in row) for w in range(b.omega_count)
                     for row in sys.admissible_words(w, m)})
    index = {blk: i for i, blk in enumerate(blocks)}
    M = len(blocks)
    ok = np.zeros((b.omega_count, M), dtype=bool)
    for w in range(b.omega_count):
        for row in sys.admissible_words(w, m):
            ok[w, index[tuple(int(s) for s in row)]] = True
    trans = np.zeros((b.omega_count, M, M), dtype=np.uint8)
    for w in range(b.omega_count):
        A_join = sys.trans[sys.th(w, m - 1)]
        nxt = sys.th(w, m)
        for i, B in enumerate(blocks):
            if not ok[w, i]:
                continue
            for j, C in enumerate(blocks):
                if ok[nxt, j] and A_join[B[-1], C[0]]:
                    trans[w, i, j] = 1
    new = RandomSFTSystem(base_m, trans, sys.metric_base)
    W = f.window
    Wb = -(-(m + W - 1) // m)
    vals = np.full((b.omega_count, M ** Wb), math.nan)
    for w in range(b.omega_count):
        for combo in np.ndindex(*(M,) * Wb):
            word = tuple(s for c in combo for s in blocks[c])
            if not sys.is_admissible(w, word):
                continue
            total = 0.0
            for i in range(m):
                total += f.values[sys.th(w, i), _word_idx(word[i:i + W], sys.alphabet_size)]
            idx = 0
            for c in combo:
                idx = idx * M + c
            vals[w, idx] = total
    return new, Observable(Wb, vals)


def _word_idx(word, m):
    idx = 0
    for s in word:
        idx = idx * m + s
    return idx


def block_alphabet(sys: RandomSFTSystem, m: int) -> list[tuple[int, ...]]:
    """Blocks of the recoded alphabet used by :func:`power_transform`, in symbol order."""
    return sorted({tuple(int(s) for s in row) for w in range(sys.base.omega_count)
                   for row in sys.admissible_words(w, m)})
