"""Maximum-cardinality and maximum-weight (omega, n, eps)-separated subsets.

Two exact algorithms:

* prefix classes (symbolic fibers): with ``eps = metric_base**t`` two points
  are separated iff their prefixes of length ``n + t - 1`` differ, so the
  conflict graph is a disjoint union of cliques;
* branch and bound on the conflict graph (any backend), exact up to
  :data:`COMPONENT_BUDGET` points per connected component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bundle_system import SymbolicPoint, birkhoff_sum, bowen_distance
from .errors import CapacityError, InputError, InternalError
from .logspace import logsumexp

COMPONENT_BUDGET = 24


@dataclass
class SeparationInstance:
    """Points of one fiber with their log-weights ``S_n f(omega, y)``."""

    sys: object
    omega: int
    n: int
    t: int
    points: list
    log_weights: np.ndarray

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.log_weights.shape != (len(self.points),):
            raise InputError("one log-weight per point is required")
        if self.t < 1 or self.n < 1:
            raise InputError("n and t must be >= 1")
        if self.sys.kind == "sft":
            for p in self.points:
                if not isinstance(p, SymbolicPoint) or p.owner != self.omega:
                    raise InputError("all points must lie in the instance fiber")

    @classmethod
    def from_points(cls, sys, f, omega, n, t, points) -> "SeparationInstance":
        lw = [birkhoff_sum(sys, f, omega, y, n) for y in points]
        return cls(sys, omega, n, t, list(points), np.array(lw))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def epsilon(self) -> float:
        return self.sys.epsilon(self.t)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SeparatedSubset:
    indices: tuple[int, ...]
    log_value: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def count(self) -> int:
        return len(self.indices)


def conflict_matrix(inst: SeparationInstance) -> np.ndarray:
    """``C[i, j]`` is True when ``d_n(y_i, y_j) <= eps`` for ``i != j``."""
    N = len(inst)
    eps = inst.epsilon
    C = np.zeros((N, N), dtype=bool)
    for i in range(N):
        for j in range(i + 1, N):
            d = bowen_distance(inst.sys, inst.omega, inst.n, inst.points[i], inst.points[j])
            C[i, j] = C[j, i] = d <= eps
    return C


def is_separated(inst: SeparationInstance, indices) -> bool:
    """Pairwise audit with :func:`bowen_distance` (no prefix shortcut)."""
    eps = inst.epsilon
    idx = list(indices)
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            d = bowen_distance(inst.sys, inst.omega, inst.n, inst.points[idx[a]], inst.points[idx[b]])
            if not d > eps:
                return False
    return True


def is_maximal(inst: SeparationInstance, indices, conflicts=None) -> bool:
    C = conflict_matrix(inst) if conflicts is None else conflicts
    chosen = set(indices)
    for j in range(len(inst)):
        if j not in chosen and not any(C[j, i] for i in chosen):
            return False
    return True


# -- prefix classes ---------------------------------------------------------


def prefix_classes(inst: SeparationInstance) -> np.ndarray:
    """Class label per point; labels follow lexicographic prefix order."""
    if inst.sys.kind != "sft":
        raise InputError("prefix classes need a symbolic system")
    L = inst.n + inst.t - 1
    if any(len(p.word) < L for p in inst.points):
        raise InputError(f"prefix classes read {L} symbols; extend the points first")
    if not inst.points:
        return np.zeros(0, dtype=np.int64)
    words = np.array([p.word[:L] for p in inst.points], dtype=np.int64)
    _, labels = np.unique(words, axis=0, return_inverse=True)
    return labels.reshape(-1)


def class_maxima(labels: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Index of the largest value in each class, lowest index on ties."""
    ncls = int(labels.max()) + 1 if labels.size else 0
    best = np.full(ncls, -1, dtype=np.int64)
    for i, (c, v) in enumerate(zip(labels, values)):
        b = best[c]
        if b < 0 or v > values[b]:
            best[c] = i
    return best


def _prefix_max_weight(inst, unit=False) -> SeparatedSubset:
    labels = prefix_classes(inst)
    vals = np.zeros(len(inst)) if unit else inst.log_weights
    pick = class_maxima(labels, vals)
    idx = tuple(sorted(int(i) for i in pick))
    if unit:
        return SeparatedSubset(idx, math.log(len(idx)) if idx else -math.inf)
    return SeparatedSubset(idx, logsumexp(inst.log_weights[pick]))


# -- branch and bound -------------------------------------------------------


def components(C: np.ndarray) -> list[list[int]]:
    N = C.shape[0]
    seen = np.zeros(N, dtype=bool)
    out = []
    for s in range(N):
        if seen[s]:
            continue
        comp, stack = [], [s]
        seen[s] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.nonzero(C[v] & ~seen)[0]:
                seen[u] = True
                stack.append(int(u))
        out.append(sorted(comp))
    return out


def bnb_max_weight(inst: SeparationInstance, conflicts=None, unit=False) -> SeparatedSubset:
    """Exact max-weight independent set of the conflict graph."""
    C = conflict_matrix(inst) if conflicts is None else conflicts
    chosen: list[int] = []
    comp_logs = []
    for comp in components(C):
        if len(comp) > COMPONENT_BUDGET:
            raise CapacityError(
                f"conflict component of {len(comp)} points exceeds the exact budget {COMPONENT_BUDGET}",
                where=(inst.omega, inst.n, inst.t),
            )
        if unit:
            w = np.ones(len(comp))
            shift = 0.0
        else:
            lw = inst.log_weights[comp]
            shift = float(lw.max())
            w = np.exp(lw - shift)
        pos = {v: i for i, v in enumerate(comp)}
        adj = []
        for v in comp:
            mask = 0
            for u in np.nonzero(C[v])[0]:
                if int(u) in pos:
                    mask |= 1 << pos[int(u)]
            adj.append(mask)
        best, bits = kernels.mwis_bitmask(w, adj)
        picked = [comp[i] for i in range(len(comp)) if bits >> i & 1]
        chosen.extend(picked)
        comp_logs.append(math.log(best) + shift)
    idx = tuple(sorted(chosen))
    if unit:
        return SeparatedSubset(idx, math.log(len(idx)) if idx else -math.inf)
    if not idx:
        return SeparatedSubset(idx, -math.inf)
    return SeparatedSubset(idx, logsumexp(comp_logs))


# -- public operations --------------------------------------------------------


def _resolve(inst, method):
    if method == "auto":
        return "prefix" if inst.sys.kind == "sft" else "bnb"
    if method not in ("prefix", "bnb"):
        raise InputError(f"unknown method {method!r}")
    return method


def max_weight_separated(inst: SeparationInstance, method: str = "auto") -> SeparatedSubset:
    """Separated subset maximising the total weight ``sum exp S_n f``."""
    if _resolve(inst, method) == "prefix":
        return _prefix_max_weight(inst)
    return bnb_max_weight(inst)


def max_cardinality_separated(inst: SeparationInstance, method: str = "auto") -> SeparatedSubset:
    """Largest separated subset; ``count`` is ``s_n`` of the point set."""
    if _resolve(inst, method) == "prefix":
        return _prefix_max_weight(inst, unit=True)
    return bnb_max_weight(inst, unit=True)


def extend_to_maximal(inst: SeparationInstance, subset: SeparatedSubset, conflicts=None) -> SeparatedSubset:
    """Greedy completion in index order; only ever adds weight."""
    if inst.sys.kind == "sft" and conflicts is None:
        labels = prefix_classes(inst)
        C = labels[:, None] == labels[None, :]
        np.fill_diagonal(C, False)
    else:
        C = conflict_matrix(inst) if conflicts is None else conflicts
    chosen = list(subset.indices)
    for j in range(len(inst)):
        if j in chosen:
            continue
        if not any(C[j, i] for i in chosen):
            chosen.append(j)
    idx = tuple(sorted(chosen))
    if idx == subset.indices:
        return subset
    return SeparatedSubset(idx, logsumexp(inst.log_weights[list(idx)]))


def near_maximal_family(instances, delta: float, method: str = "auto") -> dict:
    """Per-omega maximal separated sets within ``(1 - delta)`` of the optimum.

    The optimum itself is computed exactly, so the bound holds for every
    ``delta`` in ``(0, 1)``; ``delta`` is checked, not used to relax the search.
    """
    if not 0.0 < delta < 1.0:
        raise InputError("delta must lie in (0, 1)")
    items = instances.items() if isinstance(instances, dict) else enumerate(instances)
    out = {}
    for omega, inst in sorted(items, key=lambda kv: kv[0]):
        best = max_weight_separated(inst, method)
        full = extend_to_maximal(inst, best)
        if full.log_value < math.log1p(-delta) + best.log_value:
            raise InternalError("maximal completion lost weight")
        out[omega] = full
    return out
