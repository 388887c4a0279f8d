"""Bundle random dynamical systems over a finite base.

Two backends share one functional surface:

* :class:`ExplicitFiniteSystem` -- finite fibers with tabulated maps and a
  per-fiber metric.
* :class:`RandomSFTSystem` -- random subshifts of finite type; the fiber over
  ``omega`` is the set of one-sided sequences admissible for
  ``A_omega, A_{theta omega}, ...`` and the fiber map is the left shift.

Points of symbolic fibers are finite words completed by the
lexicographically minimal admissible tail (:class:`SymbolicPoint`).
Operations read a declared prefix and raise :class:`InputError` when the
stored word is shorter; completion only happens through explicit calls to
:meth:`RandomSFTSystem.extend`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .base_space import BaseSpace, ValidationResult, theta_power, validate_base
from .errors import CapacityError, InputError

ENUMERATION_CAP = 10**6
TAIL_RULE = "lexmin"


@dataclass(frozen=True)
class SymbolicPoint:
    """A point of ``E_owner``: ``word`` followed by the canonical tail."""

    owner: int
    word: tuple[int, ...]
    tail_rule: str = TAIL_RULE

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))

    def __len__(self):
        return len(self.word)


# --------------------------------------------------------------------------
# symbolic backend


class RandomSFTSystem:
    """Random SFT given by per-omega 0/1 transition matrices.

    A symbol is *active* at ``omega`` when its row of ``A_omega`` is nonzero.
    Ordinary systems have every symbol active everywhere; block recodings
    produced by :func:`prepressure.pressure.power_transform` may carry
    symbols that never occur in some fibers.
    """

    kind = "sft"

    def __init__(self, base: BaseSpace, trans, metric_base: float = 0.5):
        A = np.asarray(trans)
        if A.ndim == 2:
            A = np.broadcast_to(A, (base.omega_count,) + A.shape)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] != base.omega_count:
            raise InputError(f"trans must have shape (omega_count, m, m), got {A.shape}")
        if not np.all((A == 0) | (A == 1)):
            raise InputError("transition matrices must be 0/1")
        self.base = base
        self.trans = np.ascontiguousarray(A, dtype=np.uint8)
        self.trans.setflags(write=False)
        self.alphabet_size = int(A.shape[1])
        self.metric_base = float(metric_base)
        self._reach_cache: dict = {}

    def __repr__(self):
        return f"RandomSFTSystem(omega_count={self.base.omega_count}, m={self.alphabet_size})"

    # -- structure ---------------------------------------------------------

    def th(self, omega: int, n: int) -> int:
        return theta_power(self.base, omega, n)

    def A(self, omega: int) -> np.ndarray:
        return self.trans[omega]

    @cached_property
    def active(self) -> np.ndarray:
        """Boolean ``(omega_count, m)`` table of symbols occurring at position 0."""
        return self.trans.any(axis=2)

    def validate(self) -> ValidationResult:
        v = list(validate_base(self.base).violations)
        if not 0.0 < self.metric_base < 1.0:
            v.append("metric_base must lie in (0, 1)")
        if v:
            return ValidationResult(tuple(v))
        for w in range(self.base.omega_count):
            A = self.trans[w]
            nxt = self.th(w, 1)
            act, act_next = self.active[w], self.active[nxt]
            if not act.any():
                v.append(f"A_{w} has no nonzero row")
                continue
            if np.any(A[:, ~act_next]):
                v.append(f"A_{w} leads into a symbol with an all-zero row of A_{nxt}")
            cols = A.any(axis=0)
            if np.any(act_next & ~cols):
                v.append(f"A_{w} has an all-zero column for a symbol active at {nxt}")
        return ValidationResult(tuple(v))

    def epsilon(self, t: int) -> float:
        return self.metric_base ** t

    # -- words -------------------------------------------------------------

    def is_admissible(self, omega: int, word) -> bool:
        word = tuple(word)
        if not word:
            return True
        if any(not 0 <= s < self.alphabet_size for s in word):
            return False
        if not self.active[omega, word[0]]:
            return False
        for i in range(len(word) - 1):
            if not self.trans[self.th(omega, i), word[i], word[i + 1]]:
                return False
        return True

    def canonical_tail(self, omega: int, word, length: int) -> tuple[int, ...]:
        """Lexicographically minimal admissible extension of ``word`` to ``length``."""
        out = list(word)
        if not out:
            out.append(int(np.argmax(self.active[omega])))
        while len(out) < length:
            A = self.trans[self.th(omega, len(out) - 1)]
            out.append(int(np.argmax(A[out[-1]])))
        return tuple(out)

    def point(self, omega: int, word) -> SymbolicPoint:
        word = tuple(int(s) for s in word)
        if not word:
            raise InputError("a symbolic point needs a nonempty word")
        if not self.is_admissible(omega, word):
            raise InputError(f"word {word} is not admissible in fiber {omega}")
        return SymbolicPoint(omega, word)

    def extend(self, pt: SymbolicPoint, length: int) -> SymbolicPoint:
        """Same point with its canonical tail materialised up to ``length``."""
        if len(pt.word) >= length:
            return pt
        return SymbolicPoint(pt.owner, self.canonical_tail(pt.owner, pt.word, length), pt.tail_rule)

    def anchor(self, omega: int, symbol: int, length: int = 1) -> SymbolicPoint:
        """Canonical point of ``E_omega`` starting with ``symbol``."""
        if not self.active[omega, symbol]:
            raise InputError(f"symbol {symbol} does not occur in fiber {omega}")
        return SymbolicPoint(omega, self.canonical_tail(omega, (symbol,), length))

    def shift(self, pt: SymbolicPoint, j: int = 1) -> SymbolicPoint:
        """``T^j`` of a point; needs a stored word longer than ``j``."""
        if len(pt.word) <= j:
            raise InputError(f"shift by {j} needs a word longer than {j}")
        return SymbolicPoint(self.th(pt.owner, j), pt.word[j:], pt.tail_rule)

    def transfer_product(self, omega: int, start: int, stop: int, counts: bool = False) -> np.ndarray:
        """Product ``A_{theta^start omega} ... A_{theta^{stop-1} omega}``.

        Boolean (reachability) unless ``counts`` is set, in which case exact
        integer path counts are returned as Python ints (object array).
        """
        m = self.alphabet_size
        key = (omega, start, stop, counts)
        hit = self._reach_cache.get(key)
        if hit is not None:
            return hit
        if counts:
            R = np.identity(m, dtype=object)
            for i in range(start, stop):
                R = R.dot(self.trans[self.th(omega, i)].astype(object))
        else:
            R = np.identity(m, dtype=bool)
            for i in range(start, stop):
                R = (R.astype(np.int64) @ self.trans[self.th(omega, i)].astype(np.int64)) > 0
        self._reach_cache[key] = R
        return R

    def admissible_words(self, omega: int, length: int, last_to=None, cap: int = ENUMERATION_CAP) -> np.ndarray:
        """All admissible words of ``length`` at ``omega`` in lexicographic order.

        With ``last_to=(j, s)`` only words whose last symbol can step to
        symbol ``s`` through ``A_{theta^{j} omega}`` are kept (``j`` is the
        position of the follow-up symbol minus one, normally ``length-1``).
        """
        m = self.alphabet_size
        if length == 0:
            return np.zeros((1, 0), dtype=np.int64)
        # backward feasibility so enumeration never builds dead ends
        if last_to is None:
            ok_end = np.ones(m, dtype=bool)
        else:
            j, s = last_to
            ok_end = self.trans[self.th(omega, j), :, s].astype(bool)
        feas = [None] * length
        feas[length - 1] = ok_end
        for i in range(length - 2, -1, -1):
            A = self.trans[self.th(omega, i)].astype(bool)
            feas[i] = (A & feas[i + 1][None, :]).any(axis=1)
        count = self._count_words(omega, length, ok_end)
        if count > cap:
            raise CapacityError(f"{count} words of length {length} exceed the enumeration cap {cap}",
                                where=(omega, length, last_to))
        first = np.nonzero(self.active[omega] & feas[0])[0]
        words = first.reshape(-1, 1).astype(np.int64)
        for i in range(1, length):
            A = self.trans[self.th(omega, i - 1)].astype(bool)
            allowed = A[words[:, -1]] & feas[i][None, :]
            rows, syms = np.nonzero(allowed)
            words = np.concatenate([words[rows], syms.reshape(-1, 1)], axis=1)
        return words

    def _count_words(self, omega, length, ok_end) -> int:
        v = np.array([int(b) for b in ok_end], dtype=object)
        for i in range(length - 2, -1, -1):
            v = self.trans[self.th(omega, i)].astype(object).dot(v)
        return int(sum(int(c) for c, a in zip(v, self.active[omega]) if a))

    def window_index(self, words: np.ndarray, start: int, W: int) -> np.ndarray:
        m = self.alphabet_size
        idx = np.zeros(words.shape[0], dtype=np.int64)
        for j in range(W):
            idx = idx * m + words[:, start + j]
        return idx


# --------------------------------------------------------------------------
# explicit backend


class ExplicitFiniteSystem:
    """Finite fibers ``E_omega = {0..size-1}`` with maps ``T_omega``.

    ``metric[omega]`` is a symmetric matrix on ``E_omega``; the discrete
    metric is used when none is given. The separation scale for exponent
    ``t`` is ``metric_base ** t``.
    """

    kind = "explicit"

    def __init__(self, base: BaseSpace, fiber_sizes, maps, metric=None, metric_base: float = 0.5):
        self.base = base
        self.fiber_sizes = tuple(int(s) for s in fiber_sizes)
        if len(self.fiber_sizes) != base.omega_count:
            raise InputError("fiber_sizes must have one entry per omega")
        if len(maps) != base.omega_count:
            raise InputError("maps must have one entry per omega")
        self.maps = tuple(np.asarray(mp, dtype=np.int64) for mp in maps)
        for w, mp in enumerate(self.maps):
            if mp.shape != (self.fiber_sizes[w],):
                raise InputError(f"map of fiber {w} has length {mp.shape}, expected {self.fiber_sizes[w]}")
        if metric is None:
            metric = [1.0 - np.identity(s) for s in self.fiber_sizes]
        self.metric = tuple(np.asarray(d, dtype=float) for d in metric)
        for w, d in enumerate(self.metric):
            if d.shape != (self.fiber_sizes[w],) * 2:
                raise InputError(f"metric of fiber {w} has shape {d.shape}")
        self.metric_base = float(metric_base)
        self._image_cache: dict = {}

    def __repr__(self):
        return f"ExplicitFiniteSystem(fibers={self.fiber_sizes})"

    def th(self, omega: int, n: int) -> int:
        return theta_power(self.base, omega, n)

    def epsilon(self, t: int) -> float:
        return self.metric_base ** t

    def validate(self) -> ValidationResult:
        v = list(validate_base(self.base).violations)
        if not 0.0 < self.metric_base < 1.0:
            v.append("metric_base must lie in (0, 1)")
        if v:
            return ValidationResult(tuple(v))
        for w in range(self.base.omega_count):
            s, mp = self.fiber_sizes[w], self.maps[w]
            nxt = self.th(w, 1)
            if s < 1:
                v.append(f"fiber {w} is empty")
                continue
            if np.any(mp < 0) or np.any(mp >= self.fiber_sizes[nxt]):
                v.append(f"T_{w} maps outside fiber {nxt}")
                continue
            if len(set(mp.tolist())) != self.fiber_sizes[nxt]:
                v.append(f"T_{w} is not surjective onto fiber {nxt}")
            d = self.metric[w]
            off = ~np.eye(s, dtype=bool)
            if not np.allclose(d, d.T, rtol=0, atol=0):
                v.append(f"metric of fiber {w} is not symmetric")
            if np.any(np.diag(d) != 0) or np.any(d[off] <= 0):
                v.append(f"metric of fiber {w} is not positive off the diagonal")
            if s >= 3:
                tri = d[:, :, None] + d[None, :, :] - d[:, None, :]
                if np.any(tri < -1e-12):
                    warnings.warn(f"metric of fiber {w} violates the triangle inequality", stacklevel=2)
        return ValidationResult(tuple(v))

    def image(self, omega: int, k: int) -> np.ndarray:
        """Array mapping each ``y`` in ``E_omega`` to ``T_omega^k y``."""
        key = (omega, k)
        hit = self._image_cache.get(key)
        if hit is not None:
            return hit
        if k == 0:
            img = np.arange(self.fiber_sizes[omega])
        else:
            prev = self.image(omega, k - 1)
            img = self.maps[self.th(omega, k - 1)][prev]
        img.setflags(write=False)
        self._image_cache[key] = img
        return img

    def orbit(self, omega: int, y: int, n: int) -> list[int]:
        out = [int(y)]
        w = omega
        for _ in range(n - 1):
            out.append(int(self.maps[w][out[-1]]))
            w = self.th(w, 1)
        return out

    def prefix_sums(self, f: "Observable", horizon: int) -> list[np.ndarray]:
        """Per-omega arrays ``S[omega][y, i] = S_i f(omega, y)`` for ``i <= horizon``."""
        out = []
        for w in range(self.base.omega_count):
            s = self.fiber_sizes[w]
            S = np.zeros((s, horizon + 1))
            pos = np.arange(s)
            ww = w
            for i in range(horizon):
                S[:, i + 1] = S[:, i] + f.values[ww, pos]
                pos = self.maps[ww][pos]
                ww = self.th(ww, 1)
            out.append(S)
        return out

    def bowen_table(self, omega: int, horizon: int) -> np.ndarray:
        """``D[n, y, z] = d_n^omega(y, z)`` for ``1 <= n <= horizon`` (``D[0] = 0``)."""
        s = self.fiber_sizes[omega]
        D = np.zeros((horizon + 1, s, s))
        pos = np.arange(s)
        w = omega
        for i in range(horizon):
            d = self.metric[w][np.ix_(pos, pos)]
            D[i + 1] = np.maximum(D[i], d)
            pos = self.maps[w][pos]
            w = self.th(w, 1)
        return D


# --------------------------------------------------------------------------
# observables


class Observable:
    """Locally constant potential: per-omega table over admissible windows.

    For symbolic systems ``values[omega, idx]`` holds ``f`` on the length-``W``
    window with base-``m`` index ``idx`` (first symbol most significant);
    for explicit systems ``W = 1`` and ``idx`` is the point. Entries for
    inadmissible windows are ``nan``.
    """

    def __init__(self, window: int, values):
        self.window = int(window)
        self.values = np.array(values, dtype=float)
        self.values.setflags(write=False)
        if self.window < 1:
            raise InputError("window must be positive")

    def __repr__(self):
        return f"Observable(window={self.window}, shape={self.values.shape})"

    @classmethod
    def constant(cls, sys, c: float = 0.0) -> "Observable":
        return cls(1, np.full(_table_shape(sys, 1), float(c)))

    @classmethod
    def zero(cls, sys) -> "Observable":
        return cls.constant(sys, 0.0)

    @classmethod
    def symbol_potential(cls, sys, per_symbol) -> "Observable":
        """``f(omega, y) = per_symbol[y_0]`` (or ``per_symbol[omega][y_0]``)."""
        arr = np.asarray(per_symbol, dtype=float)
        shape = _table_shape(sys, 1)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, shape)
        return cls(1, np.array(arr))

    def shifted(self, c: float) -> "Observable":
        return Observable(self.window, self.values + c)

    def value(self, sys, omega: int, window) -> float:
        idx = _window_idx(sys, window, self.window)
        v = self.values[omega, idx]
        if not np.isfinite(v):
            raise InputError(f"observable undefined on window {tuple(window)} at omega={omega}")
        return float(v)

    def sup_norm(self, omega: int) -> float:
        row = self.values[omega]
        return float(np.nanmax(np.abs(row)))

    def norm(self, sys) -> float:
        p = sys.base.prob_array()
        return float(sum(p[w] * self.sup_norm(w) for w in range(sys.base.omega_count)))

    def max_abs(self) -> float:
        return float(np.nanmax(np.abs(self.values)))

    def validate(self, sys) -> ValidationResult:
        v = []
        shape = _table_shape(sys, self.window)
        if self.values.shape != shape:
            return ValidationResult((f"observable table has shape {self.values.shape}, expected {shape}",))
        if sys.kind == "explicit":
            if self.window != 1:
                v.append("explicit observables use window 1")
            for w in range(sys.base.omega_count):
                if not np.all(np.isfinite(self.values[w, : sys.fiber_sizes[w]])):
                    v.append(f"observable missing a value on fiber {w}")
        else:
            for w in range(sys.base.omega_count):
                words = sys.admissible_words(w, self.window)
                idx = sys.window_index(words, 0, self.window)
                if not np.all(np.isfinite(self.values[w, idx])):
                    v.append(f"observable missing a value for an admissible window at omega={w}")
        return ValidationResult(tuple(v))


def _table_shape(sys, W):
    if sys.kind == "explicit":
        return (sys.base.omega_count, max(sys.fiber_sizes))
    return (sys.base.omega_count, sys.alphabet_size ** W)


def _window_idx(sys, window, W):
    if sys.kind == "explicit":
        return int(window if np.isscalar(window) else tuple(window)[0])
    window = tuple(window)
    if len(window) != W:
        raise InputError(f"window {window} does not have length {W}")
    idx = 0
    for s in window:
        idx = idx * sys.alphabet_size + int(s)
    return idx


def require_valid(sys, f: Observable | None = None) -> None:
    res = sys.validate()
    if not res.ok:
        raise InputError("invalid system: " + "; ".join(res.violations))
    if f is not None:
        res = f.validate(sys)
        if not res.ok:
            raise InputError("invalid observable: " + "; ".join(res.violations))


# --------------------------------------------------------------------------
# operations


def preimage_set(sys, omega: int, k: int, x):
    """All ``y`` in ``E_omega`` with ``T_omega^k y = x``.

    Explicit systems take and return point indices; symbolic systems take a
    :class:`SymbolicPoint` of ``E_{theta^k omega}`` and return points of
    ``E_omega`` in lexicographic order.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    target = sys.th(omega, k)
    if sys.kind == "explicit":
        if not 0 <= int(x) < sys.fiber_sizes[target]:
            raise InputError(f"point {x} is not in fiber {target}")
        img = sys.image(omega, k)
        return [int(y) for y in np.nonzero(img == int(x))[0]]
    if not isinstance(x, SymbolicPoint) or x.owner != target:
        raise InputError(f"x must be a symbolic point of fiber {target}")
    if not sys.is_admissible(target, x.word):
        raise InputError(f"x is not admissible in fiber {target}")
    words = sys.admissible_words(omega, k, last_to=(k - 1, x.word[0]))
    return [SymbolicPoint(omega, tuple(int(s) for s in u) + x.word, x.tail_rule) for u in words]


def birkhoff_sum(sys, f: Observable, omega: int, y, n: int) -> float:
    """``S_n f(omega, y) = sum_{i<n} f(theta^i omega, T^i y)``."""
    if n < 1:
        raise InputError("n must be >= 1")
    if sys.kind == "explicit":
        total = 0.0
        w, pos = omega, int(y)
        for _ in range(n):
            total += f.values[w, pos]
            pos = int(sys.maps[w][pos])
            w = sys.th(w, 1)
        return float(total)
    need = n + f.window - 1
    if y.owner != omega:
        raise InputError(f"point belongs to fiber {y.owner}, not {omega}")
    if len(y.word) < need:
        raise InputError(f"Birkhoff sum over {n} steps reads {need} symbols; point stores {len(y.word)}")
    total = 0.0
    for i in range(n):
        total += f.value(sys, sys.th(omega, i), y.word[i:i + f.window])
    return float(total)


def bowen_distance(sys, omega: int, n: int, y, z) -> float:
    """``d_n^omega(y, z) = max_{i<n} d(T^i y, T^i z)``.

    For symbolic fibers with first difference at index ``i`` this equals
    ``metric_base ** max(0, i - n + 1)``.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    if sys.kind == "explicit":
        best = 0.0
        w, a, b = omega, int(y), int(z)
        for _ in range(n):
            best = max(best, float(sys.metric[w][a, b]))
            a, b = int(sys.maps[w][a]), int(sys.maps[w][b])
            w = sys.th(w, 1)
        return best
    if y.owner != omega or z.owner != omega:
        raise InputError("both points must lie in the stated fiber")
    L = min(len(y.word), len(z.word))
    for i in range(L):
        if y.word[i] != z.word[i]:
            return sys.metric_base ** max(0, i - n + 1)
    if y.word == z.word:
        return 0.0
    raise InputError("stored prefixes agree on their common length; extend the points first")


def first_difference(y: SymbolicPoint, z: SymbolicPoint) -> int | None:
    for i, (a, b) in enumerate(zip(y.word, z.word)):
        if a != b:
            return i
    return None


# --------------------------------------------------------------------------
# JSON


def _per_omega(obj, count, name):
    if isinstance(obj, dict):
        try:
            return [obj[str(w)] if str(w) in obj else obj[w] for w in range(count)]
        except KeyError as exc:
            raise InputError(f"{name}: missing entry for omega {exc}") from exc
    if isinstance(obj, list) and len(obj) == count:
        return obj
    raise InputError(f"{name}: expected one entry per omega")


def system_from_json(obj):
    from .base_space import base_from_json

    if not isinstance(obj, dict) or "type" not in obj:
        raise InputError("system spec must be an object with a 'type' field")
    if "base" not in obj:
        raise InputError("system spec: missing 'base'")
    base = base_from_json(obj["base"])
    kind = obj["type"]
    mb = float(obj.get("metric_base", 0.5))
    if kind == "sft":
        if "trans" not in obj:
            raise InputError("sft spec: missing 'trans'")
        trans = _per_omega(obj["trans"], base.omega_count, "trans")
        return RandomSFTSystem(base, np.array(trans), metric_base=mb)
    if kind == "explicit":
        for key in ("fiber_sizes", "maps"):
            if key not in obj:
                raise InputError(f"explicit spec: missing '{key}'")
        sizes = _per_omega(obj["fiber_sizes"], base.omega_count, "fiber_sizes")
        maps = _per_omega(obj["maps"], base.omega_count, "maps")
        metric = _per_omega(obj["metric"], base.omega_count, "metric") if "metric" in obj else None
        return ExplicitFiniteSystem(base, sizes, maps, metric, metric_base=mb)
    raise InputError(f"unknown system type {kind!r}")


def system_to_json(sys) -> dict:
    from .base_space import base_to_json

    out = {"type": sys.kind, "base": base_to_json(sys.base), "metric_base": sys.metric_base}
    if sys.kind == "sft":
        out["trans"] = {str(w): sys.trans[w].tolist() for w in range(sys.base.omega_count)}
    else:
        out["fiber_sizes"] = list(sys.fiber_sizes)
        out["maps"] = {str(w): sys.maps[w].tolist() for w in range(sys.base.omega_count)}
        out["metric"] = {str(w): sys.metric[w].tolist() for w in range(sys.base.omega_count)}
    return out


def observable_from_json(obj, sys) -> Observable:
    if not isinstance(obj, dict) or "values" not in obj:
        raise InputError("observable spec must be an object with 'window' and 'values'")
    W = int(obj.get("window", 1))
    table = np.full(_table_shape(sys, W), math.nan)
    values = _per_omega(obj["values"], sys.base.omega_count, "observable values")
    for w, row in enumerate(values):
        if not isinstance(row, dict):
            raise InputError(f"observable values for omega {w} must map windows to numbers")
        for key, val in row.items():
            syms = [int(s) for s in str(key).split(",")]
            if len(syms) != W:
                raise InputError(f"observable window {key!r} at omega {w} has length {len(syms)}, expected {W}")
            idx = syms[0] if sys.kind == "explicit" else _window_idx(sys, syms, W)
            if not 0 <= idx < table.shape[1]:
                raise InputError(f"observable window {key!r} out of range")
            table[w, idx] = float(val)
    return Observable(W, table)


def observable_to_json(f: Observable, sys) -> dict:
    vals = {}
    for w in range(sys.base.omega_count):
        row = {}
        for idx in range(f.values.shape[1]):
            v = f.values[w, idx]
            if not np.isfinite(v):
                continue
            if sys.kind == "explicit":
                key = str(idx)
            else:
                syms, r = [], idx
                for _ in range(f.window):
                    syms.append(r % sys.alphabet_size)
                    r //= sys.alphabet_size
                key = ",".join(str(s) for s in reversed(syms))
            row[key] = float(v)
        vals[str(w)] = row
    return {"window": f.window, "values": vals}
