"""Finite base systems ``(Omega, P, theta)`` driving a bundle RDS."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InputError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class BaseSpace:
    """Finite probability space with an invertible measure-preserving map.

    Parameters
    ----------
    omega_count : int
        Number of base points.
    theta : tuple of int
        The permutation, ``theta[i]`` is the image of ``i``.
    prob : tuple of float
        Point masses of ``P``.
    """

    omega_count: int
    theta: tuple[int, ...]
    prob: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(int(v) for v in self.theta))
        object.__setattr__(self, "prob", tuple(float(v) for v in self.prob))

    @classmethod
    def single(cls) -> "BaseSpace":
        """One-point base: the deterministic case."""
        return cls(1, (0,), (1.0,))

    @classmethod
    def cyclic(cls, c: int) -> "BaseSpace":
        """Rotation ``i -> i+1 mod c`` with the uniform measure."""
        return cls(c, tuple((i + 1) % c for i in range(c)), tuple([1.0 / c] * c))

    @cached_property
    def _cycle_index(self):
        # position of each point inside its theta-cycle
        cycles = self.cycles()
        where = {}
        for ci, cyc in enumerate(cycles):
            for pos, i in enumerate(cyc):
                where[i] = (ci, pos)
        return cycles, where

    def cycles(self) -> list[tuple[int, ...]]:
        """Theta-cycles, each starting at its smallest index, ordered by that index."""
        seen = set()
        out = []
        for start in range(self.omega_count):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            j = self.theta[start]
            while j != start:
                if j in seen or not 0 <= j < self.omega_count:
                    raise InputError("theta is not a permutation")
                cyc.append(j)
                seen.add(j)
                j = self.theta[j]
            out.append(tuple(cyc))
        return out

    def theta_power(self, i: int, n: int) -> int:
        return theta_power(self, i, n)

    def prob_array(self) -> np.ndarray:
        return np.asarray(self.prob, dtype=float)


def validate_base(b: BaseSpace) -> ValidationResult:
    """Check the base invariants; violations are returned, never raised."""
    v = []
    n = b.omega_count
    if n < 1:
        v.append("omega_count must be positive")
        return ValidationResult(tuple(v))
    if len(b.theta) != n:
        v.append("theta has wrong length")
    elif sorted(b.theta) != list(range(n)):
        v.append("theta not a bijection")
    if len(b.prob) != n:
        v.append("prob has wrong length")
        return ValidationResult(tuple(v))
    p = np.asarray(b.prob)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        v.append("prob has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        v.append("P does not sum to 1")
    if "theta not a bijection" not in v and len(b.theta) == n:
        if any(abs(p[b.theta[i]] - p[i]) > PROB_TOL for i in range(n)):
            v.append("P not ϑ-invariant")
    return ValidationResult(tuple(v))


def require_valid_base(b: BaseSpace) -> None:
    res = validate_base(b)
    if not res.ok:
        raise InputError("invalid base space: " + "; ".join(res.violations))


def theta_power(b: BaseSpace, i: int, n: int) -> int:
    """Return ``theta^n(i)``; negative ``n`` walks the inverse permutation."""
    if not 0 <= i < b.omega_count:
        raise InputError(f"base index {i} out of range 0..{b.omega_count - 1}")
    cycles, where = b._cycle_index
    ci, pos = where[i]
    cyc = cycles[ci]
    return cyc[(pos + n) % len(cyc)]


def base_from_json(obj) -> BaseSpace:
    try:
        return BaseSpace(int(obj["omega_count"]), tuple(obj["theta"]), tuple(obj["prob"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"base: {exc}") from exc


def base_to_json(b: BaseSpace) -> dict:
    return {"omega_count": b.omega_count, "theta": list(b.theta), "prob": list(b.prob)}
