import itertools
import math

import numpy as np
import pytest
from hypothesis import settings

from prepressure.base_space import BaseSpace
from prepressure.bundle_system import ExplicitFiniteSystem, Observable, RandomSFTSystem
from prepressure.logspace import xlogx_entropy
from prepressure.measures import RandomMarkovMeasure
from prepressure.separated import SeparationInstance

settings.register_profile("repo", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("repo")

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
PHI = (1.0 + math.sqrt(5.0)) / 2.0
LOG_PHI = math.log(PHI)


def full_shift():
    return RandomSFTSystem(BaseSpace.single(), [[1, 1], [1, 1]])


def golden_mean():
    return RandomSFTSystem(BaseSpace.single(), [[1, 1], [1, 0]])


def swap_full_golden():
    return RandomSFTSystem(BaseSpace.cyclic(2), [[[1, 1], [1, 1]], [[1, 1], [1, 0]]])


def swap_full_full():
    return RandomSFTSystem(BaseSpace.cyclic(2), [[[1, 1], [1, 1]], [[1, 1], [1, 1]]])


def log2_on_one(sys):
    return Observable.symbol_potential(sys, [0.0, LOG2])


def random_explicit(seed, max_nodes=10):
    """Seeded explicit system with at most ``max_nodes`` skew-product nodes."""
    rng = np.random.default_rng(seed)
    omega_count = int(rng.integers(1, 3))
    base = BaseSpace.single() if omega_count == 1 else BaseSpace.cyclic(2)
    size = int(rng.integers(2, max_nodes // omega_count + 1))
    maps = [rng.permutation(size) for _ in range(omega_count)]
    sys = ExplicitFiniteSystem(base, [size] * omega_count, maps)
    f = Observable(1, rng.uniform(-1.0, 1.0, (omega_count, size)))
    return sys, f


@pytest.fixture
def full():
    return full_shift()


@pytest.fixture
def golden():
    return golden_mean()


@pytest.fixture
def swap():
    return swap_full_golden()


def brute_conditional(mu, omega, n, k):
    """H(xi_0..xi_{n-1} | xi_k) from the full joint table of xi_0..xi_k."""
    m = mu.alphabet_size
    joint_past_future = {}
    future = np.zeros(m)
    for seq in itertools.product(range(m), repeat=k + 1):
        pr = mu.p[omega][seq[0]]
        for i in range(k):
            pr *= mu.Q[mu.th(omega, i)][seq[i], seq[i + 1]]
        if pr == 0:
            continue
        key = (seq[:n], seq[k])
        joint_past_future[key] = joint_past_future.get(key, 0.0) + pr
        future[seq[k]] += pr
    return xlogx_entropy(list(joint_past_future.values())) - xlogx_entropy(future)


def two_state(a, b):
    """Stationary chain with flip probabilities a (from 0) and b (from 1)."""
    Q = np.array([[1 - a, a], [b, 1 - b]])
    p = np.array([b, a]) / (a + b) if a + b > 0 else np.array([0.5, 0.5])
    return RandomMarkovMeasure(BaseSpace.single(), p, Q)


def random_golden_measure(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.02, 0.98)
    return RandomMarkovMeasure.from_transitions(BaseSpace.single(), [[1 - q, q], [1.0, 0.0]])


def random_instance(seed, max_points=16):
    """Random points of one symbolic fiber with random symbol weights."""
    rng = np.random.default_rng(seed)
    sys = [full_shift, golden_mean, swap_full_golden][seed % 3]()
    omega = int(rng.integers(sys.base.omega_count))
    n, t = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    length = n + t + 2
    words = sys.admissible_words(omega, length)
    count = int(rng.integers(1, min(max_points, words.shape[0]) + 1))
    pick = rng.choice(words.shape[0], size=count, replace=False)
    pts = [sys.point(omega, words[i]) for i in sorted(pick)]
    f = Observable.symbol_potential(sys, rng.normal(size=sys.alphabet_size))
    return SeparationInstance.from_points(sys, f, omega, n, t, pts)


# -- acceptance summary ---------------------------------------------------------------

_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE.setdefault(number, []).append((ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        runs = _ACCEPTANCE[number]
        ok = all(flag for flag, _ in runs)
        failed = [d for flag, d in runs if not flag]
        detail = failed[0] if failed else runs[-1][1]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
