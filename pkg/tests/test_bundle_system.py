import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import full_shift, golden_mean, swap_full_golden
from prepressure.base_space import BaseSpace
from prepressure.bundle_system import (
    ExplicitFiniteSystem,
    Observable,
    RandomSFTSystem,
    SymbolicPoint,
    birkhoff_sum,
    bowen_distance,
    observable_from_json,
    observable_to_json,
    preimage_set,
    require_valid,
    system_from_json,
    system_to_json,
)
from prepressure.errors import InputError


def brute_words(sys, omega, length):
    m = sys.alphabet_size
    return [w for w in itertools.product(range(m), repeat=length) if sys.is_admissible(omega, w)]


# -- symbolic fibers --------------------------------------------------------


@pytest.mark.parametrize("make", [full_shift, golden_mean, swap_full_golden])
@pytest.mark.parametrize("length", [1, 2, 5, 7])
def test_admissible_words_match_brute_force(make, length):
    sys = make()
    for w in range(sys.base.omega_count):
        got = [tuple(r) for r in sys.admissible_words(w, length)]
        assert got == brute_words(sys, w, length)


def test_golden_mean_word_counts_are_fibonacci():
    sys = golden_mean()
    counts = [sys.admissible_words(0, n).shape[0] for n in range(1, 10)]
    assert counts == [2, 3, 5, 8, 13, 21, 34, 55, 89]


def test_canonical_tail_is_lexmin_extension():
    sys = golden_mean()
    assert sys.canonical_tail(0, (1,), 5) == (1, 0, 0, 0, 0)
    assert sys.anchor(0, 1, 3).word == (1, 0, 0)


def test_transfer_product_counts_paths():
    sys = golden_mean()
    N = sys.transfer_product(0, 0, 5, counts=True)
    # entries of A^5 for the golden-mean matrix are Fibonacci numbers
    assert [[int(v) for v in row] for row in N] == [[8, 5], [5, 3]]
    R = sys.transfer_product(0, 0, 1)
    assert R.tolist() == [[True, True], [True, False]]


def test_preimage_set_of_golden_mean():
    sys = golden_mean()
    x = sys.anchor(0, 1, 3)
    pre = preimage_set(sys, 0, 3, x)
    # length-3 words ending in a symbol that may precede 1
    assert [p.word[:3] for p in pre] == [(0, 0, 0), (0, 1, 0), (1, 0, 0)]
    assert all(p.word[3:] == x.word for p in pre)


def test_preimage_set_on_swap_uses_fiber_matrices():
    sys = swap_full_golden()
    x = sys.anchor(0, 1, 2)  # theta^2(0) = 0
    words = [p.word[:2] for p in preimage_set(sys, 0, 2, x)]
    # step 0 uses the full matrix, step 1 the golden-mean matrix (1 -> 1 forbidden)
    assert words == [(0, 0), (1, 0)]


def test_bowen_distance_matches_its_definition():
    sys = full_shift()
    lam = sys.metric_base
    y = sys.point(0, (0, 1, 0, 1, 1, 0))
    z = sys.point(0, (0, 1, 0, 0, 1, 0))
    for n in range(1, 5):
        # max over shifts i < n of lam ** (first difference of the shifted points)
        direct = max(lam ** (3 - i) for i in range(n) if i <= 3)
        assert bowen_distance(sys, 0, n, y, z) == direct


@given(st.lists(st.integers(0, 1), min_size=8, max_size=8), st.lists(st.integers(0, 1), min_size=8, max_size=8),
       st.integers(1, 6))
def test_bowen_distance_symmetric_and_monotone(a, b, n):
    sys = full_shift()
    y, z = sys.point(0, a), sys.point(0, b)
    d = bowen_distance(sys, 0, n, y, z)
    assert d == bowen_distance(sys, 0, n, z, y)
    assert d <= bowen_distance(sys, 0, n + 1, y, z) or a == b
    assert (d == 0.0) == (a == b)


def test_bowen_distance_refuses_short_words():
    sys = full_shift()
    with pytest.raises(InputError):
        bowen_distance(sys, 0, 2, SymbolicPoint(0, (0, 1)), SymbolicPoint(0, (0, 1, 1)))


def test_birkhoff_sum_window_two():
    sys = full_shift()
    vals = np.array([[0.0, 1.0, 2.0, 3.0]])  # f(a, b) = 2a + b
    f = Observable(2, vals)
    y = sys.point(0, (1, 0, 1, 1))
    assert birkhoff_sum(sys, f, 0, y, 3) == 2.0 + 1.0 + 3.0
    with pytest.raises(InputError):
        birkhoff_sum(sys, f, 0, y, 4)


def test_sft_validation_names_dead_ends():
    bad = RandomSFTSystem(BaseSpace.single(), [[0, 1], [0, 0]])
    res = bad.validate()
    assert not res.ok
    assert any("all-zero" in v for v in res.violations)
    assert full_shift().validate().ok and swap_full_golden().validate().ok


def test_sft_rejects_bad_shapes():
    with pytest.raises(InputError):
        RandomSFTSystem(BaseSpace.cyclic(2), np.ones((3, 2, 2)))
    with pytest.raises(InputError):
        RandomSFTSystem(BaseSpace.single(), [[2, 1], [1, 1]])


def test_system_json_round_trip():
    for sys in (full_shift(), swap_full_golden()):
        back = system_from_json(system_to_json(sys))
        assert np.array_equal(back.trans, sys.trans) and back.base == sys.base
    with pytest.raises(InputError):
        system_from_json({"type": "sft"})
    with pytest.raises(InputError):
        system_from_json({"type": "torus", "base": {"omega_count": 1, "theta": [0], "prob": [1]}})


def test_observable_json_round_trip_and_validation():
    sys = golden_mean()
    f = Observable(2, [[0.5, -1.0, 2.0, math.nan]])
    back = observable_from_json(observable_to_json(f, sys), sys)
    assert np.array_equal(np.isnan(back.values), np.isnan(f.values))
    assert np.allclose(np.nan_to_num(back.values), np.nan_to_num(f.values))
    assert f.validate(sys).ok
    missing = Observable(2, [[0.5, math.nan, 2.0, math.nan]])
    assert not missing.validate(sys).ok
    with pytest.raises(InputError):
        require_valid(sys, missing)


# -- explicit fibers ---------------------------------------------------------


def test_explicit_validation():
    ok = ExplicitFiniteSystem(BaseSpace.single(), [3], [[1, 2, 0]])
    assert ok.validate().ok
    not_onto = ExplicitFiniteSystem(BaseSpace.single(), [3], [[1, 1, 0]])
    assert any("surjective" in v for v in not_onto.validate().violations)
    outside = ExplicitFiniteSystem(BaseSpace.single(), [2], [[0, 2]])
    assert any("outside" in v for v in outside.validate().violations)


def test_explicit_iterates_and_tables():
    sys = ExplicitFiniteSystem(BaseSpace.cyclic(2), [3, 3], [[1, 2, 0], [0, 2, 1]])
    f = Observable(1, [[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]])
    for y in range(3):
        orbit = sys.orbit(0, y, 4)
        assert sys.image(0, 3)[y] == sys.maps[0][sys.maps[1][sys.maps[0][y]]]
        S = sys.prefix_sums(f, 4)[0]
        assert S[y, 4] == pytest.approx(birkhoff_sum(sys, f, 0, y, 4))
        assert orbit[0] == y
    D = sys.bowen_table(0, 3)
    for y in range(3):
        for z in range(3):
            assert D[3, y, z] == bowen_distance(sys, 0, 3, y, z)
    assert preimage_set(sys, 0, 2, 1) == [int(np.nonzero(sys.image(0, 2) == 1)[0][0])]
