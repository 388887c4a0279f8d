import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LOG2, LOG_PHI, full_shift, golden_mean, log2_on_one, swap_full_full, swap_full_golden
from prepressure.base_space import BaseSpace
from prepressure.bundle_system import ExplicitFiniteSystem, Observable, RandomSFTSystem, SymbolicPoint
from prepressure.errors import CapacityError, InputError
from prepressure.pressure import (
    PressureParams,
    block_alphabet,
    default_k_window,
    entropy_curve,
    finite_n_pressure,
    log_partition_function,
    partition_function,
    power_transform,
    pressure_curve,
    pressure_vs_t,
)

# frozen reference values (independent derivations in the comments)
FULL_SHIFT_N10_T2 = 0.7624618986159398  # (11/10) * log 2, distinct 11-prefixes
GOLDEN_ENTROPY = 0.48121182505960347  # log((1 + sqrt 5) / 2), Perron root of [[1,1],[1,0]]


def test_frozen_constants():
    assert FULL_SHIFT_N10_T2 == pytest.approx(1.1 * LOG2, abs=1e-15)
    assert GOLDEN_ENTROPY == pytest.approx(LOG_PHI, abs=1e-15)


# -- partition function --------------------------------------------------------


def test_full_shift_partition_counts_prefixes():
    sys = full_shift()
    x = sys.anchor(0, 0, 4)
    for backend in ("dp", "enumerate"):
        assert partition_function(sys, Observable.zero(sys), 0, 3, 2, 8, x, backend) == pytest.approx(16.0, rel=1e-12)


def test_golden_mean_partition_counts_reachable_prefixes():
    sys = golden_mean()
    x = sys.anchor(0, 0, 4)
    for backend in ("dp", "enumerate"):
        assert partition_function(sys, Observable.zero(sys), 0, 2, 1, 4, x, backend) == pytest.approx(3.0, rel=1e-12)


def test_constant_factors_out_of_partition_function():
    sys = golden_mean()
    x = sys.anchor(0, 1, 4)
    c, n = 0.37, 5
    base = log_partition_function(sys, Observable.zero(sys), 0, n, 2, 9, x)
    shifted = log_partition_function(sys, Observable.constant(sys, c), 0, n, 2, 9, x)
    assert shifted == pytest.approx(base + n * c, abs=1e-12)


def _random_observable(sys, W, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(sys.base.omega_count, sys.alphabet_size ** W))
    return Observable(W, vals)


@given(st.integers(0, 2), st.integers(1, 2), st.integers(1, 5), st.integers(1, 3), st.integers(0, 4),
       st.integers(0, 10_000))
def test_dp_and_enumerate_agree(which, W, n, t, extra, seed):
    sys = [full_shift, golden_mean, swap_full_golden][which]()
    f = _random_observable(sys, W, seed)
    k = n + extra
    for omega in range(sys.base.omega_count):
        target = sys.th(omega, k)
        for a in np.nonzero(sys.active[target])[0]:
            x = sys.anchor(target, int(a), t + W)
            dp = log_partition_function(sys, f, omega, n, t, k, x, "dp")
            en = log_partition_function(sys, f, omega, n, t, k, x, "enumerate")
            assert math.exp(dp - en) == pytest.approx(1.0, rel=1e-10)


def test_value_depends_on_anchor_only_through_first_symbol():
    sys = full_shift()
    f = _random_observable(sys, 2, 7)
    n, t, k = 3, 2, 6
    for a in (0, 1):
        vals = set()
        for tail in itertools.product((0, 1), repeat=3):
            x = sys.point(0, (a,) + tail)
            vals.add(round(log_partition_function(sys, f, 0, n, t, k, x, "enumerate"), 12))
        assert len(vals) == 1


def test_partition_function_input_checks():
    sys = full_shift()
    f = Observable.zero(sys)
    with pytest.raises(InputError):
        log_partition_function(sys, f, 0, 5, 2, 4, sys.anchor(0, 0, 3))
    with pytest.raises(InputError):
        log_partition_function(sys, f, 0, 2, 2, 4, 0)


def test_enumeration_cap_raises_capacity_error_with_location():
    sys = full_shift()
    f = Observable(3, np.zeros((1, 8)))
    # t < W: the dp shortcut does not apply and 2**21 pre-images exceed the cap
    with pytest.raises(CapacityError) as err:
        log_partition_function(sys, f, 0, 20, 1, 21, sys.anchor(0, 0, 4))
    assert err.value.where[:2] == (0, 21)


# -- finite-n pressure ------------------------------------------------------------


@pytest.mark.parametrize("backend", ["dp", "enumerate"])
def test_full_shift_exact_finite_n_value(backend):
    sys = full_shift()
    row = finite_n_pressure(sys, Observable.zero(sys), PressureParams(10, 2, (11, 12, 13), backend=backend))
    assert row.value == pytest.approx(FULL_SHIFT_N10_T2, abs=1e-12)


def test_swap_of_identical_fibers_matches_deterministic_value():
    sys = swap_full_full()
    row = finite_n_pressure(sys, Observable.zero(sys), PressureParams(10, 2, (11, 12, 13)))
    assert row.value == pytest.approx(FULL_SHIFT_N10_T2, abs=1e-12)


def test_fixed_point_gives_the_constant():
    sys = RandomSFTSystem(BaseSpace.single(), [[1]])
    for n in (1, 5, 17):
        row = finite_n_pressure(sys, Observable.constant(sys, 1.25), PressureParams(n, 2, default_k_window(n, 2, 4)))
        assert row.value == pytest.approx(1.25, abs=1e-12)
    ex = ExplicitFiniteSystem(BaseSpace.single(), [1], [[0]])
    row = finite_n_pressure(ex, Observable.constant(ex, -0.5), PressureParams(7, 2, (7, 8)))
    assert row.value == pytest.approx(-0.5, abs=1e-12)


@given(st.integers(0, 2), st.integers(1, 12), st.floats(-3, 3), st.integers(0, 10_000))
def test_constant_shift_law(which, n, c, seed):
    sys = [full_shift, golden_mean, swap_full_golden][which]()
    f = _random_observable(sys, 1, seed)
    params = PressureParams(n, 2, default_k_window(n, 2, 2))
    a = finite_n_pressure(sys, f, params).value
    b = finite_n_pressure(sys, f.shifted(c), params).value
    assert b - a == pytest.approx(c, abs=1e-12)


@given(st.integers(0, 2), st.integers(1, 10), st.integers(0, 10_000))
def test_nondecreasing_in_t(which, n, seed):
    sys = [full_shift, golden_mean, swap_full_golden][which]()
    f = _random_observable(sys, 1, seed)
    kw = tuple(range(n + 4, n + 8))
    vals = [finite_n_pressure(sys, f, PressureParams(n, t, kw)).value for t in (1, 2, 3, 4)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_params_are_checked():
    with pytest.raises(InputError):
        PressureParams(5, 2, (4,)).check()
    with pytest.raises(InputError):
        PressureParams(5, 0, (5,)).check()
    with pytest.raises(InputError):
        PressureParams(5, 2, (5,), backend="magic").check()


def test_k_window_default():
    assert default_k_window(10, 2, 4) == (10, 11, 12, 13, 14, 15)


# -- curves ------------------------------------------------------------------------


def test_pressure_curve_extrapolates_to_entropies():
    ns = [4, 8, 16, 32, 64]
    assert pressure_curve(full_shift(), Observable.zero(full_shift()), 2, ns).fit_a == pytest.approx(LOG2, abs=0.02)
    g = golden_mean()
    assert pressure_curve(g, Observable.zero(g), 2, ns).fit_a == pytest.approx(GOLDEN_ENTROPY, abs=0.02)


def test_pressure_curve_needs_three_points():
    sys = full_shift()
    with pytest.raises(InputError, match="need ≥ 3 n values"):
        pressure_curve(sys, Observable.zero(sys), 2, [4])
    with pytest.raises(InputError):
        pressure_curve(sys, Observable.zero(sys), 2, [8, 4, 16])


def test_constant_shift_moves_the_whole_curve():
    sys = golden_mean()
    ns = [4, 8, 12, 16]
    a = pressure_curve(sys, log2_on_one(sys), 2, ns)
    b = pressure_curve(sys, log2_on_one(sys).shifted(0.5), 2, ns)
    for n in ns:
        assert b.curve[n] - a.curve[n] == pytest.approx(0.5, abs=1e-12)
    assert b.fit_a - a.fit_a == pytest.approx(0.5, abs=1e-12)


def test_entropy_is_the_zero_potential_pressure():
    sys = swap_full_golden()
    ns = [4, 8, 16]
    e = entropy_curve(sys, 2, ns)
    p = pressure_curve(sys, Observable.zero(sys), 2, ns)
    assert e.curve == p.curve and e.fit_a == p.fit_a


def test_jobs_do_not_change_results():
    sys = swap_full_golden()
    f = log2_on_one(sys)
    ns = [4, 8, 12, 16, 24]
    a = pressure_curve(sys, f, 2, ns, jobs=1)
    b = pressure_curve(sys, f, 2, ns, jobs=4)
    assert a.to_json(verbose=True) == b.to_json(verbose=True)


def test_extrapolation_stabilises_in_t():
    sys = golden_mean()
    vals = pressure_vs_t(sys, Observable.zero(sys), [1, 2, 3, 4], [8, 16, 32, 64])
    seq = [vals[t] for t in (1, 2, 3, 4)]
    assert all(b >= a - 1e-9 for a, b in zip(seq, seq[1:]))


def test_report_serialisations():
    sys = full_shift()
    rep = pressure_curve(sys, Observable.zero(sys), 2, [4, 8, 12])
    rows = list(rep.csv_rows())
    assert rows[0][:4] == [4, 2, rep.rows[0].k_star, rep.rows[0].anchor_star]
    js = rep.to_json(verbose=True)
    assert js["fit_n"] == [8, 12] and "breakdown" in js["rows"][0]


# -- power transform -----------------------------------------------------------------


def test_power_one_is_identity():
    sys = golden_mean()
    f = log2_on_one(sys)
    s1, f1 = power_transform(sys, f, 1)
    assert s1 is sys and f1 is f


def test_full_shift_square_is_four_letter_full_shift():
    sys = full_shift()
    s2, f2 = power_transform(sys, Observable.zero(sys), 2)
    assert s2.alphabet_size == 4 and np.all(s2.trans == 1)
    assert np.all(f2.values == 0.0)


def test_golden_mean_square_blocks():
    sys = golden_mean()
    s2, _ = power_transform(sys, Observable.zero(sys), 2)
    blocks = block_alphabet(sys, 2)
    assert blocks == [(0, 0), (0, 1), (1, 0)]
    edges = {(blocks[i], blocks[j]) for i, j in zip(*np.nonzero(s2.trans[0]))}
    # C may follow B exactly when B's last symbol may precede C's first
    want = {(B, C) for B in blocks for C in blocks if not (B[-1] == 1 and C[0] == 1)}
    assert edges == want and len(edges) == 8
    assert ((0, 1), (1, 0)) not in edges  # would spell the forbidden word 11


def test_overlapping_block_graph_is_not_the_square():
    # the overlapping 2-block graph of the golden mean has Perron root phi, the square needs phi**2
    overlap = np.array([[1, 1, 0], [0, 0, 1], [1, 1, 0]], dtype=float)
    square = power_transform(golden_mean(), Observable.zero(golden_mean()), 2)[0].trans[0].astype(float)
    assert max(abs(np.linalg.eigvals(overlap))) == pytest.approx((1 + 5 ** 0.5) / 2)
    assert max(abs(np.linalg.eigvals(square))) == pytest.approx(((1 + 5 ** 0.5) / 2) ** 2)


@pytest.mark.parametrize("make", [golden_mean, swap_full_golden])
@pytest.mark.parametrize("m", [2, 3])
def test_block_language_matches_original(make, m):
    sys = make()
    sm, _ = power_transform(sys, Observable.zero(sys), m)
    assert sm.validate().ok
    blocks = block_alphabet(sys, m)
    for omega in range(sys.base.omega_count):
        for L in range(1, 8 // m + 1):
            recoded = {tuple(s for b in row for s in blocks[b]) for row in sm.admissible_words(omega, L)}
            original = {tuple(r) for r in sys.admissible_words(omega, L * m)}
            assert recoded == original


def test_block_observable_is_the_birkhoff_sum():
    sys = full_shift()
    f = _random_observable(sys, 2, 3)
    s2, f2 = power_transform(sys, f, 2)
    assert f2.window == 2
    blocks = block_alphabet(sys, 2)
    for i, B in enumerate(blocks):
        for j, C in enumerate(blocks):
            w = B + C
            direct = f.values[0, w[0] * 2 + w[1]] + f.values[0, w[1] * 2 + w[2]]
            assert f2.values[0, i * len(blocks) + j] == pytest.approx(direct)


def test_explicit_power_transform():
    sys = ExplicitFiniteSystem(BaseSpace.cyclic(2), [3, 3], [[1, 2, 0], [0, 2, 1]])
    f = Observable(1, [[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]])
    s2, f2 = power_transform(sys, f, 2)
    assert s2.base.theta == (0, 1)
    assert np.array_equal(s2.maps[0], sys.image(0, 2))
    assert f2.values[0, 0] == 1.0 + 20.0


@pytest.mark.parametrize("make", [full_shift, golden_mean])
def test_finite_n_power_rule_error_shrinks(make):
    sys = make()
    f = log2_on_one(sys)
    s2, f2 = power_transform(sys, f, 2)
    errs = []
    for n in (4, 8, 16, 32):
        a = finite_n_pressure(s2, f2, PressureParams(n, 2, default_k_window(n, 2, 4))).value
        b = finite_n_pressure(sys, f, PressureParams(2 * n, 2, default_k_window(2 * n, 2, 4))).value
        errs.append(abs(a - 2 * b))
    assert all(b2 <= a2 + 1e-12 for a2, b2 in zip(errs, errs[1:]))
