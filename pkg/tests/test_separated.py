
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import full_shift, random_instance
from prepressure.bundle_system import Observable, preimage_set
from prepressure.errors import CapacityError, InputError
from prepressure.base_space import BaseSpace
from prepressure.bundle_system import ExplicitFiniteSystem
from prepressure.separated import (
    SeparationInstance,
    bnb_max_weight,
    conflict_matrix,
    extend_to_maximal,
    is_maximal,
    is_separated,
    max_cardinality_separated,
    max_weight_separated,
    near_maximal_family,
)


@given(st.integers(0, 10_000))
def test_prefix_and_branch_and_bound_agree(seed):
    inst = random_instance(seed)
    a = max_weight_separated(inst, "prefix")
    b = max_weight_separated(inst, "bnb")
    assert a.log_value == pytest.approx(b.log_value, abs=1e-12)
    assert max_cardinality_separated(inst, "prefix").count == max_cardinality_separated(inst, "bnb").count
    assert is_separated(inst, a.indices) and is_separated(inst, b.indices)


def test_conflict_is_strict_at_epsilon():
    sys = full_shift()
    f = Observable.zero(sys)
    # first difference at index n + t - 1 gives distance exactly eps: not separated
    n, t = 2, 2
    y = sys.point(0, (0, 0, 0, 0))
    z = sys.point(0, (0, 0, 0, 1))
    inst = SeparationInstance.from_points(sys, f, 0, n, t, [y, z])
    assert conflict_matrix(inst)[0, 1]
    assert max_cardinality_separated(inst).count == 1
    w = sys.point(0, (0, 0, 1, 0))
    inst2 = SeparationInstance.from_points(sys, f, 0, n, t, [y, w])
    assert max_cardinality_separated(inst2).count == 2


def test_prefix_count_on_preimages_of_full_shift():
    sys = full_shift()
    f = Observable.zero(sys)
    n, t, k = 3, 2, 6
    x = sys.anchor(0, 0, t + 1)
    inst = SeparationInstance.from_points(sys, f, 0, n, t, preimage_set(sys, 0, k, x))
    assert max_cardinality_separated(inst).count == 2 ** (n + t - 1)


def test_explicit_branch_and_bound_with_a_real_metric():
    # four points on a line, distances |i - j| / 4, eps = 0.25 at t = 2
    d = np.abs(np.subtract.outer(np.arange(4), np.arange(4))) / 4.0
    sys = ExplicitFiniteSystem(BaseSpace.single(), [4], [[0, 1, 2, 3]], metric=[d])
    inst = SeparationInstance(sys, 0, 1, 2, [0, 1, 2, 3], np.log([1.0, 5.0, 1.0, 1.0]))
    best = bnb_max_weight(inst)
    assert best.indices == (1, 3)
    assert best.value == pytest.approx(6.0)
    assert is_separated(inst, best.indices)


@given(st.integers(0, 10_000))
def test_extension_is_maximal_and_keeps_weight(seed):
    inst = random_instance(seed)
    best = max_weight_separated(inst)
    full = extend_to_maximal(inst, best)
    assert is_maximal(inst, full.indices) and is_separated(inst, full.indices)
    assert full.log_value >= best.log_value - 1e-12


def test_near_maximal_family_checks_delta():
    inst = random_instance(3)
    fam = near_maximal_family([inst], 0.1)
    assert is_maximal(inst, fam[0].indices)
    with pytest.raises(InputError):
        near_maximal_family([inst], 1.0)


def test_component_budget_raises_capacity_error():
    sys = ExplicitFiniteSystem(BaseSpace.single(), [30], [list(range(30))], metric=[np.full((30, 30), 0.1) - 0.1 * np.eye(30)])
    inst = SeparationInstance(sys, 0, 1, 1, list(range(30)), np.zeros(30))
    with pytest.raises(CapacityError):
        bnb_max_weight(inst)
