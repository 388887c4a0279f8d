"""Pre-image pressure and entropy for bundle systems over a finite base.

Finite-n partition functions over separated pre-image sets, their
extrapolated pressure, Markov and finite-fiber invariant measures with
their pre-image entropies, and independent oracles for the variational
check.
"""

from .base_space import BaseSpace, validate_base
from .bundle_system import (
    ExplicitFiniteSystem,
    Observable,
    RandomSFTSystem,
    SymbolicPoint,
    birkhoff_sum,
    bowen_distance,
    preimage_set,
)
from .errors import CapacityError, InputError, InternalError, OracleUnavailable, PrepressureError
from .kernels import backend_name
from .measures import (
    EmpiricalMeasure,
    ExplicitMeasure,
    RandomMarkovMeasure,
    conditional_block_entropy,
    extract_candidate_measure,
    integral_f,
    invariance_residual,
    preimage_metric_entropy,
)
from .pressure import (
    PressureParams,
    finite_n_pressure,
    partition_function,
    power_transform,
    pressure_curve,
)
from .variational import (
    lower_bound_search,
    oracle_max_cycle_mean,
    oracle_sft_pressure,
    power_rule_check,
    variational_gap,
)

__version__ = "0.1.0"
