"""kvnlab: density-zero convergence and conditional weak mixing on R^d.

The concrete Riesz space is R^d with componentwise order, in an exact
rational backend or a float64 backend.
"""

from .classical import (
    ClassicalReport,
    IntervalMapSystem,
    IntervalSet,
    classify_classical,
    correlation_sequence,
    doubling_overlap,
    preimage,
)
from .dynamics import (
    CepsSystem,
    CompositionOperator,
    CondExpOperator,
    FiniteMeasure,
    MixingClassification,
    classify_weak_mixing,
    validate_ceps,
    weak_mixing_ee_check,
    weak_mixing_sequence,
)
from .errors import (
    BackendMismatchError,
    CapExceededError,
    ConfigError,
    DimensionMismatchError,
    InvalidSystemError,
    KvnError,
    NegativeInputError,
    NotDensityZeroError,
    NotOrderBoundedError,
    NotWeaklyMixingError,
    PreconditionError,
    ResidualNotVanishingError,
)
from .extract import KvnExtraction, KvnParams, audit_extraction, extract_density_zero, verify_forward
from .riesz import (
    BandProjection,
    EStepFunction,
    LatticeVector,
    band_of_pospart,
    ealg_mul,
    freudenthal_approx,
    lattice_abs,
    lattice_inf,
    lattice_sup,
    pos_part,
)
from .scalars import EXACT, FLOAT
from .sequences import (
    ConvergenceJudgment,
    ProjectionSequence,
    VectorSequence,
    cesaro_means,
    counterexample_gp,
    judge_density_zero,
    judge_order_convergence_to_zero,
    series_convergence_check,
)

__version__ = "0.1.0"
