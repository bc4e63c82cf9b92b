"""Exact twisted dyadic Haar analysis on finite tori and a nilpotent quotient model.

The package builds, at desk scale and in exact arithmetic:

* dyadic torus grids and piecewise-constant signals (``grid``),
* unimodular shear maps and their unitary pullbacks (``shears``),
* three twisted product Haar systems forming a tight frame of bound 3 (``haar``),
* bi-parameter martingale filtrations and square functions (``martingale``),
* stacked-tile and shard geometry with exact partition verification (``shards``),
* the analogous tri-parameter systems on the quotient model (``nilhaar``).

Every identity the library claims is checkable by exact integer arithmetic or a
brute-force oracle; nothing is asserted to within a floating tolerance unless the
quantity is genuinely irrational (p-th roots).
"""

from .dyadic import DyadicRational
from .errors import (
    ComparisonFailure,
    DimensionMismatch,
    ExactnessError,
    GridMismatch,
    IncompatibleGrid,
    InvalidExponent,
    InvalidGrid,
    NotUnimodular,
    RegimeError,
    ResolutionError,
    ScaleError,
    TwistedHaarError,
)
from .grid import (
    AxisSpec,
    GridSignal,
    TorusGrid,
    inner_product,
    l2_norm_sq,
    lp_norm,
    make_grid,
    random_signal,
    read_tgs1,
    write_tgs1,
)
from .haar import (
    EuclidSystem,
    FrameReport,
    HaarCoefficients,
    HaarIndex,
    ScaleRange,
    analyze,
    coefficient,
    enumerate_indices,
    frame_apply,
    haar_signal,
    read_thc1,
    synthesize,
    write_thc1,
)
from .martingale import (
    LpReport,
    cond_expect,
    lp_ratio_report,
    mart_diff,
    p2_identity,
    partial_expectation,
    square_fn_dyadic_sq,
    square_fn_mart,
    square_fn_mart_sq,
)
from .nilhaar import (
    AnalyticShard,
    NilCoefficients,
    NilFrameReport,
    NilpotentHaarIndex,
    NilSystem,
    ParabolicBlock,
    analytic_family,
    analytic_fibered_region,
    comparability_check,
    enumerate_nil_indices,
    nil_coefficient,
    nilpotent_analyze,
    nilpotent_cond_expect,
    nilpotent_frame,
    nilpotent_haar_signal,
    nilpotent_mart_diff,
    nilpotent_square_fn,
    nilpotent_square_fn_sq,
    nilpotent_synthesize,
    read_nil_thc1,
    shard_cells,
    shard_parent,
    write_nil_thc1,
)
from .shards import (
    FactorSpec,
    FiberedRegion,
    PartitionReport,
    Profile,
    TubeSigmaReport,
    raw_pre_shard,
    raw_shard,
    raw_shard_intermediate,
    read_fbr1,
    shard_lattice,
    stacked_tile,
    tube_sigma,
    verify_partition,
    write_fbr1,
)
from .shears import PullbackOperator, ShearMap, make_shear, verify_unimodular

__version__ = "0.1.0"

__all__ = [
    "AnalyticShard",
    "AxisSpec",
    "ComparisonFailure",
    "DimensionMismatch",
    "DyadicRational",
    "EuclidSystem",
    "ExactnessError",
    "FactorSpec",
    "FiberedRegion",
    "FrameReport",
    "GridMismatch",
    "GridSignal",
    "HaarCoefficients",
    "HaarIndex",
    "IncompatibleGrid",
    "InvalidExponent",
    "InvalidGrid",
    "LpReport",
    "NilCoefficients",
    "NilFrameReport",
    "NilSystem",
    "NilpotentHaarIndex",
    "NotUnimodular",
    "ParabolicBlock",
    "PartitionReport",
    "Profile",
    "PullbackOperator",
    "RegimeError",
    "ResolutionError",
    "ScaleError",
    "ScaleRange",
    "ShearMap",
    "TorusGrid",
    "TubeSigmaReport",
    "TwistedHaarError",
    "analytic_family",
    "analytic_fibered_region",
    "analyze",
    "coefficient",
    "comparability_check",
    "cond_expect",
    "enumerate_indices",
    "enumerate_nil_indices",
    "frame_apply",
    "haar_signal",
    "inner_product",
    "l2_norm_sq",
    "lp_norm",
    "lp_ratio_report",
    "make_grid",
    "make_shear",
    "mart_diff",
    "nil_coefficient",
    "nilpotent_analyze",
    "nilpotent_cond_expect",
    "nilpotent_frame",
    "nilpotent_haar_signal",
    "nilpotent_mart_diff",
    "nilpotent_square_fn",
    "nilpotent_square_fn_sq",
    "nilpotent_synthesize",
    "p2_identity",
    "partial_expectation",
    "random_signal",
    "raw_pre_shard",
    "raw_shard",
    "raw_shard_intermediate",
    "read_fbr1",
    "read_tgs1",
    "read_thc1",
    "read_nil_thc1",
    "shard_cells",
    "shard_lattice",
    "shard_parent",
    "square_fn_dyadic_sq",
    "square_fn_mart",
    "square_fn_mart_sq",
    "stacked_tile",
    "synthesize",
    "tube_sigma",
    "verify_partition",
    "verify_unimodular",
    "write_fbr1",
    "write_tgs1",
    "write_thc1",
    "write_nil_thc1",
]
