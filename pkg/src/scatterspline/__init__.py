"""Tensor-product B-spline fitting for scattered point clouds.

Fits d-dimensional spline models to scattered samples by penalized least
squares, with a per-control-point smoothing strength chosen from how much
data actually constrains each control point. Sparse or empty regions get
stabilized; densely sampled features keep their sharpness.
"""

from .assembly import (
    FitConfig,
    LinearSystem,
    PointCloud,
    assemble_system,
    build_collocation,
    build_knots,
    build_penalty_block,
    compute_lambdas,
    derivative_multi_indices,
    parameterize,
    stack_penalty,
)
from .bsplines import (
    IndexSet,
    KnotVector,
    SplineModel,
    basis_derivatives,
    basis_maximizer,
    basis_values,
    eval_model,
    eval_model_derivative,
    eval_model_grid,
    eval_model_many,
    find_span,
    lex_rank,
    lex_unrank,
    tensor_basis_rows,
    uniform_clamped_knots,
)
from .datasets import (
    CsvParseError,
    SynthConfig,
    VoidSpec,
    generate_annulus_cloud,
    generate_polysinc_cloud,
    polysinc,
    read_csv,
    resample_grid,
    write_csv,
)
from .metrics import (
    ErrorStats,
    LambdaField,
    RegionOfInterest,
    lambda_field,
    pointwise_errors,
)
from .solver import (
    FitReport,
    NotConvergedError,
    RankDeficientError,
    SolveOptions,
    condition_number,
    fit_cloud,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "CsvParseError",
    "ErrorStats",
    "FitConfig",
    "FitReport",
    "IndexSet",
    "KnotVector",
    "LambdaField",
    "LinearSystem",
    "NotConvergedError",
    "PointCloud",
    "RankDeficientError",
    "RegionOfInterest",
    "SolveOptions",
    "SplineModel",
    "SynthConfig",
    "VoidSpec",
    "assemble_system",
    "basis_derivatives",
    "basis_maximizer",
    "basis_values",
    "build_collocation",
    "build_knots",
    "build_penalty_block",
    "compute_lambdas",
    "condition_number",
    "derivative_multi_indices",
    "eval_model",
    "eval_model_derivative",
    "eval_model_grid",
    "eval_model_many",
    "find_span",
    "fit_cloud",
    "generate_annulus_cloud",
    "generate_polysinc_cloud",
    "lambda_field",
    "lex_rank",
    "lex_unrank",
    "parameterize",
    "pointwise_errors",
    "polysinc",
    "read_csv",
    "resample_grid",
    "solve",
    "stack_penalty",
    "tensor_basis_rows",
    "uniform_clamped_knots",
    "write_csv",
    "__version__",
]
