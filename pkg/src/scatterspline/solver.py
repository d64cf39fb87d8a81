"""Solvers and conditioning diagnostics for the assembled normal system.

The normal matrix A = N^T N + (M Lambda)^T (M Lambda) is formed explicitly
(it is symmetric positive semidefinite and banded by local support) and
either factorized directly or solved by conjugate gradients, one value
component at a time against the same factorization/operator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .assembly import FitConfig, LinearSystem, PointCloud, assemble_system
from .bsplines import SplineModel

__all__ = [
    "SolveOptions",
    "FitReport",
    "RankDeficientError",
    "NotConvergedError",
    "solve",
    "fit_cloud",
    "condition_number",
]

_DIRECT_LIMIT = 20_000
_EXACT_COLUMN_LIMIT = 5_000
_SINGULAR_RATIO = 1e-13


class RankDeficientError(RuntimeError):
    """The normal system is numerically singular (unconstrained controls)."""


class NotConvergedError(RuntimeError):
    """The iterative solver exhausted its iterations above tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolveOptions:
    """method is 'auto' (direct at desk scale, CG beyond), 'direct', or 'cg'."""

    method: str = "auto"
    rtol: float = 1e-10
    maxiter: int | None = None
    estimate_condition: bool = True

    def __post_init__(self):
        if self.method not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.rtol > 0:
            raise ValueError("relative tolerance must be positive")


@dataclass(frozen=True, eq=False)
class FitReport:
    """Solve diagnostics.

    residual_norms holds the full stacked-system residual per value
    component; data_residual_norms the collocation part alone. Condition
    numbers are estimates of the stacked matrix (N over M Lambda) and of the
    collocation matrix by itself; math.inf marks numerically rank-deficient
    matrices.
    """

    residual_norms: np.ndarray
    data_residual_norms: np.ndarray
    iterations: int
    cond_stacked: float
    cond_data: float
    rank_deficient: bool
    not_converged: bool
    method: str


def _scaled_penalty(system: LinearSystem) -> sparse.csr_matrix | None:
    if system.penalty.shape[0] == 0 or not np.any(system.lambdas > 0):
        return None
    return (system.penalty @ sparse.diags(system.lambdas)).tocsr()


def solve(
    system: LinearSystem, opts: SolveOptions | None = None
) -> tuple[np.ndarray, FitReport]:
    """Solve for the control points of every value component.

    Raises
    ------
    RankDeficientError
        If the normal matrix is singular (typically threshold 0 with control
        points that no sample supports); the fix is a positive threshold.
    NotConvergedError
        If conjugate gradients stops above tolerance.
    """
    opts = opts or SolveOptions()
    n_tot = system.n_tot
    collocation = system.collocation
    scaled_penalty = _scaled_penalty(system)

    normal = (collocation.T @ collocation).tocsr()
    if scaled_penalty is not None:
        normal = (normal + scaled_penalty.T @ scaled_penalty).tocsr()

    # a zero diagonal entry means no equation touches that control point
    dead = np.flatnonzero(normal.diagonal() == 0.0)
    if dead.size:
        raise RankDeficientError(
            f"{dead.size} control point(s) have no data support and no "
            "smoothing; set a regularization threshold > 0"
        )

    method = opts.method
    if method == "auto":
        method = "direct" if n_tot <= _DIRECT_LIMIT else "cg"

    rhs = system.rhs
    iterations = 0
    if method == "direct":
        try:
            factor = sparse_linalg.splu(normal.tocsc())
        except RuntimeError as exc:
            raise RankDeficientError(
                "normal matrix factorization failed (singular); "
                "set a regularization threshold > 0"
            ) from exc
        controls = np.column_stack(
            [factor.solve(rhs[:, c]) for c in range(rhs.shape[1])]
        )
        if not np.all(np.isfinite(controls)):
            raise RankDeficientError(
                "normal matrix is numerically singular; "
                "set a regularization threshold > 0"
            )
    else:
        maxiter = opts.maxiter if opts.maxiter is not None else 10 * n_tot
        cols = []
        for c in range(rhs.shape[1]):
            x, info, its = _cg(normal, rhs[:, c], opts.rtol, maxiter)
            iterations = max(iterations, its)
            if info != 0:
                resid = float(np.linalg.norm(normal @ x - rhs[:, c]))
                raise NotConvergedError(
                    f"conjugate gradients stopped after {maxiter} iterations "
                    f"(residual {resid:.3e}); loosen the tolerance or use the "
                    "direct method",
                    resid,
                )
            cols.append(x)
        controls = np.column_stack(cols)

    data_resid = collocation @ controls - system.values
    data_norms = np.linalg.norm(data_resid, axis=0)
    if scaled_penalty is not None:
        pen_resid = scaled_penalty @ controls
        stacked_norms = np.sqrt(
            data_norms**2 + np.linalg.norm(pen_resid, axis=0) ** 2
        )
    else:
        stacked_norms = data_norms.copy()

    cond_data = math.nan
    cond_stacked = math.nan
    if opts.estimate_condition:
        cond_data = condition_number(collocation, mode="estimate")
        if scaled_penalty is not None:
            stacked = sparse.vstack([collocation, scaled_penalty], format="csr")
            cond_stacked = condition_number(stacked, mode="estimate")
        else:
            cond_stacked = cond_data

    report = FitReport(
        residual_norms=stacked_norms,
        data_residual_norms=data_norms,
        iterations=iterations,
        cond_stacked=cond_stacked,
        cond_data=cond_data,
        rank_deficient=bool(math.isinf(cond_stacked)),
        not_converged=False,
        method=method,
    )
    return controls, report


def _cg(matrix, b, rtol, maxiter):
    counter = _IterationCounter()
    try:
        x, info = sparse_linalg.cg(
            matrix, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=counter
        )
    except TypeError:  # scipy < 1.12 spells the tolerance differently
        x, info = sparse_linalg.cg(
            matrix, b, tol=rtol, atol=0.0, maxiter=maxiter, callback=counter
        )
    return x, info, counter.count


class _IterationCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, _):
        self.count += 1


def fit_cloud(
    cloud: PointCloud, config: FitConfig, opts: SolveOptions | None = None
) -> tuple[SplineModel, FitReport]:
    """Assemble and solve in one step, returning the fitted model."""
    system = assemble_system(cloud, config)
    controls, report = solve(system, opts)
    model = SplineModel(system.knots, controls, cloud.bbox_min, cloud.bbox_max)
    return model, report


def condition_number(matrix, mode: str = "estimate") -> float:
    """Spectral condition number sigma_max / sigma_min of a sparse matrix.

    exact mode densifies and takes the full singular spectrum; it is capped
    at 5000 columns. estimate mode runs power iteration on the Gram operator
    for sigma_max and inverse iteration through a sparse factorization for
    sigma_min. Returns math.inf when sigma_min falls below 1e-13 sigma_max
    (numerical rank deficiency) or the factorization finds exact singularity.
    """
    matrix = sparse.csr_matrix(matrix)
    rows, cols = matrix.shape
    if rows == 0 or cols == 0:
        raise ValueError("empty matrix")
    if mode == "exact":
        if min(rows, cols) > _EXACT_COLUMN_LIMIT:
            raise ValueError(
                f"exact mode is capped at {_EXACT_COLUMN_LIMIT} columns; "
                "use mode='estimate'"
            )
        svals = np.linalg.svd(matrix.toarray(), compute_uv=False)
        smax = float(svals[0])
        smin = float(svals[-1])
    elif mode == "estimate":
        smax, smin = _estimate_extremal_singular_values(matrix)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if smax == 0.0 or smin <= _SINGULAR_RATIO * smax:
        return math.inf
    return smax / smin


def _estimate_extremal_singular_values(matrix) -> tuple[float, float]:
    rows, cols = matrix.shape
    if cols <= rows:
        gram = (matrix.T @ matrix).tocsc()
    else:
        gram = (matrix @ matrix.T).tocsc()
    n = gram.shape[0]
    rng = np.random.default_rng(0x5EED)

    lam_max = _dominant_eigenvalue(lambda x: gram @ x, n, rng)
    try:
        factor = sparse_linalg.splu(gram)
    except RuntimeError:
        return math.sqrt(max(lam_max, 0.0)), 0.0
    inv_lam = _dominant_eigenvalue(factor.solve, n, rng)
    if inv_lam <= 0 or not np.isfinite(inv_lam):
        return math.sqrt(max(lam_max, 0.0)), 0.0
    lam_min = 1.0 / inv_lam
    return math.sqrt(max(lam_max, 0.0)), math.sqrt(max(lam_min, 0.0))


def _dominant_eigenvalue(matvec, n, rng, tol=1e-12, maxiter=20_000) -> float:
    """Power iteration on a symmetric positive semidefinite operator."""
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(maxiter):
        y = matvec(x)
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0 or not np.isfinite(norm_y):
            return 0.0 if norm_y == 0.0 else math.inf
        rayleigh = float(x @ y)
        x = y / norm_y
        if abs(rayleigh - estimate) <= tol * max(abs(rayleigh), 1e-300):
            return rayleigh
        estimate = rayleigh
    warnings.warn(
        f"power iteration did not settle in {maxiter} iterations; "
        f"returning the current estimate {estimate:.6e}",
        RuntimeWarning,
        stacklevel=2,
    )
    return estimate
