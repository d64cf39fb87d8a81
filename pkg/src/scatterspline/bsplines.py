"""Clamped B-spline basis evaluation and tensor-product indexing.

Everything here works on the parameter cube [0, 1]^d. A model carries the
affine map back to physical coordinates as a bounding box; all basis math is
done in parameter space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KnotVector",
    "IndexSet",
    "SplineModel",
    "uniform_clamped_knots",
    "find_span",
    "basis_values",
    "basis_values_many",
    "basis_derivatives",
    "basis_value_single",
    "basis_derivative_single",
    "basis_maximizer",
    "lex_rank",
    "lex_unrank",
    "eval_model",
    "eval_model_derivative",
    "eval_model_many",
    "eval_model_grid",
    "tensor_basis_rows",
]

_MAXIMIZER_TOL = 1e-10
_MAXIMIZER_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class KnotVector:
    """A clamped, nondecreasing knot sequence on [0, 1].

    Parameters
    ----------
    degree : int
        Polynomial degree p of the basis.
    knots : array_like
        Sequence t_0..t_{n+p} with the first and last p+1 entries equal to
        0 and 1 respectively.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        knots = np.ascontiguousarray(self.knots, dtype=float)
        if knots.ndim != 1:
            raise ValueError("knots must be a 1-D sequence")
        p = self.degree
        if knots.size < 2 * (p + 1):
            raise ValueError(
                f"need at least {2 * (p + 1)} knots for degree {p}, got {knots.size}"
            )
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if np.any(knots[: p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise ValueError("first/last p+1 knots must be clamped to 0 and 1")
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1


def uniform_clamped_knots(n: int, p: int) -> KnotVector:
    """Clamped knot vector with n - p - 1 equispaced interior knots.

    Raises
    ------
    ValueError
        If n < p + 1 (not enough basis functions for the degree).
    """
    if p < 0:
        raise ValueError("degree must be nonnegative")
    if n < p + 1:
        raise ValueError(f"basis count {n} too small for degree {p} (need n >= p+1)")
    interior = np.linspace(0.0, 1.0, n - p + 1)[1:-1]
    knots = np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])
    return KnotVector(p, knots)


def _check_param(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"parameter {u} outside [0, 1]")
    return u


def find_span(kv: KnotVector, u: float) -> int:
    """Index i of the knot interval with t_i <= u < t_{i+1}.

    u = 1 maps to the last non-degenerate interval so that evaluation at the
    right endpoint never indexes past the clamp.
    """
    u = _check_param(u)
    span = int(np.searchsorted(kv.knots, u, side="right")) - 1
    return min(max(span, kv.degree), kv.n - 1)


def _find_span_many(kv: KnotVector, u: np.ndarray) -> np.ndarray:
    spans = np.searchsorted(kv.knots, u, side="right") - 1
    return np.clip(spans, kv.degree, kv.n - 1)


def basis_values(kv: KnotVector, u: float) -> tuple[np.ndarray, int]:
    """Values of the p+1 basis functions that are nonzero at u.

    Returns
    -------
    values : ndarray, shape (p+1,)
        N_{first}, ..., N_{first+p} evaluated at u.
    first : int
        Index of the first locally supported basis function (span - p).

    Notes
    -----
    Standard triangular (Cox-de Boor) recursion; all divisions are by knot
    differences spanning the non-degenerate interval found by
    :func:`find_span`, so no zero denominators occur.
    """
    span = find_span(kv, u)
    p = kv.degree
    t = kv.knots
    values = np.zeros(p + 1)
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    values[0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - t[span + 1 - j]
        right[j] = t[span + j] - u
        saved = 0.0
        for r in range(j):
            temp = values[r] / (right[r + 1] + left[j - r])
            values[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        values[j] = saved
    return values, span - p


def basis_values_many(kv: KnotVector, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`basis_values` over a 1-D array of parameters.

    Returns the (m, p+1) value table and the (m,) array of first indices.
    """
    u = np.ascontiguousarray(u, dtype=float)
    if u.size and (u.min() < 0.0 or u.max() > 1.0):
        raise ValueError("parameters outside [0, 1]")
    p = kv.degree
    t = kv.knots
    spans = _find_span_many(kv, u)
    m = u.size
    values = np.zeros((m, p + 1))
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    values[:, 0] = 1.0
    for j in range(1, p + 1):
        left[:, j] = u - t[spans + 1 - j]
        right[:, j] = t[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return values, spans - p


def basis_derivatives(kv: KnotVector, u: float, order: int) -> tuple[np.ndarray, int]:
    """Derivatives of the locally supported basis functions at u.

    Parameters
    ----------
    order : int
        Highest derivative order r, 0 <= r <= p. Derivatives above the
        degree are identically zero and are rejected rather than returned.

    Returns
    -------
    ders : ndarray, shape (order+1, p+1)
        Row k holds the k-th derivatives of N_{first}..N_{first+p} at u;
        row 0 equals :func:`basis_values`.
    first : int
        Index of the first locally supported basis function.
    """
    p = kv.degree
    if not 0 <= order <= p:
        raise ValueError(f"derivative order {order} outside [0, {p}]")
    span = find_span(kv, u)
    t = kv.knots

    # triangle of basis values plus the knot differences it divides by
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - t[span + 1 - j]
        right[j] = t[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((order + 1, p + 1))
    ders[0] = ndu[:, p]

    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, order + 1):
            der = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                der = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                der += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                der += a[s2, k] * ndu[r, pk]
            ders[k, r] = der
            s1, s2 = s2, s1

    factor = float(p)
    for k in range(1, order + 1):
        ders[k] *= factor
        factor *= p - k
    return ders, span - p


def basis_value_single(kv: KnotVector, j: int, u: float) -> float:
    """Value of basis function j at u (zero outside its support)."""
    values, first = basis_values(kv, u)
    offset = j - first
    if 0 <= offset <= kv.degree:
        return float(values[offset])
    return 0.0


def basis_derivative_single(kv: KnotVector, j: int, u: float, order: int) -> float:
    """order-th derivative of basis function j at u (zero off support)."""
    ders, first = basis_derivatives(kv, u, order)
    offset = j - first
    if 0 <= offset <= kv.degree:
        return float(ders[order, offset])
    return 0.0


def basis_maximizer(kv: KnotVector, j: int) -> float:
    """Parameter where basis function j attains its maximum.

    The end functions peak at the clamped endpoints; interior functions are
    unimodal on their support [t_j, t_{j+p+1}] and are located by ternary
    search to absolute tolerance 1e-10 (at most 200 iterations). Degree-0
    functions are flat on one interval; the midpoint is returned.
    """
    n = kv.n
    if not 0 <= j < n:
        raise IndexError(f"basis index {j} outside [0, {n})")
    if j == 0:
        return 0.0
    if j == n - 1:
        return 1.0
    p = kv.degree
    a = float(kv.knots[j])
    b = float(kv.knots[j + p + 1])
    if p == 0:
        return 0.5 * (a + b)
    for _ in range(_MAXIMIZER_MAX_ITER):
        if b - a <= _MAXIMIZER_TOL:
            break
        third = (b - a) / 3.0
        m1 = a + third
        m2 = b - third
        if basis_value_single(kv, j, m1) < basis_value_single(kv, j, m2):
            a = m1
        else:
            b = m2
    return 0.5 * (a + b)


@dataclass(frozen=True)
class IndexSet:
    """Per-dimension basis counts with lexicographic ranking.

    Ranks run over {0..n_tot-1} with the LAST dimension varying fastest
    (row-major), matching the layout of control-point matrices.
    """

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(nk) for nk in self.shape)
        if not shape or any(nk < 1 for nk in shape):
            raise ValueError("index set needs at least one positive size per dimension")
        object.__setattr__(self, "shape", shape)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def n_tot(self) -> int:
        return int(np.prod(self.shape))


def lex_rank(iset: IndexSet, alpha: tuple[int, ...]) -> int:
    """Position of multi-index alpha in row-major lexicographic order."""
    if len(alpha) != iset.d:
        raise IndexError(f"multi-index has {len(alpha)} components, expected {iset.d}")
    for ak, nk in zip(alpha, iset.shape):
        if not 0 <= ak < nk:
            raise IndexError(f"component {ak} outside [0, {nk})")
    return int(np.ravel_multi_index(alpha, iset.shape))


def lex_unrank(iset: IndexSet, i: int) -> tuple[int, ...]:
    """Inverse of :func:`lex_rank`."""
    if not 0 <= i < iset.n_tot:
        raise IndexError(f"rank {i} outside [0, {iset.n_tot})")
    return tuple(int(c) for c in np.unravel_index(i, iset.shape))


@dataclass(frozen=True, eq=False)
class SplineModel:
    """Tensor-product B-spline with lexicographically ordered control points.

    Parameters
    ----------
    knot_vectors : tuple of KnotVector
        One per spatial dimension; all must share the same degree.
    controls : ndarray, shape (n_tot, D_v)
        Control points, rows in lexicographic order (last dimension fastest).
    bbox_min, bbox_max : ndarray, shape (d,)
        Physical bounding box defining the affine map onto [0, 1]^d.
    """

    knot_vectors: tuple[KnotVector, ...]
    controls: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    def __post_init__(self):
        kvs = tuple(self.knot_vectors)
        if not kvs:
            raise ValueError("need at least one knot vector")
        degrees = {kv.degree for kv in kvs}
        if len(degrees) != 1:
            raise ValueError("all knot vectors must share one degree")
        controls = np.ascontiguousarray(self.controls, dtype=float)
        if controls.ndim != 2:
            raise ValueError("controls must be (n_tot, D_v)")
        n_tot = int(np.prod([kv.n for kv in kvs]))
        if controls.shape[0] != n_tot:
            raise ValueError(
                f"control rows {controls.shape[0]} != product of basis counts {n_tot}"
            )
        lo = np.ascontiguousarray(self.bbox_min, dtype=float)
        hi = np.ascontiguousarray(self.bbox_max, dtype=float)
        if lo.shape != (len(kvs),) or hi.shape != (len(kvs),):
            raise ValueError("bounding box must have one (min, max) per dimension")
        if np.any(lo >= hi):
            raise ValueError("bounding box must have min < max in every dimension")
        for arr in (controls, lo, hi):
            arr.flags.writeable = False
        object.__setattr__(self, "knot_vectors", kvs)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)

    @property
    def d(self) -> int:
        return len(self.knot_vectors)

    @property
    def degree(self) -> int:
        return self.knot_vectors[0].degree

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.n for kv in self.knot_vectors)

    @property
    def n_tot(self) -> int:
        return self.controls.shape[0]

    @property
    def num_values(self) -> int:
        return self.controls.shape[1]

    def to_params(self, coords: np.ndarray) -> np.ndarray:
        """Affine map from physical coordinates (..., d) into [0, 1]^d."""
        coords = np.asarray(coords, dtype=float)
        return (coords - self.bbox_min) / (self.bbox_max - self.bbox_min)


def _local_weights_and_ranks(model, u, orders):
    """(p+1)^d local tensor weights and their flat control-row indices."""
    p = model.degree
    shape = model.shape
    factors = []
    firsts = []
    for k, kv in enumerate(model.knot_vectors):
        if orders[k] == 0:
            vals, first = basis_values(kv, u[k])
        else:
            ders, first = basis_derivatives(kv, u[k], orders[k])
            vals = ders[orders[k]]
        factors.append(vals)
        firsts.append(first)
    w = factors[0]
    for vals in factors[1:]:
        w = np.multiply.outer(w, vals)
    local = np.meshgrid(
        *[first + np.arange(p + 1) for first in firsts], indexing="ij"
    )
    flat = np.ravel_multi_index([g.ravel() for g in local], shape)
    return w.ravel(), flat


def eval_model(model: SplineModel, u) -> np.ndarray:
    """Model value at parameter tuple u, summing only local basis functions."""
    u = [_check_param(c) for c in np.atleast_1d(np.asarray(u, dtype=float))]
    if len(u) != model.d:
        raise ValueError(f"parameter tuple has {len(u)} components, expected {model.d}")
    w, flat = _local_weights_and_ranks(model, u, [0] * model.d)
    return w @ model.controls[flat]


def eval_model_derivative(model: SplineModel, u, delta) -> np.ndarray:
    """Partial derivative of the model in parameter space.

    delta gives the derivative order per dimension; each component must not
    exceed the degree (higher derivatives vanish identically).
    """
    u = [_check_param(c) for c in np.atleast_1d(np.asarray(u, dtype=float))]
    delta = tuple(int(o) for o in delta)
    if len(u) != model.d or len(delta) != model.d:
        raise ValueError(f"expected {model.d}-component parameter and order tuples")
    p = model.degree
    for o in delta:
        if not 0 <= o <= p:
            raise ValueError(f"derivative order {o} outside [0, {p}]")
    w, flat = _local_weights_and_ranks(model, u, list(delta))
    return w @ model.controls[flat]


def tensor_basis_rows(
    knot_vectors: tuple[KnotVector, ...], params: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Local tensor-product basis values for a batch of parameter tuples.

    Returns
    -------
    weights : ndarray, shape (m, (p+1)^d)
        Nonzero tensor-product basis values per point, last dimension
        varying fastest.
    cols : ndarray, shape (m, (p+1)^d)
        Lexicographic ranks of the basis functions the weights belong to.
    """
    params = np.asarray(params, dtype=float)
    d = len(knot_vectors)
    if params.ndim != 2 or params.shape[1] != d:
        raise ValueError(f"expected (m, {d}) parameter array")
    p = knot_vectors[0].degree
    shape = tuple(kv.n for kv in knot_vectors)
    m = params.shape[0]
    tables = [basis_values_many(kv, params[:, k]) for k, kv in enumerate(knot_vectors)]
    w = tables[0][0]
    for vals, _ in tables[1:]:
        w = (w[:, :, None] * vals[:, None, :]).reshape(m, -1)
    offsets = np.stack(
        np.meshgrid(*[np.arange(p + 1)] * d, indexing="ij"), axis=-1
    ).reshape(-1, d)
    firsts = np.stack([t[1] for t in tables], axis=1)
    cols = firsts[:, None, :] + offsets[None, :, :]
    flat = np.ravel_multi_index(np.moveaxis(cols, -1, 0), shape)
    return w, flat


def eval_model_many(model: SplineModel, params: np.ndarray) -> np.ndarray:
    """Evaluate at m parameter tuples, returned as (m, D_v)."""
    w, flat = tensor_basis_rows(model.knot_vectors, params)
    return np.einsum("ml,mlv->mv", w, model.controls[flat])


def eval_model_grid(model: SplineModel, axes) -> np.ndarray:
    """Evaluate on a tensor grid of parameters.

    axes is one 1-D parameter array per dimension; the result has shape
    (len(axes[0]), ..., len(axes[d-1]), D_v).
    """
    if len(axes) != model.d:
        raise ValueError(f"expected {model.d} grid axes")
    mats = []
    for kv, ax in zip(model.knot_vectors, axes):
        ax = np.asarray(ax, dtype=float)
        vals, first = basis_values_many(kv, ax)
        dense = np.zeros((ax.size, kv.n))
        cols = first[:, None] + np.arange(kv.degree + 1)[None, :]
        np.put_along_axis(dense, cols, vals, axis=1)
        mats.append(dense)
    out = model.controls.reshape(model.shape + (model.num_values,))
    for k, mat in enumerate(mats):
        out = np.moveaxis(np.tensordot(mat, out, axes=(1, k)), 0, k)
    return out
