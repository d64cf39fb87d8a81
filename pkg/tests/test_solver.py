"""Tests for the normal-system solvers and conditioning estimates."""

import math

import numpy as np
import pytest
from scipy import sparse

from scatterspline.assembly import FitConfig, PointCloud, assemble_system
from scatterspline.bsplines import (
    SplineModel,
    eval_model_many,
    uniform_clamped_knots,
)
from scatterspline.solver import (
    NotConvergedError,
    RankDeficientError,
    SolveOptions,
    condition_number,
    solve,
)

NO_COND = SolveOptions(estimate_condition=False)


def spline_sampled_cloud(rng, shape, degree, grid, box=((0.0, 1.0), (0.0, 1.0))):
    """Evaluate a random model on a dense grid; fitting must recover it."""
    kvs = tuple(uniform_clamped_knots(nk, degree) for nk in shape)
    n_tot = int(np.prod(shape))
    box = np.asarray(box, dtype=float)
    model = SplineModel(kvs, rng.standard_normal((n_tot, 1)), box[:, 0], box[:, 1])
    axes = [np.linspace(0.0, 1.0, g) for g in grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    params = np.stack([g.ravel() for g in mesh], axis=1)
    coords = box[:, 0] + params * (box[:, 1] - box[:, 0])
    values = eval_model_many(model, params)
    cloud = PointCloud(coords, values, box[:, 0], box[:, 1])
    return model, cloud


def corner_void_cloud(rng, m=400):
    """Uniform cloud on [0,1]^2 minus the upper-right quadrant."""
    pts = []
    while len(pts) < m:
        cand = rng.uniform(0, 1, size=(m, 2))
        keep = ~((cand[:, 0] > 0.5) & (cand[:, 1] > 0.5))
        pts.extend(cand[keep].tolist())
    coords = np.array(pts[:m])
    values = np.sin(3 * coords[:, 0]) + coords[:, 1]
    return PointCloud(coords, values, np.zeros(2), np.ones(2))


class TestRecovery:
    def test_exact_recovery_from_spline_data(self):
        rng = np.random.default_rng(101)
        model, cloud = spline_sampled_cloud(
            rng, (6, 6), 3, (30, 30), box=((-2.0, 3.0), (1.0, 4.0))
        )
        system = assemble_system(cloud, FitConfig(degree=3, shape=(6, 6)))
        controls, report = solve(system, NO_COND)
        assert np.abs(controls - model.controls).max() <= 1e-8
        assert report.data_residual_norms[0] <= 1e-8

    def test_constant_reproduction_unregularized(self):
        rng = np.random.default_rng(102)
        coords = rng.uniform(0, 1, size=(200, 2))
        cloud = PointCloud(coords, np.full(200, 4.5), np.zeros(2), np.ones(2))
        system = assemble_system(cloud, FitConfig(degree=2, shape=(5, 5)))
        controls, _ = solve(system, NO_COND)
        np.testing.assert_allclose(controls, 4.5, atol=1e-10)

    def test_constant_reproduction_dense_data_with_threshold(self):
        # every column is data-rich, so the threshold leaves lambda at zero
        # and the regularized solve degenerates to the plain one
        rng = np.random.default_rng(103)
        coords = rng.uniform(0, 1, size=(600, 2))
        cloud = PointCloud(coords, np.full(600, -1.25), np.zeros(2), np.ones(2))
        system = assemble_system(
            cloud, FitConfig(degree=2, shape=(5, 5), threshold=3.0)
        )
        assert np.all(system.lambdas == 0.0)
        controls, _ = solve(system, NO_COND)
        np.testing.assert_allclose(controls, -1.25, atol=1e-10)

    def test_scaling_linearity(self):
        rng = np.random.default_rng(104)
        _, cloud = spline_sampled_cloud(rng, (5, 5), 2, (20, 20))
        config = FitConfig(degree=2, shape=(5, 5), threshold=2.0)
        base, _ = solve(assemble_system(cloud, config), NO_COND)
        doubled_cloud = PointCloud(
            cloud.coords, 2.0 * cloud.values, cloud.bbox_min, cloud.bbox_max
        )
        doubled, _ = solve(assemble_system(doubled_cloud, config), NO_COND)
        np.testing.assert_array_equal(doubled, 2.0 * base)  # power of two: exact
        tripled_cloud = PointCloud(
            cloud.coords, 3.0 * cloud.values, cloud.bbox_min, cloud.bbox_max
        )
        tripled, _ = solve(assemble_system(tripled_cloud, config), NO_COND)
        np.testing.assert_allclose(tripled, 3.0 * base, rtol=1e-12, atol=1e-13)


class TestRankDeficiency:
    def test_empty_corner_unregularized_raises(self):
        rng = np.random.default_rng(105)
        cloud = corner_void_cloud(rng)
        system = assemble_system(cloud, FitConfig(degree=2, shape=(8, 8)))
        with pytest.raises(RankDeficientError):
            solve(system, NO_COND)

    def test_empty_corner_regularized_succeeds(self):
        rng = np.random.default_rng(105)
        cloud = corner_void_cloud(rng)
        system = assemble_system(
            cloud,
            FitConfig(degree=2, shape=(8, 8), threshold=5.0, orders=(1, 2)),
        )
        controls, report = solve(system)
        assert np.all(np.isfinite(controls))
        assert math.isinf(report.cond_data)  # collocation alone is deficient
        assert math.isfinite(report.cond_stacked)
        assert not report.rank_deficient

    def test_error_message_mentions_threshold(self):
        rng = np.random.default_rng(106)
        cloud = corner_void_cloud(rng)
        system = assemble_system(cloud, FitConfig(degree=2, shape=(8, 8)))
        with pytest.raises(RankDeficientError, match="threshold"):
            solve(system, NO_COND)


class TestMethods:
    def test_direct_and_cg_agree(self):
        rng = np.random.default_rng(107)
        _, cloud = spline_sampled_cloud(rng, (6, 5), 2, (25, 25))
        system = assemble_system(cloud, FitConfig(degree=2, shape=(6, 5)))
        direct, rep_d = solve(
            system, SolveOptions(method="direct", estimate_condition=False)
        )
        via_cg, rep_c = solve(
            system, SolveOptions(method="cg", estimate_condition=False)
        )
        assert rep_d.method == "direct" and rep_c.method == "cg"
        assert rep_c.iterations > 0
        scale = np.abs(direct).max()
        np.testing.assert_allclose(via_cg, direct, atol=1e-8 * scale)

    def test_cg_iteration_cap(self):
        rng = np.random.default_rng(108)
        _, cloud = spline_sampled_cloud(rng, (6, 6), 2, (25, 25))
        system = assemble_system(cloud, FitConfig(degree=2, shape=(6, 6)))
        with pytest.raises(NotConvergedError):
            solve(
                system,
                SolveOptions(method="cg", maxiter=1, estimate_condition=False),
            )

    def test_bad_method(self):
        with pytest.raises(ValueError):
            SolveOptions(method="gauss")


class TestResiduals:
    def test_penalty_never_improves_data_residual(self):
        rng = np.random.default_rng(109)
        _, cloud = spline_sampled_cloud(rng, (5, 5), 2, (15, 15))
        noisy = PointCloud(
            cloud.coords,
            cloud.values + 0.1 * rng.standard_normal(cloud.values.shape),
            cloud.bbox_min,
            cloud.bbox_max,
        )
        plain_system = assemble_system(noisy, FitConfig(degree=2, shape=(5, 5)))
        _, plainels = solve(plain_system, NO_COND)
        reg_system = assemble_system(
            noisy, FitConfig(degree=2, shape=(5, 5), threshold=4.0)
        )
        _, reg = solve(reg_system, NO_COND)
        assert (
            reg.data_residual_norms[0] >= plainels.data_residual_norms[0] - 1e-12
        )
        assert reg.residual_norms[0] >= reg.data_residual_norms[0] - 1e-15


class TestConditionNumber:
    def test_orthonormal_columns(self):
        eye = sparse.eye(40, format="csr")
        assert condition_number(eye, mode="exact") == pytest.approx(1.0)
        assert condition_number(eye, mode="estimate") == pytest.approx(1.0, rel=1e-6)

    def test_zero_column_flags_infinite(self):
        rng = np.random.default_rng(110)
        dense = rng.standard_normal((30, 10))
        dense[:, 4] = 0.0
        mat = sparse.csr_matrix(dense)
        assert math.isinf(condition_number(mat, mode="exact"))
        assert math.isinf(condition_number(mat, mode="estimate"))

    def test_estimate_matches_dense_oracle(self):
        rng = np.random.default_rng(111)
        for trial in range(5):
            mat = sparse.random(
                50, 30, density=0.25, random_state=int(rng.integers(2**31)),
                data_rvs=rng.standard_normal,
            )
            exact = condition_number(mat, mode="exact")
            estimate = condition_number(mat, mode="estimate")
            assert abs(estimate - exact) <= 0.05 * exact

    def test_exact_mode_size_cap(self):
        with pytest.raises(ValueError):
            condition_number(sparse.eye(5001, format="csr"), mode="exact")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            condition_number(sparse.eye(3, format="csr"), mode="fast")

    def test_wide_matrix_uses_small_side(self):
        rng = np.random.default_rng(112)
        mat = sparse.random(
            20, 80, density=0.4, random_state=7, data_rvs=rng.standard_normal
        )
        exact = condition_number(mat, mode="exact")
        estimate = condition_number(mat, mode="estimate")
        assert math.isfinite(exact)
        assert abs(estimate - exact) <= 0.05 * exact
