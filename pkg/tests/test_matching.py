"""MNN matching, error propagation and the MMA-by-uncertainty table."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from dacov.covariance import Cov2
from dacov.matching import (
    Homography,
    Match,
    MatchError,
    error_jacobian,
    match_error,
    mma_by_uncertainty,
    mutual_nearest_neighbor,
    parse_threshold_range,
    propagate_covariance,
    reprojection_error,
    scalar_uncertainty,
)


def brute_force_mnn(desc_a, desc_b):
    """Exhaustive double-argmin over the full distance matrix."""
    d = np.linalg.norm(desc_a[:, None, :] - desc_b[None, :, :], axis=2)
    pairs = []
    for i in range(len(desc_a)):
        j = int(np.argmin(d[i]))
        if int(np.argmin(d[:, j])) == i:
            pairs.append((i, j))
    return pairs


def homogeneous_map_oracle(x, H):
    """Direct homogeneous arithmetic, kept separate from the implementation."""
    p = H @ np.array([x[0], x[1], 1.0])
    return np.array([p[0] / p[2], p[1] / p[2]])


def random_spd(rng, scale=1.0):
    a = rng.standard_normal((2, 2))
    m = a @ a.T + 0.2 * np.eye(2)
    return Cov2.from_array(scale * m)


class TestMnn:
    def test_identical_singletons(self):
        assert mutual_nearest_neighbor(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]])) == [(0, 0)]

    def test_nearest_both_ways(self):
        desc_a = np.array([[0.0], [10.0]])
        desc_b = np.array([[9.0]])
        assert mutual_nearest_neighbor(desc_a, desc_b) == [(1, 0)]

    def test_empty_inputs(self):
        assert mutual_nearest_neighbor(np.zeros((0, 4)), np.zeros((3, 4))) == []
        assert mutual_nearest_neighbor(np.zeros((3, 4)), np.zeros((0, 4))) == []

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mutual_nearest_neighbor(np.zeros((2, 4)), np.zeros((2, 5)))

    def test_random_matches_brute_force(self):
        rng = np.random.default_rng(0)
        desc_a = rng.standard_normal((100, 64))
        desc_b = rng.standard_normal((80, 64))
        assert mutual_nearest_neighbor(desc_a, desc_b) == brute_force_mnn(desc_a, desc_b)


class TestReprojectionError:
    def test_identity_same_point(self):
        H = Homography(h=np.eye(3))
        e = reprojection_error(np.array([3.0, 4.0]), np.array([3.0, 4.0]), H)
        assert np.allclose(e, 0.0)

    def test_pure_translation(self):
        H = Homography(h=np.array([[1, 0, 3], [0, 1, -2], [0, 0, 1]], dtype=float))
        e = reprojection_error(np.array([1.0, 1.0]), np.array([1.0, 1.0]), H)
        assert np.allclose(e, [-3.0, 2.0])

    def test_random_matches_homogeneous_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            h = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
            H = Homography(h=h)
            x_r = rng.uniform(0, 100, 2)
            x_t = rng.uniform(0, 100, 2)
            expected = x_t - homogeneous_map_oracle(x_r, H.h)
            assert np.allclose(reprojection_error(x_r, x_t, H), expected, atol=1e-12)

    def test_point_at_infinity_rejected(self):
        H = Homography(h=np.array([[1, 0, 0], [0, 1, 0], [1, 0, 1.0]]))
        with pytest.raises(ValueError, match="infinity"):
            reprojection_error(np.array([-1.0, 5.0]), np.array([0.0, 0.0]), H)


class TestPropagation:
    def test_identity_homography_doubles_identity_covs(self):
        H = Homography(h=np.eye(3))
        out = propagate_covariance(Cov2.isotropic(1.0), Cov2.isotropic(1.0), H, np.array([3.0, 7.0]))
        assert np.allclose(out.as_array(), 2.0 * np.eye(2), atol=1e-12)

    def test_scaling_homography(self):
        H = Homography(h=np.diag([2.0, 2.0, 1.0]))
        out = propagate_covariance(Cov2.isotropic(1.0), Cov2.isotropic(1e-12), H, np.array([5.0, 5.0]))
        assert np.allclose(out.as_array(), 4.0 * np.eye(2), atol=1e-9)

    def test_jacobian_matches_central_differences(self):
        rng = np.random.default_rng(11)
        step = 1e-4
        for _ in range(100):
            h = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
            if abs(np.linalg.det(h)) < 1e-3:
                continue
            H = Homography(h=h)
            x = rng.uniform(-20, 20, 2)
            x_t = np.zeros(2)
            try:
                J = error_jacobian(x, H)
            except ValueError:
                continue
            num = np.zeros((2, 2))
            for k in range(2):
                dx = np.zeros(2)
                dx[k] = step
                num[:, k] = (
                    reprojection_error(x + dx, x_t, H) - reprojection_error(x - dx, x_t, H)
                ) / (2 * step)
            assert np.abs(J - num).max() / max(np.abs(J).max(), 1e-12) < 1e-5

    def test_propagated_covariance_is_spd(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            h = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
            if abs(np.linalg.det(h)) < 1e-3:
                continue
            H = Homography(h=h)
            try:
                out = propagate_covariance(random_spd(rng), random_spd(rng), H, rng.uniform(-10, 10, 2))
            except ValueError:
                continue
            evals = np.linalg.eigvalsh(out.as_array())
            assert evals.min() > 0


class TestScalarUncertainty:
    def test_diagonal(self):
        assert scalar_uncertainty(Cov2(s11=4.0, s12=0.0, s22=1.0)) == pytest.approx(4.0)

    def test_off_diagonal(self):
        assert scalar_uncertainty(Cov2(s11=2.0, s12=1.0, s22=2.0)) == pytest.approx(3.0)

    def test_matches_characteristic_polynomial_roots(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            cov = random_spd(rng)
            # roots of z^2 - trace z + det
            tr = cov.s11 + cov.s22
            det = cov.s11 * cov.s22 - cov.s12**2
            roots = np.roots([1.0, -tr, det])
            assert scalar_uncertainty(cov) == pytest.approx(float(np.max(roots.real)), rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0, 2 * np.pi))
    def test_rotation_invariance(self, seed, angle):
        rng = np.random.default_rng(seed)
        cov = random_spd(rng)
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        rotated = Cov2.from_array(R @ cov.as_array() @ R.T)
        assert scalar_uncertainty(rotated) == pytest.approx(scalar_uncertainty(cov), rel=1e-9)


def synthetic_match_errors(n, rng):
    """Match errors drawn from their own reported covariances."""
    out = []
    for _ in range(n):
        cov = random_spd(rng, scale=float(rng.uniform(0.05, 8.0)))
        e = rng.multivariate_normal(np.zeros(2), cov.as_array())
        out.append(MatchError(e=e, sigma_e=cov, scalar_u=scalar_uncertainty(cov)))
    return out


def naive_mma(errors, thresholds, n_bins):
    """Second, independent binning implementation."""
    order = sorted(range(len(errors)), key=lambda i: (errors[i].scalar_u, i))
    sizes = []
    base, rem = divmod(len(errors), n_bins)
    for b in range(n_bins):
        sizes.append(base + (1 if b < rem else 0))
    table = []
    start = 0
    for size in sizes:
        idx = order[start : start + size]
        start += size
        row = []
        for t in thresholds:
            row.append(sum(1 for i in idx if np.linalg.norm(errors[i].e) <= t) / size)
        table.append(row)
    return np.array(table), sizes


class TestMmaTable:
    def test_zero_errors_give_all_ones(self):
        rng = np.random.default_rng(0)
        errors = [
            MatchError(e=np.zeros(2), sigma_e=random_spd(rng), scalar_u=float(rng.uniform(0.1, 5)))
            for _ in range(30)
        ]
        table = mma_by_uncertainty(errors, thresholds=[1.0, 3.0], n_bins=3)
        assert np.all(table.mma == 1.0)
        assert table.mean_mma == [1.0, 1.0, 1.0]

    def test_rank_construction_decreasing(self):
        # error norm grows with scalar uncertainty rank; one match per bin
        errors = []
        for k in range(10):
            cov = Cov2.isotropic(float(k + 1))
            errors.append(MatchError(e=np.array([k + 0.5, 0.0]), sigma_e=cov, scalar_u=float(k + 1)))
        table = mma_by_uncertainty(errors, thresholds=[5.0], n_bins=10)
        col = table.mma[:, 0]
        assert np.all(col[:5] == 1.0) and np.all(col[5:] == 0.0)
        assert all(table.mean_mma[i] >= table.mean_mma[i + 1] for i in range(9))

    def test_matches_naive_implementation(self):
        rng = np.random.default_rng(13)
        errors = synthetic_match_errors(1000, rng)
        thresholds = [1.0, 2.0, 4.0]
        table = mma_by_uncertainty(errors, thresholds=thresholds, n_bins=7)
        expected, sizes = naive_mma(errors, thresholds, 7)
        assert table.bin_sizes == sizes
        assert np.allclose(table.mma, expected)

    def test_equal_count_bins(self):
        rng = np.random.default_rng(1)
        errors = synthetic_match_errors(103, rng)
        table = mma_by_uncertainty(errors, n_bins=10)
        assert max(table.bin_sizes) - min(table.bin_sizes) <= 1
        assert sum(table.bin_sizes) == 103

    def test_fewer_matches_than_bins_rejected(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            mma_by_uncertainty(synthetic_match_errors(5, rng), n_bins=10)

    def test_calibrated_errors_trend_downward(self):
        rng = np.random.default_rng(99)
        errors = synthetic_match_errors(10000, rng)
        table = mma_by_uncertainty(errors, thresholds=[float(t) for t in range(1, 11)], n_bins=10)
        rho = spearmanr(np.arange(10), table.mean_mma).statistic
        assert rho < -0.9

    def test_csv_and_json_outputs(self, tmp_path):
        rng = np.random.default_rng(5)
        table = mma_by_uncertainty(synthetic_match_errors(50, rng), n_bins=5)
        table.write_csv(tmp_path / "mma.csv")
        table.write_json(tmp_path / "mma.json")
        lines = (tmp_path / "mma.csv").read_text().strip().splitlines()
        assert len(lines) == 6
        assert lines[0].startswith("bin,size,mma@1")


class TestThresholdParsing:
    def test_range(self):
        assert parse_threshold_range("1..10") == [float(t) for t in range(1, 11)]

    def test_comma_list(self):
        assert parse_threshold_range("0.5,1.5") == [0.5, 1.5]


class TestHomographyFile:
    def test_round_trip(self, tmp_path):
        h = np.array([[1.0, 0.1, 3.0], [0.0, 1.1, -2.0], [1e-4, 0.0, 1.0]])
        H = Homography(h=h)
        H.to_file(tmp_path / "H.txt")
        loaded = Homography.from_file(tmp_path / "H.txt")
        assert np.allclose(loaded.h, H.h)

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            Homography(h=np.zeros((3, 3)))
