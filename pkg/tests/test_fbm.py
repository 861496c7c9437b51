"""Validation of the exact fBm generators and covariance utilities.

Statistical checks run 10^4 paths and accept deviations up to five
estimated standard errors; hand-computed covariance values are asserted
tightly.
"""

import io
import math

import numpy as np
import pytest

from mvfbm.fbm import (
    CirculantSampler,
    CholeskySampler,
    FbmPath,
    HurstParameter,
    UniformMesh,
    fbm_covariance,
    generate_path_cholesky,
    generate_path_circulant,
    increment_covariance_matrix,
    make_sampler,
    restrict_to_coarse,
    write_path_csv,
)
from mvfbm.streams import StreamKey


class TestHurstParameter:
    def test_regimes(self):
        assert HurstParameter(0.3).regime == "rough"
        assert HurstParameter(0.5).regime == "standard"
        assert HurstParameter(0.7).regime == "smooth"

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.7])
    def test_out_of_range_rejected(self, bad):
        with pytest.raises(ValueError):
            HurstParameter(bad)


class TestUniformMesh:
    def test_nodes_and_delta(self):
        mesh = UniformMesh(2.0, 8)
        assert mesh.delta == 0.25
        assert mesh.node(3) == pytest.approx(0.75)
        nodes = mesh.nodes()
        assert len(nodes) == 9
        assert np.all(np.diff(nodes) > 0)
        assert abs(mesh.delta * mesh.steps - mesh.horizon) <= np.finfo(float).eps * mesh.horizon

    def test_invalid(self):
        with pytest.raises(ValueError):
            UniformMesh(1.0, 0)
        with pytest.raises(ValueError):
            UniformMesh(-1.0, 4)
        with pytest.raises(ValueError):
            UniformMesh(1.0, 8).coarsen(3)


class TestCovariance:
    def test_brownian_reduces_to_min(self):
        assert fbm_covariance(0.5, 0.3, 0.7) == pytest.approx(0.3, abs=1e-15)

    def test_variance_at_one(self):
        assert fbm_covariance(0.9, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_hand_value(self):
        # (1/2)(2^1.5 + 1 - 1) = sqrt(2)
        assert fbm_covariance(0.75, 2.0, 1.0) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h, t, s = rng.uniform(0.05, 0.95), rng.uniform(0, 3), rng.uniform(0, 3)
            assert fbm_covariance(h, t, s) == pytest.approx(fbm_covariance(h, s, t), rel=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            fbm_covariance(0.5, -0.1, 0.2)


class TestIncrementCovarianceMatrix:
    def test_brownian_is_diagonal(self):
        mesh = UniformMesh(1.0, 16)
        cov = increment_covariance_matrix(0.5, mesh)
        assert np.allclose(cov, np.eye(16) * mesh.delta, atol=1e-15)

    def test_single_increment_variance(self):
        mesh = UniformMesh(1.0, 1)
        cov = increment_covariance_matrix(0.8, mesh)
        assert cov.shape == (1, 1)
        assert cov[0, 0] == pytest.approx(1.0, abs=1e-15)  # delta^{2H} with delta = 1

    def test_lag_one_hand_value(self):
        # delta = 1, H = 0.75: (1/2)(2^1.5 - 2)
        cov = increment_covariance_matrix(0.75, UniformMesh(4.0, 4))
        assert cov[0, 1] == pytest.approx(0.5 * (2**1.5 - 2.0), rel=1e-12)

    def test_diagonal_and_psd(self):
        for h in (0.2, 0.5, 0.8):
            mesh = UniformMesh(1.0, 32)
            cov = increment_covariance_matrix(h, mesh)
            assert np.allclose(np.diag(cov), mesh.delta ** (2 * h))
            assert np.allclose(cov, cov.T)
            eigenvalues = np.linalg.eigvalsh(cov)
            assert eigenvalues.min() >= -1e-12 * eigenvalues.max()


def _increment_ensemble(sampler, paths: int, seed: int = 77) -> np.ndarray:
    root = StreamKey(seed)
    streams = [root.child(p) for p in range(paths)]
    return sampler.sample_ensemble(1, streams)[:, :, 0]


def _covariance_zscores(increments: np.ndarray, expected: np.ndarray) -> np.ndarray:
    paths = increments.shape[0]
    empirical = increments.T @ increments / paths
    diag = np.diag(expected)
    stderr = np.sqrt((np.outer(diag, diag) + expected**2) / paths)
    return np.abs(empirical - expected) / stderr


class TestSamplers:
    PATHS = 10_000

    @pytest.mark.parametrize("name", ["cholesky", "circulant"])
    @pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7, 0.9])
    def test_empirical_covariance_matches(self, name, hurst):
        mesh = UniformMesh(1.0, 64)
        sampler = make_sampler(name, hurst, mesh)
        increments = _increment_ensemble(sampler, self.PATHS)
        z = _covariance_zscores(increments, increment_covariance_matrix(hurst, mesh))
        assert z.max() < 5.0, f"covariance deviates {z.max():.2f} standard errors"

    @pytest.mark.parametrize("name", ["cholesky", "circulant"])
    def test_bit_identical_for_same_seed(self, name):
        mesh = UniformMesh(1.0, 128)
        stream = StreamKey(5).child(9)
        sampler = make_sampler(name, 0.8, mesh)
        a = sampler.sample(3, stream)
        b = sampler.sample(3, stream)
        assert np.array_equal(a.increments, b.increments)

    def test_seed_changes_path(self):
        mesh = UniformMesh(1.0, 64)
        a = generate_path_circulant(0.7, mesh, 1, StreamKey(1))
        b = generate_path_circulant(0.7, mesh, 1, StreamKey(2))
        assert not np.array_equal(a.increments, b.increments)

    def test_components_independent(self):
        # lag-0 cross-correlation between components should vanish
        mesh = UniformMesh(1.0, 16)
        sampler = CirculantSampler(0.7, mesh)
        root = StreamKey(11)
        paths = np.stack(
            [sampler.sample(2, root.child(p)).increments for p in range(4000)]
        )  # (P, n, 2)
        cross = np.mean(paths[:, :, 0] * paths[:, :, 1], axis=0)
        scale = mesh.delta ** (2 * 0.7)
        assert np.abs(cross).max() < 5 * scale / math.sqrt(4000) * 1.5

    def test_lag_one_covariance_hand_value(self):
        # H = 0.8: Cov(dB_0, dB_1)/delta^{2H} = (1/2)(2^{1.6} - 2)
        mesh = UniformMesh(1.0, 8)
        sampler = CholeskySampler(0.8, mesh)
        increments = _increment_ensemble(sampler, self.PATHS)
        expected = 0.5 * (2**1.6 - 2.0)
        normalized = increments[:, 0] * increments[:, 1] / mesh.delta**1.6
        stderr = normalized.std(ddof=1) / math.sqrt(self.PATHS)
        assert abs(normalized.mean() - expected) < 5 * stderr

    def test_terminal_variance_identity(self):
        # Var(B_T) = T^{2H} through the cumulative sum of circulant increments
        hurst, paths = 0.7, 10_000
        mesh = UniformMesh(1.0, 256)
        sampler = CirculantSampler(hurst, mesh)
        increments = _increment_ensemble(sampler, paths)
        terminal = increments.sum(axis=1)
        expected = 1.0
        stderr = math.sqrt(2.0 / paths) * expected
        assert abs(np.mean(terminal**2) - expected) < 5 * stderr

    def test_brownian_embedding_is_flat(self):
        mesh = UniformMesh(1.0, 32)
        sampler = CirculantSampler(0.5, mesh)
        assert np.allclose(sampler._sqrt_eigenvalues**2, mesh.delta, rtol=1e-10)

    def test_brownian_lag_one_correlation_vanishes(self):
        mesh = UniformMesh(1.0, 64)
        sampler = CirculantSampler(0.5, mesh)
        increments = _increment_ensemble(sampler, self.PATHS)
        lag1 = np.mean(increments[:, :-1] * increments[:, 1:], axis=0) / mesh.delta
        stderr = 1.0 / math.sqrt(self.PATHS)
        assert np.abs(lag1).max() < 5 * stderr

    def test_cross_sampler_moments_agree(self):
        hurst, paths = 0.7, 10_000
        mesh = UniformMesh(1.0, 32)
        chol = _increment_ensemble(CholeskySampler(hurst, mesh), paths, seed=3)
        circ = _increment_ensemble(CirculantSampler(hurst, mesh), paths, seed=4)
        cov = increment_covariance_matrix(hurst, mesh)
        diag = np.diag(cov)
        se_mean = np.sqrt(diag / paths)
        assert np.abs(chol.mean(axis=0) - circ.mean(axis=0)).max() < 5 * math.sqrt(2) * se_mean.max()
        se_cov = np.sqrt((np.outer(diag, diag) + cov**2) / paths)
        gap = np.abs(chol.T @ chol / paths - circ.T @ circ / paths)
        assert (gap / se_cov).max() < 5 * math.sqrt(2)

    def test_increment_second_moment_law(self):
        # E|B_t - B_s|^2 = |t - s|^{2H} over random node pairs
        rng = np.random.default_rng(123)
        paths = 10_000
        for hurst in (0.3, 0.7):
            mesh = UniformMesh(1.0, 128)
            increments = _increment_ensemble(CirculantSampler(hurst, mesh), paths, seed=9)
            cumulative = np.cumsum(increments, axis=1)
            values = np.concatenate([np.zeros((paths, 1)), cumulative], axis=1)
            for _ in range(10):
                i, j = sorted(rng.choice(mesh.steps + 1, size=2, replace=False))
                gap = values[:, j] - values[:, i]
                expected = (mesh.node(j) - mesh.node(i)) ** (2 * hurst)
                stderr = math.sqrt(2.0 / paths) * expected
                assert abs(np.mean(gap**2) - expected) < 5 * stderr


class TestRestriction:
    def test_factor_one_is_identity(self):
        path = generate_path_circulant(0.6, UniformMesh(1.0, 16), 1, StreamKey(0))
        assert restrict_to_coarse(path, 1) is path

    def test_block_sums(self):
        mesh = UniformMesh(1.0, 4)
        increments = np.array([[1.0], [2.0], [4.0], [8.0]])
        coarse = restrict_to_coarse(FbmPath(mesh, increments), 2)
        assert coarse.mesh.steps == 2
        assert coarse.mesh.delta == pytest.approx(0.5)
        assert np.array_equal(coarse.increments, np.array([[3.0], [12.0]]))

    def test_same_continuous_path(self):
        path = generate_path_circulant(0.8, UniformMesh(1.0, 64), 2, StreamKey(21))
        coarse = restrict_to_coarse(path, 8)
        fine_values = path.values()[::8]
        assert np.allclose(coarse.values(), fine_values, rtol=1e-12, atol=1e-14)

    def test_terminal_value_preserved(self):
        path = generate_path_cholesky(0.4, UniformMesh(1.0, 32), 1, StreamKey(2))
        coarse = restrict_to_coarse(path, 4)
        assert coarse.values()[-1] == pytest.approx(path.values()[-1], rel=1e-12, abs=1e-14)

    def test_non_divisor_rejected(self):
        path = generate_path_circulant(0.6, UniformMesh(1.0, 10), 1, StreamKey(3))
        with pytest.raises(ValueError):
            restrict_to_coarse(path, 4)


def test_path_csv_dump():
    path = generate_path_circulant(0.7, UniformMesh(1.0, 4), 2, StreamKey(5))
    buffer = io.StringIO()
    write_path_csv(path, buffer)
    lines = buffer.getvalue().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "t,component_1,component_2"
    assert len(lines) == 2 + 5  # header block + one row per node
    first = lines[2].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 0.0 and float(first[2]) == 0.0
    terminal = np.array([float(v) for v in lines[-1].split(",")[1:]])
    assert np.allclose(terminal, path.values()[-1])
