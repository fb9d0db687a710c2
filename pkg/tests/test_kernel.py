import numpy as np
import pytest

from knewimp.kernel import (
    KernelConfig,
    grad_gram_second,
    gram,
    median_bandwidth,
    resolve_bandwidth,
    squared_distances,
)


def fd_grad_second(x_i, y_j, h, step=1e-6):
    """Central finite differences of K(x_i, .) at y_j; independent oracle."""
    y_j = np.asarray(y_j, dtype=np.float64)
    out = np.empty_like(y_j)
    for d in range(y_j.size):
        plus = y_j.copy()
        minus = y_j.copy()
        plus[d] += step
        minus[d] -= step
        kp = gram(x_i[None, :], plus[None, :], h)[0, 0]
        km = gram(x_i[None, :], minus[None, :], h)[0, 0]
        out[d] = (kp - km) / (2.0 * step)
    return out


class TestGram:
    def test_single_identical_point(self):
        x = np.array([[1.5, -2.0]])
        g = gram(x, x, 0.5)
        assert g.shape == (1, 1)
        assert g[0, 0] == pytest.approx(1.0)

    def test_distance_matching_bandwidth_scale(self):
        # ||x - y||^2 = 2 h^2  =>  K = exp(-1)
        h = 0.7
        x = np.zeros((1, 2))
        y = np.array([[h * np.sqrt(2.0), 0.0]])
        assert gram(x, y, h)[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_unit_offset_closed_form(self):
        x = np.array([[0.0, 0.0]])
        y = np.array([[1.0, 1.0]])
        assert gram(x, y, 1.0)[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_symmetry_on_self(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((17, 4))
        g = gram(x, x, 0.5)
        assert np.allclose(g, g.T, atol=1e-15)
        assert np.allclose(np.diag(g), 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gram(np.zeros((2, 3)), np.zeros((2, 4)), 1.0)

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            gram(np.zeros((1, 1)), np.zeros((1, 1)), 0.0)

    def test_monotone_decay_in_distance(self):
        h = 0.9
        dists = np.linspace(0.1, 4.0, 25)
        vals = [gram(np.zeros((1, 1)), np.array([[t]]), h)[0, 0] for t in dists]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_psd_on_random_clouds(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 65))
            d = int(rng.integers(1, 6))
            x = rng.standard_normal((n, d))
            g = gram(x, x, 0.5)
            eigmin = np.linalg.eigvalsh(g).min()
            assert eigmin >= -1e-8


class TestGradGramSecond:
    def test_coincident_points_zero(self):
        x = np.array([0.3, -0.7, 1.1])
        assert np.all(grad_gram_second(x, x, 0.5) == 0.0)

    def test_unit_separation_value(self):
        # Oracle value frozen from central finite differences of the kernel.
        g = grad_gram_second(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1.0)
        fd = fd_grad_second(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1.0)
        assert g == pytest.approx(fd, rel=1e-6)
        assert g == pytest.approx([np.exp(-0.5), 0.0], abs=1e-12)

    def test_antisymmetry_in_arguments(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.standard_normal(3)
            y = rng.standard_normal(3)
            gy = grad_gram_second(x, y, 0.8)
            gx = grad_gram_second(y, x, 0.8)
            assert gy == pytest.approx(-gx, rel=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(1, 7))
            x = rng.standard_normal(d)
            y = rng.standard_normal(d)
            h = float(rng.uniform(0.3, 2.0))
            analytic = grad_gram_second(x, y, h)
            numeric = fd_grad_second(x, y, h)
            denom = max(np.abs(numeric).max(), 1e-9)
            assert np.abs(analytic - numeric).max() / denom < 1e-6


class TestMedianBandwidth:
    def test_two_points(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])  # distance sqrt(2)
        assert median_bandwidth(x) == pytest.approx(1.0, rel=1e-12)

    def test_duplicated_cloud_keeps_median(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((12, 3))
        base = median_bandwidth(x)
        dup = np.vstack([x, x])
        # Duplicates add zero distances symmetrically; median shifts but the
        # brute-force recomputation must agree with the function itself.
        assert median_bandwidth(dup) == pytest.approx(brute_median(dup), rel=1e-12)
        assert base == pytest.approx(brute_median(x), rel=1e-12)

    def test_identical_points_floor(self):
        x = np.zeros((5, 2))
        assert median_bandwidth(x) == 1e-6

    def test_against_brute_force(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            x = rng.standard_normal((int(rng.integers(2, 40)), 3))
            assert median_bandwidth(x) == pytest.approx(brute_median(x), rel=1e-12)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            median_bandwidth(np.zeros((1, 2)))


def brute_median(x):
    dists = []
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            dists.append(np.linalg.norm(x[i] - x[j]))
    return max(float(np.median(dists)) / np.sqrt(2.0), 1e-6)


def test_squared_distances_clamped_nonnegative():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((30, 5)) * 1e-8
    assert squared_distances(x, x).min() >= 0.0


def test_resolve_bandwidth():
    cfg = KernelConfig(bandwidth=0.5)
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert resolve_bandwidth(cfg, x) == 0.5
    cfg = KernelConfig(bandwidth=0.5, use_median_heuristic=True)
    assert resolve_bandwidth(cfg, x) == pytest.approx(1.0)


def test_kernel_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(bandwidth=-1.0)
