import numpy as np
import pytest

from knewimp.missingness import (
    Mechanism,
    MissingSpec,
    calibrate_bias,
    simulate,
    simulate_mar,
    simulate_mcar,
    simulate_mnar,
)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logit(p):
    return np.log(p / (1.0 - p))


class TestCalibrateBias:
    def test_zero_logits_half_rate(self):
        b = calibrate_bias(np.zeros(100), 0.5)
        assert abs(b) < 1e-6

    def test_zero_logits_closed_form(self):
        b = calibrate_bias(np.zeros(50), 0.3)
        assert b == pytest.approx(logit(0.3), abs=1e-5)

    def test_random_logits_hits_target(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            logits = rng.standard_normal(int(rng.integers(5, 500))) * 2.0
            target = float(rng.uniform(0.05, 0.95))
            b = calibrate_bias(logits, target)
            assert abs(sigmoid(logits + b).mean() - target) <= 1e-6

    def test_monotone_in_target(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal(200)
        biases = [calibrate_bias(logits, t) for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a < b for a, b in zip(biases, biases[1:]))

    def test_target_bounds(self):
        with pytest.raises(ValueError):
            calibrate_bias(np.zeros(3), 0.0)
        with pytest.raises(ValueError):
            calibrate_bias(np.zeros(3), 1.0)


class TestMcar:
    def test_rate_bounds_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                simulate_mcar(10, 10, bad, 0)

    def test_empirical_rate(self):
        mask = simulate_mcar(10_000, 10, 0.3, seed=5)
        missing = 1.0 - mask.mean()
        assert 0.285 <= missing <= 0.315

    def test_deterministic(self):
        a = simulate_mcar(50, 7, 0.4, seed=9)
        b = simulate_mcar(50, 7, 0.4, seed=9)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, simulate_mcar(50, 7, 0.4, seed=10))

    def test_binary_output(self):
        mask = simulate_mcar(40, 3, 0.5, seed=1)
        assert set(np.unique(mask)) <= {0.0, 1.0}


def make_truth(n=400, d=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)) * rng.uniform(0.5, 3.0, d) + rng.normal(0, 2, d)


class TestMar:
    def test_observed_column_count(self):
        spec = MissingSpec(Mechanism.MAR, rate=0.3, observed_fraction=0.3, seed=2)
        mask = simulate_mar(make_truth(d=10), spec)
        fully_observed = (mask.min(axis=0) == 1.0).sum()
        assert fully_observed >= 3  # ceil(0.3 * 10), plus whatever stays lucky

    def test_selected_columns_all_ones(self):
        # The selection is recoverable: exactly the columns without any miss.
        spec = MissingSpec(Mechanism.MAR, rate=0.5, observed_fraction=0.3, seed=4)
        truth = make_truth(n=2000, d=10, seed=1)
        mask = simulate_mar(truth, spec)
        col_missing = (mask == 0.0).sum(axis=0)
        assert (col_missing == 0).sum() == 3

    def test_rate_calibration(self):
        spec = MissingSpec(Mechanism.MAR, rate=0.3, observed_fraction=0.3, seed=7)
        truth = make_truth(n=20_000, d=10, seed=2)
        mask = simulate_mar(truth, spec)
        maskable = mask.min(axis=0) < 1.0
        missing = 1.0 - mask[:, maskable].mean()
        assert 0.27 <= missing <= 0.33

    def test_zero_weights_reduce_to_mcar(self):
        spec = MissingSpec(Mechanism.MAR, rate=0.3, observed_fraction=0.3, seed=11)
        truth = make_truth(n=30_000, d=10, seed=3)
        mask = simulate_mar(truth, spec, weight_scale=0.0)
        maskable_cols = np.where(mask.min(axis=0) < 1.0)[0]
        sub = mask[:, maskable_cols]
        missing = 1.0 - sub.mean()
        assert 0.27 <= missing <= 0.33
        # constant probability: per-column rates agree tightly
        per_col = 1.0 - sub.mean(axis=0)
        assert per_col.max() - per_col.min() < 0.03

    def test_deterministic(self):
        spec = MissingSpec(Mechanism.MAR, rate=0.4, seed=6)
        truth = make_truth(seed=5)
        assert np.array_equal(simulate_mar(truth, spec), simulate_mar(truth, spec))

    def test_bad_fraction(self):
        truth = make_truth(d=3)
        spec = MissingSpec(Mechanism.MAR, rate=0.3, observed_fraction=0.99, seed=0)
        with pytest.raises(ValueError, match="fewer than all"):
            simulate_mar(truth, spec)

    def test_incomplete_truth_rejected(self):
        truth = make_truth()
        truth[0, 0] = np.nan
        with pytest.raises(ValueError, match="complete"):
            simulate_mar(truth, MissingSpec(Mechanism.MAR, rate=0.3, seed=0))


class TestMnar:
    def test_tiny_overlay_matches_mar(self):
        truth = make_truth(n=500, d=10, seed=8)
        mar_spec = MissingSpec(Mechanism.MAR, rate=0.3, seed=21)
        mnar_spec = MissingSpec(
            Mechanism.MNAR, rate=0.3, mcar_overlay_rate=1e-12, seed=21
        )
        assert np.array_equal(
            simulate_mnar(truth, mnar_spec), simulate_mar(truth, mar_spec)
        )

    def test_overlay_rate_on_input_columns(self):
        truth = make_truth(n=40_000, d=10, seed=9)
        spec = MissingSpec(
            Mechanism.MNAR, rate=0.3, observed_fraction=0.3,
            mcar_overlay_rate=0.25, seed=23,
        )
        mar_mask = simulate_mar(truth, MissingSpec(Mechanism.MAR, rate=0.3, seed=23))
        mnar_mask = simulate_mnar(truth, spec)
        input_cols = np.where(mar_mask.min(axis=0) == 1.0)[0]
        assert input_cols.size == 3
        overlay_missing = 1.0 - mnar_mask[:, input_cols].mean()
        assert abs(overlay_missing - 0.25) <= 0.02

    def test_maskable_columns_keep_mar_rate(self):
        truth = make_truth(n=40_000, d=10, seed=10)
        spec = MissingSpec(Mechanism.MNAR, rate=0.3, seed=29)
        mar_mask = simulate_mar(truth, MissingSpec(Mechanism.MAR, rate=0.3, seed=29))
        mnar_mask = simulate_mnar(truth, spec)
        maskable = np.where(mar_mask.min(axis=0) < 1.0)[0]
        missing = 1.0 - mnar_mask[:, maskable].mean()
        assert abs(missing - 0.3) <= 0.03

    def test_overlay_touches_only_input_columns(self):
        truth = make_truth(n=3000, d=10, seed=11)
        spec = MissingSpec(Mechanism.MNAR, rate=0.3, mcar_overlay_rate=0.4, seed=31)
        mar_mask = simulate_mar(truth, MissingSpec(Mechanism.MAR, rate=0.3, seed=31))
        mnar_mask = simulate_mnar(truth, spec)
        maskable = mar_mask.min(axis=0) < 1.0
        assert np.array_equal(mnar_mask[:, maskable], mar_mask[:, maskable])


class TestDispatchAndGuard:
    def test_dispatch(self):
        truth = make_truth(n=200, d=6, seed=12)
        for mech in Mechanism:
            spec = MissingSpec(mech, rate=0.3, seed=3)
            mask = simulate(truth, spec)
            assert mask.shape == truth.shape
            assert set(np.unique(mask)) <= {0.0, 1.0}

    def test_no_fully_missing_columns_mar(self):
        # Small n and high rate make fully missing columns likely without
        # the redraw guard.
        truth = make_truth(n=6, d=5, seed=13)
        spec = MissingSpec(Mechanism.MAR, rate=0.85, observed_fraction=0.2, seed=1)
        mask = simulate_mar(truth, spec)
        assert mask.sum(axis=0).min() >= 1.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MissingSpec(Mechanism.MCAR, rate=1.2)
        with pytest.raises(ValueError):
            MissingSpec(Mechanism.MAR, rate=0.3, observed_fraction=0.0)
        with pytest.raises(ValueError):
            MissingSpec(Mechanism.MNAR, rate=0.3, mcar_overlay_rate=2.0)
