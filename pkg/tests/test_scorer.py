import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stagechain import (RunConfig, Sample, StageDataset, ValidationError,
                        estimate, estimate_batch, fit_estimator,
                        generate_process, init_transformer,
                        make_linear_chain_spec, pooled_labels, score_ages,
                        score_error)

ages_arrays = st.lists(st.floats(-100, 200), min_size=1, max_size=40).map(
    lambda v: np.array(v, dtype=np.float64))


class TestScoreAges:
    def test_two_point_fixture(self):
        r = score_ages(np.array([30.0, 40.0]), 35.0, 1e-6)
        assert r.mean_abs_error == pytest.approx(5.0, abs=1e-12)
        assert r.std_dev == pytest.approx(5.0, abs=1e-12)
        assert r.normalized_error == pytest.approx(1.0, abs=1e-12)
        assert r.n_samples == 2
        assert not r.sigma_floored

    def test_constant_output_floors_sigma(self):
        r = score_ages(np.full(10, 35.0), 35.0, 1e-6)
        assert r.mean_abs_error == 0.0
        assert r.normalized_error == 0.0
        assert r.sigma_floored

    def test_population_sigma_convention(self):
        # sigma^2 = mean of squared deviations, no n-1 correction
        r = score_ages(np.array([1.0, 2.0, 3.0, 4.0]), 2.0, 1e-6)
        assert r.std_dev == pytest.approx(math.sqrt(1.25), abs=1e-15)

    def test_matches_bruteforce_recomputation(self):
        rng = np.random.default_rng(4)
        ages = rng.uniform(10, 80, size=100)
        target = 37.0
        r = score_ages(ages, target, 1e-6)
        mae = sum(abs(a - target) for a in ages) / len(ages)
        mean = sum(ages) / len(ages)
        var = sum((a - mean) ** 2 for a in ages) / len(ages)
        assert r.mean_abs_error == pytest.approx(mae, rel=1e-12)
        assert r.std_dev == pytest.approx(math.sqrt(var), rel=1e-12)
        assert r.normalized_error == pytest.approx(mae / math.sqrt(var), rel=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            score_ages(np.array([]), 35.0, 1e-6)

    def test_rejects_bad_floor(self):
        with pytest.raises(ValidationError):
            score_ages(np.array([1.0]), 1.0, 0.0)

    @given(ages=ages_arrays, target=st.floats(-50, 150), seed=st.integers(0, 2 ** 16))
    def test_permutation_invariant(self, ages, target, seed):
        perm = np.random.default_rng(seed).permutation(ages.size)
        a = score_ages(ages, target, 1e-6)
        b = score_ages(ages[perm], target, 1e-6)
        assert a.normalized_error == pytest.approx(b.normalized_error, rel=1e-12, abs=1e-12)

    @given(ages=ages_arrays, target=st.floats(-50, 150), shift=st.floats(-1000, 1000))
    def test_translation_covariant(self, ages, target, shift):
        a = score_ages(ages, target, 1e-6)
        b = score_ages(ages + shift, target + shift, 1e-6)
        assert b.mean_abs_error == pytest.approx(a.mean_abs_error, rel=1e-9, abs=1e-9)
        if not a.sigma_floored:
            assert b.normalized_error == pytest.approx(a.normalized_error, rel=1e-9)

    @settings(max_examples=40)
    @given(ages=ages_arrays, target=st.floats(-50, 150), c=st.floats(0.01, 100))
    def test_deviation_scaling_cancels(self, ages, target, c):
        a = score_ages(ages, target, 1e-12)
        b = score_ages(target + c * (ages - target), target, 1e-12)
        assert b.mean_abs_error == pytest.approx(c * a.mean_abs_error, rel=1e-9, abs=1e-9)
        if not a.sigma_floored and a.std_dev > 1e-9:
            assert b.normalized_error == pytest.approx(a.normalized_error, rel=1e-6)


class TestFitEstimator:
    def test_exact_recovery_on_noiseless_process(self):
        # true_age is affine in the observables when noise is off, so
        # ridge recovery on one draw must predict a held-out draw to
        # numerical precision
        spec = make_linear_chain_spec(seed=3, noise_scale=0.0)
        fit_draw = generate_process(spec, 3, "synth.estimator")
        gamma = fit_estimator(*pooled_labels(fit_draw))
        held_out = generate_process(spec, 3, "synth.validation")
        X, y = pooled_labels(held_out)
        mae = np.abs(estimate_batch(gamma, X) - y).mean()
        assert mae <= 1e-6

    def test_large_ridge_shrinks_to_mean(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 4))
        y = rng.uniform(20, 60, size=50)
        gamma = fit_estimator(X, y, ridge=1e12)
        assert np.abs(gamma.weights).max() < 1e-6
        assert estimate(gamma, Sample(np.zeros(4))) == pytest.approx(y.mean(), rel=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 3))
        y = rng.uniform(0, 10, size=30)
        a = fit_estimator(X, y, seed=5)
        b = fit_estimator(X, y, seed=5)
        assert np.array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_needs_d_plus_one_samples(self):
        with pytest.raises(ValidationError):
            fit_estimator(np.ones((3, 3)), np.ones(3))

    def test_records_fit_metadata(self):
        X = np.random.default_rng(9).standard_normal((6, 4))
        gamma = fit_estimator(X, np.arange(6.0), seed=9)
        assert gamma.fit_record["n_samples"] == 6
        assert gamma.fit_record["seed"] == 9


class TestEstimate:
    def test_zero_weights_returns_bias(self):
        gamma = fit_estimator(np.random.default_rng(0).standard_normal((20, 3)),
                              np.full(20, 40.0), ridge=1e9)
        assert estimate(gamma, Sample(np.ones(3))) == pytest.approx(40.0, abs=1e-6)

    def test_affine_in_input(self):
        rng = np.random.default_rng(6)
        gamma = fit_estimator(rng.standard_normal((20, 3)), rng.uniform(0, 50, 20))
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        lhs = estimate(gamma, Sample(x + y)) - estimate(gamma, Sample(x))
        assert lhs == pytest.approx(float(gamma.weights @ y), abs=1e-9)

    def test_dimension_mismatch(self):
        gamma = fit_estimator(np.random.default_rng(0).standard_normal((9, 2)),
                              np.arange(9.0))
        with pytest.raises(ValidationError):
            estimate(gamma, Sample(np.zeros(3)))
        with pytest.raises(ValidationError):
            estimate_batch(gamma, np.zeros((4, 3)))


class TestScoreError:
    def test_identity_transformer_matches_direct_scoring(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((64, 4)) + 3.0
        gamma = fit_estimator(rng.standard_normal((32, 4)), rng.uniform(10, 70, 32))
        phi = init_transformer(4, "identity")
        r = score_error(phi, StageDataset(1, X, 15.0), 25.0, gamma)
        direct = score_ages(estimate_batch(gamma, X), 25.0, 1e-6)
        assert r.normalized_error == direct.normalized_error
        assert r.n_samples == 64

    def test_floor_respected(self):
        gamma = fit_estimator(np.random.default_rng(0).standard_normal((20, 3)),
                              np.full(20, 40.0), ridge=1e9)
        phi = init_transformer(3, "identity")
        src = StageDataset(1, np.random.default_rng(1).standard_normal((8, 3)), 15.0)
        r = score_error(phi, src, 25.0, gamma, sigma_floor=RunConfig().sigma_floor)
        assert r.sigma_floored
        assert np.isfinite(r.normalized_error)
