import math

import numpy as np
import pytest

from sensor_fault_consensus.exceptions import NonDifferentiablePointError, ParameterError
from sensor_fault_consensus.likelihood import (
    BRUTE_FORCE_MAX_N,
    brute_force_ml,
    enumerate_stationary,
    enumerate_stationary_naive,
    log_likelihood,
    log_likelihood_grouped,
    ml_solution,
    profile_curve,
    profile_derivative,
    profile_segments,
    profile_value,
    stationary_bound,
)
from sensor_fault_consensus.model import LABEL_DTYPE, Label, ModelParams, classify, generate, weighted_theta

A, B = Label.ALPHA, Label.BETA


def _random_omega(rng, n):
    return rng.integers(0, 2, size=n).astype(LABEL_DTYPE)


def _grid_local_maxima(y, params, step=1e-4):
    grid = np.arange(y.min() - 2 * params.delta, y.max() + 2 * params.delta, step)
    values = profile_curve(grid, y, params)
    inner = (values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:])
    return grid[1:-1][inner]


class TestLogLikelihood:
    def test_single_point(self, params):
        value = log_likelihood(1.5, np.array([A]), np.array([1.5]), params)
        expected = math.log(1 - params.p) - math.log(params.alpha * math.sqrt(2 * math.pi))
        assert value == pytest.approx(expected, rel=1e-12)

    def test_weighted_theta_maximizes(self, params, rng):
        y = generate(params, 30, 4).y
        omega = _random_omega(rng, 30)
        best = log_likelihood(weighted_theta(omega, y, params), omega, y, params)
        for theta in rng.uniform(-20, 20, size=100):
            assert log_likelihood(theta, omega, y, params) <= best + 1e-12

    def test_grouped_form_matches(self, params, rng):
        for seed in range(10):
            y = generate(params, 50, seed).y
            omega = _random_omega(rng, 50)
            theta = rng.normal(0, 2)
            assert log_likelihood_grouped(theta, omega, y, params) == pytest.approx(
                log_likelihood(theta, omega, y, params), rel=1e-11
            )

    def test_length_mismatch(self, params):
        with pytest.raises(ParameterError):
            log_likelihood(0.0, np.array([A, A]), np.array([1.0]), params)


class TestProfileValue:
    def test_dominates_any_labelling(self, params, rng):
        y = generate(params, 20, 8).y
        for theta in rng.uniform(-5, 5, size=50):
            best = profile_value(theta, y, params)
            for _ in range(5):
                assert log_likelihood(theta, _random_omega(rng, 20), y, params) <= best + 1e-12

    def test_curve_matches_pointwise(self, params):
        y = generate(params, 40, 2).y
        thetas = np.linspace(-4, 4, 97)
        expected = [profile_value(t, y, params) for t in thetas]
        np.testing.assert_allclose(profile_curve(thetas, y, params), expected, rtol=1e-10, atol=1e-10)

    def test_finite_at_breakpoint(self, params):
        y = np.array([0.4, -1.2, 2.0])
        for theta in (y[0] - params.delta, y[0] + params.delta):
            assert math.isfinite(profile_value(theta, y, params))

    def test_single_observation_peak(self, params):
        y = np.array([0.0])
        assert profile_value(0.0, y, params) > profile_value(0.01, y, params)
        assert profile_value(0.0, y, params) > profile_value(-0.01, y, params)


class TestProfileDerivative:
    def test_finite_difference(self, params, rng):
        y = generate(params, 15, 6).y
        h = 1e-6
        checked = 0
        for theta in rng.uniform(y.min() - 1, y.max() + 1, size=300):
            if np.min(np.abs(np.abs(y - theta) - params.delta)) < 1e-4:
                continue
            numeric = (profile_value(theta + h, y, params) - profile_value(theta - h, y, params)) / (2 * h)
            assert profile_derivative(theta, y, params) == pytest.approx(numeric, abs=1e-4)
            checked += 1
            if checked == 100:
                break
        assert checked == 100

    def test_zero_at_stationary_points(self, params, small_instances):
        for y in small_instances:
            for xi in enumerate_stationary(y, params).points:
                assert abs(profile_derivative(xi, y, params)) < 1e-9

    def test_far_right(self, params):
        y = np.array([0.1, -0.3, 0.7, 1.5])
        theta = y.max() + params.delta + 3.0
        assert profile_derivative(theta, y, params) == pytest.approx(
            -(theta - y.mean()) / params.beta ** 2, rel=1e-12
        )

    def test_breakpoint_raises(self, params):
        y = np.array([0.0, 1.0])
        with pytest.raises(NonDifferentiablePointError):
            profile_derivative(params.delta, y, params)


class TestEnumerateStationary:
    def test_single_point(self, params):
        result = enumerate_stationary(np.array([3.0]), params)
        np.testing.assert_allclose(result.points, [3.0])
        assert result.argmax_theta == pytest.approx(3.0)

    def test_fixed_point_characterization(self, params, small_instances):
        for y in small_instances:
            result = enumerate_stationary(y, params)
            assert len(result) >= 1
            for xi in result.points:
                refit = weighted_theta(classify(xi, y, params.delta), y, params)
                assert refit == pytest.approx(xi, rel=1e-12, abs=1e-12)

    def test_grid_scan_oracle(self, params):
        for seed in range(6):
            y = generate(params, 2 + seed, 100 + seed).y
            points = enumerate_stationary(y, params).points
            grid_max = _grid_local_maxima(y, params)
            assert len(grid_max) == len(points)
            np.testing.assert_allclose(np.sort(grid_max), points, atol=1e-3)

    def test_naive_reference(self, params):
        for seed in range(10):
            y = generate(params, 60, seed).y
            np.testing.assert_allclose(
                enumerate_stationary(y, params).points,
                enumerate_stationary_naive(y, params),
                rtol=1e-12, atol=1e-12,
            )

    def test_translation(self, params, small_instances):
        for y in small_instances:
            shifted = enumerate_stationary(y + 7.5, params).points
            np.testing.assert_allclose(shifted, enumerate_stationary(y, params).points + 7.5, atol=1e-9)

    def test_size_and_bound(self, params):
        bound = stationary_bound(params)
        for seed in range(10):
            y = generate(params, 200, seed).y
            result = enumerate_stationary(y, params)
            assert len(result) <= 2 * y.size + 1
            assert np.all(np.abs(result.points - y.mean()) <= bound)
            assert result.max_value == result.values.max()

    def test_no_breakpoint_maxima(self, params):
        for seed in range(10):
            result = enumerate_stationary(generate(params, 100, seed).y, params)
            assert result.breakpoint_maxima.size == 0

    def test_coincident_breakpoints_flagged(self, params):
        for y in (np.array([0.0, params.delta, 5.0]), np.array([0.0, 2 * params.delta, 5.0]),
                  np.array([1.0, 1.0, 4.0])):
            assert enumerate_stationary(y, params).assumption_violated
        assert not enumerate_stationary(np.array([0.0, 0.37, 5.0]), params).assumption_violated

    def test_empty_input(self, params):
        with pytest.raises(ParameterError):
            enumerate_stationary(np.array([]), params)


class TestProfileSegments:
    def test_segments_are_concave(self, params):
        y = generate(params, 8, 21).y
        for segment in profile_segments(y, params):
            assert segment.lo < segment.hi
            if not (math.isfinite(segment.lo) and math.isfinite(segment.hi)):
                continue
            width = segment.hi - segment.lo
            samples = np.linspace(segment.lo + 0.01 * width, segment.hi - 0.01 * width, 20)
            values = np.array([profile_value(t, y, params) for t in samples])
            assert np.all(np.diff(values, 2) <= 1e-9)
            mid = 0.5 * (segment.lo + segment.hi)
            np.testing.assert_array_equal(classify(mid, y, params.delta) == A, segment.active_set_mask)

    def test_candidates_inside(self, params):
        y = generate(params, 10, 5).y
        for segment in profile_segments(y, params):
            if segment.candidate_theta is not None:
                assert segment.lo < segment.candidate_theta < segment.hi


class TestMlSolution:
    def test_matches_brute_force(self, params):
        for seed in range(50):
            n = 1 + seed % 10
            y = generate(params, n, 500 + seed).y
            theta, omega = ml_solution(y, params)
            _, _, best = brute_force_ml(y, params)
            assert log_likelihood(theta, omega, y, params) == pytest.approx(best, abs=1e-11)
            np.testing.assert_array_equal(omega, classify(theta, y, params.delta))

    def test_tiny_p_all_alpha(self):
        params = ModelParams(p=1e-9)
        y = np.array([0.1, -0.2, 0.3, 0.05])
        theta, omega = ml_solution(y, params)
        assert np.all(omega == A)
        assert theta == pytest.approx(y.mean(), rel=1e-12)

    def test_single_point(self, params):
        theta, omega = ml_solution(np.array([-2.5]), params)
        assert theta == pytest.approx(-2.5)
        assert omega.tolist() == [A]

    def test_brute_force_limit(self, params):
        with pytest.raises(ParameterError):
            brute_force_ml(np.zeros(BRUTE_FORCE_MAX_N + 1), params)
