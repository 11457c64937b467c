import numpy as np
import pytest

from smcae.optim import (LbfgsOptions, NonFiniteError, check_gradient, finite_diff,
                         minimize)


def quad(x):
    return float(x @ x), 2 * x


def rosenbrock(x):
    a, b = 1.0, 100.0
    f = (a - x[0]) ** 2 + b * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (a - x[0]) - 4 * b * x[0] * (x[1] - x[0] ** 2),
                  2 * b * (x[1] - x[0] ** 2)])
    return f, g


def test_simple_quadratic():
    result = minimize(quad, np.array([3.0, -4.0]))
    assert result.fun <= 1e-12
    assert result.iterations <= 10
    assert np.allclose(result.x, 0.0, atol=1e-6)


def test_rosenbrock_standard_start():
    result = minimize(rosenbrock, np.array([-1.2, 1.0]),
                      LbfgsOptions(max_iterations=200))
    assert result.fun <= 1e-8
    assert np.allclose(result.x, [1.0, 1.0], atol=1e-3)


def test_already_at_minimum_returns_start():
    result = minimize(quad, np.zeros(3))
    assert result.iterations <= 1
    assert np.array_equal(result.x, np.zeros(3))


@pytest.mark.parametrize("dim", [2, 3, 5, 8])
def test_quadratic_terminates_within_dim_plus_one(dim):
    # Strictly convex quadratics of dimension <= memory reach machine
    # precision in at most dim+1 iterations; disable the relative-change stop
    # so only true convergence terminates the run.
    rng = np.random.default_rng(dim)
    for _ in range(5):
        half = rng.standard_normal((dim, dim))
        A = half @ half.T + dim * np.eye(dim)
        c = rng.standard_normal(dim)

        def f(x):
            r = x - c
            return float(r @ A @ r), 2 * A @ r

        x0 = rng.standard_normal(dim)
        result = minimize(f, x0, LbfgsOptions(max_iterations=50, tolerance=0.0))
        assert result.iterations <= dim + 1
        assert result.fun <= 1e-12 * max(1.0, f(x0)[0])


def test_never_exceeds_starting_objective():
    rng = np.random.default_rng(0)
    for seed in range(10):
        x0 = rng.standard_normal(4)

        def f(x):
            return float(np.sum(np.sin(x) + 0.1 * x ** 4)), \
                np.cos(x) + 0.4 * x ** 3

        result = minimize(f, x0, LbfgsOptions(max_iterations=30))
        assert result.fun <= f(x0)[0] + 1e-15


def test_trace_is_monotone_and_starts_at_initial():
    result = minimize(rosenbrock, np.array([-1.2, 1.0]))
    values = [entry[1] for entry in result.trace]
    assert values[0] == rosenbrock(np.array([-1.2, 1.0]))[0]
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
    assert result.trace[0][0] == 0
    assert result.iterations == len(result.trace) - 1


def test_deterministic_repeat():
    r1 = minimize(rosenbrock, np.array([-1.2, 1.0]))
    r2 = minimize(rosenbrock, np.array([-1.2, 1.0]))
    assert np.array_equal(r1.x, r2.x)
    assert [t[:2] for t in r1.trace] == [t[:2] for t in r2.trace]


def test_aux_payload_rides_along():
    def f(x):
        v = float(x @ x)
        return v, 2 * x, {"value": v}

    result = minimize(f, np.array([2.0, 1.0]))
    for _, value, aux in result.trace:
        assert aux["value"] == value


def test_nonfinite_at_start_raises():
    def f(x):
        return float("nan"), x

    with pytest.raises(NonFiniteError):
        minimize(f, np.ones(2))


def test_line_search_recovers_from_overshoot_infinities():
    # Objective finite near the start but infinite beyond; the search must
    # shrink back rather than fail.
    def f(x):
        if np.abs(x).max() > 2.0:
            return float("inf"), np.full_like(x, np.nan)
        return float(x @ x), 2 * x

    result = minimize(f, np.array([1.9, 0.0]))
    assert result.fun <= 1e-10


def test_options_validation():
    with pytest.raises(ValueError):
        LbfgsOptions(memory=0)
    with pytest.raises(ValueError):
        LbfgsOptions(c1=0.5, c2=0.1)


def test_finite_diff_quadratic_exact():
    grad = finite_diff(lambda v: float(v[0] ** 2), np.array([3.0]))
    assert abs(grad[0] - 6.0) <= 1e-8


def test_finite_diff_constant_is_zero():
    grad = finite_diff(lambda v: 7.5, np.arange(4, dtype=float))
    assert np.allclose(grad, 0.0)


def test_check_gradient_exact_pair():
    err = check_gradient(lambda v: float(v @ v), lambda v: 2 * v,
                         np.array([1.0, -2.0, 3.0]))
    assert err <= 1e-8


def test_check_gradient_scaled_bug_reports_one_third():
    # |2g - g| / (|2g| + |g|) = 1/3 once magnitudes dominate the guard.
    err = check_gradient(lambda v: float(v @ v), lambda v: 4 * v,
                         np.array([10.0, 20.0]))
    assert abs(err - 1 / 3) <= 1e-6


def test_check_gradient_zero_function():
    err = check_gradient(lambda v: 0.0, lambda v: np.zeros_like(v), np.ones(3))
    assert err == 0.0
