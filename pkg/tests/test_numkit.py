import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forcedvi.numkit import (
    NoConvergenceError,
    NonFiniteValueError,
    SingularJacobianError,
    ToleranceSpec,
    fd_gradient,
    fd_jacobian,
    solve_newton,
)


class TestToleranceSpec:
    def test_defaults(self):
        tol = ToleranceSpec()
        assert tol.residual_tol == 1e-12
        assert tol.max_iterations == 50
        assert tol.fd_step_scale == pytest.approx(np.sqrt(np.finfo(float).eps))

    @pytest.mark.parametrize("kwargs", [
        {"residual_tol": 0.0},
        {"residual_tol": -1e-3},
        {"max_iterations": 0},
        {"fd_step_scale": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ToleranceSpec(**kwargs)

    def test_gradient_step_is_cbrt_eps(self):
        # sqrt(eps)**(2/3) == eps**(1/3)
        assert ToleranceSpec().gradient_step_scale == pytest.approx(
            np.finfo(float).eps ** (1 / 3), rel=1e-12
        )


class TestSolveNewton:
    def test_identity_root(self):
        x = solve_newton(lambda x: x, np.array([0.7]))
        assert abs(x[0]) <= 1e-12

    def test_scalar_quadratic(self):
        x = solve_newton(lambda x: x * x - 4.0, np.array([3.0]))
        assert x[0] == pytest.approx(2.0, abs=1e-10)

    def test_linear_system(self):
        def residual(z):
            x, y = z
            return np.array([x + y - 3.0, x - y - 1.0])

        z = solve_newton(residual, np.zeros(2))
        assert np.allclose(z, [2.0, 1.0], atol=1e-10)

    def test_idempotent_at_root(self):
        root = np.array([2.0, 1.0])

        def residual(z):
            return np.array([z[0] + z[1] - 3.0, z[0] - z[1] - 1.0])

        z = solve_newton(residual, root)
        assert np.allclose(z, root, atol=1e-12)

    def test_linear_converges_in_one_iteration(self):
        calls = {"n": 0}
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        b = rng.normal(size=3)

        def residual(z):
            calls["n"] += 1
            return a @ z - b

        solve_newton(residual, np.zeros(3))
        # one Newton round (Jacobian 6 + step eval) lands at the root up to
        # fd error; allow one fd-cleanup round plus the polish round.
        assert calls["n"] <= 1 + 3 * (2 * 3 + 1)

    def test_no_convergence_reports_norm(self):
        with pytest.raises(NoConvergenceError) as err:
            solve_newton(lambda x: x * x + 1.0, np.array([3.0]),
                         ToleranceSpec(max_iterations=40))
        assert err.value.residual_norm is not None
        assert err.value.residual_norm > 0

    def test_singular_jacobian_reports_iterate(self):
        with pytest.raises(SingularJacobianError) as err:
            solve_newton(lambda x: np.array([0.0 * x[0] + 1.0]), np.array([1.5]))
        assert err.value.iterate is not None

    def test_nonfinite_guess(self):
        with pytest.raises(NonFiniteValueError):
            solve_newton(lambda x: x, np.array([np.nan]))

    def test_damping_handles_overshoot(self):
        # steep arctan-like residual needs halving to make progress
        x = solve_newton(lambda x: np.arctan(x), np.array([20.0]),
                         ToleranceSpec(max_iterations=200))
        assert abs(x[0]) <= 1e-12

    @given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_newton_solves_random_spd_linear(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n, n))
        a = a @ a.T + n * np.eye(n)
        b = rng.normal(size=n)
        x = solve_newton(lambda z: a @ z - b, np.zeros(n))
        assert np.max(np.abs(a @ x - b)) <= 1e-12


class TestFdGradient:
    def test_constant(self):
        g = fd_gradient(lambda x: 3.25, np.array([0.4, -2.0]))
        assert np.allclose(g, 0.0, atol=1e-12)

    def test_quadratic(self):
        g = fd_gradient(lambda x: 0.5 * float(x @ x), np.array([1.0, 2.0]))
        assert np.allclose(g, [1.0, 2.0], atol=1e-8)

    def test_sin_at_zero(self):
        g = fd_gradient(lambda x: float(np.sin(x[0])), np.array([0.0]))
        assert g[0] == pytest.approx(1.0, abs=1e-8)

    def test_nonfinite_value(self):
        with pytest.raises(NonFiniteValueError):
            fd_gradient(lambda x: float("nan"), np.array([1.0]))

    @given(
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=25, deadline=None)
    def test_matches_analytic_gradient_on_quadratics(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-2, 2, size=(n, n))
        a = 0.5 * (a + a.T)
        b = rng.uniform(-2, 2, size=n)
        c = rng.uniform(-2, 2)
        x = rng.uniform(-2, 2, size=n)

        g = fd_gradient(lambda z: 0.5 * float(z @ a @ z) + float(b @ z) + c, x)
        exact = a @ x + b
        scale = max(1.0, float(np.max(np.abs(exact))))
        assert np.max(np.abs(g - exact)) / scale <= 1e-8


class TestFdJacobian:
    def test_linear_map(self):
        a = np.array([[2.0, -1.0], [0.5, 3.0]])
        j = fd_jacobian(lambda x: a @ x, np.array([0.3, -0.7]))
        assert np.max(np.abs(j - a)) <= 1e-8

    def test_identity(self):
        j = fd_jacobian(lambda x: x.copy(), np.array([1.0, 2.0, 3.0]))
        assert np.max(np.abs(j - np.eye(3))) <= 1e-10

    def test_product_map(self):
        def f(z):
            x, y = z
            return np.array([x * y, x + y])

        j = fd_jacobian(f, np.array([2.0, 3.0]))
        assert np.max(np.abs(j - np.array([[3.0, 2.0], [1.0, 1.0]]))) <= 1e-8
