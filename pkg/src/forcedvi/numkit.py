"""Dense damped-Newton root finding and finite-difference derivatives.

Small shared kernel used by every solver in the package. Problem sizes are
tiny (n <= 6), so everything is dense; the cost that matters is the number
of function evaluations, not linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_EPS = float(np.finfo(float).eps)
_SQRT_EPS = float(np.sqrt(_EPS))

Vector = np.ndarray


class NoConvergenceError(RuntimeError):
    """Iteration budget ran out (or the line search stalled) above tolerance."""

    def __init__(self, message: str, residual_norm: float | None = None):
        super().__init__(message)
        self.residual_norm = residual_norm


class SingularJacobianError(RuntimeError):
    """A Newton linear solve failed; carries the offending iterate."""

    def __init__(self, message: str, iterate: np.ndarray | None = None):
        super().__init__(message)
        self.iterate = iterate


class NonFiniteValueError(ValueError):
    """A function evaluation produced NaN or infinity."""


@dataclass(frozen=True)
class ToleranceSpec:
    """Solver knobs shared across the package.

    residual_tol: max-norm target for Newton residuals.
    max_iterations: Newton iteration cap.
    fd_step_scale: base relative step for difference quotients. Jacobians
        inside Newton use it directly; gradients use fd_step_scale**(2/3),
        which for the sqrt(eps) default lands at eps**(1/3), the balance
        point of truncation against roundoff for central differences.
    """

    residual_tol: float = 1e-12
    max_iterations: int = 50
    fd_step_scale: float = _SQRT_EPS

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.fd_step_scale > 0:
            raise ValueError("fd_step_scale must be positive")

    @property
    def gradient_step_scale(self) -> float:
        return self.fd_step_scale ** (2.0 / 3.0)


DEFAULT_TOL = ToleranceSpec()


def _as_vector(x) -> Vector:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return v


def _eval_vector(f: Callable, x: Vector) -> Vector:
    y = _as_vector(f(x))
    if not np.all(np.isfinite(y)):
        raise NonFiniteValueError(f"non-finite function value at x={x!r}")
    return y


def fd_gradient(f: Callable[[Vector], float], point, tol: ToleranceSpec = DEFAULT_TOL) -> Vector:
    """Central-difference gradient of a scalar function.

    Componentwise step gradient_step_scale * max(1, |x_i|). Raises
    NonFiniteValueError if any evaluation is non-finite.
    """
    x = _as_vector(point)
    scale = tol.gradient_step_scale
    grad = np.empty_like(x)
    for i in range(x.size):
        step = scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValueError(f"non-finite function value near x={x!r}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def fd_jacobian(f: Callable[[Vector], Vector], point, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Central-difference Jacobian of a vector function, same stepping as fd_gradient."""
    x = _as_vector(point)
    return _fd_jacobian_steps(f, x, tol.gradient_step_scale)


def _fd_jacobian_steps(f: Callable, x: Vector, scale: float) -> np.ndarray:
    cols = []
    for i in range(x.size):
        step = scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = _eval_vector(f, xp)
        fm = _eval_vector(f, xm)
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)


def solve_newton(residual: Callable[[Vector], Vector], guess, tol: ToleranceSpec = DEFAULT_TOL) -> Vector:
    """Damped Newton iteration on a vector residual.

    The Jacobian is built by central differences with per-component step
    fd_step_scale * max(1, |x_i|); steps are halved (at most 20 times) when
    the residual max-norm fails to decrease. Succeeds once the max-norm of
    the residual drops to residual_tol, then takes one last plain update
    (kept only if it helps): stopping exactly at the tolerance would leave
    the root anywhere inside the tolerance ball, which difference quotients
    taken through the solve downstream would see as noise of size
    tolerance/step.
    """
    x = _as_vector(guess).copy()
    if not np.all(np.isfinite(x)):
        raise NonFiniteValueError("initial guess is non-finite")
    r = _eval_vector(residual, x)
    rnorm = float(np.max(np.abs(r)))
    for _ in range(tol.max_iterations):
        if rnorm <= tol.residual_tol:
            return _polish_root(residual, x, r, rnorm, tol)
        jac = _fd_jacobian_steps(residual, x, tol.fd_step_scale)
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(
                f"Newton linear solve failed (residual norm {rnorm:.3e})", iterate=x.copy()
            ) from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError("Newton step is non-finite", iterate=x.copy())

        alpha = 1.0
        for _ in range(21):
            x_new = x + alpha * dx
            try:
                r_new = _eval_vector(residual, x_new)
            except NonFiniteValueError:
                alpha *= 0.5
                continue
            rnorm_new = float(np.max(np.abs(r_new)))
            if rnorm_new < rnorm:
                break
            alpha *= 0.5
        else:
            raise NoConvergenceError(
                f"Newton line search stalled at residual norm {rnorm:.3e}",
                residual_norm=rnorm,
            )
        x, r, rnorm = x_new, r_new, rnorm_new
    if rnorm <= tol.residual_tol:
        return _polish_root(residual, x, r, rnorm, tol)
    raise NoConvergenceError(
        f"Newton hit the iteration cap at residual norm {rnorm:.3e}",
        residual_norm=rnorm,
    )


def _polish_root(residual, x, r, rnorm, tol):
    if rnorm == 0.0:
        return x
    jac = _fd_jacobian_steps(residual, x, tol.fd_step_scale)
    try:
        dx = np.linalg.solve(jac, -r)
    except np.linalg.LinAlgError:
        return x
    if not np.all(np.isfinite(dx)):
        return x
    x_new = x + dx
    try:
        r_new = _eval_vector(residual, x_new)
    except NonFiniteValueError:
        return x
    if float(np.max(np.abs(r_new))) < rnorm:
        return x_new
    return x
