"""Steppers: forced phase-space map, position three-point map, and the
constrained (+)/(-) multiplier steppers, plus structural verifiers.

All steppers are pure functions of their inputs. A trajectory loop owns its
evolving state; distinct trajectories may share triples and distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discretization import DiscreteTriple, d1_lagrangian, d2_lagrangian
from .numkit import (
    DEFAULT_TOL,
    NoConvergenceError,
    NonFiniteValueError,
    SingularJacobianError,
    ToleranceSpec,
    _as_vector,
    fd_gradient,
    fd_jacobian,
    solve_newton,
)


class RankDeficientConstraintsError(RuntimeError):
    """Constraint one-forms lost rank at the current configuration."""


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """A configuration with its conjugate momentum."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _as_vector(self.q))
        object.__setattr__(self, "p", _as_vector(self.p))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise NonFiniteValueError("phase point has non-finite components")


@dataclass(frozen=True)
class Retraction:
    """Map from velocities to configurations and its inverse.

    forward(q, v, h) produces the configuration reached from q along v;
    inverse(q, q2, h) recovers the velocity. The default is q + v*h.
    """

    forward: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    inverse: Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def default_retraction() -> Retraction:
    return Retraction(
        forward=lambda q, v, h: q + v * h,
        inverse=lambda q, q2, h: (q2 - q) / h,
    )


@dataclass(frozen=True)
class ConstraintDistribution:
    """Velocity constraints via their annihilator one-forms.

    ``omega(q)`` returns the m-by-n matrix whose rows span the annihilator;
    rows must stay linearly independent wherever the steppers visit.
    """

    m: int
    omega: Callable[[np.ndarray], np.ndarray]

    def rows(self, q) -> np.ndarray:
        w = np.atleast_2d(np.asarray(self.omega(q), dtype=float))
        if w.shape[0] != self.m:
            raise ValueError(f"omega returned {w.shape[0]} rows, expected {self.m}")
        return w


@dataclass(frozen=True, eq=False)
class DiracStepRecord:
    """One constrained step: endpoints in phase space plus multipliers.

    h and the retraction ride along so the structure verifier can recheck the
    step without help from the stepper.
    """

    q_k: np.ndarray
    p_k: np.ndarray
    q_next: np.ndarray
    p_next: np.ndarray
    mu: np.ndarray
    variant: str  # "+" or "-"
    h: float
    retraction: Retraction


def legendre_plus(triple: DiscreteTriple, q0, q1, h, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Right momentum of the step: d2 of the action plus the right force."""
    return d2_lagrangian(triple, q0, q1, h, tol) + triple.force_plus(q0, q1, h)


def legendre_minus(triple: DiscreteTriple, q0, q1, h, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Left momentum of the step: minus d1 of the action minus the left force."""
    return -d1_lagrangian(triple, q0, q1, h, tol) - triple.force_minus(q0, q1, h)


def _continuous_velocity(system, q, p, tol):
    """Invert p = dL/dv(q, v) for v; only meaningful for nondegenerate L."""
    lag = system.lagrangian

    def defect(v):
        return fd_gradient(lambda u: lag(q, u), v, tol) - p

    return solve_newton(defect, p, tol)


def _default_position_guess(triple, state: PhasePoint, h, tol):
    system = triple.system
    if system is not None and getattr(system, "lagrangian", None) is not None:
        try:
            v_hat = _continuous_velocity(system, state.q, state.p, tol)
            return state.q + h * v_hat
        except (NoConvergenceError, SingularJacobianError, NonFiniteValueError):
            pass
    return state.q.copy()


def hamiltonian_step(
    triple: DiscreteTriple,
    state: PhasePoint,
    h: float,
    guess=None,
    tol: ToleranceSpec = DEFAULT_TOL,
) -> PhasePoint:
    """One step of the forced phase-space map.

    Solves p_k = legendre_minus(q_k, q_next) for q_next by Newton, then reads
    off p_next = legendre_plus(q_k, q_next). A singular Jacobian signals a
    degenerate action (use the constrained steppers instead).
    """
    q_k, p_k = state.q, state.p
    if guess is None:
        guess = _default_position_guess(triple, state, h, tol)

    def residual(x):
        return p_k + d1_lagrangian(triple, q_k, x, h, tol) + triple.force_minus(q_k, x, h)

    q_next = solve_newton(residual, guess, tol)
    return PhasePoint(q=q_next, p=legendre_plus(triple, q_k, q_next, h, tol))


def euler_lagrange_step(
    triple: DiscreteTriple,
    q_prev,
    q_curr,
    h: float,
    guess=None,
    tol: ToleranceSpec = DEFAULT_TOL,
) -> np.ndarray:
    """Three-point position update: the forced momentum-matching condition.

    Finds q_next so the right momentum out of (q_prev, q_curr) equals the
    left momentum into (q_curr, q_next).
    """
    q_prev = _as_vector(q_prev)
    q_curr = _as_vector(q_curr)
    carried = d2_lagrangian(triple, q_prev, q_curr, h, tol) + triple.force_plus(q_prev, q_curr, h)
    if guess is None:
        guess = 2.0 * q_curr - q_prev

    def residual(x):
        return carried + d1_lagrangian(triple, q_curr, x, h, tol) + triple.force_minus(q_curr, x, h)

    return solve_newton(residual, guess, tol)


def _check_rank(w: np.ndarray, m: int):
    if m and np.linalg.matrix_rank(w) < m:
        raise RankDeficientConstraintsError("constraint one-forms are rank deficient")


def _dirac_step(
    triple: DiscreteTriple,
    dist: ConstraintDistribution,
    retr: Retraction,
    state: PhasePoint,
    h: float,
    guess,
    tol: ToleranceSpec,
    variant: str,
) -> DiracStepRecord:
    q_k, p_k = state.q, state.p
    n = q_k.size
    m = dist.m
    if guess is None:
        guess = _default_position_guess(triple, state, h, tol) if m == 0 else q_k.copy()
    else:
        guess = _as_vector(guess)
    _check_rank(dist.rows(q_k), m)
    z0 = np.concatenate([guess, np.zeros(m)])

    if variant == "+":
        # Multiplier lives in the incoming-momentum relation at the base point.
        def residual(z):
            x, mu = z[:n], z[n:]
            w = dist.rows(q_k)
            mom = p_k + d1_lagrangian(triple, q_k, x, h, tol) + triple.force_minus(q_k, x, h)
            if m:
                mom = mom - w.T @ mu
            con = w @ retr.inverse(q_k, x, h) if m else np.zeros(0)
            return np.concatenate([mom, con])
    else:
        # Multiplier lives in the outgoing-momentum relation, based at the new
        # point; the same columns close the incoming relation so the stacked
        # system stays square.
        def residual(z):
            x, mu = z[:n], z[n:]
            w = dist.rows(x)
            mom = p_k + d1_lagrangian(triple, q_k, x, h, tol) + triple.force_minus(q_k, x, h)
            if m:
                mom = mom + w.T @ mu
            con = w @ retr.inverse(x, q_k, h) if m else np.zeros(0)
            return np.concatenate([mom, con])

    z = solve_newton(residual, z0, tol)
    q_next, mu = z[:n], z[n:]
    p_next = legendre_plus(triple, q_k, q_next, h, tol)
    if variant == "-" and m:
        p_next = p_next + dist.rows(q_next).T @ mu
    return DiracStepRecord(
        q_k=q_k.copy(), p_k=p_k.copy(), q_next=q_next, p_next=p_next,
        mu=mu, variant=variant, h=float(h), retraction=retr,
    )


def dirac_plus_step(triple, dist, retr, state, h, guess=None, tol: ToleranceSpec = DEFAULT_TOL):
    """Constrained forward step with discrete constraints anchored at q_k.

    Solves the (n+m) system [incoming momentum relation with multipliers;
    discrete constraints omega(q_k) . retr_inverse(q_k, q_next)] and reads
    off the outgoing momentum. With m = 0 this is the phase-space map.
    """
    return _dirac_step(triple, dist, retr, state, h, guess, tol, "+")


def dirac_minus_step(triple, dist, retr, state, h, guess=None, tol: ToleranceSpec = DEFAULT_TOL):
    """Constrained forward step with discrete constraints anchored at q_next.

    The multiplier columns are the one-forms at the new point, entering both
    momentum relations; the outgoing momentum carries the multiplier term.
    With m = 0 this coincides with the phase-space map.
    """
    return _dirac_step(triple, dist, retr, state, h, guess, tol, "-")


@dataclass(frozen=True)
class DiracStructureReport:
    """Independent recheck of a constrained step record."""

    momentum_in_defect: float
    momentum_out_defect: float
    constraint_residual: float
    multiplier_fit_residual: float
    multiplier_mismatch: float

    @property
    def max_violation(self) -> float:
        return max(
            self.momentum_in_defect,
            self.momentum_out_defect,
            self.constraint_residual,
            self.multiplier_fit_residual,
            self.multiplier_mismatch,
        )

    def passed(self, tol: float) -> bool:
        return self.max_violation <= tol


def verify_dirac_structure(
    record: DiracStepRecord,
    triple: DiscreteTriple,
    dist: ConstraintDistribution,
    tol: float,
    fd_tol: ToleranceSpec = DEFAULT_TOL,
) -> DiracStructureReport:
    """Recheck a step record against the unpacked structure conditions.

    Independent of the stepper's solve: momentum definitions, discrete
    constraint, and a least-squares re-extraction of the multipliers from the
    momentum defect. Failures are reported, not raised.
    """
    q_k, q_n, h, retr = record.q_k, record.q_next, record.h, record.retraction
    m = dist.m
    d1 = d1_lagrangian(triple, q_k, q_n, h, fd_tol)
    d2 = d2_lagrangian(triple, q_k, q_n, h, fd_tol)
    f_minus = triple.force_minus(q_k, q_n, h)
    f_plus = triple.force_plus(q_k, q_n, h)

    if record.variant == "+":
        w = dist.rows(q_k) if m else np.zeros((0, q_k.size))
        mom_in = record.p_k + d1 + f_minus - (w.T @ record.mu if m else 0.0)
        mom_out = record.p_next - d2 - f_plus
        con = w @ retr.inverse(q_k, q_n, h) if m else np.zeros(0)
        defect_for_fit = record.p_k + d1 + f_minus
    else:
        w = dist.rows(q_n) if m else np.zeros((0, q_k.size))
        mom_in = record.p_k + d1 + f_minus + (w.T @ record.mu if m else 0.0)
        mom_out = record.p_next - d2 - f_plus - (w.T @ record.mu if m else 0.0)
        con = w @ retr.inverse(q_n, q_k, h) if m else np.zeros(0)
        defect_for_fit = record.p_next - d2 - f_plus

    if m:
        mu_fit, *_ = np.linalg.lstsq(w.T, defect_for_fit, rcond=None)
        fit_residual = float(np.max(np.abs(w.T @ mu_fit - defect_for_fit)))
        mismatch = float(np.max(np.abs(mu_fit - record.mu)))
    else:
        fit_residual = 0.0
        mismatch = 0.0

    return DiracStructureReport(
        momentum_in_defect=float(np.max(np.abs(mom_in))),
        momentum_out_defect=float(np.max(np.abs(mom_out))),
        constraint_residual=float(np.max(np.abs(con))) if m else 0.0,
        multiplier_fit_residual=fit_residual,
        multiplier_mismatch=mismatch,
    )


_FORCE_FREE_TOL = 1e-12


def symplecticity_defect(
    triple: DiscreteTriple,
    state: PhasePoint,
    h: float,
    tol: ToleranceSpec | None = None,
) -> float:
    """Max-norm of J^T.Omega.J - Omega for the linearized step at ``state``.

    Only defined for force-free triples (forced maps are not symplectic);
    raises ValueError when the triple carries nonzero discrete forces at the
    probed step. The step map is differenced with a wider step than usual:
    each evaluation solves to its arithmetic floor (about 1e-12), and a
    quotient over 1e-4 keeps that noise three orders below the defect scale
    being certified.
    """
    if tol is None:
        tol = ToleranceSpec(residual_tol=1e-10)
    n = state.q.size
    probe = hamiltonian_step(triple, state, h, tol=tol)
    probe_force = max(
        float(np.max(np.abs(triple.force_plus(state.q, probe.q, h)))),
        float(np.max(np.abs(triple.force_minus(state.q, probe.q, h)))),
    )
    if probe_force > _FORCE_FREE_TOL * (1.0 + float(np.max(np.abs(state.p)))):
        raise ValueError("symplecticity defect is only defined for force-free triples")

    warm = probe.q

    def step_map(z):
        nxt = hamiltonian_step(triple, PhasePoint(z[:n], z[n:]), h, guess=warm, tol=tol)
        return np.concatenate([nxt.q, nxt.p])

    z0 = np.concatenate([state.q, state.p])
    jac = fd_jacobian(step_map, z0, ToleranceSpec(fd_step_scale=1e-6))
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return float(np.max(np.abs(jac.T @ omega @ jac - omega)))
