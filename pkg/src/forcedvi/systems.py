"""Continuous problem definitions: forced Lagrangian systems and the built-in
examples with their analytic solutions.

Coordinates are plain 1-D numpy arrays. ``accel`` is the forced flow in
explicit form; degenerate systems (singular velocity Hessian) carry
``accel=None`` and are usable only through the constrained steppers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .integrators import ConstraintDistribution, Retraction, default_retraction
from .numkit import _as_vector, fd_gradient


class OverdampedError(ValueError):
    """The analytic oscillator solution only covers the underdamped regime."""


class EnergyUnavailableError(ValueError):
    """The system does not define an energy function."""


@dataclass(frozen=True, eq=False)
class ForcedLagrangianSystem:
    """A Lagrangian with an external force and, when nondegenerate, its flow.

    exact_solution(t, q0, v0) -> (q, v) is optional and only used as a test
    and reporting oracle. hamiltonian_energy(q, v) is optional monitoring.
    """

    dim: int
    lagrangian: Callable[[np.ndarray, np.ndarray], float]
    force: Callable[[np.ndarray, np.ndarray], np.ndarray] | None
    accel: Callable[[np.ndarray, np.ndarray], np.ndarray] | None
    exact_solution: Callable | None = None
    hamiltonian_energy: Callable | None = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    """A (possibly degenerate) system paired with velocity constraints."""

    system: ForcedLagrangianSystem
    distribution: ConstraintDistribution
    retraction: Retraction

    @property
    def dirac_only(self) -> bool:
        return self.system.accel is None


def _el_residual(system: ForcedLagrangianSystem, q, v) -> float:
    """Force-balance defect of accel against the Lagrangian, by differencing.

    Uses a Richardson-friendly small step along the flow direction so the
    check stays meaningful for stiff polynomial potentials.
    """
    lag = system.lagrangian
    a = system.accel(q, v)
    dldq = fd_gradient(lambda x: lag(x, v), q)
    # d/dt of dL/dv along (q, v, a). The time step must sit well above the
    # noise floor of the inner gradient (about 1e-11) to keep the quotient
    # clean; 1e-4 balances that against truncation.
    tau = 1.0e-4 * max(1.0, float(np.max(np.abs(q))), float(np.max(np.abs(v))))
    p_plus = fd_gradient(lambda u: lag(q + tau * v, u), v + tau * a)
    p_minus = fd_gradient(lambda u: lag(q - tau * v, u), v - tau * a)
    dpdt = (p_plus - p_minus) / (2.0 * tau)
    f = system.force(q, v) if system.force is not None else 0.0
    return float(np.max(np.abs(dldq - dpdt + f)))


def check_accel_consistency(system: ForcedLagrangianSystem, states=None, tol: float = 1e-6) -> float:
    """Largest force-balance defect over the given (or default) states."""
    if system.accel is None:
        raise ValueError("system has no acceleration field to check")
    if states is None:
        rng = np.random.default_rng(7)
        states = rng.uniform(-1.0, 1.0, size=(8, 2, system.dim))
    worst = 0.0
    for q, v in states:
        worst = max(worst, _el_residual(system, _as_vector(q), _as_vector(v)))
    if worst > tol:
        raise ValueError(f"acceleration inconsistent with Lagrangian and force ({worst:.3e})")
    return worst


def free_particle(dim: int = 1, mass: float = 1.0) -> ForcedLagrangianSystem:
    """Constant-velocity motion; handy as the exactly solvable base case."""
    m = float(mass)
    sys = ForcedLagrangianSystem(
        dim=dim,
        lagrangian=lambda q, v: 0.5 * m * float(v @ v),
        force=None,
        accel=lambda q, v: np.zeros(dim),
        exact_solution=lambda t, q0, v0: (q0 + t * v0, v0.copy()),
        hamiltonian_energy=lambda q, v: 0.5 * m * float(v @ v),
        name="free-particle",
    )
    check_accel_consistency(sys)
    return sys


def damped_oscillator(m: float = 1.0, k: float = 1.0, c: float = 0.01) -> ForcedLagrangianSystem:
    """Linearly damped oscillator with the damping applied as an external force.

    Underdamped parameters are required so the closed-form solution exists.
    """
    m, k, c = float(m), float(k), float(c)
    if m <= 0 or k <= 0 or c < 0:
        raise ValueError("require m > 0, k > 0, c >= 0")
    if c * c >= 4.0 * m * k:
        raise OverdampedError("analytic solution requires c**2 < 4*m*k")
    gamma = c / (2.0 * m)
    omega_d = math.sqrt(k / m - gamma * gamma)

    def exact(t, q0, v0):
        q0 = _as_vector(q0)
        v0 = _as_vector(v0)
        decay = math.exp(-gamma * t)
        cos_t = math.cos(omega_d * t)
        sin_t = math.sin(omega_d * t)
        b = (v0 + gamma * q0) / omega_d
        q = decay * (q0 * cos_t + b * sin_t)
        v = decay * ((-gamma * q0 + omega_d * b) * cos_t + (-gamma * b - omega_d * q0) * sin_t)
        return q, v

    force = None if c == 0.0 else (lambda q, v: -c * v)
    sys = ForcedLagrangianSystem(
        dim=1,
        lagrangian=lambda q, v: 0.5 * m * float(v @ v) - 0.5 * k * float(q @ q),
        force=force,
        accel=lambda q, v: (-k * q - c * v) / m,
        exact_solution=exact,
        hamiltonian_energy=lambda q, v: 0.5 * m * float(v @ v) + 0.5 * k * float(q @ q),
        name="damped-ho",
    )
    check_accel_consistency(sys)
    return sys


def alpha_oscillator(alpha: float) -> ForcedLagrangianSystem:
    """Unit oscillator with a fraction alpha of the potential force externalized.

    Every alpha in [0, 1] yields the same equations of motion; only the
    (Lagrangian, force) split changes. The reported energy is the conserved
    0.5*v**2 + 0.5*q**2 regardless of the split.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    keep = 1.0 - alpha

    def exact(t, q0, v0):
        q0 = _as_vector(q0)
        v0 = _as_vector(v0)
        return (
            q0 * math.cos(t) + v0 * math.sin(t),
            -q0 * math.sin(t) + v0 * math.cos(t),
        )

    force = None if alpha == 0.0 else (lambda q, v: -alpha * q)
    sys = ForcedLagrangianSystem(
        dim=1,
        lagrangian=lambda q, v: 0.5 * float(v @ v) - keep * 0.5 * float(q @ q),
        force=force,
        accel=lambda q, v: -q,
        exact_solution=exact,
        hamiltonian_energy=lambda q, v: 0.5 * float(v @ v) + 0.5 * float(q @ q),
        name="alpha-ho",
    )
    check_accel_consistency(sys)
    return sys


def quintic_cancellation() -> ForcedLagrangianSystem:
    """Oscillator with a large quintic potential exactly cancelled by a force.

    The equations of motion reduce to the plain unit oscillator, so the
    closed-form oscillator solution is exact; only the representation is
    contaminated. Well-defined discretizations must inherit the cancellation.
    """

    def exact(t, q0, v0):
        q0 = _as_vector(q0)
        v0 = _as_vector(v0)
        return (
            q0 * math.cos(t) + v0 * math.sin(t),
            -q0 * math.sin(t) + v0 * math.cos(t),
        )

    sys = ForcedLagrangianSystem(
        dim=1,
        lagrangian=lambda q, v: 0.5 * float(v @ v) - 0.5 * float(q @ q) - 100.0 * float(q[0] ** 5),
        force=lambda q, v: 500.0 * q**4,
        accel=lambda q, v: -q,
        exact_solution=exact,
        hamiltonian_energy=lambda q, v: 0.5 * float(v @ v) + 0.5 * float(q @ q),
        name="quintic",
    )
    check_accel_consistency(sys)
    return sys


def rlc_circuit(l_ind: float = 0.75, r: float = 0.1, c: float = 3.0) -> ConstrainedSystem:
    """Series resonator in charge coordinates (q_C, q_L, q_R).

    The Lagrangian sees only the inductor current and capacitor charge, so it
    is degenerate; current-matching constraints close the dynamics and the
    resistor enters as an external force on the q_R slot. The eliminated
    dynamics satisfy l_ind*q'' + r*q' + q/c = 0 in the capacitor charge.
    """
    l_ind, r, c = float(l_ind), float(r), float(c)
    if l_ind <= 0 or c <= 0 or r < 0:
        raise ValueError("require l_ind > 0, c > 0, r >= 0")

    def lagrangian(q, i):
        return 0.5 * l_ind * float(i[1] ** 2) - float(q[0] ** 2) / (2.0 * c)

    def force(q, i):
        return np.array([0.0, 0.0, -r * i[2]])

    rows = np.array([
        [0.0, 1.0, -1.0],   # inductor and resistor currents match
        [-1.0, 0.0, 1.0],   # resistor and capacitor currents match
    ])
    dist = ConstraintDistribution(m=2, omega=lambda q: rows)
    retr = default_retraction()
    _validate_retraction(retr, dim=3)
    system = ForcedLagrangianSystem(
        dim=3,
        lagrangian=lagrangian,
        force=force,
        accel=None,
        exact_solution=None,
        hamiltonian_energy=None,
        name="rlc",
    )
    return ConstrainedSystem(system=system, distribution=dist, retraction=retr)


def rlc_capacitor_charge(t, l_ind: float = 0.75, r: float = 0.1, c: float = 3.0,
                         q0: float = 1.0, i0: float = 0.0) -> float:
    """Closed-form capacitor charge of the eliminated series dynamics."""
    gamma = r / (2.0 * l_ind)
    omega_sq = 1.0 / (l_ind * c) - gamma * gamma
    if omega_sq <= 0:
        raise OverdampedError("closed form requires the underdamped regime")
    omega = math.sqrt(omega_sq)
    b = (i0 + gamma * q0) / omega
    return math.exp(-gamma * t) * (q0 * math.cos(omega * t) + b * math.sin(omega * t))


def _validate_retraction(retr: Retraction, dim: int, tol: float = 1e-12):
    rng = np.random.default_rng(3)
    for _ in range(4):
        q = rng.uniform(-1, 1, dim)
        v = rng.uniform(-1, 1, dim)
        h = 0.1
        back = retr.inverse(q, retr.forward(q, v, h), h)
        if float(np.max(np.abs(back - v))) > tol:
            raise ValueError("retraction inverse does not undo forward")


def energy(system: ForcedLagrangianSystem, q, v) -> float:
    """Monitoring energy; raises when the system defines none."""
    if system.hamiltonian_energy is None:
        raise EnergyUnavailableError(f"system {system.name!r} has no energy function")
    return float(system.hamiltonian_energy(_as_vector(q), _as_vector(v)))
