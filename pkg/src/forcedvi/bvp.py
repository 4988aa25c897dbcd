"""One-step ODE methods and the shooting solver for two-point boundary values.

A "system" here is anything with an ``accel(q, v)`` callable giving the
second-order flow q'' = a(q, q'). The shooting solver returns the states at
requested interior times together with their sensitivities to both endpoints,
which downstream quadrature of forces needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numkit import DEFAULT_TOL, ToleranceSpec, _as_vector, solve_newton


class UnknownMethodError(ValueError):
    pass


class NonFiniteStateError(RuntimeError):
    """Integration blew up (NaN or infinity in a state)."""


Accel = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OneStepMethod:
    """Explicit one-step map for the first-order form (q' = v, v' = a(q, v)).

    ``stepper(accel, q, v, dt)`` advances one step of size dt and returns the
    new (q, v).
    """

    name: str
    order: int
    stepper: Callable[[Accel, np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]]


def _euler(accel, q, v, dt):
    return q + dt * v, v + dt * accel(q, v)


def _rk2(accel, q, v, dt):
    # explicit midpoint
    a1 = accel(q, v)
    qm = q + (0.5 * dt) * v
    vm = v + (0.5 * dt) * a1
    return q + dt * vm, v + dt * accel(qm, vm)


def _rk4(accel, q, v, dt):
    half = 0.5 * dt
    a1 = accel(q, v)
    q2 = q + half * v
    v2 = v + half * a1
    a2 = accel(q2, v2)
    q3 = q + half * v2
    v3 = v + half * a2
    a3 = accel(q3, v3)
    q4 = q + dt * v3
    v4 = v + dt * a3
    a4 = accel(q4, v4)
    sixth = dt / 6.0
    return (
        q + sixth * (v + 2.0 * v2 + 2.0 * v3 + v4),
        v + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
    )


_BUILTIN_METHODS = {
    "euler": OneStepMethod("euler", 1, _euler),
    "rk2": OneStepMethod("rk2", 2, _rk2),
    "rk4": OneStepMethod("rk4", 4, _rk4),
}


def make_method(name: str) -> OneStepMethod:
    """Look up a built-in method: 'euler' (p=1), 'rk2' (p=2), 'rk4' (p=4)."""
    try:
        return _BUILTIN_METHODS[name]
    except KeyError:
        known = ", ".join(sorted(_BUILTIN_METHODS))
        raise UnknownMethodError(f"unknown one-step method {name!r} (known: {known})") from None


@dataclass(frozen=True, eq=False)
class BVPSolution:
    """Shooting output: initial velocity, node states, endpoint sensitivities.

    node_states[i] approximates (q, v) at time nodes[i] * h; sens_q0[i] and
    sens_q1[i] hold the n-by-n matrices dq_i/dq0 and dq_i/dq1 (None when
    sensitivities were not requested).
    """

    v0: np.ndarray
    node_states: tuple[tuple[np.ndarray, np.ndarray], ...]
    sens_q0: tuple[np.ndarray, ...] | None
    sens_q1: tuple[np.ndarray, ...] | None
    end_state: tuple[np.ndarray, np.ndarray]


def _check_nodes(nodes) -> tuple[float, ...]:
    cs = tuple(float(c) for c in nodes)
    if any(b < a for a, b in zip(cs, cs[1:])):
        raise ValueError("nodes must be sorted ascending")
    if cs and (cs[0] < 0.0 or cs[-1] > 1.0):
        raise ValueError("nodes must lie in [0, 1]")
    return cs


def _propagate(accel, q0, v0, h, cs, method):
    """Integrate through the node times and on to t=h.

    Consecutive sub-steps of sizes (c1*h, (c2-c1)*h, ..., (1-c_m)*h);
    zero-length sub-steps copy the state.
    """
    q = q0.copy()
    v = v0.copy()
    prev = 0.0
    states = []
    step = method.stepper
    for c in cs:
        dc = c - prev
        if dc > 0.0:
            q, v = step(accel, q, v, dc * h)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
                raise NonFiniteStateError(f"integration blew up near t={c * h}")
        states.append((q, v))
        prev = c
    if prev < 1.0:
        q, v = step(accel, q, v, (1.0 - prev) * h)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise NonFiniteStateError("integration blew up before the endpoint")
    return states, (q, v)


def integrate_to_nodes(system, q0, v0, h, nodes, method: OneStepMethod):
    """States of the forced flow at the node times c_i * h (list of (q, v))."""
    cs = _check_nodes(nodes)
    q0 = _as_vector(q0)
    v0 = _as_vector(v0)
    states, _ = _propagate(system.accel, q0, v0, h, cs, method)
    return states


def shoot_bvp(
    system,
    q0,
    q1,
    h: float,
    nodes,
    method: OneStepMethod,
    tol: ToleranceSpec = DEFAULT_TOL,
    sensitivities: bool = True,
    v0_guess=None,
) -> BVPSolution:
    """Solve the two-point boundary value problem q(0)=q0, q(h)=q1 by shooting.

    Newton runs on the endpoint defect in the initial velocity, starting from
    the chord (q1 - q0)/h unless a warm guess is supplied. Endpoint
    sensitivities are central differences of the entire solve with respect to
    each endpoint component (perturbation fd_step_scale**(2/3) * max(1, |x|)),
    each perturbed solve warm-started from the base velocity.
    """
    cs = _check_nodes(nodes)
    q0 = _as_vector(q0)
    q1 = _as_vector(q1)
    accel = system.accel
    if accel is None:
        raise ValueError("system does not define an acceleration field (degenerate Lagrangian)")

    def solve_from(a, b, guess):
        # The defect walks the same sub-step sequence as the node recording,
        # so the recorded path ends exactly on the solved endpoint.
        def defect(v):
            _, (q_end, _) = _propagate(accel, a, v, h, cs, method)
            return q_end - b

        v0 = solve_newton(defect, guess, tol)
        states, end = _propagate(accel, a, v0, h, cs, method)
        return v0, states, end

    base_guess = (q1 - q0) / h if v0_guess is None else _as_vector(v0_guess)
    v0, states, end = solve_from(q0, q1, base_guess)

    sens_q0 = sens_q1 = None
    if sensitivities:
        n = q0.size
        scale = tol.gradient_step_scale
        cols0 = [[None] * n for _ in cs]
        cols1 = [[None] * n for _ in cs]
        for j in range(n):
            step0 = scale * max(1.0, abs(q0[j]))
            qp = q0.copy()
            qm = q0.copy()
            qp[j] += step0
            qm[j] -= step0
            _, sp, _ = solve_from(qp, q1, v0)
            _, sm, _ = solve_from(qm, q1, v0)
            for i in range(len(cs)):
                cols0[i][j] = (sp[i][0] - sm[i][0]) / (2.0 * step0)

            step1 = scale * max(1.0, abs(q1[j]))
            qp = q1.copy()
            qm = q1.copy()
            qp[j] += step1
            qm[j] -= step1
            _, sp, _ = solve_from(q0, qp, v0)
            _, sm, _ = solve_from(q0, qm, v0)
            for i in range(len(cs)):
                cols1[i][j] = (sp[i][0] - sm[i][0]) / (2.0 * step1)
        sens_q0 = tuple(np.column_stack(c) for c in cols0)
        sens_q1 = tuple(np.column_stack(c) for c in cols1)

    return BVPSolution(
        v0=v0,
        node_states=tuple(states),
        sens_q0=sens_q0,
        sens_q1=sens_q1,
        end_state=end,
    )
