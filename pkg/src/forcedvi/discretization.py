"""Discrete triples (action sum, left/right discrete forces) and their derivatives.

Three constructions are provided:

* ``recipe_triple`` / ``mixed_triple``: quadrature applied to a shooting
  boundary-value solution. With a rule of order q and a one-step method of
  order p, each quantity approximates its exact counterpart to order
  min(p+1, q). Using one rule and one method for all three quantities keeps
  the construction well defined across equivalent (Lagrangian, force) splits
  of the same dynamics; ``mixed_triple`` deliberately breaks that.
* ``midpoint_triple``: the closed chord form h*L((q0+q1)/2, (q1-q0)/h) with
  forces (h/2)*f at the same point, including analytic slot derivatives.
* ``exact_triple``: a refinement oracle for the exact quantities, meant for
  order measurements only, never for stepping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bvp import OneStepMethod, shoot_bvp
from .numkit import DEFAULT_TOL, NoConvergenceError, ToleranceSpec, _as_vector, fd_gradient
from .quadrature import QuadratureRule, apply_rule, composite_simpson

_CACHE_LIMIT = 8192
_SHOOT_TOL = ToleranceSpec(residual_tol=1e-13, max_iterations=60)


@dataclass(frozen=True)
class TripleProvenance:
    """How a triple was built; determines the maps given the system."""

    kind: str  # "recipe" | "midpoint-closed-form" | "exact-oracle"
    rule: str | None = None
    rule_force: str | None = None
    method: str | None = None
    preserving: bool = True


@dataclass(frozen=True, eq=False)
class DiscreteTriple:
    """Maps (q0, q1, h) -> action value and left/right discrete forces.

    ``d1`` and ``d2``, when set, give the slot derivatives of the action map
    directly; otherwise callers fall back to central differences (see
    ``d1_lagrangian``). ``system`` keeps a handle on the continuous problem
    for initial-guess heuristics; steppers must work without it.
    """

    lagrangian: Callable[[np.ndarray, np.ndarray, float], float]
    force_plus: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    force_minus: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    provenance: TripleProvenance
    d1: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    d2: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    system: object | None = None


def d1_lagrangian(triple: DiscreteTriple, q0, q1, h, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Derivative of the action map in its first slot."""
    q0 = _as_vector(q0)
    q1 = _as_vector(q1)
    if triple.d1 is not None:
        return triple.d1(q0, q1, h)
    return fd_gradient(lambda x: triple.lagrangian(x, q1, h), q0, tol)


def d2_lagrangian(triple: DiscreteTriple, q0, q1, h, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Derivative of the action map in its second slot."""
    q0 = _as_vector(q0)
    q1 = _as_vector(q1)
    if triple.d2 is not None:
        return triple.d2(q0, q1, h)
    return fd_gradient(lambda x: triple.lagrangian(q0, x, h), q1, tol)


class _BvpCache:
    """Per-construction cache of shooting solves, keyed on exact float bits."""

    def __init__(self, system, rule: QuadratureRule, method: OneStepMethod, tol: ToleranceSpec):
        self.system = system
        self.rule = rule
        self.method = method
        self.tol = tol
        self._store: dict = {}
        self._last_v0 = None

    def _key(self, q0, q1, h):
        return (q0.tobytes(), q1.tobytes(), float(h))

    def _solve(self, q0, q1, h, sensitivities, warm):
        # Warm starts come from the most recent nearby solve; fall back to the
        # chord guess if the stale velocity leads the iteration astray.
        if warm is None:
            warm = self._last_v0 if (self._last_v0 is not None and self._last_v0.size == q0.size) else None
        try:
            entry = shoot_bvp(
                self.system, q0, q1, h, self.rule.nodes, self.method,
                tol=self.tol, sensitivities=sensitivities, v0_guess=warm,
            )
        except Exception:
            if warm is None:
                raise
            entry = shoot_bvp(
                self.system, q0, q1, h, self.rule.nodes, self.method,
                tol=self.tol, sensitivities=sensitivities,
            )
        self._last_v0 = entry.v0
        return entry

    def states(self, q0, q1, h):
        key = self._key(q0, q1, h)
        entry = self._store.get(key)
        if entry is None:
            entry = self._solve(q0, q1, h, False, None)
            self._remember(key, entry)
        return entry

    def with_sensitivities(self, q0, q1, h):
        key = self._key(q0, q1, h)
        entry = self._store.get(key)
        if entry is None or entry.sens_q0 is None:
            warm = entry.v0 if entry is not None else None
            entry = self._solve(q0, q1, h, True, warm)
            self._remember(key, entry)
        return entry

    def _remember(self, key, entry):
        if len(self._store) >= _CACHE_LIMIT:
            self._store.clear()
        self._store[key] = entry


def _quadrature_maps(system, rule, method, shoot_tol):
    """Build (lagrangian, force_plus, force_minus) maps over one shared cache."""
    cache = _BvpCache(system, rule, method, shoot_tol)
    lag = system.lagrangian
    force = system.force
    dim = system.dim

    def action(q0, q1, h):
        q0 = _as_vector(q0)
        q1 = _as_vector(q1)
        sol = cache.states(q0, q1, h)
        samples = [lag(q, v) for q, v in sol.node_states]
        return float(apply_rule(rule, h, samples))

    if force is None:
        def force_plus(q0, q1, h):
            return np.zeros(dim)

        def force_minus(q0, q1, h):
            return np.zeros(dim)
    else:
        def force_plus(q0, q1, h):
            q0 = _as_vector(q0)
            q1 = _as_vector(q1)
            sol = cache.with_sensitivities(q0, q1, h)
            samples = [
                force(q, v) @ s for (q, v), s in zip(sol.node_states, sol.sens_q1)
            ]
            return np.asarray(apply_rule(rule, h, samples), dtype=float)

        def force_minus(q0, q1, h):
            q0 = _as_vector(q0)
            q1 = _as_vector(q1)
            sol = cache.with_sensitivities(q0, q1, h)
            samples = [
                force(q, v) @ s for (q, v), s in zip(sol.node_states, sol.sens_q0)
            ]
            return np.asarray(apply_rule(rule, h, samples), dtype=float)

    return action, force_plus, force_minus


def recipe_triple(
    system,
    rule: QuadratureRule,
    method: OneStepMethod,
    shoot_tol: ToleranceSpec = _SHOOT_TOL,
) -> DiscreteTriple:
    """Quadrature over a shared shooting solution, one rule and method for all
    three quantities (the well-defined construction)."""
    action, fplus, fminus = _quadrature_maps(system, rule, method, shoot_tol)
    return DiscreteTriple(
        lagrangian=action,
        force_plus=fplus,
        force_minus=fminus,
        provenance=TripleProvenance(
            kind="recipe", rule=rule.name, rule_force=rule.name,
            method=method.name, preserving=True,
        ),
        system=system,
    )


def mixed_triple(
    system,
    rule_lagrangian: QuadratureRule,
    rule_force: QuadratureRule,
    method: OneStepMethod,
    shoot_tol: ToleranceSpec = _SHOOT_TOL,
) -> DiscreteTriple:
    """Deliberately different rules for the action and the forces.

    Reproduces constructions that are not well defined across equivalent
    representations; provenance is flagged non-preserving.
    """
    action, _, _ = _quadrature_maps(system, rule_lagrangian, method, shoot_tol)
    _, fplus, fminus = _quadrature_maps(system, rule_force, method, shoot_tol)
    return DiscreteTriple(
        lagrangian=action,
        force_plus=fplus,
        force_minus=fminus,
        provenance=TripleProvenance(
            kind="recipe", rule=rule_lagrangian.name, rule_force=rule_force.name,
            method=method.name, preserving=(rule_lagrangian.name == rule_force.name),
        ),
        system=system,
    )


def midpoint_triple(system) -> DiscreteTriple:
    """Closed chord-midpoint triple with analytic slot derivatives.

    The derivatives reduce by the chain rule to gradients of the continuous
    Lagrangian at the chord midpoint, so no differencing through solves is
    involved; this is what makes the construction usable for degenerate
    systems inside multiplier solves.
    """
    lag = system.lagrangian
    force = system.force
    dim = system.dim

    def chord(q0, q1, h):
        return 0.5 * (q0 + q1), (q1 - q0) / h

    def action(q0, q1, h):
        q0 = _as_vector(q0)
        q1 = _as_vector(q1)
        m, u = chord(q0, q1, h)
        return h * float(lag(m, u))

    if force is None:
        def force_half(q0, q1, h):
            return np.zeros(dim)
    else:
        def force_half(q0, q1, h):
            q0 = _as_vector(q0)
            q1 = _as_vector(q1)
            m, u = chord(q0, q1, h)
            return (0.5 * h) * np.asarray(force(m, u), dtype=float)

    def grad_parts(q0, q1, h):
        m, u = chord(q0, q1, h)
        gq = fd_gradient(lambda x: lag(x, u), m)
        gv = fd_gradient(lambda x: lag(m, x), u)
        return gq, gv

    def d1(q0, q1, h):
        gq, gv = grad_parts(_as_vector(q0), _as_vector(q1), h)
        return (0.5 * h) * gq - gv

    def d2(q0, q1, h):
        gq, gv = grad_parts(_as_vector(q0), _as_vector(q1), h)
        return (0.5 * h) * gq + gv

    return DiscreteTriple(
        lagrangian=action,
        force_plus=force_half,
        force_minus=force_half,
        provenance=TripleProvenance(kind="midpoint-closed-form", preserving=True),
        d1=d1,
        d2=d2,
        system=system,
    )


def exact_triple(system, ref_tol: float = 1e-12, max_panels: int = 2048) -> DiscreteTriple:
    """Refinement oracle for the exact discrete quantities.

    Each evaluation refines a composite-Simpson + rk4 shooting construction,
    doubling the panel count until all quantities stabilize below ref_tol
    (panel cap ``max_panels``). Slot derivatives come from the boundary-value
    momentum identities d1 = -p(0) - f_minus, d2 = p(h) - f_plus, with p the
    continuous Legendre value of the converged solve, so nothing differences
    through the adaptive loop. For order measurement only.
    """
    if ref_tol < 1e-13:
        raise ValueError("ref_tol below 1e-13 is not resolvable by this oracle")
    from .bvp import make_method

    rk4 = make_method("rk4")
    lag = system.lagrangian
    force = system.force
    dim = system.dim
    cache: dict = {}

    def level_values(q0, q1, h, panels, warm):
        rule = composite_simpson(panels)
        # The defect's rounding floor grows with the sub-step count, so the
        # inner tolerance must not dip below it at deep refinement.
        inner_tol = ToleranceSpec(
            residual_tol=max(1e-12, (2 * panels + 1) * 4e-16), max_iterations=80
        )
        sol = shoot_bvp(
            system, q0, q1, h, rule.nodes, rk4,
            tol=inner_tol, sensitivities=force is not None, v0_guess=warm,
        )
        ld = float(apply_rule(rule, h, [lag(q, v) for q, v in sol.node_states]))
        if force is None:
            fplus = np.zeros(dim)
            fminus = np.zeros(dim)
        else:
            fplus = np.asarray(apply_rule(rule, h, [
                force(q, v) @ s for (q, v), s in zip(sol.node_states, sol.sens_q1)
            ]), dtype=float)
            fminus = np.asarray(apply_rule(rule, h, [
                force(q, v) @ s for (q, v), s in zip(sol.node_states, sol.sens_q0)
            ]), dtype=float)
        p0 = fd_gradient(lambda u: lag(q0, u), sol.v0)
        q_end, v_end = sol.end_state
        p_end = fd_gradient(lambda u: lag(q_end, u), v_end)
        return {"ld": ld, "fplus": fplus, "fminus": fminus, "p0": p0, "ph": p_end,
                "v0": sol.v0, "panels": panels}

    def evaluate(q0, q1, h):
        q0 = _as_vector(q0)
        q1 = _as_vector(q1)
        key = (q0.tobytes(), q1.tobytes(), float(h))
        hit = cache.get(key)
        if hit is not None:
            return hit
        prev = level_values(q0, q1, h, 1, None)
        panels = 2
        while panels <= max_panels:
            cur = level_values(q0, q1, h, panels, prev["v0"])
            diff = max(
                abs(cur["ld"] - prev["ld"]),
                float(np.max(np.abs(cur["fplus"] - prev["fplus"]))),
                float(np.max(np.abs(cur["fminus"] - prev["fminus"]))),
                float(np.max(np.abs(cur["p0"] - prev["p0"]))),
                float(np.max(np.abs(cur["ph"] - prev["ph"]))),
            )
            if diff < ref_tol:
                if len(cache) >= _CACHE_LIMIT:
                    cache.clear()
                cache[key] = cur
                return cur
            prev = cur
            panels *= 2
        raise NoConvergenceError(
            f"refinement did not stabilize below {ref_tol} within {max_panels} panels"
        )

    return DiscreteTriple(
        lagrangian=lambda q0, q1, h: evaluate(q0, q1, h)["ld"],
        force_plus=lambda q0, q1, h: evaluate(q0, q1, h)["fplus"],
        force_minus=lambda q0, q1, h: evaluate(q0, q1, h)["fminus"],
        provenance=TripleProvenance(kind="exact-oracle", preserving=True),
        d1=lambda q0, q1, h: -evaluate(q0, q1, h)["p0"] - evaluate(q0, q1, h)["fminus"],
        d2=lambda q0, q1, h: evaluate(q0, q1, h)["ph"] - evaluate(q0, q1, h)["fplus"],
        system=system,
    )


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of a strong-equivalence check over sampled endpoint pairs."""

    max_violation_minus: float
    max_violation_plus: float
    tol: float
    samples: int
    violations_minus: tuple[float, ...] = field(repr=False, default=())
    violations_plus: tuple[float, ...] = field(repr=False, default=())

    @property
    def max_violation(self) -> float:
        return max(self.max_violation_minus, self.max_violation_plus)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def check_strong_equivalence(
    triple_a: DiscreteTriple,
    triple_b: DiscreteTriple,
    sample_pairs,
    tol: float,
    fd_tol: ToleranceSpec = DEFAULT_TOL,
) -> EquivalenceReport:
    """Check whether two triples generate the same one-step phase map.

    Verifies, at each sampled (q0, q1, h), the two integrability identities
    that characterize equal forced Legendre transforms:

        fB_minus - fA_minus = d1(A) - d1(B)
        fA_plus  - fB_plus  = d2(B) - d2(A)

    Failures do not raise; the report carries the per-identity maxima.
    """
    vm, vp = [], []
    for q0, q1, h in sample_pairs:
        q0 = _as_vector(q0)
        q1 = _as_vector(q1)
        lhs_minus = triple_b.force_minus(q0, q1, h) - triple_a.force_minus(q0, q1, h)
        rhs_minus = d1_lagrangian(triple_a, q0, q1, h, fd_tol) - d1_lagrangian(triple_b, q0, q1, h, fd_tol)
        vm.append(float(np.max(np.abs(lhs_minus - rhs_minus))))
        lhs_plus = triple_a.force_plus(q0, q1, h) - triple_b.force_plus(q0, q1, h)
        rhs_plus = d2_lagrangian(triple_b, q0, q1, h, fd_tol) - d2_lagrangian(triple_a, q0, q1, h, fd_tol)
        vp.append(float(np.max(np.abs(lhs_plus - rhs_plus))))
    return EquivalenceReport(
        max_violation_minus=max(vm) if vm else 0.0,
        max_violation_plus=max(vp) if vp else 0.0,
        tol=tol,
        samples=len(vm),
        violations_minus=tuple(vm),
        violations_plus=tuple(vp),
    )


def sample_endpoint_pairs(dim: int, count: int = 20, box: float = 2.0, h: float = 0.05, seed: int = 42):
    """Deterministic endpoint samples (q0, q1, h), uniform in |q| <= box."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, size=(count, 2, dim))
    return [(pts[i, 0].copy(), pts[i, 1].copy(), h) for i in range(count)]
