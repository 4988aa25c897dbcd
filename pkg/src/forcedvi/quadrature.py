"""Quadrature rules on [0, 1] for action and force integrals over one step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnknownRuleError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes c_i and weights b_i on [0, 1], exact for polynomials of degree < order.

    Weights sum to 1 so constants integrate exactly; apply_rule rescales by
    the step length.
    """

    name: str
    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    order: int

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise LengthMismatchError("nodes and weights must have equal length")
        if any(not 0.0 <= c <= 1.0 for c in self.nodes):
            raise ValueError("nodes must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.nodes, self.nodes[1:])):
            raise ValueError("nodes must be strictly increasing")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if self.order < 1:
            raise ValueError("order must be positive")


_BUILTIN_RULES = {
    "midpoint": QuadratureRule("midpoint", (0.5,), (1.0,), 2),
    "trap": QuadratureRule("trap", (0.0, 1.0), (0.5, 0.5), 2),
    "simpson": QuadratureRule("simpson", (0.0, 0.5, 1.0), (1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0), 4),
}

_ALIASES = {"trapezoid": "trap"}


def make_rule(name: str) -> QuadratureRule:
    """Look up a built-in rule: 'midpoint', 'trap' (or 'trapezoid'), 'simpson'."""
    key = _ALIASES.get(name, name)
    try:
        return _BUILTIN_RULES[key]
    except KeyError:
        known = ", ".join(sorted(_BUILTIN_RULES))
        raise UnknownRuleError(f"unknown quadrature rule {name!r} (known: {known})") from None


def apply_rule(rule: QuadratureRule, h: float, samples) -> float | np.ndarray:
    """h * sum_i b_i * samples_i, approximating the integral of g over [0, h].

    samples holds g(c_i * h) for each node; entries may be scalars or vectors.
    """
    if h <= 0:
        raise ValueError("step length h must be positive")
    values = np.asarray(samples, dtype=float)
    if values.shape[0] != len(rule.nodes):
        raise LengthMismatchError(
            f"expected {len(rule.nodes)} samples for rule {rule.name!r}, got {values.shape[0]}"
        )
    weights = np.asarray(rule.weights)
    if values.ndim == 1:
        return h * float(weights @ values)
    return h * np.tensordot(weights, values, axes=(0, 0))


def composite_simpson(panels: int) -> QuadratureRule:
    """Composite Simpson rule with the given panel count, as a single rule on [0, 1].

    Used for refinement toward exact discrete quantities; the error constant
    shrinks like panels**-4 at fixed formal order 4.
    """
    if panels < 1:
        raise ValueError("panel count must be positive")
    n = 2 * panels
    nodes = tuple(j / n for j in range(n + 1))
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w /= 3.0 * n
    return QuadratureRule(f"simpson-{panels}", nodes, tuple(w), 4)
