import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forcedvi.quadrature import (
    LengthMismatchError,
    QuadratureRule,
    UnknownRuleError,
    apply_rule,
    composite_simpson,
    make_rule,
)


class TestMakeRule:
    def test_midpoint(self):
        r = make_rule("midpoint")
        assert r.nodes == (0.5,)
        assert r.weights == (1.0,)
        assert r.order == 2

    def test_trapezoid(self):
        for name in ("trap", "trapezoid"):
            r = make_rule(name)
            assert r.nodes == (0.0, 1.0)
            assert r.weights == (0.5, 0.5)
            assert r.order == 2

    def test_simpson(self):
        r = make_rule("simpson")
        assert r.nodes == (0.0, 0.5, 1.0)
        assert r.weights == pytest.approx((1 / 6, 4 / 6, 1 / 6))
        assert r.order == 4

    def test_unknown(self):
        with pytest.raises(UnknownRuleError):
            make_rule("gauss3")

    def test_invalid_rules_rejected(self):
        with pytest.raises(LengthMismatchError):
            QuadratureRule("bad", (0.0, 1.0), (1.0,), 2)
        with pytest.raises(ValueError):
            QuadratureRule("bad", (0.0, 1.5), (0.5, 0.5), 2)
        with pytest.raises(ValueError):
            QuadratureRule("bad", (0.5, 0.5), (0.5, 0.5), 2)
        with pytest.raises(ValueError):
            QuadratureRule("bad", (0.0, 1.0), (0.7, 0.5), 2)


class TestApply:
    def test_constant_any_rule(self):
        for name in ("midpoint", "trap", "simpson"):
            assert apply_rule(make_rule(name), 0.2, [3.0] * len(make_rule(name).nodes)) \
                == pytest.approx(0.6, abs=1e-15)

    def test_linear_trapezoid(self):
        r = make_rule("trap")
        samples = [c * 1.0 for c in r.nodes]
        assert apply_rule(r, 1.0, samples) == pytest.approx(0.5, abs=1e-15)

    def test_cubic_simpson(self):
        r = make_rule("simpson")
        samples = [(c * 1.0) ** 3 for c in r.nodes]
        assert apply_rule(r, 1.0, samples) == pytest.approx(0.25, abs=1e-15)

    def test_vector_samples(self):
        r = make_rule("trap")
        out = apply_rule(r, 2.0, [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        assert np.allclose(out, [1.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            apply_rule(make_rule("simpson"), 1.0, [1.0, 2.0])

    def test_nonpositive_h(self):
        with pytest.raises(ValueError):
            apply_rule(make_rule("trap"), 0.0, [1.0, 1.0])

    @pytest.mark.parametrize("name", ["midpoint", "trap", "simpson"])
    @pytest.mark.parametrize("h", [0.1, 1.0])
    def test_exactness_on_monomials(self, name, h):
        rule = make_rule(name)
        for k in range(rule.order):
            samples = [(c * h) ** k for c in rule.nodes]
            exact = h ** (k + 1) / (k + 1)
            assert apply_rule(rule, h, samples) == pytest.approx(exact, rel=1e-13)

    @pytest.mark.parametrize("name", ["midpoint", "trap", "simpson"])
    def test_empirical_order_on_exp(self, name):
        rule = make_rule(name)
        hs = [0.1, 0.05, 0.025, 0.0125]
        errs = []
        for h in hs:
            approx = apply_rule(rule, h, [math.exp(c * h) for c in rule.nodes])
            errs.append(abs(approx - (math.exp(h) - 1.0)))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope == pytest.approx(rule.order + 1, abs=0.2)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_exactness_on_random_polynomials(self, seed):
        rng = np.random.default_rng(seed)
        for name in ("midpoint", "trap", "simpson"):
            rule = make_rule(name)
            coeffs = rng.uniform(-3, 3, size=rule.order)  # degree <= order-1
            h = float(rng.uniform(0.05, 1.5))
            samples = [sum(c * (x * h) ** k for k, c in enumerate(coeffs)) for x in rule.nodes]
            exact = sum(c * h ** (k + 1) / (k + 1) for k, c in enumerate(coeffs))
            assert apply_rule(rule, h, samples) == pytest.approx(exact, rel=1e-12, abs=1e-13)


class TestCompositeSimpson:
    def test_reduces_to_simpson(self):
        one = composite_simpson(1)
        plain = make_rule("simpson")
        assert one.nodes == plain.nodes
        assert np.allclose(one.weights, plain.weights)

    def test_refinement_improves_exp(self):
        hs_err = []
        for panels in (1, 2, 4, 8):
            rule = composite_simpson(panels)
            approx = apply_rule(rule, 1.0, [math.exp(c) for c in rule.nodes])
            hs_err.append(abs(approx - (math.e - 1.0)))
        ratios = [hs_err[i] / hs_err[i + 1] for i in range(3)]
        assert all(r > 12 for r in ratios)  # fourth-order refinement
