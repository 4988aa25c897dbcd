import math

import numpy as np
import pytest

from forcedvi.bvp import (
    NonFiniteStateError,
    UnknownMethodError,
    integrate_to_nodes,
    make_method,
    shoot_bvp,
)
from forcedvi.numkit import ToleranceSpec
from forcedvi.systems import ForcedLagrangianSystem, damped_oscillator, free_particle


@pytest.fixture(scope="module")
def sho():
    return damped_oscillator(c=0.0)


@pytest.fixture(scope="module")
def damped():
    return damped_oscillator()


class TestMakeMethod:
    def test_orders(self):
        assert make_method("euler").order == 1
        assert make_method("rk2").order == 2
        assert make_method("rk4").order == 4

    def test_unknown(self):
        with pytest.raises(UnknownMethodError):
            make_method("rk3")

    def test_euler_free_particle_exact(self):
        m = make_method("euler")
        q, v = m.stepper(lambda q, v: np.zeros(1), np.array([0.0]), np.array([1.0]), 0.1)
        assert q[0] == pytest.approx(0.1, abs=1e-15)
        assert v[0] == pytest.approx(1.0, abs=1e-15)

    def test_rk4_cosine(self, sho):
        m = make_method("rk4")
        q, v = m.stepper(sho.accel, np.array([1.0]), np.array([0.0]), 0.1)
        assert q[0] == pytest.approx(math.cos(0.1), abs=1e-7)

    def test_rk2_cosine(self, sho):
        m = make_method("rk2")
        q, v = m.stepper(sho.accel, np.array([1.0]), np.array([0.0]), 0.1)
        assert q[0] == pytest.approx(math.cos(0.1), abs=1e-4)

    @pytest.mark.parametrize("name", ["euler", "rk2", "rk4"])
    def test_global_order_on_damped_oscillator(self, damped, name):
        # integrate to t=1 with n steps; global error should scale like h^p
        method = make_method(name)
        errs = []
        hs = []
        for n in (16, 32, 64, 128):
            h = 1.0 / n
            q, v = np.array([1.0]), np.array([0.0])
            for _ in range(n):
                q, v = method.stepper(damped.accel, q, v, h)
            qe, ve = damped.exact_solution(1.0, np.array([1.0]), np.array([0.0]))
            errs.append(max(abs(q[0] - qe[0]), abs(v[0] - ve[0])))
            hs.append(h)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope == pytest.approx(method.order, abs=0.25)


class TestIntegrateToNodes:
    def test_free_particle_three_nodes(self):
        fp = free_particle()
        states = integrate_to_nodes(fp, [0.0], [1.0], 1.0, (0.0, 0.5, 1.0), make_method("rk2"))
        expect = [(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
        for (q, v), (qe, ve) in zip(states, expect):
            assert q[0] == pytest.approx(qe, abs=1e-14)
            assert v[0] == pytest.approx(ve, abs=1e-14)

    def test_single_interior_node(self, sho):
        states = integrate_to_nodes(sho, [1.0], [0.0], 0.2, (0.5,), make_method("rk4"))
        assert len(states) == 1

    def test_rk4_node_accuracy(self, sho):
        states = integrate_to_nodes(sho, [1.0], [0.0], 0.1, (1.0,), make_method("rk4"))
        assert states[0][0][0] == pytest.approx(math.cos(0.1), abs=1e-7)

    def test_unsorted_nodes_rejected(self, sho):
        with pytest.raises(ValueError):
            integrate_to_nodes(sho, [1.0], [0.0], 0.1, (0.5, 0.25), make_method("rk2"))

    def test_blowup_detected(self):
        runaway = ForcedLagrangianSystem(
            dim=1,
            lagrangian=lambda q, v: 0.5 * float(v @ v),
            force=None,
            accel=lambda q, v: v * v * 1e4,
            name="runaway",
        )
        with np.errstate(over="ignore"), pytest.raises(NonFiniteStateError):
            integrate_to_nodes(runaway, [0.0], [10.0], 50.0,
                               tuple(i / 64 for i in range(65)), make_method("euler"))


class TestShootBVP:
    def test_free_particle_chord(self):
        fp = free_particle()
        sol = shoot_bvp(fp, [0.0], [1.0], 1.0, (0.0, 0.5, 1.0), make_method("rk2"))
        assert sol.v0[0] == pytest.approx(1.0, abs=1e-12)
        for (q, _), c in zip(sol.node_states, (0.0, 0.5, 1.0)):
            assert q[0] == pytest.approx(c, abs=1e-12)

    def test_free_particle_sensitivities(self):
        fp = free_particle()
        sol = shoot_bvp(fp, [0.0], [1.0], 1.0, (0.5,), make_method("rk2"))
        assert sol.sens_q0[0][0, 0] == pytest.approx(0.5, abs=1e-6)
        assert sol.sens_q1[0][0, 0] == pytest.approx(0.5, abs=1e-6)

    def test_sho_initial_velocity(self, sho):
        sol = shoot_bvp(sho, [0.0], [math.sin(0.1)], 0.1, (0.0, 1.0), make_method("rk4"))
        assert sol.v0[0] == pytest.approx(1.0, abs=1e-6)

    def test_consistency_reintegration(self, damped):
        tol = ToleranceSpec()
        h = 0.3
        q1 = np.array([0.7])
        sol = shoot_bvp(damped, [1.0], q1, h, (0.0, 0.5, 1.0), make_method("rk4"), tol=tol)
        q_end, _ = sol.end_state
        assert abs(q_end[0] - q1[0]) <= 10 * tol.residual_tol

    def test_sensitivity_partition_of_unity(self):
        # endpoint interpolation: dq/dq0 + dq/dq1 = I for the free particle
        fp = free_particle(dim=2)
        sol = shoot_bvp(fp, [0.0, 1.0], [1.0, -1.0], 0.7, (0.25, 0.75), make_method("rk2"))
        for s0, s1 in zip(sol.sens_q0, sol.sens_q1):
            assert np.max(np.abs(s0 + s1 - np.eye(2))) <= 1e-6

    def test_skip_sensitivities(self, sho):
        sol = shoot_bvp(sho, [0.0], [0.1], 0.1, (0.5,), make_method("rk2"),
                        sensitivities=False)
        assert sol.sens_q0 is None and sol.sens_q1 is None

    def test_degenerate_system_rejected(self):
        from forcedvi.systems import rlc_circuit

        circuit = rlc_circuit()
        with pytest.raises(ValueError):
            shoot_bvp(circuit.system, np.zeros(3), np.ones(3), 0.1, (0.5,), make_method("rk2"))
