import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bangband import (Box, ControlField, DualField, Mesh1D, instance_a,
                      instance_b, instance_c, instance_e, l1_distance,
                      linf_norm, pairing, refine_and_prolong,
                      with_linear_perturbation, with_p_regularizer,
                      zero_moment_problem)
from bangband.errors import IncompatibleFieldError
from bangband.problems import (OdeAffineProblem, ScalarMap, ScalarXY,
                               VectorMap, ZERO_TERMINAL, EllipticProblem)

from conftest import sign_rule_field


def fd_slope(problem, u, direction, eps=1e-6):
    up = ControlField(u.mesh, u.values + eps * direction)
    dn = ControlField(u.mesh, u.values - eps * direction)
    return (problem.evaluate(up) - problem.evaluate(dn)) / (2 * eps)


class TestMomentProblem:
    def test_instance_a_value_at_sign_rule(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 1024)
        problem = instance_a()
        assert problem.evaluate(sign_rule_field(mesh)) == pytest.approx(
            -0.25, abs=1e-6)

    def test_instance_a_switching_is_ramp(self, mesh8):
        problem = instance_a()
        sigma = problem.switching(ControlField.constant(mesh8, [0.0]))
        assert np.allclose(sigma.values[:, 0], mesh8.midpoints - 0.5)

    def test_instance_b_zero_control_is_minimum(self, mesh8):
        problem = instance_b()
        assert problem.evaluate(ControlField.constant(mesh8, [0.0])) == 0.0
        assert problem.evaluate(ControlField.constant(mesh8, [0.5])) > 0.0

    def test_mesh_polymorphic(self, mesh8):
        problem = instance_b()
        u = ControlField(mesh8, np.linspace(-1, 1, 8)[:, None])
        fine = refine_and_prolong(u, 2)
        assert problem.evaluate(fine) == pytest.approx(problem.evaluate(u),
                                                       abs=1e-12)

    @given(st.floats(0, 1), st.integers(0, 50))
    def test_segment_matches_evaluate(self, t, salt):
        mesh = Mesh1D.uniform(0.0, 1.0, 16)
        rng = np.random.default_rng([3, salt])
        u = ControlField(mesh, rng.uniform(-1, 1, (16, 1)))
        d = rng.uniform(-1, 1, (16, 1))
        problem = instance_b()
        phi = problem.segment(u, d)
        direct = problem.evaluate(ControlField(mesh, u.values + t * d))
        assert phi(t) == pytest.approx(direct, abs=1e-12)


class TestWrappers:
    def test_linear_perturbation_value(self, mesh8):
        problem = with_linear_perturbation(zero_moment_problem(),
                                           DualField.constant(mesh8, [1.0]))
        assert problem.evaluate(ControlField.constant(mesh8, [1.0])) == \
            pytest.approx(-1.0)

    def test_linear_perturbation_shifts_switching_exactly(self, mesh8):
        xi = DualField(mesh8, np.linspace(-1, 1, 8)[:, None])
        base = instance_a()
        pert = with_linear_perturbation(base, xi)
        u = ControlField.constant(mesh8, [0.2])
        diff = pert.switching(u).values - base.switching(u).values
        assert np.array_equal(diff, -xi.values)

    def test_p_regularizer_constants(self, mesh8):
        base = zero_moment_problem()
        reg = with_p_regularizer(base, p=2.0, eta=0.1)
        u = ControlField.constant(mesh8, [1.0])
        assert reg.evaluate(u) == pytest.approx(0.05)
        assert np.allclose(reg.switching(u).values, 0.1)

    def test_p_below_two_rejected(self):
        with pytest.raises(ValueError):
            with_p_regularizer(zero_moment_problem(), p=1.5, eta=0.1)

    @given(st.floats(0, 1))
    def test_perturbed_segment_consistent(self, t):
        mesh = Mesh1D.uniform(0.0, 1.0, 12)
        rng = np.random.default_rng(5)
        u = ControlField(mesh, rng.uniform(-1, 1, (12, 1)))
        d = rng.uniform(-1, 1, (12, 1))
        problem = with_p_regularizer(
            with_linear_perturbation(instance_a(),
                                     DualField.constant(mesh, [0.3])),
            p=2.0, eta=0.2)
        assert problem.segment(u, d)(t) == pytest.approx(
            problem.evaluate(ControlField(mesh, u.values + t * d)), abs=1e-12)


class TestOdeAffine:
    def test_integrator_closed_form(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 100)
        problem = instance_c()
        states, _ = problem.forward(ControlField.constant(mesh, [-1.0]))
        assert states[-1][0] == pytest.approx(-1.0, abs=1e-10)

    def test_sign_field_trajectory(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 1000)
        problem = instance_c()
        states, _ = problem.forward(sign_rule_field(mesh))
        assert states[500][0] == pytest.approx(0.5, abs=1e-10)
        assert states[-1][0] == pytest.approx(0.0, abs=1e-10)

    def test_switching_is_one_minus_t(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 1000)
        problem = instance_c()
        sigma = problem.switching(ControlField.constant(mesh, [0.0]))
        assert np.max(np.abs(sigma.values[:, 0] - (1 - mesh.midpoints))) <= 1e-4

    def test_constant_terminal_cost_zero_switching(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 50)
        zero_vec = VectorMap(lambda t, y: np.zeros(1),
                             lambda t, y: np.zeros((1, 1)))
        unit_vec = VectorMap(lambda t, y: np.ones(1),
                             lambda t, y: np.zeros((1, 1)))
        g_zero = ScalarMap(lambda t, y: 0.0, lambda t, y: np.zeros(1))
        problem = OdeAffineProblem(
            horizon=1.0, y0=np.zeros(1), drift=zero_vec,
            control_fields=(unit_vec,), running_cost=g_zero,
            control_costs=(g_zero,), terminal_cost=ZERO_TERMINAL)
        sigma = problem.switching(ControlField.constant(mesh, [0.3]))
        assert np.allclose(sigma.values, 0.0)

    def test_nonlinear_fd_identity(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 64)
        # y' = -y^3 + u with quadratic running cost: genuinely nonlinear
        drift = VectorMap(lambda t, y: -y ** 3,
                          lambda t, y: np.array([[-3 * y[0] ** 2]]))
        unit_vec = VectorMap(lambda t, y: np.ones(1),
                             lambda t, y: np.zeros((1, 1)))
        g0 = ScalarMap(lambda t, y: 0.5 * float(y[0]) ** 2, lambda t, y: y.copy())
        g1 = ScalarMap(lambda t, y: 0.0, lambda t, y: np.zeros(1))
        problem = OdeAffineProblem(
            horizon=1.0, y0=np.array([0.2]), drift=drift,
            control_fields=(unit_vec,), running_cost=g0, control_costs=(g1,),
            terminal_cost=ZERO_TERMINAL)
        rng = np.random.default_rng(1)
        u = ControlField(mesh, rng.uniform(-0.5, 0.5, (64, 1)))
        for k in range(5):
            d = np.random.default_rng([2, k]).standard_normal((64, 1))
            slope = pairing(problem.switching(u), ControlField(mesh, d))
            assert fd_slope(problem, u, d) == pytest.approx(slope, abs=1e-7)


class TestElliptic:
    def test_poisson_closed_forms(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 512)
        problem = instance_e()
        u = ControlField.constant(mesh, [1.0])
        y = problem.state(u)
        assert y[256] == pytest.approx(0.125, abs=1e-4)
        assert problem.evaluate(u) == pytest.approx(1 / 240, abs=1e-5)

    def test_cubic_reaction_zero_fixed_point(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 128)
        cubic = ScalarXY(lambda x, y: np.asarray(y, dtype=float) ** 3,
                         lambda x, y: 3 * np.asarray(y, dtype=float) ** 2)
        track = ScalarXY(lambda x, y: 0.5 * np.asarray(y, dtype=float) ** 2,
                         lambda x, y: np.asarray(y, dtype=float))
        problem = EllipticProblem(length=1.0, reaction=cubic, tracking=track)
        u = ControlField.constant(mesh, [0.0])
        assert np.allclose(problem.state(u), 0.0)
        assert np.allclose(problem.switching(u).values, 0.0)

    def test_fd_identity_semilinear(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 128)
        cubic = ScalarXY(lambda x, y: np.asarray(y, dtype=float) ** 3,
                         lambda x, y: 3 * np.asarray(y, dtype=float) ** 2)
        track = ScalarXY(lambda x, y: 0.5 * np.asarray(y, dtype=float) ** 2,
                         lambda x, y: np.asarray(y, dtype=float))
        problem = EllipticProblem(length=1.0, reaction=cubic, tracking=track)
        u = ControlField.constant(mesh, [0.4])
        for k in range(5):
            d = np.random.default_rng([6, k]).standard_normal((128, 1))
            d *= 0.5 / np.max(np.abs(d))
            slope = pairing(problem.switching(u), ControlField(mesh, d))
            assert fd_slope(problem, u, d) == pytest.approx(slope, abs=1e-7)

    def test_out_of_bounds_control_rejected(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 32)
        problem = instance_e()
        with pytest.raises(IncompatibleFieldError):
            problem.evaluate(ControlField.constant(mesh, [2.0]))
