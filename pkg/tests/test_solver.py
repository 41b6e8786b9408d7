import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from bangband import (Box, ControlField, DualField, Mesh1D, SolveOptions,
                      criticality_residual, extreme_defect, frank_wolfe,
                      instance_a, instance_b, instance_c, l1_distance,
                      lmo_l1ball, multistart_global, pairing, solve_localized,
                      with_linear_perturbation)
from bangband.errors import PreconditionError, SolverInternalError
from bangband.solver import default_start

from conftest import sign_rule_field


class TestFrankWolfe:
    def test_instance_a_sign_rule(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 1024)
        report = frank_wolfe(instance_a(), unit_box, mesh)
        assert report.converged
        assert report.J == pytest.approx(-0.25, abs=2e-6)
        differing = np.sum(report.u.values != sign_rule_field(mesh).values)
        assert differing <= 2
        assert report.residual <= 1e-3

    def test_instance_c_constant_minimizer(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 1000)
        report = frank_wolfe(instance_c(), unit_box, mesh)
        assert report.converged
        assert np.all(report.u.values == -1.0)
        assert report.J == pytest.approx(-0.5, abs=1e-4)

    def test_armijo_agrees_with_golden(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 256)
        golden = frank_wolfe(instance_a(), unit_box, mesh,
                             SolveOptions(line_search="golden"))
        armijo = frank_wolfe(instance_a(), unit_box, mesh,
                             SolveOptions(line_search="armijo"))
        assert armijo.J == pytest.approx(golden.J, abs=1e-6)

    def test_atoms_are_bang_bang(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 64)
        report = frank_wolfe(instance_a(), unit_box, mesh)
        assert extreme_defect(report.u, unit_box) == 0.0

    def test_corrupted_switching_stalls_honestly(self, unit_box, mesh8):
        # a switching field claiming descent at the global minimum cannot
        # make the exact line search accept a step: no false convergence
        class Corrupted:
            evaluate = staticmethod(instance_b().evaluate)
            segment = instance_b().segment

            def switching(self, u):
                return DualField(u.mesh, np.ones_like(u.values))

        report = frank_wolfe(Corrupted(), unit_box, mesh8,
                             SolveOptions(max_iter=10),
                             start=ControlField.constant(mesh8, [0.0]))
        assert not report.converged
        assert report.J == 0.0

    def test_inconsistent_segment_detected(self, unit_box, mesh8):
        # segment disagreeing with evaluate forces an objective increase
        # across the exact line search, which the solver refuses to accept
        class Broken:
            def evaluate(self, u):
                return 0.0

            def switching(self, u):
                return DualField(u.mesh, np.ones_like(u.values))

            def segment(self, u, direction):
                return lambda t: 0.5 + t

        with pytest.raises(SolverInternalError):
            frank_wolfe(Broken(), unit_box, mesh8, SolveOptions(max_iter=10),
                        start=ControlField.constant(mesh8, [0.0]))

    def test_trace_records_progress(self, unit_box, mesh8):
        report = frank_wolfe(instance_b(), unit_box, mesh8)
        assert report.trace[0][0] == 0
        assert report.trace[-1][2] == report.gap


class TestCriticalityResidual:
    def test_minimizer_near_zero(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 1024)
        res = criticality_residual(instance_a(), sign_rule_field(mesh), unit_box)
        assert res <= 1e-3

    def test_anti_minimizer_large(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 1000)
        res = criticality_residual(instance_c(),
                                   ControlField.constant(mesh, [1.0]), unit_box)
        assert res == pytest.approx(1.0, abs=1e-2)


def brute_force_l1ball(c, center, gamma, box):
    """Reference solution of min <c,u> over box intersected with the L1 ball,
    via the stretch decomposition u = center + up*p - down*q solved as an LP."""
    mu = center.mesh.cell_measure[:, None]
    up = box.hi - center.values
    down = center.values - box.lo
    n = center.values.size
    c_up = (mu * c.values * up).ravel()
    c_dn = -(mu * c.values * down).ravel()
    cost = np.concatenate([c_up, c_dn])
    a_mass = np.concatenate([(mu * up).ravel(), (mu * down).ravel()])
    res = linprog(cost, A_ub=[a_mass], b_ub=[gamma], bounds=(0, 1),
                  method="highs")
    return res.fun + float(np.sum(mu * c.values * center.values))


class TestLmoL1Ball:
    def test_two_cell_example(self):
        mesh = Mesh1D.uniform(0.0, 1.0, 2)
        box = Box(lo=[-1.0], hi=[1.0])
        c = DualField.constant(mesh, [1.0])
        center = ControlField.constant(mesh, [0.0])
        out = lmo_l1ball(c, center, 0.5, box)
        assert out.values[:, 0].tolist() == [-1.0, 0.0]
        assert pairing(c, out) == pytest.approx(-0.5)

    def test_zero_radius_returns_center(self, unit_box, mesh8):
        c = DualField.constant(mesh8, [1.0])
        center = ControlField.constant(mesh8, [0.3])
        assert np.array_equal(lmo_l1ball(c, center, 0.0, unit_box).values,
                              center.values)

    def test_infeasible_center_rejected(self, unit_box, mesh8):
        c = DualField.constant(mesh8, [1.0])
        with pytest.raises(PreconditionError):
            lmo_l1ball(c, ControlField.constant(mesh8, [2.0]), 0.1, unit_box)

    @settings(max_examples=150)
    @given(st.integers(0, 10_000))
    def test_matches_reference_lp(self, trial):
        rng = np.random.default_rng([13, trial])
        n = int(rng.integers(1, 9))
        mesh = Mesh1D.uniform(0.0, 1.0, n)
        box = Box(lo=[-1.0], hi=[1.0])
        c = DualField(mesh, rng.standard_normal((n, 1)))
        center = ControlField(mesh, rng.uniform(-1, 1, (n, 1)))
        gamma = float(rng.uniform(0, 2.5))
        out = lmo_l1ball(c, center, gamma, box)
        ref = brute_force_l1ball(c, center, gamma, box)
        assert pairing(c, out) == pytest.approx(ref, abs=1e-10)
        # feasibility: inside the box and the ball
        assert np.all(out.values >= -1 - 1e-12)
        assert np.all(out.values <= 1 + 1e-12)
        assert l1_distance(out, center) <= gamma + 1e-12


class TestSolveLocalized:
    def test_constant_shift_flips_thin_band(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 1024)
        u_star = sign_rule_field(mesh)
        delta = 0.05
        xi = DualField.constant(mesh, [delta])
        report = solve_localized(instance_a(), xi, u_star, 0.5, unit_box)
        # sign(c - delta) flips only on 1/2 < t < 1/2 + delta: moved mass 2*delta
        assert l1_distance(report.u, u_star) == pytest.approx(
            2 * delta, abs=4 / 1024)

    def test_degenerate_minimum_moves_under_tiny_shift(self, unit_box):
        # J = (int u)^2 + (int t u)^2 - delta int u is minimized on the set
        # int u = delta/2, int t u = 0: value -delta^2/4, away from u* = 0
        mesh = Mesh1D.uniform(0.0, 1.0, 128)
        u_star = ControlField.constant(mesh, [0.0])
        delta = 0.01
        xi = DualField.constant(mesh, [delta])
        report = solve_localized(instance_b(), xi, u_star, 0.5, unit_box)
        assert report.J == pytest.approx(-delta ** 2 / 4, abs=1e-9)
        assert l1_distance(report.u, u_star) >= delta / 2 - 1e-9


class TestMultistart:
    def test_single_start_matches_plain(self, unit_box, mesh8):
        from bangband.solver import random_vertex_field

        opts = SolveOptions(seed=4)
        result = multistart_global(instance_a(), unit_box, mesh8, 1, opts)
        start = random_vertex_field(unit_box, mesh8, np.random.default_rng([4, 0]))
        plain = frank_wolfe(instance_a(), unit_box, mesh8, opts, start=start)
        assert result.best.J == plain.J
        assert np.array_equal(result.best.u.values, plain.u.values)

    def test_instance_b_reaches_global_value(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 64)
        result = multistart_global(instance_b(), unit_box, mesh, 5,
                                   SolveOptions(seed=0))
        for report in result.reports:
            assert report.J <= 1e-8

    def test_threaded_matches_serial(self, unit_box, mesh8):
        serial = multistart_global(instance_b(), unit_box, mesh8, 4,
                                   SolveOptions(seed=9), threads=1)
        threaded = multistart_global(instance_b(), unit_box, mesh8, 4,
                                     SolveOptions(seed=9), threads=4)
        assert [r.J for r in serial.reports] == [r.J for r in threaded.reports]


class TestDefaultStart:
    def test_is_vertex_field(self, unit_box, mesh8):
        start = default_start(unit_box, mesh8)
        assert extreme_defect(start, unit_box) == 0.0
