import numpy as np
import pytest
from hypothesis import given, strategies as st

from bangband import (Box, ControlField, DualField, Mesh1D, Polytope, contains,
                      extreme_defect, kkt_residual_pointwise, lmo_field,
                      lmo_pointwise, midpoint_split)

from conftest import sign_rule_field

TRIANGLE = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]

vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=3)


class TestBox:
    def test_vertex_count(self):
        box = Box(lo=[-1, 0], hi=[1, 2])
        assert box.vertices.shape == (4, 2)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Box(lo=[0.0], hi=[0.0])

    def test_contains_with_tolerance(self, unit_box):
        assert contains(unit_box, [0.0])
        assert contains(unit_box, [1 + 1e-12], tol=1e-9)
        assert not contains(unit_box, [1.1])

    def test_sup_norm(self):
        box = Box(lo=[-2, -1], hi=[1, 3])
        assert box.sup_norm == pytest.approx(np.hypot(2, 3))


class TestPolytope:
    def test_triangle_contains(self):
        tri = Polytope(TRIANGLE)
        assert contains(tri, [0.2, 0.2])
        assert not contains(tri, [0.6, 0.6])

    def test_non_extreme_vertex_rejected(self):
        with pytest.raises(ValueError):
            Polytope(TRIANGLE + [[0.25, 0.25]])


class TestLmo:
    def test_positive_cost_picks_lo(self, unit_box):
        assert lmo_pointwise(unit_box, [0.3]) == np.array([-1.0])

    def test_zero_cost_tie_breaks_to_lo(self, unit_box):
        assert lmo_pointwise(unit_box, [0.0]) == np.array([-1.0])

    def test_triangle_tie_lexicographic(self):
        tri = Polytope(TRIANGLE)
        # both (1,0) and (0,1) minimize -x-y; lexicographic order picks (0,1)
        assert lmo_pointwise(tri, [-1.0, -1.0]).tolist() == [0.0, 1.0]

    @given(vectors)
    def test_box_lmo_is_optimal(self, c):
        box = Box(lo=[-1.0] * len(c), hi=[1.0] * len(c))
        assert lmo_pointwise(box, c) @ np.asarray(c) == pytest.approx(
            min(v @ np.asarray(c) for v in box.vertices), abs=1e-12)

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2))
    def test_polytope_lmo_is_optimal(self, c):
        tri = Polytope(TRIANGLE)
        assert lmo_pointwise(tri, c) @ np.asarray(c) == pytest.approx(
            min(v @ np.asarray(c) for v in tri.vertices), abs=1e-12)

    def test_lmo_field_is_bang_bang(self, unit_box, mesh8):
        sigma = DualField(mesh8, np.linspace(-1, 1, 8)[:, None])
        v = lmo_field(unit_box, sigma)
        assert extreme_defect(v, unit_box) == 0.0


class TestExtremeDefect:
    def test_sign_field_has_zero_defect(self, unit_box, mesh8):
        assert extreme_defect(sign_rule_field(mesh8), unit_box) == 0.0

    def test_partial_interior_measure(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 4)
        u = ControlField(mesh, np.array([[1.0], [0.0], [0.0], [0.0]]))
        assert extreme_defect(u, unit_box) == pytest.approx(0.75)


class TestKktResidual:
    def test_bound_with_correct_sign(self, unit_box):
        assert kkt_residual_pointwise(unit_box, [1.0], [-0.5]) == 0.0

    def test_bound_with_wrong_sign(self, unit_box):
        assert kkt_residual_pointwise(unit_box, [1.0], [0.5]) == pytest.approx(0.5)

    def test_interior(self, unit_box):
        assert kkt_residual_pointwise(unit_box, [0.0], [0.3]) == pytest.approx(0.3)

    @given(st.floats(-1, 1), st.floats(-2, 2))
    def test_zero_iff_lmo_agreement(self, u, sigma):
        box = Box(lo=[-1.0], hi=[1.0])
        res = kkt_residual_pointwise(box, [u], [sigma])
        if abs(sigma) > 1e-9:
            agrees = abs(u - lmo_pointwise(box, [sigma])[0]) <= box.default_tol()
            assert (res <= box.default_tol()) == agrees


class TestMidpointSplit:
    def test_interior_scalar(self, unit_box):
        alpha, beta = midpoint_split(unit_box, [0.2])
        assert alpha == pytest.approx(-0.6)
        assert beta == pytest.approx(1.0)

    def test_vertex_returns_none(self, unit_box):
        assert midpoint_split(unit_box, [1.0]) is None

    def test_max_slack_coordinate(self):
        box = Box(lo=[-1, -1], hi=[1, 1])
        alpha, beta = midpoint_split(box, [0.0, 0.9])
        assert alpha.tolist() == [-1.0, 0.9]
        assert beta.tolist() == [1.0, 0.9]

    @given(st.lists(st.floats(-0.999, 0.999), min_size=1, max_size=3))
    def test_midpoint_exact_and_feasible(self, u):
        box = Box(lo=[-1.0] * len(u), hi=[1.0] * len(u))
        pair = midpoint_split(box, u)
        if pair is None:
            return
        alpha, beta = pair
        # exact up to one rounding of u +/- s (denormal u cannot survive it)
        assert np.all(np.abs((alpha + beta) / 2 - np.asarray(u)) <= 1e-15)
        assert contains(box, alpha, tol=1e-12)
        assert contains(box, beta, tol=1e-12)
        assert not np.array_equal(alpha, beta)
