import itertools

import numpy as np
import pytest

from flowgeo import oracles
from flowgeo.blocking import (
    cross2,
    in_quadrilateral,
    in_triangle,
    non_blocking_loss,
    point_segment_distance,
    unit_blocking_loss,
)
from flowgeo.checks import GRADCHECK_CONFIG, gradcheck_scene, quad_membership_agreement
from flowgeo.optimize import finite_diff_check


class TestCross2:
    def test_unit_basis(self):
        assert cross2((1, 0), (0, 1)) == 1.0

    def test_parallel(self):
        assert cross2((2, 3), (4, 6)) == 0.0

    def test_hand_value(self):
        assert cross2((3, 1), (1, 2)) == 5.0


class TestInTriangle:
    TRI = ((0.0, 0.0), (4.0, 0.0), (0.0, 4.0))

    def test_interior(self):
        assert in_triangle((1, 1), *self.TRI)

    def test_exterior(self):
        assert not in_triangle((5, 5), *self.TRI)

    def test_boundary_counts_as_inside(self):
        assert in_triangle((2, 0), *self.TRI)

    def test_vertex_permutation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b, c = rng.uniform(-3, 3, (3, 2))
            p = rng.uniform(-4, 4, 2)
            values = {
                in_triangle(p, *perm) for perm in itertools.permutations((a, b, c))
            }
            assert len(values) == 1

    def test_clockwise_triangle_accepted(self):
        # both orientations of the same vertex set agree
        assert in_triangle((1, 1), (0, 0), (0, 4), (4, 0))


class TestInQuadrilateral:
    def test_convex_interior(self):
        m = in_quadrilateral((0.5, 0.5), (0, 0), (1, 0), (1, 1), (0, 1))
        assert m.in_quad

    def test_convex_exterior(self):
        m = in_quadrilateral((2, 2), (0, 0), (1, 0), (1, 1), (0, 1))
        assert not m.in_quad

    def test_concave_chord_point_is_outside(self):
        # concave quad; the query sits on chord BD, outside the quad: the
        # BD division accepts it (boundary) but the AC division rejects it
        m = in_quadrilateral((2, 2), (0, 0), (4, 0), (1, 1), (0, 4))
        assert not m.in_abc and not m.in_acd
        assert m.in_abd and m.in_bcd
        assert not m.in_quad

    def test_concave_single_division_overcoverage_regression(self):
        # point inside BOTH AC-division triangles yet outside the quad;
        # the BD division rejects it, so the double division must say no
        quad = ((4.0, 0.0), (1.0, 1.0), (0.0, 4.0), (0.0, 0.0))
        p = (1.6, 1.4)
        m = in_quadrilateral(p, *quad)
        assert m.in_abc and m.in_acd
        assert not m.in_abd and not m.in_bcd
        assert not m.in_quad
        assert not oracles.point_in_simple_polygon(
            p[0], p[1], np.array(quad)
        )

    def test_membership_agreement_with_oracle(self):
        result, n_convex, n_concave = quad_membership_agreement(2_000, seed=17)
        assert result.mismatches == 0
        assert n_convex > 0 and n_concave > 0


class TestPointSegmentDistance:
    def test_perpendicular_foot_inside(self):
        assert point_segment_distance((0, 1), (-1, 0), (1, 0)) == pytest.approx(1.0)

    def test_nearest_endpoint(self):
        assert point_segment_distance((3, 0), (0, 0), (1, 0)) == pytest.approx(2.0)

    def test_hand_case(self):
        assert point_segment_distance((2, 2), (0, 0), (4, 0)) == pytest.approx(2.0)

    def test_degenerate_segment(self):
        assert point_segment_distance((3, 4), (0, 0), (0, 0)) == pytest.approx(5.0)


def insertion_flow():
    """One corner pixel of a 4x4 unit flies to the center of the static
    middle square; intrusion depth is 0.5 on every side."""
    flow = np.zeros((4, 4, 2))
    flow[0, 0] = (1.5, 1.5)
    return flow


class TestUnitBlockingLoss:
    def test_constant_flow_zero(self):
        flow = np.full((4, 4, 2), 2.25)
        assert unit_blocking_loss(flow, None, (0, 0)) == 0.0

    def test_center_insertion_value(self):
        loss = unit_blocking_loss(insertion_flow(), None, (0, 0))
        assert loss == pytest.approx(np.exp(-2.0) / 12.0, abs=1e-12)
        assert loss == pytest.approx(0.011278, abs=1e-6)

    def test_occluded_middle_pixel_gates_unit(self):
        occ = np.zeros((4, 4), np.uint8)
        occ[1, 1] = 1  # pixel A
        assert unit_blocking_loss(insertion_flow(), occ, (0, 0)) == 0.0

    def test_occluded_peripheral_gates_its_term(self):
        occ = np.zeros((4, 4), np.uint8)
        occ[0, 0] = 1
        assert unit_blocking_loss(insertion_flow(), occ, (0, 0)) == 0.0

    def test_anchor_validation(self):
        with pytest.raises(ValueError):
            unit_blocking_loss(np.zeros((4, 4, 2)), None, (1, 0))


class TestNonBlockingLoss:
    def test_constant_flow_exactly_zero(self):
        for du, dv in ((0.0, 0.0), (3.25, -1.5), (-100.0, 40.0)):
            flow = np.zeros((9, 7, 2))
            flow[...] = (du, dv)
            loss, grad = non_blocking_loss(flow)
            assert loss == 0.0
            assert np.all(grad == 0)

    def test_single_unit_insertion(self):
        loss, grad = non_blocking_loss(insertion_flow())
        assert loss == pytest.approx(np.exp(-2.0) / 12.0, abs=1e-12)
        assert np.any(grad != 0)

    def test_fully_occluded(self):
        occ = np.ones((4, 4), np.uint8)
        loss, grad = non_blocking_loss(insertion_flow(), occ)
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_matches_unit_loss_average(self):
        rng = np.random.default_rng(1)
        flow = rng.uniform(-1.5, 1.5, (6, 7, 2))
        occ = (rng.uniform(0, 1, (6, 7)) < 0.2).astype(np.uint8)
        total, _ = non_blocking_loss(flow, occ)
        units = [
            unit_blocking_loss(flow, occ, (r, c))
            for r in range(3)
            for c in range(4)
        ]
        assert total == pytest.approx(np.mean(units), abs=1e-12)

    def test_penalty_monotone_in_depth(self):
        # below d ~ 1.4e-3, exp(-1/d) underflows to an exact 0.0
        d = np.linspace(0.02, 10, 500)
        pen = np.exp(-1.0 / d)
        assert np.all(np.diff(pen) > 0)
        assert np.all((pen > 0) & (pen < 1))

    def test_too_small_field_rejected(self):
        with pytest.raises(ValueError):
            non_blocking_loss(np.zeros((3, 5, 2)))

    def test_gradient_matches_finite_differences(self):
        image_t, image_t1, flow_f, flow_b = gradcheck_scene(14)
        result = finite_diff_check(
            "block", image_t, image_t1, flow_f, flow_b, GRADCHECK_CONFIG,
            probe_count=60, step=4e-5, seed=14,
        )
        assert result.max_rel_error < 1e-4

    def test_gradient_at_step_1e4_on_moderate_intrusion(self):
        # property form: step 1e-4 away from boundaries and ties
        flow = np.zeros((4, 4, 2))
        flow[0, 0] = (1.62, 1.41)  # strictly inside, single nearest side
        base, grad = non_blocking_loss(flow)
        h = 1e-4
        # probe the intruder and the endpoints of the nearest side
        for (r, c, ch) in ((0, 0, 0), (0, 0, 1), (1, 2, 0), (2, 2, 1)):
            plus = flow.copy()
            minus = flow.copy()
            plus[r, c, ch] += h
            minus[r, c, ch] -= h
            fd = (non_blocking_loss(plus)[0] - non_blocking_loss(minus)[0]) / (2 * h)
            denom = max(abs(fd), abs(grad[r, c, ch]))
            if denom > 1e-9:
                assert abs(fd - grad[r, c, ch]) / denom < 1e-4
