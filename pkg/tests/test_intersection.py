import numpy as np
import pytest

from flowgeo import oracles
from flowgeo.checks import GRADCHECK_CONFIG, gradcheck_scene, segment_predicate_agreement
from flowgeo.intersection import (
    NEIGHBOR_OFFSETS,
    color_weight,
    crossing_count,
    intersection_coeffs,
    non_intersection_loss,
    unit_intersection_loss,
)
from flowgeo.optimize import finite_diff_check
from flowgeo.photometric import robust_penalty


def seam_flow(h=8, w=8):
    """Opposing halves with a slight vertical shear; pairs across the seam
    cross properly (pure horizontal opposition is parallel/collinear and
    never counts)."""
    flow = np.zeros((h, w, 2))
    flow[:, : w // 2] = (4.0, 0.5)
    flow[:, w // 2 :] = (-4.0, 0.3)
    return flow


class TestColorWeight:
    def test_identical_is_one(self):
        assert color_weight((0.2, 0.5, 0.9), (0.2, 0.5, 0.9)) == 1.0

    def test_uniform_difference(self):
        w = color_weight((0.1, 0.2, 0.3), (0.4, 0.5, 0.6))
        assert w == pytest.approx(np.exp(-0.3), abs=1e-12)

    def test_maximal_difference(self):
        w = color_weight((1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
        assert w == pytest.approx(np.exp(-1.0), abs=1e-12)


class TestIntersectionCoeffs:
    def test_midpoint_crossing(self):
        c = intersection_coeffs((0, 0), (2, 2), (2, 0), (-2, 2))
        assert not c.parallel
        assert c.denom == pytest.approx(-8.0, abs=1e-12)
        assert c.t_center == pytest.approx(0.5, abs=1e-12)
        assert c.t_neighbor == pytest.approx(0.5, abs=1e-12)
        assert c.intersecting
        # the independent orientation-test oracle agrees
        assert oracles.segments_properly_cross(
            np.array([0.0, 0.0]), np.array([2.0, 2.0]),
            np.array([2.0, 0.0]), np.array([0.0, 2.0]),
        )

    def test_equal_displacements_parallel(self):
        c = intersection_coeffs((0, 0), (1.3, -0.4), (5, 1), (1.3, -0.4))
        assert c.parallel
        assert not c.intersecting

    def test_disjoint_segments(self):
        c = intersection_coeffs((0, 0), (1, 0), (0, 3), (0, -1))
        assert not c.parallel
        assert not c.intersecting
        assert not oracles.segments_properly_cross(
            np.array([0.0, 0.0]), np.array([1.0, 0.0]),
            np.array([0.0, 3.0]), np.array([0.0, 2.0]),
        )

    def test_swap_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            pa, pb = rng.uniform(0, 5, (2, 2))
            da, db = rng.uniform(-4, 4, (2, 2))
            ab = intersection_coeffs(pa, da, pb, db)
            ba = intersection_coeffs(pb, db, pa, da)
            assert ab.intersecting == ba.intersecting

    def test_shared_constant_keeps_equal_flows_parallel(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            d = rng.uniform(-4, 4, 2)
            shift = rng.uniform(-4, 4, 2)
            c = intersection_coeffs((0, 0), d + shift, (1, 1), d + shift)
            assert c.parallel


class TestUnitLoss:
    def test_constant_flow_unit_is_zero(self):
        img = np.full((3, 3, 3), 0.5)
        flow = np.full((3, 3, 2), 2.3)
        assert unit_intersection_loss(flow, img, None, (1, 1)) == 0.0

    def single_crossing_setup(self):
        # center and its right neighbor cross at their midpoints
        img = np.full((3, 3, 3), 0.5)
        flow = np.zeros((3, 3, 2))
        flow[1, 1] = (1.0, 1.0)
        flow[1, 2] = (-1.0, 1.0)
        return img, flow

    def test_single_crossing_value(self):
        img, flow = self.single_crossing_setup()
        expected = robust_penalty(1.0) / 8.0  # ~0.125498
        loss = unit_intersection_loss(flow, img, None, (1, 1))
        assert loss == pytest.approx(expected, abs=1e-9)
        assert loss == pytest.approx(0.125498, abs=1e-6)

    def test_single_crossing_whole_image_reduction(self):
        img, flow = self.single_crossing_setup()
        occ = np.zeros((3, 3), np.uint8)
        total, _ = non_intersection_loss(img, flow, occ)
        assert total == pytest.approx(0.125498, abs=1e-6)

    def test_occluded_neighbor_gates_pair(self):
        img, flow = self.single_crossing_setup()
        occ = np.zeros((3, 3), np.uint8)
        occ[1, 2] = 1
        assert unit_intersection_loss(flow, img, occ, (1, 1)) == 0.0
        total, grad = non_intersection_loss(img, flow, occ)
        assert total == 0.0
        assert np.all(grad == 0)

    def test_neighbor_relabeling_invariance(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (3, 3, 3))
        flow = rng.uniform(-2, 2, (3, 3, 2))
        reference = unit_intersection_loss(flow, img, None, (1, 1))
        for perm_seed in range(4):
            order = np.random.default_rng(perm_seed).permutation(8)
            total = 0.0
            for idx in order:
                dr, dc = NEIGHBOR_OFFSETS[idx]
                c = intersection_coeffs(
                    (1, 1), flow[1, 1], (1 + dc, 1 + dr), flow[1 + dr, 1 + dc]
                )
                if c.intersecting:
                    diff = c.t_center - c.t_neighbor
                    total += float(
                        color_weight(img[1, 1], img[1 + dr, 1 + dc])
                        * robust_penalty(np.exp(-diff * diff))
                    )
            assert total / 8.0 == pytest.approx(reference, abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        sigma_one = robust_penalty(1.0)
        for _ in range(50):
            img = rng.uniform(0, 1, (5, 6, 3))
            flow = rng.uniform(-5, 5, (5, 6, 2))
            occ = np.zeros((5, 6), np.uint8)
            for r in range(1, 4):
                for c in range(1, 5):
                    u = unit_intersection_loss(flow, img, occ, (r, c))
                    assert 0.0 <= u <= sigma_one + 1e-12
            total, _ = non_intersection_loss(img, flow, occ)
            assert 0.0 <= total <= sigma_one + 1e-12


class TestImageLoss:
    def test_constant_flow_exactly_zero(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 1, (12, 10, 3))
        flow = np.full((12, 10, 2), -3.7)
        occ = np.zeros((12, 10), np.uint8)
        loss, grad = non_intersection_loss(img, flow, occ)
        assert loss == 0.0
        assert np.all(grad == 0)
        assert crossing_count(flow, occ) == 0

    def test_crossing_seam(self):
        flow = seam_flow()
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 1, (8, 8, 3))
        occ = np.zeros((8, 8), np.uint8)
        loss, _ = non_intersection_loss(img, flow, occ)
        count = crossing_count(flow, occ)
        assert loss > 0.0
        assert count > 0

    def test_crossing_count_equals_bruteforce_oracle(self):
        flow = seam_flow()
        occ = np.zeros((8, 8), np.uint8)
        h, w = 8, 8
        expected = 0
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                for dr, dc in NEIGHBOR_OFFSETS:
                    p1 = np.array([c, r], float)
                    p2 = p1 + flow[r, c]
                    q1 = np.array([c + dc, r + dr], float)
                    q2 = q1 + flow[r + dr, c + dc]
                    if oracles.segments_properly_cross(p1, p2, q1, q2):
                        expected += 1
        assert crossing_count(flow, occ) == expected

    def test_fully_occluded(self):
        flow = seam_flow()
        occ = np.ones((8, 8), np.uint8)
        loss, grad = non_intersection_loss(np.full((8, 8, 3), 0.5), flow, occ)
        assert loss == 0.0
        assert np.all(grad == 0)
        assert crossing_count(flow, occ) == 0

    def test_too_small_field_rejected(self):
        with pytest.raises(ValueError):
            non_intersection_loss(
                np.zeros((2, 5, 3)), np.zeros((2, 5, 2)), np.zeros((2, 5), np.uint8)
            )

    def test_predicate_agreement_with_oracle(self):
        result = segment_predicate_agreement(10_000, seed=99)
        assert result.mismatches == 0
        assert result.compared > 9_000

    def test_gradient_matches_finite_differences(self):
        image_t, image_t1, flow_f, flow_b = gradcheck_scene(13)
        result = finite_diff_check(
            "inter", image_t, image_t1, flow_f, flow_b, GRADCHECK_CONFIG,
            probe_count=60, step=1e-4, seed=13,
        )
        assert result.max_rel_error < 1e-4
