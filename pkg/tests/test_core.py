import numpy as np
import pytest

from flowgeo.core import (
    OcclusionParams,
    bilinear_sample,
    bilinear_sample_with_grad,
    bilinear_weights,
    displace,
    occlusion_mask,
    pixel_grid,
    warp,
)


class TestDisplace:
    def test_zero_flow_is_pixel_grid(self):
        flow = np.zeros((5, 7, 2))
        assert np.array_equal(displace(flow), pixel_grid(5, 7))

    def test_uniform_translation(self):
        flow = np.zeros((5, 5, 2))
        flow[...] = (3.0, 2.0)
        coords = displace(flow)
        assert np.array_equal(coords, pixel_grid(5, 5) + [3.0, 2.0])

    def test_hand_added_coordinate(self):
        flow = np.zeros((4, 4, 2))
        flow[1, 1] = (-0.5, 2.25)
        coords = displace(flow)
        assert coords[1, 1] == pytest.approx((0.5, 3.25))

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            displace(np.zeros((4, 4, 3)))


class TestBilinear:
    def test_weights_nonnegative_and_sum_to_one(self):
        rng = np.random.default_rng(0)
        coords = rng.uniform(-3.0, 12.0, (50, 60, 2))
        w = bilinear_weights(coords, 9, 9)
        total = sum(w)
        assert all((wi >= 0).all() for wi in w)
        assert np.abs(total - 1.0).max() < 1e-12

    def test_constant_image_stays_constant(self):
        img = np.full((6, 8, 3), 0.37)
        rng = np.random.default_rng(1)
        coords = rng.uniform(-2.0, 10.0, (6, 8, 2))
        out = bilinear_sample(img, coords)
        assert np.allclose(out, 0.37, atol=1e-14)

    def test_integer_grid_is_identity(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (7, 5, 3))
        out = bilinear_sample(img, pixel_grid(7, 5))
        assert np.array_equal(out, img)

    def test_column_ramp_half_pixel(self):
        h, w = 6, 9
        ramp = np.zeros((h, w, 3))
        ramp[...] = (np.arange(w) / w)[None, :, None]
        coords = pixel_grid(h, w)
        coords[..., 0] += 0.5
        out = bilinear_sample(ramp, coords)
        expected = (np.arange(w) + 0.5) / w
        # interior columns only; the last column clamps at the border
        assert np.allclose(out[:, : w - 1, 0], expected[: w - 1], atol=1e-12)

    def test_dimension_mismatch_is_an_error(self):
        with pytest.raises(ValueError):
            bilinear_sample(np.zeros((4, 4, 3)), np.zeros((5, 4, 2)))

    def test_partial_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 1, (9, 11, 3))
        coords = rng.uniform(0.2, 8.2, (9, 11, 2))
        # keep clearly away from integer lines
        frac = coords - np.floor(coords)
        coords += np.where(frac < 0.01, 0.02, 0.0) - np.where(frac > 0.99, 0.02, 0.0)

        _, dx, dy = bilinear_sample_with_grad(img, coords)
        h = 1e-4
        for axis, analytic in ((0, dx), (1, dy)):
            plus = coords.copy()
            minus = coords.copy()
            plus[..., axis] += h
            minus[..., axis] -= h
            fd = (bilinear_sample(img, plus) - bilinear_sample(img, minus)) / (2 * h)
            denom = np.maximum(np.abs(fd), np.abs(analytic))
            err = np.abs(analytic - fd) / np.where(denom > 1e-9, denom, 1.0)
            assert err.max() < 1e-5

    def test_derivative_is_zero_outside_the_frame(self):
        img = np.linspace(0, 1, 5 * 5 * 3).reshape(5, 5, 3)
        coords = np.zeros((5, 5, 2))
        coords[...] = (-3.0, 9.0)
        _, dx, dy = bilinear_sample_with_grad(img, coords)
        assert np.all(dx == 0) and np.all(dy == 0)


class TestWarp:
    def test_zero_flow_identity(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 1, (8, 8, 3))
        assert np.array_equal(warp(img, np.zeros((8, 8, 2))), img)

    def test_exact_translation_recovers_interior(self):
        rng = np.random.default_rng(5)
        h, w = 10, 12
        base = rng.uniform(0, 1, (h, w + 3, 3))
        frame_t = base[:, 3:]
        frame_t1 = base[:, :w]  # frame_t content shifted right by 3
        flow = np.zeros((h, w, 2))
        flow[..., 0] = 3.0
        warped = warp(frame_t1, flow)
        assert np.allclose(warped[:, : w - 3], frame_t[:, : w - 3], atol=1e-12)

    def test_fully_out_of_frame_flow_clamps(self):
        rng = np.random.default_rng(6)
        img = rng.uniform(0, 1, (6, 6, 3))
        flow = np.full((6, 6, 2), 1e4)
        warped = warp(img, flow)
        assert np.isfinite(warped).all()
        assert np.allclose(warped, img[-1, -1], atol=1e-12)

    def test_size_mismatch_error(self):
        with pytest.raises(ValueError):
            warp(np.zeros((4, 4, 3)), np.zeros((4, 5, 2)))


class TestOcclusionMask:
    def test_zero_flows_nothing_occluded(self):
        z = np.zeros((9, 9, 2))
        assert occlusion_mask(z, z).sum() == 0

    def test_consistent_pair_interior_clear(self):
        fwd = np.zeros((12, 12, 2))
        fwd[..., 0] = 5.0
        bwd = np.zeros((12, 12, 2))
        bwd[..., 0] = -5.0
        mask = occlusion_mask(fwd, bwd)
        # columns whose target x = c + 5 stays within the frame
        assert np.all(mask[:, :7] == 0)
        assert np.all(mask[:, 7:] == 1)  # out of frame

    def test_inconsistent_pair_occluded(self):
        fwd = np.zeros((12, 12, 2))
        fwd[..., 0] = 5.0
        bwd = np.zeros((12, 12, 2))
        # |fwd + 0|^2 = 25 > 0.01 * 25 + 0.5 everywhere in frame
        assert np.all(occlusion_mask(fwd, bwd) == 1)

    def test_binary_and_deterministic(self):
        rng = np.random.default_rng(7)
        fwd = rng.uniform(-4, 4, (10, 11, 2))
        bwd = rng.uniform(-4, 4, (10, 11, 2))
        m1 = occlusion_mask(fwd, bwd)
        m2 = occlusion_mask(fwd, bwd)
        assert np.array_equal(m1, m2)
        assert set(np.unique(m1)) <= {0, 1}

    def test_exact_inverse_pair_clear_in_frame(self):
        for du, dv in ((2.5, -1.5), (0.0, 3.0)):
            fwd = np.zeros((10, 10, 2))
            fwd[...] = (du, dv)
            mask = occlusion_mask(fwd, -fwd)
            coords = displace(fwd)
            in_frame = (
                (coords[..., 0] >= 0)
                & (coords[..., 0] <= 9)
                & (coords[..., 1] >= 0)
                & (coords[..., 1] <= 9)
            )
            assert mask[in_frame].sum() == 0

    def test_params_validation(self):
        with pytest.raises(ValueError):
            OcclusionParams(alpha_consistency=-1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            occlusion_mask(np.zeros((4, 4, 2)), np.zeros((4, 5, 2)))
