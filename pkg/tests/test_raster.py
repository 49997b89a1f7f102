import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glyphforge import raster
from glyphforge.exceptions import (
    DegenerateOutput,
    RectTooLarge,
    TooManyLevels,
    UniformMask,
)


def brute_force_distance(mask):
    """O(N^2) scan: distance to the nearest pixel of the other class."""
    h, w = mask.shape
    rr, cc = np.mgrid[:h, :w]
    out = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            other = mask != mask[r, c]
            out[r, c] = np.sqrt(((rr[other] - r) ** 2 + (cc[other] - c) ** 2).min())
    return out


def naive_box_sum(field, rw, rh):
    h, w = field.shape
    out = np.empty((h - rh + 1, w - rw + 1))
    for r in range(out.shape[0]):
        for c in range(out.shape[1]):
            out[r, c] = field[r:r + rh, c:c + rw].sum()
    return out


class TestBinarize:
    def test_constant_above(self):
        assert raster.binarize(np.full((4, 5), 0.7), 0.5).all()

    def test_threshold_is_inclusive(self):
        assert raster.binarize(np.full((3, 3), 0.5), 0.5).all()

    def test_matches_pixel_loop(self):
        field = np.random.default_rng(0).random((8, 8))
        got = raster.binarize(field, 0.4)
        for r in range(8):
            for c in range(8):
                assert got[r, c] == (field[r, c] >= 0.4)

    @given(arrays(np.float64, (6, 7), elements=st.floats(0, 1)),
           st.floats(0.01, 0.99))
    def test_idempotent(self, field, t):
        once = raster.binarize(field, t)
        assert np.array_equal(raster.binarize(once, t), once)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            raster.binarize(np.zeros((2, 2)), 1.0)


class TestDistanceTransform:
    def test_point_source(self):
        mask = np.zeros((3, 3), bool)
        mask[1, 1] = True
        d = raster.distance_transform(mask)
        assert d[0, 0] == pytest.approx(np.sqrt(2))
        assert d[0, 1] == 1.0
        assert d[1, 1] == 1.0

    def test_matches_brute_force_16(self):
        rng = np.random.default_rng(1)
        mask = rng.random((16, 16)) < 0.3
        assert np.array_equal(raster.distance_transform(mask), brute_force_distance(mask))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1),
           st.floats(0.02, 0.98))
    def test_exhaustive_random(self, h, w, seed, p):
        mask = np.random.default_rng(seed).random((h, w)) < p
        if mask.all() or not mask.any():
            with pytest.raises(UniformMask):
                raster.distance_transform(mask)
        else:
            assert np.array_equal(raster.distance_transform(mask),
                                  brute_force_distance(mask))

    def test_uniform_raises(self):
        with pytest.raises(UniformMask):
            raster.distance_transform(np.ones((4, 4), bool))

    def test_boundary_pixels_are_minimal(self):
        mask = np.zeros((20, 20), bool)
        mask[5:15, 4:12] = True
        d = raster.distance_transform(mask)
        assert d.min() == 1.0
        assert d[5, 8] == 1.0 and d[4, 8] == 1.0


class TestBoxSum:
    def test_constant(self):
        out = raster.box_sum(np.full((10, 9), 0.25), 3, 4)
        assert out.shape == (7, 7)
        np.testing.assert_allclose(out, 12 * 0.25)

    def test_impulse_footprint(self):
        f = np.zeros((9, 9))
        f[4, 4] = 1.0
        out = raster.box_sum(f, 3, 2)
        expected = np.zeros_like(out)
        expected[3:5, 2:5] = 1.0
        np.testing.assert_array_equal(out, expected)

    def test_matches_naive(self):
        f = np.random.default_rng(2).random((8, 8))
        np.testing.assert_allclose(raster.box_sum(f, 3, 3), naive_box_sum(f, 3, 3),
                                   atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)),
                  elements=st.floats(-1, 1)),
           st.data())
    def test_property_naive(self, field, data):
        rh = data.draw(st.integers(1, field.shape[0]))
        rw = data.draw(st.integers(1, field.shape[1]))
        np.testing.assert_allclose(raster.box_sum(field, rw, rh),
                                   naive_box_sum(field, rw, rh), atol=1e-9, rtol=0)

    def test_too_large(self):
        with pytest.raises(RectTooLarge):
            raster.box_sum(np.zeros((4, 4)), 5, 1)


class TestPyramid:
    def test_single_level(self):
        img = np.random.default_rng(3).random((20, 30, 3))
        pyr = raster.build_pyramid(img, 0)
        assert len(pyr) == 1 and np.array_equal(pyr[0], img)

    def test_constant_mask(self):
        pyr = raster.build_pyramid(np.ones((64, 64), bool), 2)
        assert pyr[2].shape == (16, 16) and pyr[2].all()

    def test_half_plane(self):
        mask = np.zeros((64, 64), bool)
        mask[:, :32] = True
        top = raster.build_pyramid(mask, 1)[1]
        expected = np.zeros((32, 32), bool)
        expected[:, :16] = True
        assert np.array_equal(top, expected)

    @given(st.integers(8, 300), st.integers(8, 300), st.integers(0, 5))
    @settings(max_examples=40, deadline=None)
    def test_ceil_recurrence(self, h, w, levels):
        hh, ww = h, w
        for _ in range(levels):
            hh, ww = -(-hh // 2), -(-ww // 2)
        if levels and (hh < 8 or ww < 8):
            with pytest.raises(TooManyLevels):
                raster.build_pyramid(np.zeros((h, w)), levels)
            return
        pyr = raster.build_pyramid(np.zeros((h, w)), levels)
        for a, b in zip(pyr, pyr[1:]):
            assert b.shape == (-(-a.shape[0] // 2), -(-a.shape[1] // 2))

    def test_too_many_levels(self):
        with pytest.raises(TooManyLevels):
            raster.build_pyramid(np.zeros((32, 32)), 3)


class TestResample:
    def test_identity(self):
        img = np.random.default_rng(4).random((10, 12, 3))
        assert np.array_equal(raster.resample(img, 1.0), img)

    @pytest.mark.parametrize("factor", [0.3, 0.5, 1.7, 3.0])
    def test_constant(self, factor):
        out = raster.resample(np.full((20, 16, 3), 0.4), factor)
        np.testing.assert_allclose(out, 0.4, atol=1e-12)

    def test_round_trip_ramp(self):
        y, x = np.mgrid[:64, :64] / 63.0
        ramp = 0.2 + 0.3 * x + 0.25 * y
        back = raster.resample(raster.resample(ramp, 2.0), 0.5)
        assert np.abs(back - ramp).max() < 0.02

    def test_mask_stays_binary(self):
        mask = np.zeros((20, 20), bool)
        mask[5:15, 5:15] = True
        up = raster.resample(mask, 2.5)
        assert up.dtype == bool and up.shape == (50, 50)

    def test_degenerate(self):
        with pytest.raises(DegenerateOutput):
            raster.resample(np.zeros((3, 3)), 0.1)


class TestColourAndIO:
    def test_lab_round_trip(self):
        img = np.random.default_rng(5).random((6, 6, 3))
        lab = raster.rgb_to_lab(img)
        assert lab.min() >= 0 and lab.max() <= 1
        np.testing.assert_allclose(raster.lab_to_rgb(lab), img, atol=1e-6)

    def test_png_round_trip(self, tmp_path):
        img = np.random.default_rng(6).integers(0, 256, (5, 7, 3)) / 255.0
        raster.write_image(tmp_path / "a.png", img)
        np.testing.assert_allclose(raster.read_image(tmp_path / "a.png"), img)

    def test_mask_threshold_on_load(self, tmp_path):
        from PIL import Image
        Image.fromarray(np.array([[0, 127, 128, 255]], np.uint8), "L").save(tmp_path / "m.png")
        assert raster.read_mask(tmp_path / "m.png").tolist() == [[False, False, True, True]]

    def test_pfm_round_trip(self, tmp_path):
        f = np.random.default_rng(7).random((4, 9))
        raster.write_pfm(tmp_path / "f.pfm", f)
        raw = (tmp_path / "f.pfm").read_bytes()
        assert raw.startswith(b"Pf\n9 4\n-1.0\n")
        np.testing.assert_allclose(raster.read_pfm(tmp_path / "f.pfm"), f, rtol=1e-6)
