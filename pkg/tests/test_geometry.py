import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylesep.errors import InputError
from stylesep.geometry import (
    AffineTransform,
    BoundingBox,
    LandmarkSet,
    apply_transform,
    crop_and_resize,
    render_heatmaps,
    scheme_for_count,
    synth_scheme,
)


def make_landmarks(points):
    pts = np.asarray(points, dtype=np.float64)
    return LandmarkSet(pts, scheme_for_count(len(pts)))


class TestLandmarkSet:
    def test_count_must_match_scheme(self):
        with pytest.raises(InputError):
            LandmarkSet(np.zeros((5, 2)), synth_scheme(4))

    def test_rejects_non_finite(self):
        pts = np.zeros((3, 2))
        pts[1, 0] = np.nan
        with pytest.raises(InputError):
            LandmarkSet(pts, synth_scheme(3))

    def test_equality_is_exact(self):
        a = make_landmarks([(1.0, 2.0), (3.0, 4.0)])
        b = make_landmarks([(1.0, 2.0), (3.0, 4.0)])
        c = make_landmarks([(1.0, 2.0), (3.0, 4.0 + 1e-12)])
        assert a == b
        assert a != c


class TestBoundingBox:
    def test_degenerate_rejected(self):
        with pytest.raises(InputError):
            BoundingBox(10.0, 10.0, 10.0, 20.0)

    def test_dimensions(self):
        b = BoundingBox(1.0, 2.0, 5.0, 10.0)
        assert b.width == 4.0 and b.height == 8.0


class TestApplyTransform:
    def test_identity(self):
        lms = make_landmarks([(1.5, 2.5), (3.0, -1.0), (0.0, 0.0)])
        assert apply_transform(lms, AffineTransform.identity()) == lms

    def test_translation(self):
        lms = make_landmarks([(1.0, 1.0), (2.0, 5.0), (7.5, 3.25)])
        t = AffineTransform(np.array([[1.0, 0.0, 5.0], [0.0, 1.0, -3.0]]))
        moved = apply_transform(lms, t)
        assert np.allclose(moved.points, lms.points + np.array([5.0, -3.0]))
        assert moved.scheme == lms.scheme

    @given(
        st.lists(
            st.tuples(
                st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False)
            ),
            min_size=1,
            max_size=20,
        ),
        st.floats(0.2, 5.0),
        st.floats(-1.5, 1.5),
        st.floats(-50, 50),
        st.floats(-50, 50),
    )
    def test_inverse_composition_roundtrip(self, pts, scale, angle, tx, ty):
        lms = make_landmarks(pts)
        c, s = scale * np.cos(angle), scale * np.sin(angle)
        t = AffineTransform(np.array([[c, -s, tx], [s, c, ty]]))
        back = apply_transform(apply_transform(lms, t), t.inverse())
        assert np.allclose(back.points, lms.points, atol=1e-6)

    def test_non_invertible_rejected(self):
        with pytest.raises(InputError):
            AffineTransform(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]))


class TestCropAndResize:
    def test_full_image_identity(self):
        img = np.random.default_rng(0).random((256, 256, 3)).astype(np.float32)
        lms = make_landmarks([(10.0, 20.0), (100.0, 200.0), (255.0, 0.0)])
        bbox = BoundingBox(0.0, 0.0, 256.0, 256.0)
        out, mapped, t = crop_and_resize(img, bbox, lms, size=256)
        assert np.allclose(t.matrix, AffineTransform.identity().matrix)
        assert mapped == lms
        assert out.shape == (256, 256, 3)

    def test_upscale_doubles_coordinates(self):
        # 128-wide full-image box into a 256 frame: the hand-applied affine is
        # x' = 2x, y' = 2y exactly.
        img = np.zeros((128, 128, 3), dtype=np.float32)
        lms = make_landmarks([(10.0, 20.0), (63.5, 90.25), (0.0, 127.0)])
        out, mapped, t = crop_and_resize(img, BoundingBox(0, 0, 128, 128), lms, size=256)
        assert out.shape[:2] == (256, 256)
        assert np.array_equal(mapped.points, lms.points * 2.0)

    def test_default_size_is_256(self):
        img = np.zeros((64, 64), dtype=np.float32)
        lms = make_landmarks([(5.0, 5.0)])
        out, _, _ = crop_and_resize(img, BoundingBox(0, 0, 64, 64), lms)
        assert out.shape[:2] == (256, 256)

    def test_non_intersecting_bbox_rejected(self):
        img = np.zeros((64, 64), dtype=np.float32)
        lms = make_landmarks([(5.0, 5.0)])
        with pytest.raises(InputError):
            crop_and_resize(img, BoundingBox(100.0, 100.0, 130.0, 130.0), lms, size=32)

    @given(
        st.lists(
            st.tuples(st.floats(0, 63, allow_nan=False), st.floats(0, 63, allow_nan=False)),
            min_size=1,
            max_size=10,
        ),
        st.floats(0, 20),
        st.floats(0, 20),
        st.floats(30, 60),
        st.floats(30, 60),
    )
    def test_roundtrip_through_inverse(self, pts, x0, y0, w, h):
        img = np.zeros((64, 64), dtype=np.float32)
        lms = make_landmarks(pts)
        _, mapped, t = crop_and_resize(img, BoundingBox(x0, y0, x0 + w, y0 + h), lms, size=48)
        back = apply_transform(mapped, t.inverse())
        assert np.allclose(back.points, lms.points, atol=1e-6)


class TestRenderHeatmaps:
    def test_center_landmark_peak(self):
        lms = make_landmarks([(32.0, 32.0)])
        hm = render_heatmaps(lms, 65, 65, sigma=3.0)
        chan = hm.maps[0]
        peak = np.unravel_index(np.argmax(chan), chan.shape)
        assert peak == (32, 32)
        assert chan[32, 32] == 1.0

    def test_closed_form_gaussian_value(self):
        # Landmark on-pixel at (10, 10): the value two pixels below is
        # exp(-4 / (2 sigma^2)) of the unit peak.
        lms = make_landmarks([(10.0, 10.0)])
        hm = render_heatmaps(lms, 32, 32, sigma=2.0)
        assert hm.maps[0][12, 10] == pytest.approx(np.exp(-4.0 / 8.0), abs=1e-12)
        assert hm.maps[0][10, 10] == 1.0

    def test_68_landmarks_give_68_channels(self):
        pts = np.random.default_rng(1).uniform(5, 59, size=(68, 2))
        lms = make_landmarks(pts)
        assert lms.scheme.name == "P68"
        hm = render_heatmaps(lms, 64, 64, sigma=1.5)
        assert hm.maps.shape == (68, 64, 64)

    def test_out_of_bounds_channel_is_zero(self):
        lms = make_landmarks([(-10.0, 5.0), (5.0, 5.0)])
        hm = render_heatmaps(lms, 16, 16, sigma=1.5)
        assert np.all(hm.maps[0] == 0.0)
        assert hm.maps[1].max() == 1.0

    def test_values_in_unit_range(self):
        pts = np.random.default_rng(2).uniform(-5, 35, size=(12, 2))
        hm = render_heatmaps(make_landmarks(pts), 32, 32, sigma=1.5)
        assert hm.maps.min() >= 0.0 and hm.maps.max() <= 1.0

    @settings(max_examples=50)
    @given(
        st.lists(
            st.tuples(
                st.floats(0, 31, allow_nan=False), st.floats(0, 31, allow_nan=False)
            ),
            min_size=1,
            max_size=8,
        )
    )
    def test_argmax_at_rounded_pixel(self, pts):
        hm = render_heatmaps(make_landmarks(pts), 32, 32, sigma=2.0)
        for chan, (x, y) in zip(hm.maps, pts):
            py, px = np.unravel_index(np.argmax(chan), chan.shape)
            assert (px, py) == (int(np.floor(x + 0.5)), int(np.floor(y + 0.5)))
            assert chan[py, px] == 1.0

    @given(
        st.tuples(st.floats(8, 23, allow_nan=False), st.floats(8, 23, allow_nan=False)),
        st.integers(-5, 5),
        st.integers(-5, 5),
    )
    def test_integer_translation_equivariance(self, pt, dx, dy):
        a = render_heatmaps(make_landmarks([pt]), 32, 32, sigma=2.0).maps[0]
        b = render_heatmaps(make_landmarks([(pt[0] + dx, pt[1] + dy)]), 32, 32, sigma=2.0).maps[0]
        shifted = np.roll(np.roll(a, dy, axis=0), dx, axis=1)
        # compare on the interior that both Gaussians cover without wrap
        ys = slice(max(0, dy) + 1, 32 + min(0, dy) - 1)
        xs = slice(max(0, dx) + 1, 32 + min(0, dx) - 1)
        assert np.allclose(b[ys, xs], shifted[ys, xs], atol=1e-12)

    def test_invalid_sigma_rejected(self):
        with pytest.raises(InputError):
            render_heatmaps(make_landmarks([(1.0, 1.0)]), 16, 16, sigma=0.0)
