"""Closed-form 3D motion estimators driven by sparse image-space flow."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mvmotion.errors import (
    DegenerateFlow,
    DegeneratePlane,
    DegenerateSelection,
    DegenerateStretch,
    InvalidDepth,
    InvalidFactor,
    ValidationError,
)
from mvmotion.flow import FlowField
from mvmotion.kinematics import (
    MotionSpec,
    SparsePointPair,
    apply_rotation,
    apply_scaling,
    apply_stretch,
    estimate_scale_enlarge,
    estimate_scale_shrink,
    estimate_translation,
    fit_stretch_plane,
    max_offset,
    translation_offset,
    unproject_sparse,
)
from mvmotion.scene import CameraView, ObjectPoints


def make_view(size: int = 128, focal: float = 100.0, depth=None) -> CameraView:
    if depth is None:
        depth = np.ones((size, size))
    return CameraView(
        view_id="ref",
        K=np.array([[focal, 0.0, 0.0], [0.0, focal, 0.0], [0.0, 0.0, 1.0]]),
        R=np.eye(3),
        T=np.zeros(3),
        image=np.zeros((size, size, 3), dtype=np.uint8),
        depth=depth,
    )


def flow_with(entries: dict[tuple[int, int], tuple[float, float]], size: int = 128) -> FlowField:
    u = np.zeros((size, size))
    v = np.zeros((size, size))
    for (y, x), (fu, fv) in entries.items():
        u[y, x] = fu
        v[y, x] = fv
    return FlowField(u=u, v=v, valid=np.ones((size, size), bool))


def square_object(z: float = 5.0) -> ObjectPoints:
    pts = np.array(
        [[1.0, 0.0, z], [-1.0, 0.0, z], [0.0, 1.0, z], [0.0, -1.0, z]]
    )
    return ObjectPoints(points=pts, source_label=1)


class TestUnprojectSparse:
    def test_hand_case(self):
        # Pixel (100, 0) at depth 1 with flow (100, 0): the original point is
        # (1, 0, 1) and the moved point keeps the depth, giving (2, 0, 1).
        view = make_view()
        pair = unproject_sparse(view, flow_with({(0, 100): (100.0, 0.0)}))
        assert len(pair) == 1
        np.testing.assert_allclose(pair.original, [[1.0, 0.0, 1.0]])
        np.testing.assert_allclose(pair.moved, [[2.0, 0.0, 1.0]])

    def test_default_mask_is_moving_pixels(self):
        view = make_view()
        pair = unproject_sparse(view, flow_with({(0, 10): (1.0, 0.0), (0, 20): (0.0, 2.0)}))
        assert len(pair) == 2

    def test_explicit_mask_overrides(self):
        view = make_view()
        mask = np.zeros((128, 128), dtype=bool)
        mask[0, 10] = True
        pair = unproject_sparse(view, flow_with({(0, 10): (1.0, 0.0), (0, 20): (0.0, 2.0)}), mask)
        assert len(pair) == 1

    def test_empty_selection(self):
        view = make_view()
        with pytest.raises(DegenerateSelection):
            unproject_sparse(view, FlowField.zeros(128, 128))

    def test_zero_depth_rejected(self):
        depth = np.ones((128, 128))
        depth[0, 10] = 0.0
        view = make_view(depth=depth)
        with pytest.raises(InvalidDepth):
            unproject_sparse(view, flow_with({(0, 10): (1.0, 0.0)}))

    def test_flow_shape_must_match_view(self):
        view = make_view(size=128)
        with pytest.raises(ValidationError):
            unproject_sparse(view, FlowField.zeros(64, 64))


class TestTranslation:
    def test_single_offset(self):
        pair = SparsePointPair(original=[[0.0, 0.0, 1.0]], moved=[[1.0, 0.0, 1.0]])
        np.testing.assert_array_equal(translation_offset(pair), [1.0, 0.0, 0.0])

    def test_mean_of_offsets(self):
        pair = SparsePointPair(
            original=[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]],
            moved=[[0.0, 2.0, 0.0], [3.0, 3.0, 1.0]],
        )
        np.testing.assert_array_equal(translation_offset(pair), [1.0, 2.0, 0.0])

    def test_estimate_translation_moves_object(self):
        pair = SparsePointPair(original=[[0.0, 0.0, 0.0]], moved=[[1.0, 2.0, 0.0]])
        obj = square_object()
        moved = estimate_translation(pair, obj)
        np.testing.assert_array_equal(moved.points, obj.points + np.array([1.0, 2.0, 0.0]))
        assert moved.source_label == obj.source_label

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            SparsePointPair(original=np.zeros((2, 3)), moved=np.zeros((3, 3)))


class TestShrinkFactor:
    def test_hand_case_two_thirds(self):
        f = flow_with({(0, 0): (2.0, 0.0), (1, 0): (2.0, 0.0), (2, 0): (4.0, 0.0)}, size=8)
        assert abs(estimate_scale_shrink(f) - 2.0 / 3.0) <= 1e-12

    def test_equal_magnitudes_give_exactly_one(self):
        f = flow_with({(0, 0): (2.0, 0.0), (3, 3): (0.0, 2.0), (5, 1): (-2.0, 0.0)}, size=8)
        assert estimate_scale_shrink(f) == 1.0

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateFlow):
            estimate_scale_shrink(FlowField.zeros(8, 8))

    @given(st.integers(0, 300))
    def test_bounded_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        h, w = 12, 12
        f = FlowField(
            u=rng.normal(scale=3.0, size=(h, w)),
            v=rng.normal(scale=3.0, size=(h, w)),
            valid=rng.random((h, w)) > 0.4,
        )
        assume(f.magnitude()[f.valid].max(initial=0.0) > 1e-6)
        s = estimate_scale_shrink(f)
        assert 0.0 < s <= 1.0


class TestEnlargeFactor:
    def test_hand_case_five(self):
        f = flow_with({(3, 2): (4.0, 0.0)}, size=16)
        assert estimate_scale_enlarge(f, center=(2.0, 3.0)) == 5.0

    def test_center_outside_raster(self):
        f = flow_with({(3, 2): (4.0, 0.0)}, size=16)
        with pytest.raises(ValidationError):
            estimate_scale_enlarge(f, center=(99.0, 3.0))

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateFlow):
            estimate_scale_enlarge(FlowField.zeros(8, 8), center=(1.0, 1.0))

    @given(st.integers(0, 300))
    def test_at_least_one(self, seed):
        rng = np.random.default_rng(seed)
        h, w = 12, 12
        f = FlowField(
            u=rng.normal(scale=2.0, size=(h, w)),
            v=rng.normal(scale=2.0, size=(h, w)),
            valid=rng.random((h, w)) > 0.4,
        )
        assume(f.magnitude()[f.valid].max(initial=0.0) > 1e-6)
        assert estimate_scale_enlarge(f, center=(5.0, 5.0)) >= 1.0


class TestApplyScaling:
    def test_origin_anchor_doubles(self):
        obj = ObjectPoints(points=[[1.0, 2.0, 3.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]], source_label=2)
        out = apply_scaling(obj, 2.0)
        np.testing.assert_array_equal(out.points[0], [2.0, 4.0, 6.0])

    def test_centroid_anchor_fixes_centroid(self):
        obj = square_object()
        out = apply_scaling(obj, 3.0, anchor="centroid")
        np.testing.assert_allclose(out.centroid(), obj.centroid(), atol=1e-12)
        spread = np.linalg.norm(out.points - out.centroid(), axis=1)
        np.testing.assert_allclose(spread, 3.0 * np.linalg.norm(obj.points - obj.centroid(), axis=1))

    def test_unit_factor_is_identity(self):
        obj = square_object()
        np.testing.assert_array_equal(apply_scaling(obj, 1.0).points, obj.points)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
    def test_invalid_factor(self, bad):
        with pytest.raises(InvalidFactor):
            apply_scaling(square_object(), bad)


class TestApplyRotation:
    def test_quarter_turn_about_centroid(self):
        out = apply_rotation(square_object(), 90.0)
        np.testing.assert_allclose(out.points[0], [0.0, 1.0, 5.0], atol=1e-12)

    def test_two_half_turns_restore(self):
        obj = square_object()
        out = apply_rotation(apply_rotation(obj, 180.0), 180.0)
        np.testing.assert_allclose(out.points, obj.points, atol=1e-9)

    def test_centroid_is_fixed_point(self):
        obj = ObjectPoints(points=[[3.0, 1.0, 2.0], [5.0, 2.0, 2.0], [4.0, 4.0, 7.0]], source_label=1)
        out = apply_rotation(obj, 37.5)
        np.testing.assert_allclose(out.centroid(), obj.centroid(), atol=1e-12)

    def test_depth_coordinate_untouched(self):
        obj = ObjectPoints(points=[[3.0, 1.0, 2.0], [5.0, 2.0, 4.0], [4.0, 4.0, 7.0]], source_label=1)
        out = apply_rotation(obj, 123.0)
        np.testing.assert_array_equal(out.points[:, 2], obj.points[:, 2])

    def test_nonfinite_angle(self):
        with pytest.raises(ValidationError):
            apply_rotation(square_object(), np.nan)

    @given(st.floats(-359.0, 359.0))
    def test_norms_about_centroid_preserved(self, angle):
        obj = square_object()
        out = apply_rotation(obj, angle)
        r_in = np.linalg.norm(obj.points - obj.centroid(), axis=1)
        r_out = np.linalg.norm(out.points - out.centroid(), axis=1)
        np.testing.assert_allclose(r_out, r_in, atol=1e-9)


class TestStretchPlane:
    def test_fit_along_x(self):
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        assert (plane.A, plane.B, plane.D) == (0.0, -1.0, 0.0)

    def test_fit_along_y(self):
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        assert (plane.A, plane.B, plane.D) == (1.0, 0.0, 0.0)

    def test_passes_through_both_points(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p1, p2 = rng.normal(size=(2, 3)) * 4.0
            if np.hypot(*(p2[:2] - p1[:2])) < 1e-6:
                continue
            plane = fit_stretch_plane(p1, p2)
            assert abs(plane.signed_distance(p1[None])[0]) <= 1e-9
            assert abs(plane.signed_distance(p2[None])[0]) <= 1e-9

    def test_coincident_xy_degenerate(self):
        with pytest.raises(DegeneratePlane):
            fit_stretch_plane(np.array([1.0, 2.0, 0.0]), np.array([1.0, 2.0, 9.0]))

    def test_z_invariance(self):
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        d = plane.signed_distance(np.array([[2.0, 3.0, -50.0], [2.0, 3.0, 50.0]]))
        assert d[0] == d[1]


class TestApplyStretch:
    @staticmethod
    def pair_with_max(off):
        return SparsePointPair(original=[[0.0, 0.0, 0.0]], moved=[np.asarray(off, dtype=float)])

    def test_hand_case_linear_ramp(self):
        # Plane y=0 oriented so +y is positive; points at y=1 and y=2 with
        # peak offset (0, 0, 3) move by half and full offset.
        plane = fit_stretch_plane(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.0]))
        obj = ObjectPoints(points=[[0.0, 1.0, 0.0], [0.0, 2.0, 0.0], [5.0, 0.0, 0.0]], source_label=1)
        out = apply_stretch(obj, plane, self.pair_with_max([0.0, 0.0, 3.0]))
        np.testing.assert_allclose(out.points[0], [0.0, 1.0, 1.5])
        np.testing.assert_allclose(out.points[1], [0.0, 2.0, 3.0])

    def test_on_plane_points_immobile(self):
        # Plane x=0: the two points with x=0 sit on it and must stay put
        # while the off-plane point pulls the peak distance.
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        obj = ObjectPoints(points=[[0.0, 5.0, 2.0], [0.0, -3.0, 1.0], [4.0, 0.0, 0.0]], source_label=1)
        out = apply_stretch(obj, plane, self.pair_with_max([1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(out.points[:2], obj.points[:2])
        np.testing.assert_array_equal(out.points[2], [5.0, 0.0, 0.0])

    def test_sign_symmetry_exact(self):
        # Mirror-image points about the plane x=0 move by exactly opposite
        # displacements.
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        xs = np.array([0.5, 1.25, 3.0])
        pts = np.concatenate(
            [np.stack([xs, np.ones(3), np.zeros(3)], axis=1), np.stack([-xs, np.ones(3), np.zeros(3)], axis=1)]
        )
        obj = ObjectPoints(points=pts, source_label=1)
        out = apply_stretch(obj, plane, self.pair_with_max([0.0, 0.0, 2.0]))
        disp = out.points - obj.points
        np.testing.assert_array_equal(disp[:3], -disp[3:])

    def test_clamp_zeroes_negative_side(self):
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        obj = ObjectPoints(points=[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], source_label=1)
        out = apply_stretch(obj, plane, self.pair_with_max([0.0, 0.0, 2.0]), clamp=True)
        np.testing.assert_array_equal(out.points[1], obj.points[1])
        assert out.points[2, 2] == 2.0

    def test_all_on_plane_degenerate(self):
        plane = fit_stretch_plane(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        obj = ObjectPoints(points=[[0.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 3.0, 5.0]], source_label=1)
        with pytest.raises(DegenerateStretch):
            apply_stretch(obj, plane, self.pair_with_max([1.0, 0.0, 0.0]))


class TestMaxOffset:
    def test_picks_largest_norm(self):
        pair = SparsePointPair(
            original=np.zeros((3, 3)),
            moved=[[1.0, 0.0, 0.0], [0.0, -5.0, 0.0], [2.0, 2.0, 0.0]],
        )
        np.testing.assert_array_equal(max_offset(pair), [0.0, -5.0, 0.0])


class TestMotionSpec:
    def test_valid_rotation(self):
        MotionSpec(mode="rotation", reference_view="v", angle_deg=30.0)

    def test_missing_required_field(self):
        with pytest.raises(ValidationError):
            MotionSpec(mode="translation", reference_view="v")

    def test_extra_field_for_mode(self):
        with pytest.raises(ValidationError):
            MotionSpec(mode="rotation", reference_view="v", angle_deg=30.0, sparse_flow=FlowField.zeros(2, 2))

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            MotionSpec(mode="teleport", reference_view="v", angle_deg=1.0)

    @pytest.mark.parametrize("angle", [360.0, -360.0, 720.0])
    def test_angle_range(self, angle):
        with pytest.raises(ValidationError):
            MotionSpec(mode="rotation", reference_view="v", angle_deg=angle)
