from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from quiltcast import (Camera, Orthographic, Perspective, ViewRig,
                       camera_from_position, camera_ray, camera_rays,
                       turntable_cameras)


def point_line_distance(point, origin, direction):
    p = np.asarray(point, dtype=np.float64)
    t = np.dot(p - origin, direction) / np.dot(direction, direction)
    return float(np.linalg.norm(origin + t * direction - p))


@pytest.fixture
def ortho_cam():
    return Camera(rotation_center=(10.0, 20.0, 30.0), distance=100.0,
                  projection=Orthographic(view_height=50.0),
                  azimuth_deg=30.0, elevation_deg=15.0)


@pytest.fixture
def persp_cam():
    return Camera(rotation_center=(10.0, 20.0, 30.0), distance=100.0,
                  projection=Perspective(vfov_deg=60.0),
                  azimuth_deg=-20.0, elevation_deg=40.0)


class TestCameraRay:
    def test_center_pixel_passes_through_rotation_center(self, ortho_cam, persp_cam):
        for cam in (ortho_cam, persp_cam):
            origin, direction = camera_ray(cam, (3, 3), (7, 7))
            assert point_line_distance(cam.rotation_center, origin, direction) < 1e-9

    def test_orthographic_directions_parallel(self, ortho_cam):
        _, dirs = camera_rays(ortho_cam, (5, 4))
        first = dirs[0, 0]
        assert np.allclose(dirs, first[None, None, :], atol=1e-12)

    def test_perspective_90_top_center_at_45_degrees(self):
        cam = Camera(rotation_center=(0.0, 0.0, 0.0), distance=10.0,
                     projection=Perspective(vfov_deg=90.0))
        h = 101
        origin, direction = camera_ray(cam, (h // 2, 0), (h, h))
        _, _, forward = cam.basis()
        angle = math.degrees(math.acos(float(np.dot(direction, forward))))
        half_pixel_deg = math.degrees(math.atan(1.0 / h))
        assert abs(angle - 45.0) <= half_pixel_deg

    def test_pixel_out_of_range(self, ortho_cam):
        with pytest.raises(ValueError):
            camera_ray(ortho_cam, (7, 0), (7, 7))

    def test_aspect_widens_x(self):
        cam = Camera(rotation_center=(0.0, 0.0, 0.0), distance=10.0,
                     projection=Orthographic(view_height=2.0), aspect=2.0)
        origins, _ = camera_rays(cam, (4, 4))
        xs = origins[0, :, 0]
        ys = origins[:, 0, 1]
        assert (xs.max() - xs.min()) == pytest.approx(2.0 * (ys.max() - ys.min()))


class TestTurntable:
    def test_single_view_is_base(self, ortho_cam):
        assert turntable_cameras(ortho_cam, ViewRig(n_views=1, step_deg=1.0)) == [ortho_cam]

    def test_default_rig_offsets(self, ortho_cam):
        rig = ViewRig(n_views=45, step_deg=1.0)
        cams = turntable_cameras(ortho_cam, rig)
        offsets = [c.azimuth_deg - ortho_cam.azimuth_deg for c in cams]
        assert offsets[0] == -22.0 and offsets[-1] == 22.0
        assert cams[22] == ortho_cam
        assert rig.cone_deg == 44.0

    def test_distance_to_center_preserved(self, ortho_cam):
        center = np.asarray(ortho_cam.rotation_center)
        for cam in turntable_cameras(ortho_cam, ViewRig(n_views=9, step_deg=5.0)):
            assert np.linalg.norm(cam.position - center) == pytest.approx(
                ortho_cam.distance, abs=1e-9)

    def test_rig_validation(self):
        with pytest.raises(ValueError):
            ViewRig(n_views=0)
        with pytest.raises(ValueError):
            ViewRig(n_views=92, step_deg=1.0)  # cone over 90 degrees
        with pytest.raises(ValueError):
            ViewRig(n_views=5, step_deg=0.0)


class TestCameraFromPosition:
    def test_round_trip(self, persp_cam):
        rebuilt = camera_from_position(persp_cam.position, persp_cam.rotation_center,
                                       persp_cam.projection, persp_cam.aspect)
        assert np.allclose(rebuilt.position, persp_cam.position, atol=1e-9)
        assert rebuilt.distance == pytest.approx(persp_cam.distance, abs=1e-9)

    def test_rejects_zero_offset(self):
        with pytest.raises(ValueError):
            camera_from_position((1.0, 2.0, 3.0), (1.0, 2.0, 3.0),
                                 Orthographic(view_height=1.0))


class TestValidation:
    def test_camera_invariants(self):
        with pytest.raises(ValueError):
            Camera(rotation_center=(0, 0, 0), distance=0.0,
                   projection=Orthographic(view_height=1.0))
        with pytest.raises(ValueError):
            Orthographic(view_height=0.0)
        with pytest.raises(ValueError):
            Perspective(vfov_deg=180.0)
        with pytest.raises(ValueError):
            Camera(rotation_center=(0, 0, 0), distance=1.0,
                   projection=Orthographic(view_height=1.0), aspect=0.0)

    def test_replace_keeps_frozen(self, ortho_cam):
        other = replace(ortho_cam, azimuth_deg=99.0)
        assert other.azimuth_deg == 99.0 and ortho_cam.azimuth_deg == 30.0
