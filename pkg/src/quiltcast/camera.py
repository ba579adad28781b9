"""Turntable cameras, ray generation, and the multi-view rig.

World axes match volume axes (micrometers): x across, y up, z depth. A camera
orbits its rotation center at a fixed distance; azimuth sweeps around the
vertical (y) axis, elevation tilts toward it. At azimuth 0, elevation 0 the
camera sits on the +z side looking along -z, with +x to the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Orthographic:
    view_height: float  # world height of the view window, micrometers

    def __post_init__(self) -> None:
        if self.view_height <= 0.0:
            raise ValueError(f"view_height must be positive, got {self.view_height}")


@dataclass(frozen=True)
class Perspective:
    vfov_deg: float  # vertical field of view

    def __post_init__(self) -> None:
        if not 0.0 < self.vfov_deg < 180.0:
            raise ValueError(f"vfov must lie in (0, 180), got {self.vfov_deg}")


Projection = Orthographic | Perspective


@dataclass(frozen=True)
class Camera:
    rotation_center: tuple[float, float, float]
    distance: float
    projection: Projection
    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0
    aspect: float = 1.0  # width / height applied to the projection

    def __post_init__(self) -> None:
        if self.distance <= 0.0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        if self.aspect <= 0.0:
            raise ValueError(f"aspect must be positive, got {self.aspect}")

    @property
    def position(self) -> np.ndarray:
        """Eye point in world space."""
        c = np.asarray(self.rotation_center, dtype=np.float64)
        return c + self.distance * _outward(self.azimuth_deg, self.elevation_deg)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward); forward points at the rotation center."""
        forward = -_outward(self.azimuth_deg, self.elevation_deg)
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, world_up)
        norm = np.linalg.norm(right)
        if norm < 1e-12:  # looking straight up/down the turntable axis
            right = np.array([math.cos(math.radians(self.azimuth_deg)), 0.0,
                              -math.sin(math.radians(self.azimuth_deg))])
        else:
            right = right / norm
        up = np.cross(right, forward)
        return right, up, forward


def _outward(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector from rotation center toward the camera."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array([
        math.sin(az) * math.cos(el),
        math.sin(el),
        math.cos(az) * math.cos(el),
    ])


@dataclass(frozen=True)
class ViewRig:
    """Turntable rig: n_views cameras separated by step_deg of azimuth."""

    n_views: int = 45
    step_deg: float = 1.0

    def __post_init__(self) -> None:
        if self.n_views < 1:
            raise ValueError(f"n_views must be >= 1, got {self.n_views}")
        if self.step_deg <= 0.0:
            raise ValueError(f"step_deg must be positive, got {self.step_deg}")
        if self.cone_deg > 90.0:
            raise ValueError(f"view cone {self.cone_deg} exceeds 90 degrees")

    @property
    def cone_deg(self) -> float:
        return (self.n_views - 1) * self.step_deg


def turntable_cameras(base: Camera, rig: ViewRig) -> list[Camera]:
    """Cameras for each rig view, symmetric about the base azimuth.

    View i gets azimuth base + (i - (n-1)/2) * step; view 0 is the leftmost.
    The middle view of an odd rig is the base camera itself.
    """
    half = (rig.n_views - 1) / 2.0
    cameras = []
    for i in range(rig.n_views):
        offset = (i - half) * rig.step_deg
        if offset == 0.0:
            cameras.append(base)
        else:
            cameras.append(replace(base, azimuth_deg=base.azimuth_deg + offset))
    return cameras


def camera_ray(camera: Camera, pixel: tuple[int, int], size: tuple[int, int]):
    """Ray (origin, unit direction) through the center of one pixel.

    Pixels use top-left origin; the frame is `size` = (W, H) pixels.
    """
    x, y = pixel
    w, h = size
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"pixel {pixel} outside frame {size}")
    origins, dirs = camera_rays(camera, (1, 1), window=(x, y, w, h))
    return origins[0, 0], dirs[0, 0]


def camera_rays(camera: Camera, size: tuple[int, int], window=None):
    """Rays for every pixel of a frame: origins (H, W, 3) and unit directions (H, W, 3).

    `window` = (x0, y0, full_w, full_h) restricts output to a tile of a larger
    frame while keeping that frame's pixel grid.
    """
    w, h = size
    if window is None:
        x0, y0, full_w, full_h = 0, 0, w, h
    else:
        x0, y0, full_w, full_h = window
    right, up, forward = camera.basis()
    eye = camera.position

    # NDC in [-1, 1], pixel centers, y up
    ndc_x = (2.0 * (np.arange(w, dtype=np.float64) + x0 + 0.5) / full_w) - 1.0
    ndc_y = 1.0 - (2.0 * (np.arange(h, dtype=np.float64) + y0 + 0.5) / full_h)

    if isinstance(camera.projection, Orthographic):
        half_h = camera.projection.view_height / 2.0
        half_w = half_h * camera.aspect
        offs = (
            ndc_x[None, :, None] * (half_w * right)[None, None, :]
            + ndc_y[:, None, None] * (half_h * up)[None, None, :]
        )
        origins = eye[None, None, :] + offs
        dirs = np.broadcast_to(forward, (h, w, 3)).copy()
        return origins, dirs

    tan_half = math.tan(math.radians(camera.projection.vfov_deg) / 2.0)
    dirs = (
        forward[None, None, :]
        + ndc_x[None, :, None] * (tan_half * camera.aspect * right)[None, None, :]
        + ndc_y[:, None, None] * (tan_half * up)[None, None, :]
    )
    dirs = dirs / np.linalg.norm(dirs, axis=2, keepdims=True)
    origins = np.broadcast_to(eye, (h, w, 3)).copy()
    return origins, dirs


def camera_from_position(position, rotation_center, projection: Projection,
                         aspect: float = 1.0) -> Camera:
    """Camera at an explicit eye point, aimed at the rotation center."""
    pos = np.asarray(position, dtype=np.float64)
    center = np.asarray(rotation_center, dtype=np.float64)
    offset = pos - center
    distance = float(np.linalg.norm(offset))
    if distance <= 0.0:
        raise ValueError("camera position coincides with rotation center")
    u = offset / distance
    elevation = math.degrees(math.asin(np.clip(u[1], -1.0, 1.0)))
    azimuth = math.degrees(math.atan2(u[0], u[2]))
    return Camera(
        rotation_center=tuple(float(v) for v in center),
        distance=distance,
        projection=projection,
        azimuth_deg=azimuth,
        elevation_deg=elevation,
        aspect=aspect,
    )
