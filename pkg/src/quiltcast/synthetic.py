"""Deterministic synthetic test volumes: sphere, slab, helix bundle, branching tree.

These stand in for microscopy scans in tests and demos. All shapes are built
from closed-form point classification or sphere chains, so an independent
per-voxel test reproduces them exactly. Output intensities are quantized to
the u16 grid (k / 65535) so saved volumes round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import TransferFunction, Volume, VolumeChannel, VolumeError

SHAPES = ("sphere", "slab", "helix-bundle", "branching")


@dataclass(frozen=True)
class SyntheticSpec:
    """Scene descriptor for make_synthetic.

    Geometry parameters are in voxel units so shapes scale with dims:
      sphere:       center (default volume center), radius, falloff
      slab:         axis (0|1|2), low/high bounds along that axis (fractions of extent)
      helix-bundle: fibers, helix_radius, tube_radius, turns (all about the y axis)
      branching:    depth, tube_radius, seed
    """

    shape: str
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    center: tuple[float, float, float] | None = None
    radius: float | None = None
    falloff: float = 0.0
    axis: int = 2
    low_frac: float = 0.25
    high_frac: float = 0.75
    fibers: int = 3
    helix_radius: float | None = None
    tube_radius: float | None = None
    turns: float = 2.0
    depth: int = 4
    seed: int = 7
    name: str = ""
    transfer: TransferFunction = field(default_factory=TransferFunction)


def _voxel_centers(dims):
    nx, ny, nz = dims
    x = np.arange(nx, dtype=np.float64) + 0.5
    y = np.arange(ny, dtype=np.float64) + 0.5
    z = np.arange(nz, dtype=np.float64) + 0.5
    return np.meshgrid(z, y, x, indexing="ij")  # matches samples[z, y, x]


def _quantize(values: np.ndarray) -> np.ndarray:
    q = np.rint(np.clip(values, 0.0, 1.0) * 65535.0) / np.float64(65535.0)
    return q.astype(np.float32)


def _sphere(spec: SyntheticSpec) -> np.ndarray:
    nx, ny, nz = spec.dims
    c = spec.center if spec.center is not None else (nx / 2.0, ny / 2.0, nz / 2.0)
    r = spec.radius if spec.radius is not None else min(nx, ny, nz) / 4.0
    Z, Y, X = _voxel_centers(spec.dims)
    d = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
    if spec.falloff > 0.0:
        # 1 inside radius, linear ramp to 0 over the falloff band
        return np.clip((r + spec.falloff - d) / spec.falloff, 0.0, 1.0)
    return (d <= r).astype(np.float64)


def _slab(spec: SyntheticSpec) -> np.ndarray:
    if spec.axis not in (0, 1, 2):
        raise VolumeError(f"slab axis must be 0, 1 or 2, got {spec.axis}")
    n = spec.dims[spec.axis]
    lo, hi = spec.low_frac * n, spec.high_frac * n
    Z, Y, X = _voxel_centers(spec.dims)
    coord = (X, Y, Z)[spec.axis]
    inside = (coord >= lo) & (coord <= hi)
    if spec.falloff > 0.0:
        d = np.maximum(lo - coord, coord - hi)  # signed distance to the slab along axis
        return np.clip(1.0 - d / spec.falloff, 0.0, 1.0)
    return inside.astype(np.float64)


def _stamp_sphere_chain(grid: np.ndarray, dims, points: np.ndarray, radius: float) -> None:
    """Mark all voxels within `radius` of any chain point (in-place, hard edges)."""
    nx, ny, nz = dims
    r2 = radius * radius
    for px, py, pz in points:
        x0, x1 = max(int(px - radius - 1), 0), min(int(px + radius + 2), nx)
        y0, y1 = max(int(py - radius - 1), 0), min(int(py + radius + 2), ny)
        z0, z1 = max(int(pz - radius - 1), 0), min(int(pz + radius + 2), nz)
        if x0 >= x1 or y0 >= y1 or z0 >= z1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5
        zs = np.arange(z0, z1, dtype=np.float64) + 0.5
        d2 = (
            (zs[:, None, None] - pz) ** 2
            + (ys[None, :, None] - py) ** 2
            + (xs[None, None, :] - px) ** 2
        )
        region = grid[z0:z1, y0:y1, x0:x1]
        region[d2 <= r2] = 1.0


def helix_points(spec: SyntheticSpec) -> np.ndarray:
    """Chain points for the helix bundle: `fibers` helices about the y axis."""
    nx, ny, nz = spec.dims
    helix_r = spec.helix_radius if spec.helix_radius is not None else min(nx, nz) / 4.0
    tube_r = spec.tube_radius if spec.tube_radius is not None else min(nx, ny, nz) / 16.0
    cx, cz = nx / 2.0, nz / 2.0
    step = max(tube_r / 2.0, 0.25)
    # chain spacing must track arc length, which the helical sweep dominates
    arc = float(np.hypot(ny, 2.0 * np.pi * helix_r * spec.turns))
    n_pts = int(np.ceil(arc / step)) + 1
    ts = np.linspace(0.0, 1.0, n_pts)
    points = []
    for f in range(spec.fibers):
        phase = 2.0 * np.pi * f / spec.fibers
        angle = 2.0 * np.pi * spec.turns * ts + phase
        points.append(
            np.stack(
                [
                    cx + helix_r * np.cos(angle),
                    ts * ny,
                    cz + helix_r * np.sin(angle),
                ],
                axis=1,
            )
        )
    return np.concatenate(points, axis=0)


def branch_segments(spec: SyntheticSpec) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Segments (start, end, radius) of a seeded bifurcating tree, root at the bottom."""
    nx, ny, nz = spec.dims
    rng = np.random.default_rng(spec.seed)
    tube_r = spec.tube_radius if spec.tube_radius is not None else min(nx, ny, nz) / 20.0
    root = np.array([nx / 2.0, 0.0, nz / 2.0])
    length = ny / (spec.depth + 1.0)
    segments: list[tuple[np.ndarray, np.ndarray, float]] = []

    def grow(start: np.ndarray, direction: np.ndarray, level: int, radius: float) -> None:
        if level >= spec.depth:
            return
        end = start + direction * length
        segments.append((start, end, radius))
        for _ in range(2):
            tilt = rng.uniform(0.25, 0.6)
            swing = rng.uniform(0.0, 2.0 * np.pi)
            side = np.array([np.cos(swing) * tilt, 1.0, np.sin(swing) * tilt])
            side /= np.linalg.norm(side)
            grow(end, side, level + 1, radius * 0.8)

    grow(root, np.array([0.0, 1.0, 0.0]), 0, tube_r)
    return segments


def _chain_from_segments(segments, step: float) -> np.ndarray:
    points = []
    for start, end, radius in segments:
        n = max(int(np.ceil(np.linalg.norm(end - start) / step)), 2)
        ts = np.linspace(0.0, 1.0, n)[:, None]
        points.append((start[None, :] * (1.0 - ts) + end[None, :] * ts, radius))
    return points


def make_synthetic(spec: SyntheticSpec) -> Volume:
    """Build a deterministic single-channel volume for the given scene descriptor."""
    if spec.shape not in SHAPES:
        raise VolumeError(f"unknown shape {spec.shape!r}, expected one of {SHAPES}")
    if min(spec.dims) < 1:
        raise VolumeError(f"dims must be >= 1, got {spec.dims}")
    nx, ny, nz = spec.dims

    if spec.shape == "sphere":
        values = _sphere(spec)
    elif spec.shape == "slab":
        values = _slab(spec)
    elif spec.shape == "helix-bundle":
        values = np.zeros((nz, ny, nx), dtype=np.float64)
        tube_r = spec.tube_radius if spec.tube_radius is not None else min(nx, ny, nz) / 16.0
        _stamp_sphere_chain(values, spec.dims, helix_points(spec), tube_r)
    else:  # branching
        values = np.zeros((nz, ny, nx), dtype=np.float64)
        for chain, radius in _chain_from_segments(
            branch_segments(spec), step=max((spec.tube_radius or min(nx, ny, nz) / 20.0) / 2.0, 0.25)
        ):
            _stamp_sphere_chain(values, spec.dims, chain, radius)

    channel = VolumeChannel(
        dims=spec.dims,
        spacing=spec.spacing,
        samples=_quantize(values),
        name=spec.name or spec.shape,
        transfer=spec.transfer,
    )
    return Volume(channels=(channel,))
