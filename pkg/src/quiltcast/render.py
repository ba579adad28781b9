"""Ray-cast volume rendering: MIP, emission-absorption, channel layering, autofocus.

Rays march through the volume in JIT-compiled per-ray loops (see _kernels);
work is scheduled over pixel tiles. Because every ray is computed
independently and sequentially, frames are bit-identical regardless of tile
decomposition or worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import multiprocessing
import numpy as np

from . import _kernels
from .camera import Camera, camera_rays
from .frame import Frame, quantize_rgba
from .volume import Volume, padded_grid, transfer_weight

EARLY_TERMINATION_ALPHA = _kernels.EARLY_TERMINATION_ALPHA
DEFAULT_TILE = 32

MODES = ("mip", "emission_absorption")


class RenderCancelled(Exception):
    """A cooperative cancellation check fired; partial output was discarded."""


@dataclass(frozen=True)
class RenderSettings:
    mode: str = "mip"
    layering: bool = False
    sample_step: float | None = None  # micrometers; default: one minimal voxel extent
    background: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    shading: bool = False  # reserved; shading is not implemented

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sample_step is not None and self.sample_step <= 0.0:
            raise ValueError(f"sample_step must be positive, got {self.sample_step}")
        if self.shading:
            raise ValueError("shading is reserved and must stay off")


@dataclass(frozen=True)
class FocusResult:
    """Outcome of autofocus: a first-hit point and its ray distance, or no hit."""

    hit: bool
    point: tuple[float, float, float] | None = None
    distance: float | None = None

    @classmethod
    def no_hit(cls) -> "FocusResult":
        return cls(hit=False)


def _ray_box_span(origins, dirs, extent):
    """Entry/exit distances of rays against the volume box [0, extent]^3.

    Returns (t0, spans); a ray intersects iff its span is positive. Entry is
    clamped to 0 so origins inside the box start sampling immediately.
    """
    t_lo = np.full(origins.shape[:-1], -np.inf)
    t_hi = np.full(origins.shape[:-1], np.inf)
    for axis in range(3):
        o = origins[..., axis]
        d = dirs[..., axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (0.0 - o) / d
            tb = (extent[axis] - o) / d
        near = np.minimum(ta, tb)
        far = np.maximum(ta, tb)
        parallel = d == 0.0
        inside = (o >= 0.0) & (o <= extent[axis])
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        t_lo = np.maximum(t_lo, near)
        t_hi = np.minimum(t_hi, far)
    t0 = np.maximum(t_lo, 0.0)
    spans = np.maximum(t_hi - t0, 0.0)
    return np.where(spans > 0.0, t0, 0.0), spans


def _tiles(width: int, height: int, tile: int):
    for y0 in range(0, height, tile):
        for x0 in range(0, width, tile):
            yield x0, y0, min(tile, width - x0), min(tile, height - y0)


class _RayContext:
    """Per-render precomputation shared by all tiles."""

    def __init__(self, volume: Volume, camera: Camera, settings: RenderSettings,
                 size: tuple[int, int]):
        self.volume = volume
        self.step = settings.sample_step if settings.sample_step is not None \
            else float(min(volume.spacing))
        self.reference_step = float(min(volume.spacing))
        self.origins, self.dirs = camera_rays(camera, size)
        self.t0, self.spans = _ray_box_span(self.origins, self.dirs, volume.extent)
        self.grids = np.stack([padded_grid(ch) for ch in volume.channels])
        self.occupancy = np.stack([_kernels.build_occupancy(ch.samples)
                                   for ch in volume.channels])
        sx, sy, sz = volume.spacing
        self.inv_spacing = np.array([1.0 / sx, 1.0 / sy, 1.0 / sz])

    def tile_rays(self, x0, y0, w, h):
        sl = (slice(y0, y0 + h), slice(x0, x0 + w))
        origins = np.ascontiguousarray(self.origins[sl].reshape(-1, 3))
        dirs = np.ascontiguousarray(self.dirs[sl].reshape(-1, 3))
        t0 = np.ascontiguousarray(self.t0[sl].reshape(-1))
        spans = np.ascontiguousarray(self.spans[sl].reshape(-1))
        return origins, dirs, t0, spans

    def tile_hits(self, x0, y0, w, h) -> bool:
        sl = (slice(y0, y0 + h), slice(x0, x0 + w))
        return bool(np.any(self.spans[sl] > 0.0))


def _transfer_params(volume: Volume):
    tfs = [ch.transfer for ch in volume.channels]
    return (np.array([tf.low for tf in tfs]),
            np.array([tf.high for tf in tfs]),
            np.array([tf.gamma for tf in tfs]),
            np.array([tf.alpha_scale for tf in tfs]),
            np.array([tf.color for tf in tfs]))


def _run_tiles(jobs, workers: int, cancel):
    def run(job):
        if cancel is not None and cancel():
            raise RenderCancelled()
        job()

    if workers <= 1:
        for job in jobs:
            run(job)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for result in pool.map(run, jobs):
            pass  # propagate exceptions


def render_mip_intensity(volume: Volume, camera: Camera, size: tuple[int, int],
                         sample_step: float | None = None, *,
                         workers: int = 1, cancel=None,
                         tile: int = DEFAULT_TILE) -> np.ndarray:
    """Pre-transfer per-channel ray maxima, shape (H, W, n_channels) float32."""
    settings = RenderSettings(mode="mip", sample_step=sample_step)
    ctx = _RayContext(volume, camera, settings, size)
    width, height = size
    n_ch = len(volume.channels)
    out = np.zeros((height, width, n_ch), dtype=np.float32)

    def job_for(rect):
        x0, y0, w, h = rect

        def job():
            if not ctx.tile_hits(x0, y0, w, h):
                return
            origins, dirs, t0, spans = ctx.tile_rays(x0, y0, w, h)
            maxima = np.zeros((w * h, n_ch), dtype=np.float32)
            _kernels.march_mip(ctx.grids, ctx.occupancy, origins, dirs, t0, spans,
                               ctx.step, ctx.inv_spacing, maxima)
            out[y0:y0 + h, x0:x0 + w, :] = maxima.reshape(h, w, n_ch)

        return job

    _run_tiles([job_for(r) for r in _tiles(width, height, tile)], workers, cancel)
    return out


def _render_buffers(volume: Volume, camera: Camera, settings: RenderSettings,
                    size: tuple[int, int], *, workers: int, cancel,
                    tile: int) -> tuple[np.ndarray, np.ndarray]:
    """Composited premultiplied RGB and alpha float buffers, before background."""
    width, height = size
    if settings.mode == "mip":
        maxima = render_mip_intensity(volume, camera, size, settings.sample_step,
                                      workers=workers, cancel=cancel, tile=tile)
        rgba = np.zeros((height, width, 4), dtype=np.float32)
        for index, ch in enumerate(volume.channels):
            mapped = np.empty_like(rgba)
            m = transfer_weight(ch.transfer, maxima[..., index])
            for c in range(3):
                mapped[..., c] = np.float32(ch.transfer.color[c]) * m
            mapped[..., 3] = np.float32(ch.transfer.alpha_scale) * m
            np.maximum(rgba, mapped, out=rgba)  # additive-screen look across channels
        return rgba[..., :3], rgba[..., 3]

    ctx = _RayContext(volume, camera, settings, size)
    lows, highs, gammas, alphas, colors = _transfer_params(volume)
    rate = ctx.step / ctx.reference_step
    rgb = np.zeros((height, width, 3), dtype=np.float32)
    alpha = np.zeros((height, width), dtype=np.float32)

    def job_for(rect):
        x0, y0, w, h = rect

        def job():
            if not ctx.tile_hits(x0, y0, w, h):
                return
            origins, dirs, t0, spans = ctx.tile_rays(x0, y0, w, h)
            tile_rgb = np.zeros((w * h, 3), dtype=np.float32)
            tile_a = np.zeros(w * h, dtype=np.float32)
            _kernels.march_ea(ctx.grids, ctx.occupancy, origins, dirs, t0, spans,
                              ctx.step, rate, ctx.inv_spacing,
                              lows, highs, gammas, alphas, colors,
                              tile_rgb, tile_a)
            rgb[y0:y0 + h, x0:x0 + w, :] = tile_rgb.reshape(h, w, 3)
            alpha[y0:y0 + h, x0:x0 + w] = tile_a.reshape(h, w)

        return job

    _run_tiles([job_for(r) for r in _tiles(width, height, tile)], workers, cancel)
    return rgb, alpha


def _over(top_rgb, top_a, bot_rgb, bot_a):
    """Premultiplied 'over': top occludes bottom."""
    keep = (1.0 - top_a)[..., None]
    return top_rgb + keep * bot_rgb, top_a + (1.0 - top_a) * bot_a


def _compose_background(rgb, alpha, background):
    bg = np.asarray(background, dtype=np.float32)
    out = np.empty(rgb.shape[:2] + (4,), dtype=np.float32)
    keep = 1.0 - alpha
    for c in range(3):
        out[..., c] = rgb[..., c] + keep * (bg[3] * bg[c])
    out[..., 3] = alpha + keep * bg[3]
    return out


def render(volume: Volume, camera: Camera, settings: RenderSettings,
           size: tuple[int, int], *, workers: int = 1,
           cancel: Callable[[], bool] | None = None,
           tile: int = DEFAULT_TILE) -> Frame:
    """Render one frame.

    `workers` parallelizes over pixel tiles with threads (the march kernels
    release the GIL); tiles write disjoint regions, so results do not depend
    on the worker count. `cancel` is polled between tiles; when it returns
    True the render raises RenderCancelled.
    """
    if settings.layering and len(volume.channels) > 1:
        single = [Volume(channels=(ch,)) for ch in volume.channels]
        rgb = np.zeros(size[::-1] + (3,), dtype=np.float32)
        alpha = np.zeros(size[::-1], dtype=np.float32)
        for sub in single:  # first channel at the bottom, last on top
            ch_rgb, ch_a = _render_buffers(sub, camera, settings, size,
                                           workers=workers, cancel=cancel, tile=tile)
            rgb, alpha = _over(ch_rgb, ch_a, rgb, alpha)
    else:
        rgb, alpha = _render_buffers(volume, camera, settings, size,
                                     workers=workers, cancel=cancel, tile=tile)
    return Frame(quantize_rgba(_compose_background(rgb, alpha, settings.background)))


def autofocus(volume: Volume, camera: Camera, settings: RenderSettings,
              threshold: float) -> FocusResult:
    """First structure hit by the view-center ray.

    Marches the ray through the center of the view with the settings' sample
    step; the first sample whose intensity in any channel reaches `threshold`
    becomes the focus point. Callers typically re-center the camera there.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    origins, dirs = camera_rays(camera, (1, 1))
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    t0, spans = _ray_box_span(origins, dirs, volume.extent)
    grids = np.stack([padded_grid(ch) for ch in volume.channels])
    sx, sy, sz = volume.spacing
    inv_spacing = np.array([1.0 / sx, 1.0 / sy, 1.0 / sz])
    step = settings.sample_step if settings.sample_step is not None \
        else float(min(volume.spacing))
    t = _kernels.march_first_hit(grids, origins, dirs,
                                 np.ascontiguousarray(t0.reshape(-1)),
                                 np.ascontiguousarray(spans.reshape(-1)),
                                 step, inv_spacing, threshold)
    if t < 0.0:
        return FocusResult.no_hit()
    point = origins[0] + t * dirs[0]
    return FocusResult(hit=True, point=tuple(float(v) for v in point),
                       distance=float(t))


_KERNELS_READY = False


def ensure_kernels_ready() -> None:
    """Compile (or load from disk cache) the march kernels on tiny inputs.

    Called before forking worker pools so children inherit compiled kernels
    instead of each paying the one-time JIT cost.
    """
    global _KERNELS_READY
    if _KERNELS_READY:
        return
    grids = np.zeros((1, 3, 3, 3), dtype=np.float32)
    occ = np.zeros((1, 1, 1, 1), dtype=np.float32)
    origins = np.array([[0.5, 0.5, 2.0]])
    dirs = np.array([[0.0, 0.0, -1.0]])
    t0 = np.zeros(1)
    spans = np.ones(1)
    inv = np.ones(3)
    ones = np.ones(1)
    _kernels.march_mip(grids, occ, origins, dirs, t0, spans, 1.0, inv,
                       np.zeros((1, 1), dtype=np.float32))
    _kernels.march_ea(grids, occ, origins, dirs, t0, spans, 1.0, 1.0, inv,
                      np.zeros(1), ones, ones, ones, np.ones((1, 3)),
                      np.zeros((1, 3), dtype=np.float32),
                      np.zeros(1, dtype=np.float32))
    _kernels.march_first_hit(grids, origins, dirs, t0, spans, 1.0, inv, 0.5)
    _KERNELS_READY = True


# ---------------------------------------------------------------------------
# Multi-view rendering across worker processes

_WORKER_ARGS: dict = {}


def _view_pool_init(volume, settings, size, tile):
    _WORKER_ARGS["args"] = (volume, settings, size, tile)


def _view_pool_render(camera: Camera) -> Frame:
    volume, settings, size, tile = _WORKER_ARGS["args"]
    return render(volume, camera, settings, size, tile=tile)


def render_views(volume: Volume, cameras: Sequence[Camera], settings: RenderSettings,
                 size: tuple[int, int], *, workers: int = 1,
                 tile: int = DEFAULT_TILE) -> list[Frame]:
    """Render one frame per camera.

    With workers > 1 the views are distributed over forked worker processes.
    Each view renders identically either way; results are bit-identical for
    any worker count.
    """
    if workers <= 1 or len(cameras) <= 1:
        return [render(volume, cam, settings, size, tile=tile) for cam in cameras]
    ensure_kernels_ready()  # forked workers inherit the compiled kernels
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(cameras)), mp_context=ctx,
                             initializer=_view_pool_init,
                             initargs=(volume, settings, size, tile)) as pool:
        return list(pool.map(_view_pool_render, cameras))
