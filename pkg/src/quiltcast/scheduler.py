"""Progressive multi-view rendering with generation-based invalidation.

A RenderSession owns the camera, rig, and settings for one viewer. Every
scene-changing update bumps a generation counter and reverts all views to
pending; workers render views in a dispersion-friendly order and their
completions are accepted only if the generation still matches. Stale tiles
stay on screen until replaced, so the quilt updates gradually instead of
flashing blank.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, replace

import multiprocessing
import numpy as np

from .camera import Camera, ViewRig, turntable_cameras
from .frame import Frame
from .multiview import (LenticularCalibration, QuiltLayout, StereoParams,
                        assemble_quilt, interleave)
from .render import RenderCancelled, RenderSettings, render, render_views
from .volume import Volume


def view_order(n: int) -> list[int]:
    """Dispersion-friendly schedule: bit-reversal (van der Corput) order.

    Bit-reverses indices over the smallest power of two >= n and keeps those
    below n, so early views spread across the whole cone instead of sweeping
    from one side.
    """
    if n < 1:
        raise ValueError(f"need at least one view, got {n}")
    bits = max(1, (n - 1).bit_length())
    order = []
    for i in range(1 << bits):
        rev = int(format(i, f"0{bits}b")[::-1], 2)
        if rev < n:
            order.append(rev)
    return order


def default_layout(n_views: int, tile_width: int, tile_height: int) -> QuiltLayout:
    """Near-square tile grid for a view count (8x6 for the default 45)."""
    columns = int(np.ceil(np.sqrt(n_views)))
    rows = int(np.ceil(n_views / columns))
    return QuiltLayout(columns=columns, rows=rows, tile_width=tile_width,
                       tile_height=tile_height, n_views=n_views)


@dataclass(frozen=True)
class ViewUpdate:
    """A finished view render, tagged with the generation it was rendered under."""

    session_id: str
    view_index: int
    generation: int
    frame: Frame


class RenderSession:
    """Mutable state for one progressive rendering client.

    All mutations are serialized by an internal lock; renders themselves run
    outside the lock and are invalidated by generation comparison.
    """

    def __init__(self, volume: Volume, camera: Camera, rig: ViewRig,
                 settings: RenderSettings, *, stereo: StereoParams | None = None,
                 layout: QuiltLayout | None = None,
                 calibration: LenticularCalibration | None = None,
                 session_id: str | None = None):
        if layout is None:
            layout = default_layout(rig.n_views, 256, 256)
        if layout.n_views != rig.n_views:
            raise ValueError(f"layout holds {layout.n_views} views, rig has {rig.n_views}")
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.volume = volume
        self.camera = camera
        self.rig = rig
        self.settings = settings
        self.stereo = stereo or StereoParams()
        self.layout = layout
        self.calibration = calibration
        self.generation = 0
        self.current_timepoint = 0
        self._lock = threading.RLock()
        self._reset_views()

    def _reset_views(self) -> None:
        self.view_status: list[int | None] = [None] * self.rig.n_views
        self.views: list[Frame | None] = [None] * self.rig.n_views
        qw, qh = self.layout.quilt_size
        self.quilt = Frame.filled(qw, qh, (0, 0, 0, 255))
        self.native: Frame | None = None

    # -- queries ------------------------------------------------------------

    def tile_size(self) -> tuple[int, int]:
        return (self.layout.tile_width, self.layout.tile_height)

    def cameras(self) -> list[Camera]:
        return turntable_cameras(self.camera, self.rig)

    def pending_views(self) -> list[int]:
        """Views not yet completed under the current generation, in schedule order."""
        with self._lock:
            gen = self.generation
            return [i for i in view_order(self.rig.n_views) if self.view_status[i] != gen]

    def snapshot(self):
        """Consistent (generation, volume, cameras, settings, size) for workers."""
        with self._lock:
            return (self.generation, self.volume.at_timepoint(self.current_timepoint),
                    self.cameras(), self.settings, self.tile_size())

    def cancelled_check(self, generation: int):
        """Cancel callback for renders started under `generation`."""
        return lambda: self.generation != generation

    # -- mutations ----------------------------------------------------------

    def _invalidate(self) -> int:
        self.generation += 1
        self.view_status = [None] * self.rig.n_views
        return self.generation

    def update_camera(self, camera: Camera) -> int:
        """Install a new camera; always bumps the generation (no deduplication)."""
        with self._lock:
            self.camera = camera
            return self._invalidate()

    def update_settings(self, settings: RenderSettings,
                        volume: Volume | None = None) -> int:
        """Swap settings (and optionally retinted channels) in one invalidation."""
        with self._lock:
            self.settings = settings
            if volume is not None:
                self.volume = volume
            return self._invalidate()

    def update_volume(self, volume: Volume) -> int:
        with self._lock:
            self.volume = volume
            self.current_timepoint = 0
            return self._invalidate()

    def update_rig(self, rig: ViewRig, layout: QuiltLayout | None = None) -> int:
        with self._lock:
            self.rig = rig
            self.layout = layout if layout is not None \
                else default_layout(rig.n_views, self.layout.tile_width,
                                    self.layout.tile_height)
            if self.layout.n_views != rig.n_views:
                raise ValueError("layout view count must match the rig")
            gen = self._invalidate()
            self._reset_views()
            return gen

    def update_stereo(self, stereo: StereoParams) -> None:
        # stereo parameters do not affect streamed views; no invalidation
        with self._lock:
            self.stereo = stereo

    def advance_timepoint(self, t: int) -> int:
        """Switch the active timepoint; out-of-range leaves the session untouched."""
        with self._lock:
            if not 0 <= t < self.volume.n_timepoints:
                raise IndexError(
                    f"timepoint {t} out of range [0, {self.volume.n_timepoints})"
                )
            self.current_timepoint = t
            return self._invalidate()

    def refocus(self, point: tuple[float, float, float]) -> int:
        with self._lock:
            self.camera = replace(self.camera, rotation_center=point)
            return self._invalidate()

    def complete_view(self, update: ViewUpdate) -> bool:
        """Accept a finished view if it is still current.

        Accepted frames land in the view store and their quilt tile (and the
        re-interleaved native frame when a calibration is set). Stale frames
        are discarded silently. Re-completing a view in the same generation is
        idempotent.
        """
        if update.session_id != self.session_id:
            raise ValueError(f"update for session {update.session_id!r}, "
                             f"this is {self.session_id!r}")
        with self._lock:
            if update.generation != self.generation:
                return False  # stale frames discard silently, even if the rig
                              # or layout changed underneath them
            if not 0 <= update.view_index < self.rig.n_views:
                raise IndexError(f"view index {update.view_index} out of range")
            if update.frame.size != self.tile_size():
                raise ValueError(
                    f"frame is {update.frame.size}, layout tile is {self.tile_size()}"
                )
            i = update.view_index
            self.views[i] = update.frame
            self.view_status[i] = update.generation
            x, y = self.layout.tile_origin(i)
            self.quilt.pixels[y : y + self.layout.tile_height,
                              x : x + self.layout.tile_width] = update.frame.pixels
            if self.calibration is not None:
                self.native = interleave(self._filled_views(), self.calibration)
            return True

    def _filled_views(self) -> list[Frame]:
        tw, th = self.tile_size()
        blank = Frame.filled(tw, th, (0, 0, 0, 255))
        return [v if v is not None else blank for v in self.views]

    def done(self) -> bool:
        with self._lock:
            gen = self.generation
            return all(status == gen for status in self.view_status)


def run_progressive(session: RenderSession, *, workers: int = 1,
                    on_update=None) -> None:
    """Render until every view is done under a stable generation.

    With workers == 1 this is fully synchronous and deterministic: views
    render in schedule order, re-checking the generation between views. With
    more workers, views render on forked processes and stale completions are
    discarded on arrival. `on_update` fires once per accepted update.
    """
    while True:
        generation, volume, cameras, settings, size = session.snapshot()
        pending = session.pending_views()
        if not pending:
            return
        if workers <= 1:
            cancel = session.cancelled_check(generation)
            for i in pending:
                if cancel():
                    break  # invalidated; restart with a fresh snapshot
                try:
                    frame = render(volume, cameras[i], settings, size, cancel=cancel)
                except RenderCancelled:
                    break
                update = ViewUpdate(session.session_id, i, generation, frame)
                if session.complete_view(update) and on_update is not None:
                    on_update(update)
            continue

        from .render import ensure_kernels_ready
        ensure_kernels_ready()
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(pending)),
                                 mp_context=ctx) as pool:
            futures = {
                pool.submit(render, volume, cameras[i], settings, size): i
                for i in pending
            }
            remaining = set(futures)
            while remaining:
                finished, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                for fut in finished:
                    i = futures[fut]
                    update = ViewUpdate(session.session_id, i, generation, fut.result())
                    if session.complete_view(update) and on_update is not None:
                        on_update(update)
                if session.generation != generation:
                    for fut in remaining:
                        fut.cancel()
                    break


def one_shot_quilt(volume: Volume, camera: Camera, rig: ViewRig,
                   settings: RenderSettings, layout: QuiltLayout, *,
                   workers: int = 1) -> tuple[Frame, list[Frame]]:
    """Non-progressive reference pipeline: render every view, assemble the quilt."""
    cameras = turntable_cameras(camera, rig)
    views = render_views(volume, cameras, settings,
                         (layout.tile_width, layout.tile_height), workers=workers)
    return assemble_quilt(views, layout), views


def default_camera(volume: Volume, aspect: float = 1.0) -> Camera:
    """Front-on orthographic camera framing the whole volume."""
    from .camera import Orthographic
    diag = volume.diagonal
    return Camera(rotation_center=volume.center, distance=2.0 * diag,
                  projection=Orthographic(view_height=diag), aspect=aspect)
