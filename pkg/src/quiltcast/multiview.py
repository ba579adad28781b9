"""Display-ready packaging of rendered views.

Covers stereo camera pairs, side-by-side packing for 3D TVs, anaglyph frames,
quilt assembly, lenticular interleaving against a display calibration, and
foveal pixel-count arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .camera import Camera, camera_from_position
from .frame import Frame

STEREO_MODES = ("shift", "turntable")
SUBPIXEL_ORDERS = ("rgb", "bgr", "none")


@dataclass(frozen=True)
class StereoParams:
    """Eye separation: a positional shift (micrometers) or a turntable angle."""

    mode: str = "turntable"
    eye_distance: float = 0.0  # shift mode
    eye_angle: float = 0.0     # turntable mode, degrees

    def __post_init__(self) -> None:
        if self.mode not in STEREO_MODES:
            raise ValueError(f"stereo mode must be one of {STEREO_MODES}")
        if self.eye_distance < 0.0 or self.eye_angle < 0.0:
            raise ValueError("eye separation must be non-negative")


def stereo_cameras(base: Camera, params: StereoParams) -> tuple[Camera, Camera]:
    """Left and right eye cameras; both converge on the rotation center.

    Shift mode displaces the eye point by half the eye distance along the
    camera right vector and re-aims; turntable mode offsets the azimuth.
    The left eye always sees the scene from the left.
    """
    if params.mode == "turntable":
        half = params.eye_angle / 2.0
        if half == 0.0:
            return base, base
        left = replace(base, azimuth_deg=base.azimuth_deg - half)
        right = replace(base, azimuth_deg=base.azimuth_deg + half)
        return left, right

    half = params.eye_distance / 2.0
    if half == 0.0:
        return base, base
    right_vec, _, _ = base.basis()
    eye = base.position
    left = camera_from_position(eye - half * right_vec, base.rotation_center,
                                base.projection, base.aspect)
    right = camera_from_position(eye + half * right_vec, base.rotation_center,
                                 base.projection, base.aspect)
    return left, right


def compensate_aspect(camera: Camera, full_size: tuple[int, int],
                      enabled: bool = True) -> Camera:
    """Camera for half-width stereo rendering on a 3D TV.

    Each eye renders at (W/2, H) pixels but keeps the full frame's W:H
    projection aspect, so the TV's 2x horizontal stretch restores geometry.
    """
    if not enabled:
        return camera
    w, h = full_size
    return replace(camera, aspect=w / h)


def pack_side_by_side(left: Frame, right: Frame) -> Frame:
    """Left/right frames packed into one frame of the same size.

    Each eye is squeezed 2:1 horizontally with a box filter: output column k
    of a half averages source columns 2k and 2k+1 (round half up).
    """
    if left.size != right.size:
        raise ValueError(f"frame sizes differ: {left.size} vs {right.size}")
    w, h = left.size
    if w % 2 != 0:
        raise ValueError(f"width must be even, got {w}")

    def squeeze(pixels: np.ndarray) -> np.ndarray:
        a = pixels[:, 0::2].astype(np.uint16)
        b = pixels[:, 1::2].astype(np.uint16)
        return ((a + b + 1) >> 1).astype(np.uint8)

    out = np.empty((h, w, 4), dtype=np.uint8)
    out[:, : w // 2] = squeeze(left.pixels)
    out[:, w // 2 :] = squeeze(right.pixels)
    return Frame(out)


def hstack_frames(left: Frame, right: Frame) -> Frame:
    """Place two equally sized frames next to each other (no filtering)."""
    if left.height != right.height:
        raise ValueError(f"frame heights differ: {left.height} vs {right.height}")
    return Frame(np.concatenate([left.pixels, right.pixels], axis=1))


_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def anaglyph(left: Frame, right: Frame) -> Frame:
    """Red/cyan anaglyph from luminance: red = left luma, green/blue = right luma.

    Luminance rather than raw channels, so single-color fluorescence stains do
    not vanish in one eye.
    """
    if left.size != right.size:
        raise ValueError(f"frame sizes differ: {left.size} vs {right.size}")
    luma_l = np.rint(left.pixels[..., :3].astype(np.float64) @ _LUMA).astype(np.uint8)
    luma_r = np.rint(right.pixels[..., :3].astype(np.float64) @ _LUMA).astype(np.uint8)
    out = np.empty(left.pixels.shape, dtype=np.uint8)
    out[..., 0] = luma_l
    out[..., 1] = luma_r
    out[..., 2] = luma_r
    out[..., 3] = 255
    return Frame(out)


# ---------------------------------------------------------------------------
# Quilts

@dataclass(frozen=True)
class QuiltLayout:
    """Grid of view tiles: left-to-right within a row, rows bottom-to-top."""

    columns: int
    rows: int
    tile_width: int
    tile_height: int
    n_views: int

    def __post_init__(self) -> None:
        if min(self.columns, self.rows, self.tile_width, self.tile_height) < 1:
            raise ValueError("layout dimensions must be >= 1")
        if not 1 <= self.n_views <= self.columns * self.rows:
            raise ValueError(
                f"n_views {self.n_views} does not fit a {self.columns}x{self.rows} grid"
            )

    @property
    def quilt_size(self) -> tuple[int, int]:
        return (self.columns * self.tile_width, self.rows * self.tile_height)

    def tile_origin(self, view: int) -> tuple[int, int]:
        """Top-left pixel of a view's tile in image coordinates."""
        col = view % self.columns
        row = view // self.columns  # counted from the bottom
        x = col * self.tile_width
        y = (self.rows - 1 - row) * self.tile_height
        return x, y


def quilt_suffix(layout: QuiltLayout) -> str:
    """Filename suffix encoding the layout, e.g. `_qs8x6a0.75`."""
    aspect = round(layout.tile_width / layout.tile_height, 2)
    return f"_qs{layout.columns}x{layout.rows}a{aspect:g}"


def assemble_quilt(views: Sequence[Frame], layout: QuiltLayout) -> Frame:
    """Tile the views into a quilt; view 0 lands at the bottom-left, unused tiles black."""
    if len(views) != layout.n_views:
        raise ValueError(f"expected {layout.n_views} views, got {len(views)}")
    for i, v in enumerate(views):
        if v.size != (layout.tile_width, layout.tile_height):
            raise ValueError(
                f"view {i} is {v.size}, expected {(layout.tile_width, layout.tile_height)}"
            )
    qw, qh = layout.quilt_size
    quilt = Frame.filled(qw, qh, (0, 0, 0, 255))
    for i, v in enumerate(views):
        x, y = layout.tile_origin(i)
        quilt.pixels[y : y + layout.tile_height, x : x + layout.tile_width] = v.pixels
    return quilt


def extract_tiles(quilt: Frame, layout: QuiltLayout) -> list[Frame]:
    """Cut the view tiles back out of a quilt, in view order."""
    if quilt.size != layout.quilt_size:
        raise ValueError(f"quilt is {quilt.size}, layout expects {layout.quilt_size}")
    views = []
    for i in range(layout.n_views):
        x, y = layout.tile_origin(i)
        views.append(Frame(
            quilt.pixels[y : y + layout.tile_height, x : x + layout.tile_width].copy()
        ))
    return views


# ---------------------------------------------------------------------------
# Lenticular interleaving

@dataclass(frozen=True)
class LenticularCalibration:
    """Lens-array layout of a lenticular display, as measured at manufacture.

    `pitch` counts lens periods across the screen width; `tilt` is the
    horizontal phase shift per unit of normalized vertical distance; `center`
    is a phase offset. `subpixel_order` selects how R/G/B subpixel positions
    shift the sampling phase ("none" disables subpixel offsets).
    """

    screen_width: int
    screen_height: int
    pitch: float
    tilt: float = 0.0
    center: float = 0.0
    invert_views: bool = False
    subpixel_order: str = "rgb"
    n_views: int = 45

    def __post_init__(self) -> None:
        if self.screen_width < 1 or self.screen_height < 1:
            raise ValueError("screen dimensions must be >= 1")
        if self.pitch <= 0.0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.subpixel_order not in SUBPIXEL_ORDERS:
            raise ValueError(f"subpixel_order must be one of {SUBPIXEL_ORDERS}")
        if self.n_views < 1:
            raise ValueError(f"n_views must be >= 1, got {self.n_views}")


def _subpixel_shift(calib: LenticularCalibration, c: int) -> float:
    if calib.subpixel_order == "none":
        return 0.0
    pos = c if calib.subpixel_order == "rgb" else 2 - c
    return (pos - 1) / 3.0


def view_index_for_subpixel(calib: LenticularCalibration, x: int, y: int, c: int) -> int:
    """View index emitted at screen subpixel (x, y, channel c)."""
    if not (0 <= x < calib.screen_width and 0 <= y < calib.screen_height and 0 <= c < 3):
        raise ValueError(f"subpixel ({x}, {y}, {c}) out of range")
    u = (x + 0.5 + _subpixel_shift(calib, c)) / calib.screen_width
    v = (y + 0.5) / calib.screen_height
    phase = (u + v * calib.tilt) * calib.pitch - calib.center
    f = phase - math.floor(phase)
    if calib.invert_views:
        f = 1.0 - f
    return min(int(f * calib.n_views), calib.n_views - 1)


def view_index_map(calib: LenticularCalibration) -> np.ndarray:
    """view_index_for_subpixel evaluated for the whole screen, shape (H, W, 3) int32."""
    w, h = calib.screen_width, calib.screen_height
    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = (np.arange(h, dtype=np.float64) + 0.5) / h
    out = np.empty((h, w, 3), dtype=np.int32)
    for c in range(3):
        u = (xs + _subpixel_shift(calib, c)) / w
        phase = (u[None, :] + ys[:, None] * calib.tilt) * calib.pitch - calib.center
        f = phase - np.floor(phase)
        if calib.invert_views:
            f = 1.0 - f
        out[..., c] = np.minimum((f * calib.n_views).astype(np.int64),
                                 calib.n_views - 1).astype(np.int32)
    return out


def _bilinear_gather(view: np.ndarray, sx: np.ndarray, sy: np.ndarray,
                     channel: np.ndarray) -> np.ndarray:
    """Bilinear samples of one channel at fractional pixel positions (edge clamp)."""
    vh, vw = view.shape[:2]
    sx = np.clip(sx, 0.0, vw - 1.0)
    sy = np.clip(sy, 0.0, vh - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, vw - 1)
    y1 = np.minimum(y0 + 1, vh - 1)
    fx = (sx - x0).astype(np.float64)
    fy = (sy - y0).astype(np.float64)
    p00 = view[y0, x0, channel].astype(np.float64)
    p01 = view[y0, x1, channel].astype(np.float64)
    p10 = view[y1, x0, channel].astype(np.float64)
    p11 = view[y1, x1, channel].astype(np.float64)
    top = p00 * (1.0 - fx) + p01 * fx
    bot = p10 * (1.0 - fx) + p11 * fx
    return top * (1.0 - fy) + bot * fy


def interleave(views: Sequence[Frame], calib: LenticularCalibration) -> Frame:
    """Native lenticular frame: every output subpixel sources its mapped view.

    Views are sampled bilinearly at the output pixel's normalized position,
    so view resolution need not match the screen; equal sizes copy exactly.
    """
    if len(views) != calib.n_views:
        raise ValueError(f"expected {calib.n_views} views, got {len(views)}")
    size = views[0].size
    for i, v in enumerate(views):
        if v.size != size:
            raise ValueError(f"view {i} is {v.size}, expected {size}")

    w, h = calib.screen_width, calib.screen_height
    vw, vh = size
    kmap = view_index_map(calib).reshape(-1)
    idx = np.arange(kmap.size, dtype=np.int64)
    pix = idx // 3
    chan = (idx % 3).astype(np.int64)
    px = pix % w
    py = pix // w
    # the pixel's sampling position in view space; exact integers when sizes match
    sx_all = (px + 0.5) * (vw / w) - 0.5
    sy_all = (py + 0.5) * (vh / h) - 0.5

    out = np.empty((h, w, 4), dtype=np.uint8)
    out[..., 3] = 255
    result = np.empty(kmap.size, dtype=np.uint8)
    for k in range(calib.n_views):
        sel = np.nonzero(kmap == k)[0]
        if sel.size == 0:
            continue
        values = _bilinear_gather(views[k].pixels, sx_all[sel], sy_all[sel], chan[sel])
        result[sel] = np.clip(np.rint(values), 0.0, 255.0).astype(np.uint8)
    out[..., :3] = result.reshape(h, w, 3)
    return Frame(out)


def load_calibration(path: str | Path) -> LenticularCalibration:
    """Read a key/value calibration text file mirroring LenticularCalibration fields."""
    fields: dict = {}
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"calibration file not found: {path}")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        fields[key] = value
    try:
        return LenticularCalibration(
            screen_width=int(fields["screen_width"]),
            screen_height=int(fields["screen_height"]),
            pitch=float(fields["pitch"]),
            tilt=float(fields.get("tilt", "0")),
            center=float(fields.get("center", "0")),
            invert_views=fields.get("invert_views", "false").lower() in ("true", "1", "yes"),
            subpixel_order=fields.get("subpixel_order", "rgb"),
            n_views=int(fields.get("n_views", "45")),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing calibration key {exc}") from exc


def save_calibration(calib: LenticularCalibration, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(
        "\n".join(
            [
                f"screen_width = {calib.screen_width}",
                f"screen_height = {calib.screen_height}",
                f"pitch = {calib.pitch:g}",
                f"tilt = {calib.tilt:g}",
                f"center = {calib.center:g}",
                f"invert_views = {'true' if calib.invert_views else 'false'}",
                f"subpixel_order = {calib.subpixel_order}",
                f"n_views = {calib.n_views}",
                "",
            ]
        )
    )
    return path


# ---------------------------------------------------------------------------
# Display metrics

@dataclass(frozen=True)
class DisplaySpec:
    """Per-eye resolution and field of view of a head-mounted or handheld display."""

    res: tuple[int, int]           # pixels (w, h)
    fov: tuple[float, float]       # degrees (w, h)
    foveal_deg: float = 2.0

    def __post_init__(self) -> None:
        if min(self.res) < 1 or min(self.fov) <= 0.0 or self.foveal_deg <= 0.0:
            raise ValueError("display spec values must be positive")
        if self.foveal_deg > min(self.fov):
            raise ValueError("foveal region cannot exceed the field of view")


def foveal_pixels(spec: DisplaySpec) -> tuple[int, int]:
    """Pixels covering the foveal region: round(res / fov * foveal) per axis."""
    px = round(spec.res[0] / spec.fov[0] * spec.foveal_deg)
    py = round(spec.res[1] / spec.fov[1] * spec.foveal_deg)
    return (px, py)
