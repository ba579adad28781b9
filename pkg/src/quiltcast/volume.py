"""Volume data model, sidecar file I/O, trilinear sampling, and transfer functions.

A volume is a stack of channels sharing one voxel grid. Channel intensities are
normalized to [0, 1] float32 at load time so a single transfer-function domain
covers both u8 and u16 sources.

On-disk format is a plain-text sidecar next to raw little-endian payloads:

    format = quiltcast-volume/1
    dims = 64 64 64              # nx ny nz voxels
    spacing = 1.0 1.0 2.0        # micrometers per voxel
    dtype = u8                   # u8 | u16le
    channel_names = nuclei, membrane
    data = t0_c0.raw, t0_c1.raw  # one line per timepoint, one file per channel

Payload sample order is x-fastest, then y, then z. Data paths are relative to
the sidecar file. Repeated `data` lines form a time sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

_DTYPES = {
    "u8": (np.uint8, 255.0),
    "u16le": (np.dtype("<u2"), 65535.0),
}


class VolumeError(ValueError):
    """Raised for malformed sidecars, payload mismatches, or invalid volume data."""


@dataclass(frozen=True)
class TransferFunction:
    """Maps a normalized intensity to RGBA.

    The ramp is t = clamp((s - low) / (high - low), 0, 1) raised to `gamma`;
    output is (color * m, alpha_scale * m). With low == high the ramp
    degenerates to a hard step at the threshold. The mapping is monotone
    non-decreasing in s for every output component.
    """

    low: float = 0.0
    high: float = 1.0
    gamma: float = 1.0
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    alpha_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.low <= 1.0 and 0.0 <= self.high <= 1.0):
            raise VolumeError(f"thresholds must lie in [0,1], got low={self.low} high={self.high}")
        if self.low > self.high:
            raise VolumeError(f"low must not exceed high ({self.low} > {self.high})")
        if self.gamma <= 0.0:
            raise VolumeError(f"gamma must be positive, got {self.gamma}")


def transfer_weight(tf: TransferFunction, s):
    """Ramp weight m = clamp((s-low)/(high-low), 0, 1) ** gamma; scalar or ndarray."""
    s = np.asarray(s, dtype=np.float32)
    low = np.float32(tf.low)
    high = np.float32(tf.high)
    if high > low:  # spans below float32 resolution degrade to the step case
        with np.errstate(over="ignore"):
            t = np.clip((s - low) / (high - low), np.float32(0.0), np.float32(1.0))
    else:
        t = (s >= low).astype(np.float32)
    if tf.gamma == 1.0:
        return t
    return t**np.float32(tf.gamma)


def apply_transfer(tf: TransferFunction, s):
    """Map intensity (scalar or array) to RGBA floats (color * m, alpha_scale * m)."""
    m = transfer_weight(tf, s)
    rgba = np.empty(np.shape(m) + (4,), dtype=np.float32)
    rgba[..., 0] = tf.color[0] * m
    rgba[..., 1] = tf.color[1] * m
    rgba[..., 2] = tf.color[2] * m
    rgba[..., 3] = tf.alpha_scale * m
    return rgba


@dataclass(frozen=True)
class VolumeChannel:
    """One intensity channel on a voxel grid.

    `samples` has shape (nz, ny, nx) so the flat layout is x-fastest (matching
    the raw payload order). Values live at voxel centers: voxel (i, j, k)
    carries the intensity at continuous coordinate (i+0.5, j+0.5, k+0.5).
    The array is marked read-only; channels are safe to share across threads.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    samples: np.ndarray
    name: str = ""
    transfer: TransferFunction = field(default_factory=TransferFunction)

    def __post_init__(self) -> None:
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 1:
            raise VolumeError(f"dims must be >= 1, got {self.dims}")
        if min(self.spacing) <= 0.0:
            raise VolumeError(f"spacing must be positive, got {self.spacing}")
        if self.samples.shape != (nz, ny, nx):
            raise VolumeError(
                f"samples shape {self.samples.shape} does not match dims {self.dims} "
                f"(expected (nz, ny, nx))"
            )
        if self.samples.dtype != np.float32:
            raise VolumeError(f"samples must be float32, got {self.samples.dtype}")
        lo, hi = float(self.samples.min()), float(self.samples.max())
        if lo < 0.0 or hi > 1.0:
            raise VolumeError(f"normalized samples out of [0,1]: min={lo} max={hi}")
        self.samples.setflags(write=False)

    @property
    def extent(self) -> tuple[float, float, float]:
        """World-space size in micrometers."""
        return (
            self.dims[0] * self.spacing[0],
            self.dims[1] * self.spacing[1],
            self.dims[2] * self.spacing[2],
        )


@dataclass(frozen=True)
class Volume:
    """Ordered channel stack; channel order is the layering order (first = bottom).

    `timepoints`, when present, holds one tuple of per-channel sample arrays per
    timepoint; the channels' own arrays are timepoint 0.
    """

    channels: tuple[VolumeChannel, ...]
    timepoints: tuple[tuple[np.ndarray, ...], ...] | None = None

    def __post_init__(self) -> None:
        if not self.channels:
            raise VolumeError("volume needs at least one channel")
        d0, s0 = self.channels[0].dims, self.channels[0].spacing
        for ch in self.channels[1:]:
            if ch.dims != d0 or ch.spacing != s0:
                raise VolumeError("all channels must share dims and spacing")
        if self.timepoints is not None:
            for t, arrays in enumerate(self.timepoints):
                if len(arrays) != len(self.channels):
                    raise VolumeError(f"timepoint {t} has {len(arrays)} arrays, "
                                      f"expected {len(self.channels)}")
                for arr in arrays:
                    if arr.shape != self.channels[0].samples.shape:
                        raise VolumeError(f"timepoint {t} sample shape mismatch")
                    arr.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.channels[0].dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.channels[0].spacing

    @property
    def extent(self) -> tuple[float, float, float]:
        return self.channels[0].extent

    @property
    def center(self) -> tuple[float, float, float]:
        ex, ey, ez = self.extent
        return (ex / 2.0, ey / 2.0, ez / 2.0)

    @property
    def diagonal(self) -> float:
        return float(math.sqrt(sum(e * e for e in self.extent)))

    @property
    def n_timepoints(self) -> int:
        return 1 if self.timepoints is None else len(self.timepoints)

    def at_timepoint(self, t: int) -> "Volume":
        """Volume view with channel samples swapped to timepoint t (cheap, shares arrays)."""
        if t < 0 or t >= self.n_timepoints:
            raise IndexError(f"timepoint {t} out of range [0, {self.n_timepoints})")
        if self.timepoints is None:
            return self
        channels = tuple(
            replace(ch, samples=arr) for ch, arr in zip(self.channels, self.timepoints[t])
        )
        return Volume(channels=channels, timepoints=None)

    def with_transfer(self, channel: int, tf: TransferFunction) -> "Volume":
        channels = list(self.channels)
        channels[channel] = replace(channels[channel], transfer=tf)
        return Volume(channels=tuple(channels), timepoints=self.timepoints)


def sample_trilinear(channel: VolumeChannel, p) -> float:
    """Trilinearly interpolated intensity at continuous voxel coordinate p = (x, y, z).

    Voxel values sit at half-integer centers (i + 0.5); the 8 surrounding
    values are blended, with corners beyond the grid contributing 0. Points
    outside the grid extent [0, nx] x [0, ny] x [0, nz] return 0.
    """
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    nx, ny, nz = channel.dims
    if not (0.0 <= x <= nx and 0.0 <= y <= ny and 0.0 <= z <= nz):
        return 0.0
    coords = np.array([[z - 0.5], [y - 0.5], [x - 0.5]], dtype=np.float64)
    val = map_coordinates(channel.samples, coords, order=1, mode="grid-constant", cval=0.0)
    return float(val[0])


def padded_grid(channel: VolumeChannel) -> np.ndarray:
    """Channel samples zero-padded by one voxel per side, for batch sampling."""
    return np.pad(channel.samples, 1)


def sample_grid(padded: np.ndarray, xs, ys, zs) -> np.ndarray:
    """Batch trilinear sampling against a padded grid from `padded_grid`.

    Coordinates are continuous voxel coordinates (same convention as
    sample_trilinear). Callers are responsible for masking points outside the
    grid extent; within one voxel beyond the extent this matches the zero
    boundary exactly, farther out it clamps.
    """
    coords = np.empty((3,) + np.shape(xs), dtype=np.float32)
    coords[0] = zs
    coords[1] = ys
    coords[2] = xs
    coords += 0.5  # -0.5 center shift +1.0 pad offset
    sampled = map_coordinates(padded, coords.reshape(3, -1), order=1, mode="nearest")
    return sampled.reshape(np.shape(xs))


# ---------------------------------------------------------------------------
# Sidecar I/O

_REQUIRED_KEYS = ("dims", "spacing", "dtype", "data")


def _parse_sidecar_text(text: str, path: Path) -> dict:
    fields: dict = {"data": []}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise VolumeError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "data":
            fields["data"].append([f.strip() for f in value.split(",") if f.strip()])
        else:
            fields[key] = value
    for key in _REQUIRED_KEYS:
        if key not in fields or (key == "data" and not fields["data"]):
            raise VolumeError(f"{path}: missing required key '{key}'")
    return fields


def read_sidecar(meta_path: str | Path) -> dict:
    """Parse a sidecar into a dict: dims, spacing, dtype, channel_names, data (per timepoint)."""
    path = Path(meta_path)
    if not path.is_file():
        raise VolumeError(f"sidecar not found: {path}")
    fields = _parse_sidecar_text(path.read_text(), path)

    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        spacing = tuple(float(v) for v in fields["spacing"].split())
    except ValueError as exc:
        raise VolumeError(f"{path}: bad dims/spacing: {exc}") from exc
    if len(dims) != 3 or len(spacing) != 3:
        raise VolumeError(f"{path}: dims and spacing must have 3 components")
    if min(dims) < 1:
        raise VolumeError(f"{path}: dims must be >= 1, got {dims}")
    if min(spacing) <= 0:
        raise VolumeError(f"{path}: spacing must be positive, got {spacing}")

    dtype = fields["dtype"]
    if dtype not in _DTYPES:
        raise VolumeError(f"{path}: unsupported dtype {dtype!r} (expected u8 or u16le)")

    n_channels = len(fields["data"][0])
    for t, files in enumerate(fields["data"]):
        if len(files) != n_channels:
            raise VolumeError(f"{path}: timepoint {t} lists {len(files)} files, "
                              f"expected {n_channels}")

    names = [n.strip() for n in fields.get("channel_names", "").split(",") if n.strip()]
    if names and len(names) != n_channels:
        raise VolumeError(f"{path}: {len(names)} channel names for {n_channels} channels")
    if not names:
        names = [f"channel{i}" for i in range(n_channels)]

    return {
        "path": path,
        "dims": dims,
        "spacing": spacing,
        "dtype": dtype,
        "channel_names": names,
        "data": fields["data"],
    }


def _read_payload(path: Path, dims: tuple[int, int, int], dtype: str) -> np.ndarray:
    np_dtype, scale = _DTYPES[dtype]
    nx, ny, nz = dims
    expected = nx * ny * nz * np.dtype(np_dtype).itemsize
    if not path.is_file():
        raise VolumeError(f"payload not found: {path}")
    raw = path.read_bytes()
    if len(raw) != expected:
        raise VolumeError(
            f"payload size mismatch for {path}: expected {expected} bytes "
            f"({nx}x{ny}x{nz} {dtype}), got {len(raw)}"
        )
    values = np.frombuffer(raw, dtype=np_dtype)
    samples = (values.astype(np.float32) / np.float32(scale)).reshape(nz, ny, nx)
    return samples


def load_volume(meta_path: str | Path) -> Volume:
    """Load a volume from its sidecar, normalizing intensities to [0, 1] float32."""
    meta = read_sidecar(meta_path)
    base = meta["path"].parent
    per_timepoint: list[tuple[np.ndarray, ...]] = []
    for files in meta["data"]:
        arrays = tuple(
            _read_payload(base / f, meta["dims"], meta["dtype"]) for f in files
        )
        per_timepoint.append(arrays)

    channels = tuple(
        VolumeChannel(dims=meta["dims"], spacing=meta["spacing"],
                      samples=arr, name=name)
        for name, arr in zip(meta["channel_names"], per_timepoint[0])
    )
    timepoints = tuple(per_timepoint) if len(per_timepoint) > 1 else None
    return Volume(channels=channels, timepoints=timepoints)


def save_volume(volume: Volume, meta_path: str | Path, dtype: str = "u16le") -> Path:
    """Write a sidecar plus raw payloads next to it.

    Samples are quantized to the target dtype grid. The save/load round trip
    is bit-exact whenever the samples already lie on that grid, which holds
    for anything produced by load_volume or make_synthetic.
    """
    if dtype not in _DTYPES:
        raise VolumeError(f"unsupported dtype {dtype!r}")
    np_dtype, scale = _DTYPES[dtype]
    path = Path(meta_path)
    stem = path.stem
    nx, ny, nz = volume.dims

    data_lines = []
    for t in range(volume.n_timepoints):
        vt = volume.at_timepoint(t)
        files = []
        for c, ch in enumerate(vt.channels):
            fname = f"{stem}_t{t}_c{c}.raw"
            quantized = np.rint(ch.samples.astype(np.float64) * scale).astype(np_dtype)
            (path.parent / fname).write_bytes(quantized.tobytes())
            files.append(fname)
        data_lines.append("data = " + ", ".join(files))

    names = ", ".join(ch.name or f"channel{i}" for i, ch in enumerate(volume.channels))
    sx, sy, sz = volume.spacing
    text = "\n".join(
        [
            "format = quiltcast-volume/1",
            f"dims = {nx} {ny} {nz}",
            f"spacing = {sx:g} {sy:g} {sz:g}",
            f"dtype = {dtype}",
            f"channel_names = {names}",
            *data_lines,
            "",
        ]
    )
    path.write_text(text)
    return path
