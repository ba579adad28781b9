"""RGBA8 raster frames and lossless PNG round-tripping."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class Frame:
    """Width x height RGBA8 raster, top-left origin, row-major pixels (H, W, 4)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 4:
            raise ValueError(f"pixels must be (H, W, 4), got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels).tobytes()

    def copy(self) -> "Frame":
        return Frame(self.pixels.copy())

    @classmethod
    def filled(cls, width: int, height: int, rgba=(0, 0, 0, 255)) -> "Frame":
        pixels = np.empty((height, width, 4), dtype=np.uint8)
        pixels[:] = np.asarray(rgba, dtype=np.uint8)
        return cls(pixels)


def frames_equal(a: Frame, b: Frame) -> bool:
    return a.size == b.size and bool(np.array_equal(a.pixels, b.pixels))


def quantize_rgba(rgba: np.ndarray) -> np.ndarray:
    """Float [0,1] RGBA to uint8 with round-to-nearest."""
    return np.clip(np.rint(rgba * 255.0), 0.0, 255.0).astype(np.uint8)


def write_png(frame: Frame, path: str | Path) -> Path:
    path = Path(path)
    Image.fromarray(frame.pixels, mode="RGBA").save(path, format="PNG")
    return path


def read_png(path: str | Path) -> Frame:
    with Image.open(path) as img:
        return Frame(np.asarray(img.convert("RGBA"), dtype=np.uint8).copy())


def encode_png(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> Frame:
    with Image.open(io.BytesIO(data)) as img:
        return Frame(np.asarray(img.convert("RGBA"), dtype=np.uint8).copy())
