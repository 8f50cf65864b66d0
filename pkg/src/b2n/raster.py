"""8-bit raster buffers.

The toolkit works on small in-memory rasters: RGB(A) chips, single-channel
masks and edge maps. ``ImageBuffer`` is a thin immutable wrapper around a
uint8 array of shape (H, W, C) with C in {1, 3, 4}; channel 3 of a 4-channel
buffer is alpha. PNG is the only file format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import B2NError


class BadImage(B2NError):
    """Array shape/dtype not representable as an 8-bit raster."""


_PIL_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable 8-bit raster, shape (H, W, C), C in {1, 3, 4}."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if arr.dtype != np.uint8:
            raise BadImage(f"expected uint8 data, got {arr.dtype}")
        if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
            raise BadImage(f"expected (H, W, C) with C in {{1,3,4}}, got {arr.shape}")

    @staticmethod
    def from_array(arr) -> "ImageBuffer":
        """Build from any array-like; 2-D input becomes single-channel."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.dtype != np.uint8:
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        return ImageBuffer(np.ascontiguousarray(arr))

    @staticmethod
    def full(height: int, width: int, channels: int = 3, fill=0) -> "ImageBuffer":
        return ImageBuffer(np.full((height, width, channels), fill, dtype=np.uint8))

    @staticmethod
    def from_png(path) -> "ImageBuffer":
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB", "RGBA"):
                im = im.convert("RGBA" if "A" in im.mode else "RGB")
            return ImageBuffer.from_array(np.asarray(im))

    def to_png(self, path) -> None:
        arr = self.data[:, :, 0] if self.channels == 1 else self.data
        Image.fromarray(arr, mode=_PIL_MODES[self.channels]).save(Path(path), format="PNG")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def has_alpha(self) -> bool:
        return self.channels == 4

    def rgb(self) -> np.ndarray:
        """Color planes as uint8 (H, W, 3); single-channel input is replicated."""
        if self.channels == 1:
            return np.repeat(self.data, 3, axis=2)
        return self.data[:, :, :3]

    def gray(self) -> np.ndarray:
        """Luma as float64 (H, W), ITU-R 601 weights."""
        if self.channels == 1:
            return self.data[:, :, 0].astype(np.float64)
        rgb = self.data[:, :, :3].astype(np.float64)
        return rgb[:, :, 0] * 0.299 + rgb[:, :, 1] * 0.587 + rgb[:, :, 2] * 0.114
