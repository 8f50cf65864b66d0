"""Schematic representation functions and the reskinning seam.

A representation function R reduces an image to a schematic (edges, masks)
detailed enough for a generator to rebuild plausible imagery from, but lossy
enough to hide whether the source scene was real or composited. The
generator G is a plain image -> image callable of matching dimensions;
training one is out of scope, so a deterministic stub stands in for pipeline
testing, and external commands can be wrapped for real models.

Reskinning a scene replaces its image with G(R(image)); annotations are
geometric and pass through untouched.
"""

from __future__ import annotations

import subprocess
from io import BytesIO
from typing import Callable

import numpy as np
from scipy import ndimage

from .compositor import CompositeScene
from .errors import B2NError
from .raster import ImageBuffer


class InvalidThresholds(B2NError):
    """Canny thresholds must satisfy 0 <= low < high."""


class GeneratorFailure(B2NError):
    """The generator errored or returned mismatched dimensions."""


Generator = Callable[[ImageBuffer], ImageBuffer]

LAPLACIAN_4 = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


def rep_laplacian(img: ImageBuffer) -> ImageBuffer:
    """Absolute response of the 4-neighbor Laplacian on the luma plane.

    Borders use replicate padding, so a linear ramp is zero only in the
    interior (the one-sided second difference at the edge is the slope).
    """
    gray = img.gray()
    out = np.abs(ndimage.convolve(gray, LAPLACIAN_4, mode="nearest"))
    return ImageBuffer.from_array(np.clip(out, 0, 255))


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

# Offsets of the positive-direction neighbor for each quantized gradient
# sector (0, 45, 90, 135 degrees), as (drow, dcol).
_SECTOR_STEPS = [(0, 1), (1, 1), (1, 0), (1, -1)]


def rep_canny(img: ImageBuffer, low_thresh: float = 50.0,
              high_thresh: float = 150.0, gaussian_sigma: float = 1.0) -> ImageBuffer:
    """Binary Canny edges: smooth, Sobel, non-max suppression, hysteresis.

    Thresholds apply to the gradient magnitude divided by the Sobel kernel
    gain (4) and clipped to [0, 255], so a full-height step edge reads 255.
    """
    if not 0 <= low_thresh < high_thresh:
        raise InvalidThresholds(f"need 0 <= low < high, got ({low_thresh}, {high_thresh})")
    gray = img.gray()
    if gaussian_sigma > 0:
        gray = ndimage.gaussian_filter(gray, gaussian_sigma, mode="nearest")
    gx = ndimage.convolve(gray, SOBEL_X, mode="nearest")
    gy = ndimage.convolve(gray, SOBEL_Y, mode="nearest")
    mag = np.clip(np.hypot(gx, gy) / 4.0, 0.0, 255.0)

    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = np.floor((angle + 22.5) / 45.0).astype(int) % 4
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dr, dc) in enumerate(_SECTOR_STEPS):
        fwd = padded[1 + dr:1 + dr + mag.shape[0], 1 + dc:1 + dc + mag.shape[1]]
        bwd = padded[1 - dr:1 - dr + mag.shape[0], 1 - dc:1 - dc + mag.shape[1]]
        # >= forward, > backward: exactly one of two equal ridge pixels survives
        keep |= (sector == s) & (mag >= fwd) & (mag > bwd)
    ridge = np.where(keep, mag, 0.0)

    strong = ridge >= high_thresh
    weak = ridge >= low_thresh
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n:
        strong_labels = np.unique(labels[strong])
        strong_labels = strong_labels[strong_labels > 0]
        edges = np.isin(labels, strong_labels)
    else:
        edges = strong
    return ImageBuffer.from_array(np.where(edges, 255, 0).astype(np.uint8))


def rep_mask(polygons: list[list[tuple[float, float]]],
             dims: tuple[int, int]) -> ImageBuffer:
    """Filled polygon rasterization, 255 inside, even-odd rule per polygon.

    ``dims`` is (width, height). A pixel is inside when its center
    (col + 0.5, row + 0.5) is; integer-coordinate polygons therefore cover
    exactly their pixel area.
    """
    width, height = dims
    out = np.zeros((height, width), dtype=np.uint8)
    for poly in polygons:
        if len(poly) < 3:
            continue
        xs = np.array([p[0] for p in poly], dtype=np.float64)
        ys = np.array([p[1] for p in poly], dtype=np.float64)
        for row in range(height):
            yc = row + 0.5
            x1, y1 = xs, ys
            x2, y2 = np.roll(xs, -1), np.roll(ys, -1)
            crosses = (y1 <= yc) != (y2 <= yc)
            if not crosses.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = x1 + (yc - y1) / (y2 - y1) * (x2 - x1)
            xi = np.sort(xi[crosses])
            cols = np.arange(width) + 0.5
            inside = np.searchsorted(xi, cols) % 2 == 1
            out[row][inside] = 255
    return ImageBuffer.from_array(out)


def stub_generator(img: ImageBuffer) -> ImageBuffer:
    """Deterministic stand-in for a trained generator.

    Blends the input 50/50 with a Gaussian-blurred copy of itself; shape
    preserving and bit-reproducible, which is all pipeline tests need.
    """
    data = img.data.astype(np.float64)
    blurred = np.stack([ndimage.gaussian_filter(data[:, :, ch], 2.0, mode="nearest")
                        for ch in range(img.channels)], axis=-1)
    return ImageBuffer.from_array(0.5 * data + 0.5 * blurred)


def exec_generator(command: list[str]) -> Generator:
    """Wrap an external command that reads a PNG on stdin and writes one to stdout."""

    def run(img: ImageBuffer) -> ImageBuffer:
        buf = BytesIO()
        from PIL import Image
        arr = img.data[:, :, 0] if img.channels == 1 else img.data
        Image.fromarray(arr).save(buf, format="PNG")
        try:
            proc = subprocess.run(command, input=buf.getvalue(),
                                  capture_output=True, check=True)
        except (OSError, subprocess.CalledProcessError) as exc:
            raise GeneratorFailure(f"generator command failed: {exc}") from exc
        try:
            with Image.open(BytesIO(proc.stdout)) as im:
                return ImageBuffer.from_array(np.asarray(im))
        except Exception as exc:
            raise GeneratorFailure(f"generator returned invalid PNG: {exc}") from exc

    return run


def reskin(scene: CompositeScene, rep: Callable[[ImageBuffer], ImageBuffer],
           gen: Generator) -> CompositeScene:
    """Replace the scene image with gen(rep(image)); annotations unchanged."""
    try:
        out = gen(rep(scene.image))
    except B2NError:
        raise
    except Exception as exc:
        raise GeneratorFailure(f"generator raised: {exc}") from exc
    if (out.height, out.width) != (scene.image.height, scene.image.width):
        raise GeneratorFailure(
            f"generator changed dimensions {scene.image.width}x{scene.image.height} "
            f"-> {out.width}x{out.height}")
    return CompositeScene(out, scene.annotations, scene.provenance)
