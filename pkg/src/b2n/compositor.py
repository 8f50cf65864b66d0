"""Synthetic-scene construction from pre-rendered object sprites.

Sprites are RGBA renders of an object (transparent background, separate
semi-transparent shadow layer) with pose metadata. Scene construction pastes
sprites onto real background chips guaranteed to contain no target-class
objects: the shadow is multiplied in first, the sprite is alpha blended, and
a small Gaussian blur is applied in a 3-pixel band around the alpha boundary
to dull the contrast between render and background. Paint randomization and
local saturation/value matching keep only object geometry constant across a
batch, per the domain-randomization recipe.

Every randomized operation takes an explicit seed or Generator and is
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import B2NError
from .geodata import AnnotationSet, GeoBox
from .raster import ImageBuffer


class NoEligibleBackground(B2NError):
    """Every library background contains the target class."""


class EmptyRegion(B2NError):
    """Background statistics region is empty or out of bounds."""


class OutOfBounds(B2NError):
    """Sprite does not fit inside the background at the given position."""


class CollisionRejected(B2NError):
    """Placement intersects an existing annotation box."""


class EmptySprite(B2NError):
    """Sprite has no opaque pixels; nothing to paste or annotate."""


BLUR_BAND_PX = 3


@dataclass(frozen=True)
class Pose:
    off_nadir_deg: float = 0.0
    look_deg: float = 0.0
    sun_deg: float = 0.0


@dataclass(frozen=True)
class Sprite:
    rgba: ImageBuffer
    shadow_alpha: ImageBuffer
    pose: Pose
    class_label: str

    def __post_init__(self):
        if self.rgba.channels != 4:
            raise ValueError("sprite image must be RGBA")
        if self.shadow_alpha.channels != 1:
            raise ValueError("shadow layer must be single-channel")
        if (self.rgba.height, self.rgba.width) != \
                (self.shadow_alpha.height, self.shadow_alpha.width):
            raise ValueError("sprite and shadow dimensions differ")

    @property
    def opaque_mask(self) -> np.ndarray:
        return self.rgba.data[:, :, 3] > 0


@dataclass(frozen=True)
class RowLayout:
    spacing_px: float
    jitter_px: float = 0.0
    orientation_deg: float = 0.0

    def __post_init__(self):
        if self.spacing_px <= 0:
            raise ValueError("spacing_px must be positive")


@dataclass(frozen=True)
class PlacementPolicy:
    """How sprites are laid out; collisions with annotations always reject."""

    mode: str = "random"  # "random" | "rows"
    rows: RowLayout | None = None
    max_attempts: int = 50

    def __post_init__(self):
        if self.mode not in ("random", "rows"):
            raise ValueError(f"unknown placement mode {self.mode!r}")
        if self.mode == "rows" and self.rows is None:
            raise ValueError("rows mode requires a RowLayout")


@dataclass(frozen=True)
class CompositeScene:
    image: ImageBuffer
    annotations: tuple[GeoBox, ...]
    provenance: tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "provenance", tuple(self.provenance))


def select_background(library: list[tuple[ImageBuffer, AnnotationSet]],
                      target_class: str,
                      rng: np.random.Generator) -> tuple[ImageBuffer, AnnotationSet]:
    """Uniformly sample a background with zero target-class annotations."""
    eligible = [entry for entry in library
                if all(b.class_label != target_class for b in entry[1].gt)]
    if not eligible:
        raise NoEligibleBackground(f"no background free of class {target_class!r}")
    return eligible[int(rng.integers(len(eligible)))]


# --- paint patterns ---------------------------------------------------------

NEUTRAL_GRAY = (128, 128, 128)


@dataclass(frozen=True)
class NeutralGray:
    pass


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float = 12.0


@dataclass(frozen=True)
class Camouflage:
    palette: tuple[tuple[int, int, int], ...] = (
        (58, 72, 48), (96, 88, 60), (130, 120, 90), (40, 40, 36))
    blob_scale: int = 8

    def __post_init__(self):
        if self.blob_scale < 1:
            raise ValueError("blob_scale must be >= 1")


def paint(sprite: Sprite, pattern, seed: int) -> Sprite:
    """Recolor the opaque pixels of a sprite; deterministic under the seed."""
    rng = np.random.default_rng(seed)
    h, w = sprite.rgba.height, sprite.rgba.width
    rgb = np.empty((h, w, 3), dtype=np.float64)
    if isinstance(pattern, NeutralGray):
        rgb[:] = NEUTRAL_GRAY
    elif isinstance(pattern, GaussianNoise):
        luma = NEUTRAL_GRAY[0] + rng.normal(0.0, pattern.sigma, size=(h, w))
        rgb[:] = luma[:, :, None]
    elif isinstance(pattern, Camouflage):
        blocks_h = math.ceil(h / pattern.blob_scale)
        blocks_w = math.ceil(w / pattern.blob_scale)
        idx = rng.integers(len(pattern.palette), size=(blocks_h, blocks_w))
        idx = np.repeat(np.repeat(idx, pattern.blob_scale, axis=0),
                        pattern.blob_scale, axis=1)[:h, :w]
        rgb[:] = np.asarray(pattern.palette, dtype=np.float64)[idx]
    else:
        raise ValueError(f"unknown paint pattern {pattern!r}")
    out = sprite.rgba.data.copy()
    mask = sprite.opaque_mask
    out[:, :, :3][mask] = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)[mask]
    return replace(sprite, rgba=ImageBuffer(out))


# --- HSV harmonization ------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HSV on float arrays in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    delta = v - rgb.min(axis=-1)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        hr = np.where(delta > 0, ((g - b) / delta) % 6.0, 0.0)
        hg = np.where(delta > 0, (b - r) / delta + 2.0, 0.0)
        hb = np.where(delta > 0, (r - g) / delta + 4.0, 0.0)
    h = np.where(v == r, hr, np.where(v == g, hg, hb)) / 6.0
    h = np.where(delta > 0, h, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] * 6.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h).astype(int) % 6
    f = h - np.floor(h)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    table = np.stack([
        np.stack([v, t, p], axis=-1), np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1), np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1), np.stack([v, p, q], axis=-1)], axis=0)
    return np.take_along_axis(table, i[None, ..., None], axis=0)[0]


def _moment_match(values: np.ndarray, target_mean: float, target_std: float) -> np.ndarray:
    # Zero-variance sources get a pure mean shift (scale defined as 1).
    std = float(values.std())
    scale = target_std / std if std > 0 else 1.0
    return (values - values.mean()) * scale + target_mean


def harmonize(sprite: Sprite, background: ImageBuffer,
              region: tuple[int, int, int, int]) -> Sprite:
    """Match the sprite's saturation and value moments to a background patch.

    ``region`` is (col0, row0, col1, row1) inside the background; the first
    two moments of S and V over that patch drive the matching. Hue is left
    alone.
    """
    c0, r0, c1, r1 = region
    if not (0 <= c0 < c1 <= background.width and 0 <= r0 < r1 <= background.height):
        raise EmptyRegion(f"region {region} empty or outside background")
    patch = background.rgb()[r0:r1, c0:c1].astype(np.float64) / 255.0
    patch_hsv = rgb_to_hsv(patch)
    mask = sprite.opaque_mask
    if not mask.any():
        raise EmptySprite("sprite has no opaque pixels")
    hsv = rgb_to_hsv(sprite.rgba.data[:, :, :3].astype(np.float64) / 255.0)
    for ch in (1, 2):  # S, V
        stats = patch_hsv[:, :, ch]
        hsv[:, :, ch][mask] = np.clip(
            _moment_match(hsv[:, :, ch][mask], float(stats.mean()), float(stats.std())),
            0.0, 1.0)
    out = sprite.rgba.data.copy()
    rgb = np.clip(np.rint(hsv_to_rgb(hsv) * 255.0), 0, 255).astype(np.uint8)
    out[:, :, :3][mask] = rgb[mask]
    return replace(sprite, rgba=ImageBuffer(out))


# --- compositing ------------------------------------------------------------

def _blur_band(mask: np.ndarray) -> np.ndarray:
    """Pixels within BLUR_BAND_PX (Chebyshev) of the mask boundary."""
    footprint = np.ones((3, 3), dtype=bool)
    dilated = ndimage.binary_dilation(mask, footprint, iterations=BLUR_BAND_PX)
    eroded = ndimage.binary_erosion(mask, footprint, iterations=BLUR_BAND_PX)
    return dilated & ~eroded


def composite(background: ImageBuffer, anns: list[GeoBox], sprite: Sprite,
              position: tuple[int, int], blur_sigma: float = 0.8) -> CompositeScene:
    """Paste one sprite at (col, row) and return the grown scene.

    Shadow darkens the background first, then the sprite is alpha blended;
    the blur touches only the band around the alpha boundary, so pixels more
    than 3 px outside the opaque mask stay bit-identical. The annotation is
    the opaque-pixel bounding box, [min, max+1) in pixel coordinates, and the
    placement is rejected if that box overlaps any existing annotation.
    """
    mask = sprite.opaque_mask
    if not mask.any():
        raise EmptySprite("sprite has no opaque pixels")
    col, row = position
    sh, sw = sprite.rgba.height, sprite.rgba.width
    if col < 0 or row < 0 or col + sw > background.width or row + sh > background.height:
        raise OutOfBounds(f"sprite {sw}x{sh} at {position} exceeds background")
    rows_any, cols_any = mask.any(axis=1), mask.any(axis=0)
    rmin, rmax = int(np.argmax(rows_any)), int(len(rows_any) - np.argmax(rows_any[::-1]))
    cmin, cmax = int(np.argmax(cols_any)), int(len(cols_any) - np.argmax(cols_any[::-1]))
    ann = GeoBox(col + cmin, row + rmin, col + cmax, row + rmax, sprite.class_label)
    for existing in anns:
        iw = min(ann.xmax, existing.xmax) - max(ann.xmin, existing.xmin)
        ih = min(ann.ymax, existing.ymax) - max(ann.ymin, existing.ymin)
        if iw > 0 and ih > 0:
            raise CollisionRejected(f"placement at {position} overlaps {existing}")

    out = background.rgb().astype(np.float64).copy() if background.channels == 1 \
        else background.data[:, :, :3].astype(np.float64).copy()
    window = out[row:row + sh, col:col + sw]
    shadow = sprite.shadow_alpha.data[:, :, 0].astype(np.float64) / 255.0
    window *= (1.0 - shadow)[:, :, None]
    alpha = sprite.rgba.data[:, :, 3].astype(np.float64) / 255.0
    sprite_rgb = sprite.rgba.data[:, :, :3].astype(np.float64)
    window[:] = sprite_rgb * alpha[:, :, None] + window * (1.0 - alpha[:, :, None])
    composited = np.clip(np.rint(out), 0, 255).astype(np.uint8)

    # Restore untouched pixels exactly: only shadowed or opaque pixels change.
    touched = np.zeros((background.height, background.width), dtype=bool)
    touched[row:row + sh, col:col + sw] = mask | (shadow > 0)
    base = background.rgb()
    composited[~touched] = base[~touched]

    if blur_sigma > 0:
        full_mask = np.zeros_like(touched)
        full_mask[row:row + sh, col:col + sw] = mask
        band = _blur_band(full_mask)
        blurred = np.stack([ndimage.gaussian_filter(composited[:, :, ch].astype(np.float64),
                                                    blur_sigma)
                            for ch in range(3)], axis=-1)
        composited[band] = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)[band]

    prov = {"class": sprite.class_label, "position": [int(col), int(row)],
            "pose": [sprite.pose.off_nadir_deg, sprite.pose.look_deg,
                     sprite.pose.sun_deg]}
    return CompositeScene(ImageBuffer(composited), tuple(anns) + (ann,), (prov,))


def _anchor_range(limit: float, extent: float) -> tuple[float, float]:
    lo, hi = max(0.0, -extent), limit - max(0.0, extent)
    return (lo, hi) if lo < hi else (0.0, max(limit, 1.0))


def _row_positions(background: ImageBuffer, sprite_dims: tuple[int, int],
                   layout: RowLayout, count: int,
                   rng: np.random.Generator) -> list[tuple[int, int]]:
    sw, sh = sprite_dims
    theta = math.radians(layout.orientation_deg)
    dx, dy = math.cos(theta), math.sin(theta)
    max_c, max_r = background.width - sw, background.height - sh
    # anchor so the whole row fits whenever the raster allows it
    span = (count - 1) * layout.spacing_px
    c0 = float(rng.uniform(*_anchor_range(max_c, span * dx)))
    r0 = float(rng.uniform(*_anchor_range(max_r, span * dy)))
    positions = []
    for k in range(count):
        jc = float(rng.normal(0, layout.jitter_px)) if layout.jitter_px > 0 else 0.0
        jr = float(rng.normal(0, layout.jitter_px)) if layout.jitter_px > 0 else 0.0
        positions.append((int(round(c0 + k * layout.spacing_px * dx + jc)),
                          int(round(r0 + k * layout.spacing_px * dy + jr))))
    return positions


def build_scene(background: ImageBuffer, background_anns: list[GeoBox],
                sprites: list[Sprite], policy: PlacementPolicy, count: int,
                rng: np.random.Generator, blur_sigma: float = 0.8,
                harmonize_to_background: bool = True,
                paint_pattern=None) -> CompositeScene:
    """Place up to ``count`` sprites on a background under the policy.

    Placements colliding with existing annotations (real or already pasted)
    are retried up to ``policy.max_attempts`` times each; rows that run out
    of room simply stop early. Deterministic for a given Generator state.
    """
    if not sprites:
        raise ValueError("sprite library is empty")
    scene = CompositeScene(background, tuple(background_anns), ())
    placed = 0
    attempts = 0
    row_queue: list[tuple[int, int]] = []
    while placed < count and attempts < policy.max_attempts * count:
        attempts += 1
        sprite = sprites[int(rng.integers(len(sprites)))]
        if paint_pattern is not None:
            sprite = paint(sprite, paint_pattern, int(rng.integers(2 ** 32)))
        if policy.mode == "rows":
            if not row_queue:
                remaining = count - placed
                row_queue = _row_positions(
                    scene.image, (sprite.rgba.width, sprite.rgba.height),
                    policy.rows, remaining, rng)
            position = row_queue.pop(0)
        else:
            max_c = scene.image.width - sprite.rgba.width
            max_r = scene.image.height - sprite.rgba.height
            if max_c < 0 or max_r < 0:
                break
            position = (int(rng.integers(max_c + 1)), int(rng.integers(max_r + 1)))
        if harmonize_to_background:
            c, r = position
            c1 = min(c + sprite.rgba.width, scene.image.width)
            r1 = min(r + sprite.rgba.height, scene.image.height)
            if 0 <= c < c1 and 0 <= r < r1:
                sprite = harmonize(sprite, scene.image, (max(c, 0), max(r, 0), c1, r1))
        try:
            step = composite(scene.image, list(scene.annotations), sprite,
                             position, blur_sigma)
        except (OutOfBounds, CollisionRejected):
            continue
        scene = CompositeScene(step.image, step.annotations,
                               scene.provenance + step.provenance)
        placed += 1
    return scene
