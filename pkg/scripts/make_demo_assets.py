#!/usr/bin/env python3
"""Generate demo sprites and backgrounds for the composite subcommand.

Writes a small asset tree:

    <out>/sprites/      RGBA rail-car sprites + shadow layers + pose JSON
    <out>/backgrounds/  textured chips with annotation sidecars

Then a scene batch is one command away:

    b2n composite --backgrounds <out>/backgrounds --sprites <out>/sprites \\
        --class tanker --policy rows --count 4 --seed 0 --out <out>/scenes
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from b2n.geodata import AnnotationSet, GeoBox
from b2n.raster import ImageBuffer
from b2n.schemas import save_annotations


def make_sprite(rng, length, width, label):
    """Neutral-gray rounded car body with a soft offset shadow."""
    h, w = width + 8, length + 8
    rgba = np.zeros((h, w, 4), dtype=np.uint8)
    body = np.zeros((h, w), dtype=bool)
    body[4:4 + width, 4:4 + length] = True
    # rounded corners
    for r, c in ((4, 4), (4, 3 + length), (3 + width, 4), (3 + width, 3 + length)):
        body[r, c] = False
    rgba[body, :3] = 128
    rgba[body, 3] = 255
    # panel seams
    for seam in range(4 + length // 4, 3 + length, max(length // 4, 2)):
        rgba[body[:, seam], seam, :3] = 110
    shadow = np.zeros((h, w, 1), dtype=np.uint8)
    shadow[6:6 + width, 6:6 + length, 0] = 90
    shadow[body, 0] = 0
    return ImageBuffer(rgba), ImageBuffer(shadow)


def make_background(rng, size=256):
    base = rng.normal(70, 6, size=(size, size, 1))
    tint = np.array([[[1.0, 1.05, 0.92]]])
    img = np.clip(base * tint + rng.normal(0, 3, size=(size, size, 3)), 0, 255)
    # a pale road strip for texture
    col = int(rng.integers(40, size - 60))
    img[:, col:col + 14] = np.clip(img[:, col:col + 14] + 45, 0, 255)
    return ImageBuffer.from_array(img)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_assets")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--backgrounds", type=int, default=4)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    sprite_dir = out / "sprites"
    bg_dir = out / "backgrounds"
    sprite_dir.mkdir(parents=True, exist_ok=True)
    bg_dir.mkdir(parents=True, exist_ok=True)

    variants = (("tanker_a", 36, 10, "tanker"), ("tanker_b", 40, 11, "tanker"),
                ("boxcar_a", 34, 12, "cargo"))
    for stem, length, width, label in variants:
        rgba, shadow = make_sprite(rng, length, width, label)
        rgba.to_png(sprite_dir / f"{stem}.png")
        shadow.to_png(sprite_dir / f"{stem}.shadow.png")
        (sprite_dir / f"{stem}.pose.json").write_text(json.dumps(
            {"off_nadir_deg": float(rng.uniform(5, 25)),
             "look_deg": float(rng.uniform(0, 360)),
             "sun_deg": float(rng.uniform(90, 270)),
             "class": label}) + "\n")

    for i in range(args.backgrounds):
        bg = make_background(rng)
        bg.to_png(bg_dir / f"bg{i:02d}.png")
        # half the backgrounds carry a pre-existing cargo annotation
        boxes = ()
        if i % 2:
            x, y = float(rng.integers(20, 180)), float(rng.integers(20, 180))
            boxes = (GeoBox(x, y, x + 34, y + 12, "cargo"),)
        save_annotations(bg_dir / f"bg{i:02d}.gt.json",
                         AnnotationSet(f"bg{i:02d}", boxes))

    print(f"assets written under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
