"""Simulated detector/classifier outputs and dataset-mixture manifests.

Stands in for trained models so fusion and evaluation run end-to-end at
desk scale. Each ground-truth box is detected independently with
probability ``recall_ceiling``; detected boxes are jittered and scored from
Gaussian pre-sigmoid distributions, and Poisson background false positives
are scattered uniformly over the area of interest. Everything is
bit-reproducible under the profile seed.

Mixture manifests follow the dataset codes R (real), C (3D CAD),
G (GAN reskinned), N (neural style transfer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import B2NError
from .geodata import AnnotationSet, Detection, GeoBox


class InsufficientSamples(B2NError):
    """Requested more files than a source holds without replacement."""


MIXTURE_CODES = ("R", "C", "G", "N")


@dataclass(frozen=True)
class ClassifierProfile:
    """Pre-sigmoid classifier score (mean, std) per crop provenance."""

    target_class: str
    target: tuple[float, float] = (2.0, 1.0)
    off_class: tuple[float, float] = (-2.0, 1.0)
    background: tuple[float, float] = (-2.0, 1.0)


@dataclass(frozen=True)
class SimProfile:
    recall_ceiling: float = 1.0
    loc_jitter_sigma: float = 0.0          # in box coordinate units
    tp_score: tuple[float, float] = (2.0, 1.0)
    fp_rate: float = 0.0                   # false detects per megapixel
    fp_score: tuple[float, float] = (-1.0, 1.0)
    classifier: ClassifierProfile | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.recall_ceiling <= 1.0:
            raise ValueError("recall_ceiling must be in [0, 1]")
        if self.loc_jitter_sigma < 0 or self.fp_rate < 0:
            raise ValueError("rates and sigmas must be >= 0")
        for mean, std in (self.tp_score, self.fp_score):
            if std < 0:
                raise ValueError("score stds must be >= 0")


def _shift_box(box: GeoBox, dx: float, dy: float) -> GeoBox:
    return GeoBox(box.xmin + dx, box.ymin + dy, box.xmax + dx, box.ymax + dy,
                  box.class_label)


def simulate(anns: AnnotationSet, area_megapixels: float,
             profile: SimProfile) -> list[Detection]:
    """Draw one simulated detector (and optional classifier) run.

    False positives land uniformly in a square of ``area_megapixels`` whose
    corner sits at the ground-truth extent minimum (origin when there is no
    ground truth); their box sizes resample the ground-truth sizes, falling
    back to 10-unit squares.
    """
    rng = np.random.default_rng(profile.seed)
    cls = profile.classifier
    dets: list[Detection] = []
    for box in anns.gt:
        if rng.random() >= profile.recall_ceiling:
            continue
        if profile.loc_jitter_sigma > 0:
            dx, dy = rng.normal(0.0, profile.loc_jitter_sigma, size=2)
            box = _shift_box(box, float(dx), float(dy))
        s_d = float(rng.normal(*profile.tp_score))
        s_c = None
        if cls is not None:
            dist = cls.target if box.class_label == cls.target_class else cls.off_class
            s_c = float(rng.normal(*dist))
        dets.append(Detection(box, s_d, s_c))

    n_fp = int(rng.poisson(profile.fp_rate * area_megapixels))
    if n_fp:
        side = float(np.sqrt(area_megapixels * 1e6))
        x0 = min((b.xmin for b in anns.gt), default=0.0)
        y0 = min((b.ymin for b in anns.gt), default=0.0)
        sizes = [(b.xmax - b.xmin, b.ymax - b.ymin) for b in anns.gt] or [(10.0, 10.0)]
        for _ in range(n_fp):
            w, h = sizes[int(rng.integers(len(sizes)))]
            cx = x0 + float(rng.uniform(0, side))
            cy = y0 + float(rng.uniform(0, side))
            box = GeoBox(cx, cy, cx + w, cy + h)
            s_d = float(rng.normal(*profile.fp_score))
            s_c = float(rng.normal(*cls.background)) if cls is not None else None
            dets.append(Detection(box, s_d, s_c))
    return dets


@dataclass(frozen=True)
class MixtureManifest:
    variant: str
    entries: tuple[tuple[str, str], ...]   # (code, file)
    counts: dict[str, int] = field(default_factory=dict)


def build_mixture(sources: dict[str, list[str]], counts: dict[str, int],
                  seed: int = 0, with_replacement: bool = False) -> MixtureManifest:
    """Sample a deterministic file manifest from coded dataset sources."""
    if not sources:
        raise ValueError("need at least one source")
    rng = np.random.default_rng(seed)
    entries: list[tuple[str, str]] = []
    ordered = [c for c in MIXTURE_CODES if c in sources] + \
              [c for c in sources if c not in MIXTURE_CODES]
    for code in ordered:
        files = sorted(sources[code])
        want = counts.get(code, len(files))
        if want < 0:
            raise ValueError("counts must be >= 0")
        if want > len(files) and not with_replacement:
            raise InsufficientSamples(
                f"source {code} has {len(files)} files, requested {want}")
        picks = rng.choice(len(files), size=want, replace=with_replacement)
        if not with_replacement:
            picks = np.sort(picks)
        entries.extend((code, files[int(i)]) for i in picks)
    variant = "+".join(c for c in ordered if counts.get(c, len(sources[c])) > 0)
    return MixtureManifest(variant, tuple(entries),
                           {c: counts.get(c, len(sources[c])) for c in ordered})
