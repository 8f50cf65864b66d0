"""Versioned JSON wire formats shared by the CLI subcommands.

Detection files:
    {"schema": "b2n/1", "detections": [{"bbox": [xmin, ymin, xmax, ymax],
     "class": str, "s_d": float, "s_c": float|null, "fused": float|null,
     "chip": str|null}]}

Annotation files mirror that with a "gt" array and a "site": [x, y] point.
Floating-point fields serialize with 12 significant digits so reports are
byte-stable across runs and platforms.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import B2NError
from .fusion import (ZERO_SHOT_MIN, EnvelopeGrid, FusionModel, ScoreNormalizer,
                     UPPER_RIGHT, LOWER_LEFT)
from .geodata import AnnotationSet, Detection, GeoBox
from .simharness import ClassifierProfile, MixtureManifest, SimProfile

SCHEMA = "b2n/1"
FLOAT_DIGITS = 12


class BadSchema(B2NError):
    """File is missing or declares an unsupported schema version."""


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.{FLOAT_DIGITS}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def write_json(path, payload: dict) -> None:
    payload = {"schema": SCHEMA, **_round_floats(payload)}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def read_json(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise BadSchema(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise BadSchema(f"invalid JSON in {path}: {exc}") from None
    if payload.get("schema") != SCHEMA:
        raise BadSchema(f"{path}: expected schema {SCHEMA!r}, "
                        f"got {payload.get('schema')!r}")
    return payload


# --- detections -------------------------------------------------------------

def detection_to_dict(det: Detection) -> dict:
    return {"bbox": [det.box.xmin, det.box.ymin, det.box.xmax, det.box.ymax],
            "class": det.box.class_label, "s_d": det.s_d, "s_c": det.s_c,
            "fused": det.fused, "chip": det.source_chip}


def detection_from_dict(d: dict) -> Detection:
    box = GeoBox(*map(float, d["bbox"]), class_label=d.get("class", ""))
    s_c = d.get("s_c")
    fused = d.get("fused")
    return Detection(box, float(d["s_d"]),
                     None if s_c is None else float(s_c),
                     None if fused is None else float(fused),
                     d.get("chip"))


def save_detections(path, dets: list[Detection]) -> None:
    write_json(path, {"detections": [detection_to_dict(d) for d in dets]})


def load_detections(path) -> list[Detection]:
    return [detection_from_dict(d) for d in read_json(path)["detections"]]


# --- annotations ------------------------------------------------------------

def save_annotations(path, anns: AnnotationSet, extra: dict | None = None) -> None:
    payload = {"image_id": anns.image_id, "site": list(anns.site_location),
               "gt": [{"bbox": [b.xmin, b.ymin, b.xmax, b.ymax],
                       "class": b.class_label} for b in anns.gt]}
    if extra:
        payload.update(extra)
    write_json(path, payload)


def load_annotations(path) -> AnnotationSet:
    payload = read_json(path)
    boxes = tuple(GeoBox(*map(float, g["bbox"]), class_label=g.get("class", ""))
                  for g in payload["gt"])
    site = tuple(map(float, payload.get("site", (0.0, 0.0))))
    return AnnotationSet(payload.get("image_id", Path(path).stem), boxes, site)


# --- fusion models ----------------------------------------------------------

def save_fusion_model(path, model: FusionModel) -> None:
    n = model.normalizer
    payload = {
        "normalizer": {"d": [n.d_offset, n.d_scale], "c": [n.c_offset, n.c_scale]},
        "domain": list(model.domain),
        "n_bar": model.n_bar.grid.tolist(),
        "p_bar": "min" if model.zero_shot else model.p_bar.grid.tolist(),
    }
    write_json(path, payload)


def load_fusion_model(path) -> FusionModel:
    payload = read_json(path)
    norm = payload["normalizer"]
    normalizer = ScoreNormalizer(float(norm["d"][0]), float(norm["d"][1]),
                                 float(norm["c"][0]), float(norm["c"][1]))
    domain = tuple(map(float, payload["domain"]))
    n_bar = EnvelopeGrid(np.asarray(payload["n_bar"], dtype=np.float64),
                         UPPER_RIGHT, domain)
    if payload["p_bar"] == "min":
        p_bar = ZERO_SHOT_MIN
    else:
        p_bar = EnvelopeGrid(np.asarray(payload["p_bar"], dtype=np.float64),
                             LOWER_LEFT, domain)
    return FusionModel(normalizer, n_bar, p_bar)


# --- score pairs ------------------------------------------------------------

def save_score_pairs(path, pairs) -> None:
    write_json(path, {"pairs": [[float(a), float(b)] for a, b in pairs]})


def load_score_pairs(path) -> list[tuple[float, float]]:
    return [(float(a), float(b)) for a, b in read_json(path)["pairs"]]


# --- simulation profiles ----------------------------------------------------

def load_profile(path, seed: int | None = None) -> SimProfile:
    payload = read_json(path)
    cls = None
    if payload.get("classifier"):
        c = payload["classifier"]
        cls = ClassifierProfile(c["target_class"], tuple(c.get("target", (2.0, 1.0))),
                                tuple(c.get("off_class", (-2.0, 1.0))),
                                tuple(c.get("background", (-2.0, 1.0))))
    return SimProfile(
        recall_ceiling=float(payload.get("recall_ceiling", 1.0)),
        loc_jitter_sigma=float(payload.get("loc_jitter_sigma", 0.0)),
        tp_score=tuple(payload.get("tp_score", (2.0, 1.0))),
        fp_rate=float(payload.get("fp_rate", 0.0)),
        fp_score=tuple(payload.get("fp_score", (-1.0, 1.0))),
        classifier=cls,
        seed=int(payload.get("seed", 0) if seed is None else seed))


# --- mixture manifests ------------------------------------------------------

def save_manifest(path, manifest: MixtureManifest) -> None:
    write_json(path, {"variant": manifest.variant,
                      "counts": manifest.counts,
                      "entries": [{"code": c, "file": f}
                                  for c, f in manifest.entries]})


# --- reports ----------------------------------------------------------------

def save_report(base_path, summary: dict,
                pr_points: list[tuple[float, float, float]]) -> None:
    """Write <base>.json (summary + PR points) and <base>.csv (PR points)."""
    base = Path(base_path)
    write_json(base.with_suffix(".json"),
               {**summary, "pr_points": [list(p) for p in pr_points]})
    lines = ["threshold,precision,recall"]
    for t, p, r in pr_points:
        lines.append(f"{t:.{FLOAT_DIGITS}g},{p:.{FLOAT_DIGITS}g},{r:.{FLOAT_DIGITS}g}")
    base.with_suffix(".csv").write_text("\n".join(lines) + "\n")
