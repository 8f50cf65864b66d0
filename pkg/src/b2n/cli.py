"""Command-line entry point.

One binary, twelve subcommands: chip, stitch, evaluate, fuse, score,
composite, rep, reskin, colormatch, simulate, mix, and the end-to-end
pipeline orchestrator (stitch -> fuse -> evaluate). Exit codes: 0 success,
1 usage error, 2 stage failure. B2N_THREADS caps worker threads where a
subcommand parallelizes (currently scene compositing); results are ordered,
so the thread count never changes outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import chipper, colorxfer, evaluator, fusion, nms, reps, schemas, simharness
from .compositor import (GaussianNoise, NeutralGray, PlacementPolicy, Pose,
                         RowLayout, Sprite, build_scene, select_background)
from .errors import B2NError
from .geodata import IDENTITY_TRANSFORM, AffineGeoTransform, AnnotationSet
from .raster import ImageBuffer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2


class StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("B2N_THREADS", "1")))
    except ValueError:
        return 1


def _load_transform(geo_path, image_path) -> AffineGeoTransform:
    if geo_path:
        return AffineGeoTransform.from_json(geo_path)
    sidecar = Path(image_path).parent / (Path(image_path).stem + ".geo.json")
    if sidecar.exists():
        return AffineGeoTransform.from_json(sidecar)
    return IDENTITY_TRANSFORM


# --- subcommands -------------------------------------------------------------

def cmd_chip(args) -> int:
    image = ImageBuffer.from_png(args.image)
    transform = _load_transform(args.geo, args.image)
    grid = chipper.plan_grid((image.width, image.height), args.chip_size,
                             args.overlap, transform)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"chip_size": grid.chip_size, "stride": grid.stride,
                "width": grid.width, "height": grid.height, "chips": []}
    for chip in grid.chips:
        chipper.extract_chip(image, chip).to_png(out_dir / f"{chip.id}.png")
        chip.transform.to_json(out_dir / f"{chip.id}.geo.json")
        manifest["chips"].append({
            "id": chip.id, "window": [chip.col0, chip.row0, chip.col1, chip.row1]})
    schemas.write_json(out_dir / "grid.json", manifest)
    print(f"wrote {len(grid.chips)} chips to {out_dir}")
    return EXIT_OK


def cmd_stitch(args) -> int:
    dets = []
    for path in args.inputs:
        dets.extend(schemas.load_detections(path))
    kept = nms.suppress(dets, args.iou)
    schemas.save_detections(args.out, kept)
    print(f"kept {len(kept)} of {len(dets)} detections")
    return EXIT_OK


def _rank_key(dets, mode):
    if mode == "fused" or (mode == "auto" and dets and
                           all(d.fused is not None for d in dets)):
        return evaluator.by_fused_score
    return evaluator.by_detector_score


def cmd_evaluate(args) -> int:
    preds = schemas.load_detections(args.pred)
    gts = list(schemas.load_annotations(args.gt).gt)
    key = _rank_key(preds, args.rank)
    records, _ = evaluator.match(preds, gts, args.iou, key=key)
    points = evaluator.pr_curve(records, len(gts))
    summary = {"ap50": evaluator.ap50(records, len(gts)),
               "max_recall_100": evaluator.max_recall_at_imprecision(records, len(gts)),
               "n_gt": len(gts), "n_pred": len(preds)}
    schemas.save_report(args.report, summary, points)
    print(f"ap50={summary['ap50']:.4f} max_recall_100={summary['max_recall_100']:.4f}")
    return EXIT_OK


def _parse_domain(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(":"))
    if not lo < hi:
        raise ValueError(f"domain {text!r} must be lo:hi with lo < hi")
    return lo, hi


def cmd_fuse(args) -> int:
    neg = schemas.load_score_pairs(args.neg_val)
    pos = schemas.load_score_pairs(args.pos_val) if args.pos_val else None
    model = fusion.fit_fusion(neg, pos, grid_size=args.grid,
                              domain=_parse_domain(args.domain))
    schemas.save_fusion_model(args.model_out, model)
    kind = "zero-shot min" if model.zero_shot else "positive KDE"
    print(f"fitted fusion model ({kind}) -> {args.model_out}")
    return EXIT_OK


def cmd_score(args) -> int:
    model = schemas.load_fusion_model(args.model)
    dets = schemas.load_detections(args.infile)
    schemas.save_detections(args.out, fusion.apply_fusion(model, dets))
    print(f"scored {len(dets)} detections")
    return EXIT_OK


def _load_sprite_library(sprite_dir: Path) -> list[Sprite]:
    sprites = []
    for png in sorted(sprite_dir.glob("*.png")):
        if png.name.endswith(".shadow.png"):
            continue
        rgba = ImageBuffer.from_png(png)
        if rgba.channels != 4:
            continue
        shadow_path = png.with_name(png.stem + ".shadow.png")
        if shadow_path.exists():
            shadow = ImageBuffer.from_png(shadow_path)
        else:
            shadow = ImageBuffer.full(rgba.height, rgba.width, 1, 0)
        pose, label = Pose(), png.stem
        meta_path = png.with_name(png.stem + ".pose.json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            pose = Pose(meta.get("off_nadir_deg", 0.0), meta.get("look_deg", 0.0),
                        meta.get("sun_deg", 0.0))
            label = meta.get("class", label)
        sprites.append(Sprite(rgba, shadow, pose, label))
    return sprites


def _load_background_library(bg_dir: Path) -> list[tuple[ImageBuffer, AnnotationSet]]:
    library = []
    for png in sorted(bg_dir.glob("*.png")):
        gt_path = png.with_name(png.stem + ".gt.json")
        anns = schemas.load_annotations(gt_path) if gt_path.exists() \
            else AnnotationSet(png.stem)
        library.append((ImageBuffer.from_png(png), anns))
    return library


def cmd_composite(args) -> int:
    sprites = _load_sprite_library(Path(args.sprites))
    library = _load_background_library(Path(args.backgrounds))
    if not sprites:
        raise ValueError(f"no sprites found in {args.sprites}")
    if args.policy == "rows":
        policy = PlacementPolicy("rows", RowLayout(args.spacing, args.jitter,
                                                   args.orientation))
    else:
        policy = PlacementPolicy("random")
    pattern = {"gray": NeutralGray(), "noise": GaussianNoise()}[args.paint]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def make_scene(index: int):
        rng = np.random.default_rng((args.seed, index))
        background, anns = select_background(library, args.target_class, rng)
        return build_scene(background, list(anns.gt), sprites, policy,
                           args.objects, rng, blur_sigma=args.blur,
                           paint_pattern=pattern)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        scenes = list(pool.map(make_scene, range(args.count)))
    for index, scene in enumerate(scenes):
        stem = f"scene_{index:05d}"
        scene.image.to_png(out_dir / f"{stem}.png")
        schemas.save_annotations(
            out_dir / f"{stem}.gt.json",
            AnnotationSet(stem, scene.annotations),
            extra={"provenance": [dict(p) for p in scene.provenance]})
    print(f"wrote {args.count} scenes to {out_dir}")
    return EXIT_OK


def cmd_rep(args) -> int:
    if args.mode == "mask":
        polys = json.loads(Path(args.polygons).read_text())["polygons"]
        first = ImageBuffer.from_png(args.infile)
        out = reps.rep_mask([[tuple(p) for p in poly] for poly in polys],
                            (first.width, first.height))
    else:
        img = ImageBuffer.from_png(args.infile)
        if args.mode == "laplacian":
            out = reps.rep_laplacian(img)
        else:
            out = reps.rep_canny(img, args.low, args.high, args.sigma)
    out.to_png(args.out)
    return EXIT_OK


def _make_generator(spec: str) -> reps.Generator:
    if spec == "stub":
        return reps.stub_generator
    if spec.startswith("exec:"):
        return reps.exec_generator(shlex.split(spec[len("exec:"):]))
    raise ValueError(f"unknown generator {spec!r} (use 'stub' or 'exec:<command>')")


def cmd_reskin(args) -> int:
    rep_fn = {"laplacian": reps.rep_laplacian,
              "canny": reps.rep_canny}[args.rep]
    gen = _make_generator(args.generator)
    in_dir, out_dir = Path(args.indir), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for png in sorted(in_dir.glob("*.png")):
        from .compositor import CompositeScene
        gt_path = png.with_name(png.stem + ".gt.json")
        anns = schemas.load_annotations(gt_path).gt if gt_path.exists() else ()
        scene = CompositeScene(ImageBuffer.from_png(png), anns)
        out = reps.reskin(scene, rep_fn, gen)
        out.image.to_png(out_dir / png.name)
        if gt_path.exists():
            schemas.save_annotations(out_dir / gt_path.name,
                                     AnnotationSet(png.stem, out.annotations))
        count += 1
    print(f"reskinned {count} images")
    return EXIT_OK


def cmd_colormatch(args) -> int:
    content = ImageBuffer.from_png(args.content)
    styles: list[Path]
    if args.style_dir:
        styles = sorted(Path(args.style_dir).glob("*.png"))
        if not styles:
            raise ValueError(f"no style PNGs in {args.style_dir}")
    else:
        styles = [Path(args.style)]
    out = Path(args.out)
    multi = len(styles) > 1
    if multi:
        out.mkdir(parents=True, exist_ok=True)
    for style_path in styles:
        style = ImageBuffer.from_png(style_path)
        cmap = colorxfer.fit_from_images(content, style, args.ridge)
        result = colorxfer.apply_color_map(cmap, content)
        target = out / f"{Path(args.content).stem}__{style_path.stem}.png" if multi else out
        result.to_png(target)
    print(f"wrote {len(styles)} color-matched image(s)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    anns = schemas.load_annotations(args.gt)
    profile = schemas.load_profile(args.profile, seed=args.seed)
    dets = simharness.simulate(anns, args.area_mpx, profile)
    schemas.save_detections(args.out, dets)
    print(f"simulated {len(dets)} detections")
    return EXIT_OK


def cmd_mix(args) -> int:
    sources: dict[str, list[str]] = {}
    for spec in args.source:
        code, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"--source expects CODE=PATH, got {spec!r}")
        root = Path(path)
        sources[code] = sorted(str(p) for p in root.glob("*") if p.is_file()) \
            if root.is_dir() else [path]
    counts: dict[str, int] = {}
    for spec in args.counts or []:
        code, _, n = spec.partition("=")
        counts[code] = int(n)
    manifest = simharness.build_mixture(sources, counts, seed=args.seed,
                                        with_replacement=args.with_replacement)
    schemas.save_manifest(args.manifest_out, manifest)
    print(f"variant {manifest.variant}: {len(manifest.entries)} entries")
    return EXIT_OK


# --- pipeline ----------------------------------------------------------------

def _resolve_source(spec: str, chip_params: dict) -> list:
    """A detection source is a JSON file or an 'exec:' command emitting one."""
    if spec.startswith("exec:"):
        env = dict(os.environ)
        for key, value in chip_params.items():
            env[f"B2N_{key.upper()}"] = str(value)
        proc = subprocess.run(shlex.split(spec[len("exec:"):]),
                              capture_output=True, env=env)
        if proc.returncode != 0:
            raise B2NError(f"detection source exited {proc.returncode}: "
                           f"{proc.stderr.decode(errors='replace')[:500]}")
        payload = json.loads(proc.stdout)
        if payload.get("schema") != schemas.SCHEMA:
            raise schemas.BadSchema("detection source returned wrong schema")
        return [schemas.detection_from_dict(d) for d in payload["detections"]]
    return schemas.load_detections(spec)


def run_pipeline(config: dict, report_path=None) -> dict:
    """stitch -> fuse -> evaluate, per the pipeline config mapping.

    Config keys: detections (file or exec:cmd), classifier (optional exec:cmd
    filling s_c), fusion_model (optional path), gt (annotation file),
    iou (default 0.5), nms_iou (default 0.5), chip (optional parameters
    forwarded to exec sources via B2N_* env vars), report (base path).
    """
    chip_params = config.get("chip", {})

    stage = "stitch"
    try:
        dets = _resolve_source(config["detections"], chip_params)
        dets = nms.suppress(dets, float(config.get("nms_iou", 0.5)))
    except Exception as exc:
        raise StageFailure(stage, exc) from exc

    stage = "fuse"
    try:
        classifier = config.get("classifier")
        if classifier and classifier.startswith("exec:"):
            payload = {"schema": schemas.SCHEMA,
                       "detections": [schemas.detection_to_dict(d) for d in dets]}
            proc = subprocess.run(shlex.split(classifier[len("exec:"):]),
                                  input=json.dumps(payload).encode(),
                                  capture_output=True)
            if proc.returncode != 0:
                raise B2NError(f"classifier source exited {proc.returncode}")
            dets = [schemas.detection_from_dict(d)
                    for d in json.loads(proc.stdout)["detections"]]
        if config.get("fusion_model"):
            model = schemas.load_fusion_model(config["fusion_model"])
            dets = fusion.apply_fusion(model, dets)
    except Exception as exc:
        raise StageFailure(stage, exc) from exc

    stage = "evaluate"
    try:
        gts = list(schemas.load_annotations(config["gt"]).gt)
        iou_thr = float(config.get("iou", 0.5))
        key = _rank_key(dets, "auto")
        records, _ = evaluator.match(dets, gts, iou_thr, key=key)
        points = evaluator.pr_curve(records, len(gts))
        report = {"ap50": evaluator.ap50(records, len(gts)),
                  "max_recall_100": evaluator.max_recall_at_imprecision(records, len(gts)),
                  "n_gt": len(gts), "n_detections": len(dets)}
        base = report_path or config.get("report")
        if base:
            schemas.save_report(base, report, points)
        report["pr_points"] = [list(p) for p in points]
        return report
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(stage, exc) from exc


def cmd_pipeline(args) -> int:
    config = json.loads(Path(args.config).read_text())
    report = run_pipeline(config, report_path=args.report)
    print(f"ap50={report['ap50']:.4f} max_recall_100={report['max_recall_100']:.4f}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="b2n", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chip", help="decompose a raster into overlapping chips")
    p.add_argument("--image", required=True)
    p.add_argument("--geo", help="geotransform sidecar (default <image>.geo.json)")
    p.add_argument("--chip-size", type=int, default=768)
    p.add_argument("--overlap", type=float, default=0.2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_chip)

    p = sub.add_parser("stitch", help="merge chip detections with world NMS")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("evaluate", help="match predictions to GT, report AP50")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--rank", choices=["auto", "s_d", "fused"], default="auto")
    p.add_argument("--report", required=True, help="base path for .json/.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fuse", help="fit a score-fusion model from validation pairs")
    p.add_argument("--neg-val", required=True)
    p.add_argument("--pos-val")
    p.add_argument("--grid", type=int, default=fusion.DEFAULT_GRID_SIZE)
    p.add_argument("--domain", default="-0.25:1.25",
                   help="lo:hi; pass as --domain=-0.25:1.25 (default %(default)s)")
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("score", help="apply a fusion model to detections")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("composite", help="build synthetic scenes from sprites")
    p.add_argument("--backgrounds", required=True)
    p.add_argument("--sprites", required=True)
    p.add_argument("--class", dest="target_class", required=True)
    p.add_argument("--policy", choices=["rows", "random"], default="random")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--objects", type=int, default=4, help="sprites per scene")
    p.add_argument("--spacing", type=float, default=40.0)
    p.add_argument("--jitter", type=float, default=2.0)
    p.add_argument("--orientation", type=float, default=0.0)
    p.add_argument("--paint", choices=["gray", "noise"], default="noise")
    p.add_argument("--blur", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("rep", help="apply a representation function")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mode", choices=["laplacian", "canny", "mask"], required=True)
    p.add_argument("--low", type=float, default=50.0)
    p.add_argument("--high", type=float, default=150.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--polygons", help="polygon JSON for mask mode")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rep)

    p = sub.add_parser("reskin", help="replace scenes with G(R(scene))")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--rep", choices=["laplacian", "canny"], default="laplacian")
    p.add_argument("--generator", default="stub",
                   help="'stub' or 'exec:<command reading/writing PNG on stdio>'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reskin)

    p = sub.add_parser("colormatch", help="linear histogram matching to style images")
    p.add_argument("--content", required=True)
    p.add_argument("--style")
    p.add_argument("--style-dir")
    p.add_argument("--ridge", type=float, default=colorxfer.DEFAULT_RIDGE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_colormatch)

    p = sub.add_parser("simulate", help="simulate detector output from GT")
    p.add_argument("--gt", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--area-mpx", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mix", help="build a dataset-mixture manifest")
    p.add_argument("--source", action="append", required=True,
                   metavar="CODE=PATH")
    p.add_argument("--counts", action="append", metavar="CODE=N")
    p.add_argument("--with-replacement", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest-out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("pipeline", help="run stitch -> fuse -> evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--report", help="override the config's report base path")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "colormatch" and not (args.style or args.style_dir):
        parser.error("colormatch needs --style or --style-dir")
    if args.command == "rep" and args.mode == "mask" and not args.polygons:
        parser.error("rep --mode mask needs --polygons")
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"b2n: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (B2NError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"b2n: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
