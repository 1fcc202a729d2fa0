"""Command-line entry point: plan, features, export-viz, oracle.

Exit codes: 0 ok, 1 I/O or oracle mismatch, 2 configuration, 3 perception,
4 planning, 5 no feasible grasp for the arm.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import __version__, oracle, pipeline
from .config import load_config
from .errors import IoError, VoiceGraspError
from .features import extract_features

log = logging.getLogger("voicegrasp")

# (flag, dotted config key, type, help)
OVERRIDES = (
    ("--seed", "dgcg.seed", int, "sampling / refinement seed"),
    ("--samples", "dgcg.n", int, "number of Gaussian pose samples"),
    ("--pinch-alignment", "dgcg.pinch_alignment", str, "parallel or perpendicular"),
    ("--standoff", "dgcg.standoff", float, "hand back-off along its approach normal (m)"),
    ("--tilt", "dgcg.tilt", float, "rotation about the pinch axis (rad)"),
    ("--edges", "dgr.m", int, "friction-cone edges per contact"),
    ("--metric", "dgr.metric", str, "inscribed or enclosing"),
    ("--material", "dgr.material", str, "skip material classification"),
    ("--gate", "rere.gate", float, "alignment gate threshold"),
    ("--stomp-iterations", "motion.stomp.iterations", int, "refinement iterations"),
)


def _add_overrides(p):
    for flag, _, typ, help_ in OVERRIDES:
        p.add_argument(flag, type=typ, default=None, help=help_)
    p.add_argument("--no-enrich", action="store_true", help="skip instruction enrichment")


def _config(args):
    cfg = load_config(args.config)
    for flag, key, _, _ in OVERRIDES:
        cfg.override(key, getattr(args, flag.lstrip("-").replace("-", "_"), None))
    if getattr(args, "no_enrich", False):
        cfg.doc["rere"]["enabled"] = False
    return cfg


def cmd_plan(args):
    cfg = _config(args)
    result, _ = pipeline.plan(cfg, text=args.text, audio_path=args.audio)
    text = result.to_json(include_timing=args.timing)
    timing = " ".join(f"{k}={v:.1f}ms" for k, v in result.timing_ms.items())
    print(f"timing: {timing}", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _annotate(scene, of):
    img = np.zeros(scene.mask.shape + (3,), np.uint8)
    img[of.mask.bits] = (90, 90, 90)
    sk = of.skeleton.pixels
    img[sk[:, 1], sk[:, 0]] = (255, 255, 255)
    im = Image.fromarray(img)
    draw = ImageDraw.Draw(im)
    x, y = of.cstar.pixel
    tip = scene.intrinsics.project(of.feature.origin + 0.05 * of.feature.direction)[0]
    draw.line([(x, y), (float(tip[0]), float(tip[1]))], fill=(40, 200, 40), width=2)
    draw.rectangle([x - 2, y - 2, x + 2, y + 2], fill=(230, 30, 30))
    return im


def cmd_features(args):
    cfg = load_config(args.config)
    res = pipeline.load_resources(cfg)
    of = extract_features(res.scene, cfg["features"]["tangent_radius_px"])
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _annotate(res.scene, of).save(out / "features.png")
        (out / "features.json").write_text(
            json.dumps(pipeline.feature_summary(of), indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write features to {out}: {exc}") from None
    print(json.dumps(pipeline.feature_summary(of), indent=2))
    return 0


def cmd_export_viz(args):
    cfg = load_config(args.config)
    try:
        doc = json.loads(Path(args.result).read_text())
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read result {args.result}: {exc}") from None
    written = pipeline.export_viz(cfg, doc, args.out)
    if not written:
        print("warning: result has no ranked grasps; no files written", file=sys.stderr)
    for p in written:
        print(p)
    return 0


def cmd_oracle(args):
    if args.kind == "force-closure":
        rep = oracle.run_force_closure(args.trials, args.seed, args.edges)
    else:
        rep = oracle.run_quality(args.trials, args.seed, args.edges)
    print("\n".join(rep.lines()))
    return 0 if rep.ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="voicegrasp", description="Voice-to-grasp planning engine.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the full pipeline and print the result document")
    p.add_argument("--config", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="instruction text")
    src.add_argument("--audio", help="recorded instruction (mono PCM WAV)")
    p.add_argument("--out", help="also write the result document here")
    p.add_argument("--timing", action="store_true", help="embed stage timings in the document")
    _add_overrides(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("features", help="dump skeleton, C*, tangent, principal axis and V")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("export-viz", help="write geometry of the best grasp for viewers")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True, help="result document from `plan`")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_export_viz)

    p = sub.add_parser("oracle", help="compare the engine against brute-force references")
    p.add_argument("kind", choices=("force-closure", "quality"))
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--edges", type=int, default=8)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VoiceGraspError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
