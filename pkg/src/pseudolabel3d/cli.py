"""Command-line entry point.

Every subcommand writes its outputs into ``--out-dir``. On failure the
process exits nonzero and prints a single JSON object to stderr::

    {"error": "<ExceptionType>", "message": "...", "command": "<subcommand>"}
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

from .bev import export_bev_svg
from .errors import ParseError, PseudoLabelError, SchemaError
from .metrics import evaluate, label_accuracy
from .pipeline import (
    PipelineConfig,
    augment_scene,
    boxes_document,
    config_from_dict,
    label_scene,
    labels_document,
    lift_scene,
    run_pipeline,
    temporal_scene,
    write_outputs,
)
from .scene import Scene, labeled_box, load_scene, save_scene
from .synth import SynthConfig, generate_synthetic

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="seed for every random stream")
    parser.add_argument("--config", type=Path, default=default, help="JSON file with 'pipeline'/'synth' sections")
    parser.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS if suppress else Path("out"))
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pseudolabel3d", description="LiDAR pseudo-label pipeline")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic scene container")
    _global_flags(p, suppress=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--objects-per-class", type=int)
    p.add_argument("--drop-fraction", type=float)

    for name, text in [
        ("lift", "frustum lifting plus cross-view merge"),
        ("temporal", "lift, then bidirectional temporal refinement"),
        ("augment", "temporal boxes plus object-bank placement"),
        ("labels", "temporal boxes plus class labels"),
        ("run", "full pipeline, every stage output and the report"),
    ]:
        p = sub.add_parser(name, help=text)
        _global_flags(p, suppress=True)
        p.add_argument("scene", type=Path)

    p = sub.add_parser("eval", help="score a labels file (or a fresh run) against scene ground truth")
    _global_flags(p, suppress=True)
    p.add_argument("scene", type=Path)
    p.add_argument("--labels", type=Path, help="labels.json from the labels/run command")

    p = sub.add_parser("bev", help="render one frame as a bird's-eye-view SVG")
    _global_flags(p, suppress=True)
    p.add_argument("scene", type=Path)
    p.add_argument("--frame", type=int, default=0, help="frame index")
    p.add_argument("--labels", type=Path, help="labels.json; runs the pipeline when omitted")
    p.add_argument("--no-gt", action="store_true")
    p.add_argument("--point-stride", type=int, default=1)
    return parser


def _read_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path}: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) - {"pipeline", "synth"}:
        raise SchemaError("config must be an object with optional 'pipeline' and 'synth' sections")
    return doc


def _pipeline_config(args, doc: dict) -> PipelineConfig:
    cfg = config_from_dict(doc.get("pipeline", {}))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _synth_config(args, doc: dict) -> SynthConfig:
    opts = dict(doc.get("synth", {}))
    if "classes" in opts and opts["classes"] is not None:
        opts["classes"] = tuple(opts["classes"])
    for key in ("frames", "objects_per_class", "drop_fraction"):
        value = getattr(args, key, None)
        if value is not None:
            opts["n_frames" if key == "frames" else key] = value
    if args.seed is not None:
        opts["rng_seed"] = args.seed
    return SynthConfig(**opts)


def _dump(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _load_labels(path: Path, scene: Scene) -> list:
    try:
        doc = json.loads(Path(path).read_text())
        frames = doc["frames"]
        labels = [[labeled_box(b) for b in f["labels"]] for f in frames]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"labels file {path}: {exc}") from exc
    if len(labels) != len(scene.frames):
        raise SchemaError(f"labels file covers {len(labels)} frames, scene has {len(scene.frames)}")
    return labels


def _cmd_synth(args, doc) -> dict:
    scene = generate_synthetic(_synth_config(args, doc))
    save_scene(scene, args.out_dir)
    return {"scene": str(args.out_dir), "frames": len(scene.frames)}


def _cmd_stage(args, doc) -> dict:
    scene = load_scene(args.scene)
    cfg = _pipeline_config(args, doc)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    lifted, merged = lift_scene(scene, cfg, args.threads)
    written = [
        _dump(out / "boxes_lift.json", boxes_document(scene, lifted, "lift")),
        _dump(out / "boxes_merged.json", boxes_document(scene, merged, "merged")),
    ]
    if args.command == "lift":
        return {"written": [str(p) for p in written]}
    refined = temporal_scene(scene, merged, cfg, args.threads) if cfg.temporal_enabled else merged
    written.append(_dump(out / "boxes_temporal.json", boxes_document(scene, refined, "temporal")))
    if args.command == "augment":
        final, _, bank = augment_scene(scene, refined, cfg, args.threads)
        written.append(_dump(out / "boxes_final.json", boxes_document(scene, final, "spatial")))
        return {"written": [str(p) for p in written], "bank_size": len(bank)}
    if args.command == "labels":
        _, labels = label_scene(scene, refined, cfg, args.threads)
        written.append(_dump(out / "labels.json", labels_document(scene, labels)))
    return {"written": [str(p) for p in written]}


def _cmd_run(args, doc) -> dict:
    scene = load_scene(args.scene)
    result = run_pipeline(scene, _pipeline_config(args, doc), args.threads)
    written = write_outputs(scene, result, args.out_dir)
    summary = {"written": [str(p) for p in written]}
    if result.report is not None:
        summary["mAP"] = result.report.mean_ap
        summary["label_accuracy"] = result.label_accuracy
    return summary


def _cmd_eval(args, doc) -> dict:
    scene = load_scene(args.scene)
    cfg = _pipeline_config(args, doc)
    if any(f.gt_boxes is None for f in scene.frames):
        raise SchemaError("scene carries no ground truth to evaluate against")
    if args.labels is not None:
        labels = _load_labels(args.labels, scene)
    else:
        labels = run_pipeline(scene, cfg, args.threads).labels
    gts = [f.gt_boxes for f in scene.frames]
    report = evaluate(labels, gts, cfg.eval)
    acc, n = label_accuracy(labels, gts, cfg.label_match_threshold)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    doc_out = report.to_dict()
    doc_out["label_accuracy"] = {"value": acc, "n_matched": n}
    _dump(out / "report.json", doc_out)
    (out / "report.csv").write_text(report.to_table())
    return {"mAP": report.mean_ap, "label_accuracy": acc, "written": [str(out / "report.json"), str(out / "report.csv")]}


def _cmd_bev(args, doc) -> dict:
    scene = load_scene(args.scene)
    if not 0 <= args.frame < len(scene.frames):
        raise SchemaError(f"frame index {args.frame} outside 0..{len(scene.frames) - 1}")
    if args.labels is not None:
        labels = _load_labels(args.labels, scene)
    else:
        labels = run_pipeline(scene, _pipeline_config(args, doc), args.threads).labels
    frame = scene.frames[args.frame]
    gt = None if args.no_gt else frame.gt_boxes
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = export_bev_svg(frame, labels[args.frame], gt, args.out_dir / f"bev_{frame.frame_id}.svg", args.point_stride)
    return {"written": [str(path)]}


COMMANDS = {
    "synth": _cmd_synth,
    "lift": _cmd_stage,
    "temporal": _cmd_stage,
    "augment": _cmd_stage,
    "labels": _cmd_stage,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "bev": _cmd_bev,
}


def _fail(kind: str, message: str, command: Optional[str], code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        summary = COMMANDS[command](args, _read_config(args.config))
    except UsageError as exc:
        return _fail("UsageError", str(exc), command, EXIT_USAGE)
    except (PseudoLabelError, OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc), command, EXIT_FAILURE)
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
