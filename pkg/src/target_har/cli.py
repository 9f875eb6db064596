"""Command-line entry point: `target-har <subcommand> [options]`.

Exit codes: 0 success, 2 configuration error, 3 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import pipeline
from .classifier import network
from .classifier.metrics import Metrics
from .classifier.training import evaluate, gradient_check, train
from .config import ConfigError, PipelineConfig, load_config
from .core_types import ActionLabel
from .ingest import (
    ParseError,
    RunManifest,
    SchemaError,
    parse_annotations,
    parse_clips,
    parse_detections,
    parse_embeddings,
    parse_manifest,
    parse_track,
    write_annotations,
    write_clips,
    write_detections,
    write_embeddings,
    write_manifest,
    write_metrics,
    write_summary_metrics,
    write_track,
    write_tracklets,
    write_verdicts,
)
from .long_term_fusion import FusionError, tracking_accuracy, tracklet_ground_truth
from .pose_evolution import EmptyClipError, save_joint_pngs
from .synthetic import ActionDatasetConfig, ScenarioConfig, generate_action_dataset, generate_scenario

logger = logging.getLogger("target_har")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 2, 3
SWEEP_CHANNELS = (2, 3, 4, 5)


class InputError(Exception):
    pass


def _read(path: Optional[str], what: str) -> bytes:
    if path is None:
        raise InputError(f"missing required input: {what}")
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None


def _write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data, encoding="utf-8")
    else:
        path.write_bytes(data)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# -- track -------------------------------------------------------------------


def _identities(data: bytes) -> Dict[int, bool]:
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    if not reader.fieldnames or not {"detection_id", "is_target"} <= set(reader.fieldnames):
        raise SchemaError("identities CSV needs detection_id and is_target columns", 1)
    out = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            out[int(row["detection_id"])] = row["is_target"].strip() in ("1", "true", "True")
        except ValueError:
            raise SchemaError("detection_id must be an integer", lineno) from None
    return out


def cmd_track(args, cfg: PipelineConfig, out: Path) -> int:
    frames = parse_detections(_read(args.detections, "detections"))
    manifest = parse_manifest(_read(args.manifest, "manifest")) if args.manifest else RunManifest()
    embeddings = parse_embeddings(_read(args.embeddings, "embeddings")) if args.embeddings else None
    result = pipeline.run_tracking(frames, embeddings, manifest, cfg)

    _write(out / "tracklets.jsonl", write_tracklets(result.tracklets))
    _write(out / "track.jsonl", write_track(result.track))
    _write(out / "verdicts.csv", write_verdicts(result.verdicts))
    total = len({d.frame_index for g in frames for d in g})
    summary = {
        "num_tracklets": len(result.tracklets),
        "num_fused": len(result.track.tracklets),
        "reference_tracklet": result.reference_id,
        "unsupervised_reference": result.unsupervised,
        "covered_frames": len(result.track.coverage()),
        "coverage_fraction": len(result.track.coverage()) / total if total else 0.0,
    }
    if args.identities:
        is_target = _identities(_read(args.identities, "identities"))
        identity = {k: int(v) for k, v in is_target.items()}
        truth = {t.tracklet_id: tracklet_ground_truth(t, identity, 1) for t in result.tracklets}
        summary["tracking_accuracy"] = tracking_accuracy(result.verdicts, truth)
    _write(out / "summary.json", _dump_json(summary))
    if result.unsupervised:
        logger.warning("no reference hint; used the longest tracklet %d", result.reference_id)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- featurize ---------------------------------------------------------------


def _load_clips(args, cfg: PipelineConfig):
    if args.clips:
        clips = parse_clips(_read(args.clips, "clips"))
        return [c for c in clips if c.present()], RunManifest()
    track = parse_track(_read(args.track, "track"))
    spans, warnings = parse_annotations(_read(args.annotations, "annotations"))
    for w in warnings:
        logger.warning("annotations: %s", w)
    manifest = parse_manifest(_read(args.manifest, "manifest")) if args.manifest else RunManifest()
    return pipeline.make_clips(track, spans, manifest.fps, cfg), manifest


def cmd_featurize(args, cfg: PipelineConfig, out: Path) -> int:
    clips, manifest = _load_clips(args, cfg)
    enc = pipeline.encoding_config(cfg, manifest)
    if not clips:
        logger.warning("no clips to featurize; writing an empty manifest")
    splits = pipeline.assign_splits(clips, cfg)
    entries = pipeline.write_dataset(out, clips, splits, enc)
    if args.png:
        by_id = {c.clip_id: c for c in clips}
        for e in entries:
            values = pipeline.featurize([by_id[e.clip_id]], enc)[0]
            save_joint_pngs(values, enc.channels, out / "png", e.clip_id)
    counts = {s: sum(e.split == s for e in entries) for s in ("train", "val", "test")}
    print(json.dumps({"clips": len(entries), "shape": list(enc.shape), **counts}, sort_keys=True))
    return EXIT_OK


# -- train / eval ------------------------------------------------------------


def _train_on(data_dir: Path, cfg: PipelineConfig):
    x, y, _, _ = pipeline.load_split(data_dir, "train")
    if len(x) == 0:
        raise InputError(f"no training clips in {data_dir}")
    vx, vy, _, _ = pipeline.load_split(data_dir, "val")
    spec = pipeline.network_spec(x.shape, cfg)
    return train(x, y, vx, vy, spec, pipeline.train_config(cfg))


def cmd_train(args, cfg: PipelineConfig, out: Path) -> int:
    model, history = _train_on(Path(args.data), cfg)
    _write(out / "model.thar", network.save_checkpoint(model))
    rows = [["epoch", "train_loss", "val_accuracy"]]
    rows += [[h.epoch, repr(h.train_loss), repr(h.val_accuracy)] for h in history]
    _write(out / "history.csv", _csv(rows))
    best = max(h.val_accuracy for h in history)
    print(json.dumps({"epochs": len(history), "best_val_accuracy": best}, sort_keys=True))
    return EXIT_OK


def save_confusion_png(metrics: Metrics, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [label.display for label in ActionLabel]
    cm = np.asarray(metrics.confusion)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center", color="black")
    ax.set_title(f"accuracy {metrics.accuracy:.3f}")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def cmd_eval(args, cfg: PipelineConfig, out: Path) -> int:
    try:
        model = network.load_checkpoint(_read(args.model, "model"))
    except SchemaError as exc:
        raise InputError(f"model: {exc}") from None
    x, y, _, _ = pipeline.load_split(Path(args.data), args.split)
    if len(x) == 0:
        raise InputError(f"no clips in split {args.split!r}")
    metrics = evaluate(model, x, y)
    _write(out / "metrics.csv", write_summary_metrics(metrics))
    _write(out / "confusion.csv", write_metrics(metrics))
    save_confusion_png(metrics, out / "confusion.png")
    print(json.dumps({"split": args.split, "accuracy": metrics.accuracy, "clips": int(len(y))}, sort_keys=True))
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------


def cmd_gradcheck(args, cfg: PipelineConfig, out: Path) -> int:
    report = gradient_check(seed=cfg.seed)
    worst = max(report.values())
    body = {"max_relative_error": worst, "per_parameter": report, "passed": worst < 1e-4}
    _write(out / "gradcheck.json", _dump_json(body))
    print(f"max relative error {worst:.3e} ({'ok' if worst < 1e-4 else 'FAIL'})")
    return EXIT_OK


# -- synth -------------------------------------------------------------------


def cmd_synth(args, cfg: PipelineConfig, out: Path) -> int:
    s = cfg.synth
    kind = args.kind or s.kind
    if kind == "scenario":
        # Default events that fall outside a short run are dropped.
        base = ScenarioConfig()
        occlusions = tuple(o for o in base.occlusions if o[0] < s.num_frames and o[2] < s.num_actors)
        changes = tuple(f for f in base.scene_changes if f < s.num_frames)
        scenario = generate_scenario(
            ScenarioConfig(
                num_actors=s.num_actors,
                num_frames=s.num_frames,
                occlusions=occlusions,
                scene_changes=changes,
                sigma_emb=s.sigma_emb,
                seed=cfg.seed,
            )
        )
        target = scenario.config.target
        _write(out / "detections.jsonl", write_detections(scenario.frames))
        _write(out / "embeddings.jsonl", write_embeddings(scenario.embeddings))
        _write(out / "manifest.toml", write_manifest(scenario.manifest))
        _write(out / "annotations.csv", write_annotations(scenario.annotations))
        rows = [["detection_id", "actor", "is_target"]]
        rows += [[did, a, int(a == target)] for did, a in sorted(scenario.identity.items())]
        _write(out / "identities.csv", _csv(rows))
        print(json.dumps({"kind": kind, "detections": len(scenario.identity)}, sort_keys=True))
    elif kind == "actions":
        data = generate_action_dataset(
            ActionDatasetConfig(clips_per_class=s.clips_per_class, distractors=s.distractors, seed=cfg.seed)
        )
        _write(out / "clips.jsonl", write_clips(data.clips))
        print(json.dumps({"kind": kind, "clips": len(data.clips)}, sort_keys=True))
    else:
        raise ConfigError(f"synth.kind must be 'scenario' or 'actions', got {kind!r}")
    return EXIT_OK


# -- sweep-channels ----------------------------------------------------------


def cmd_sweep(args, cfg: PipelineConfig, out: Path) -> int:
    import dataclasses

    clips = [c for c in parse_clips(_read(args.clips, "clips")) if c.present()]
    if not clips:
        raise InputError("no clips with target detections")
    splits = pipeline.assign_splits(clips, cfg)
    rows = [["channels", "val_accuracy", "epochs"]]
    for channels in SWEEP_CHANNELS:
        c_cfg = dataclasses.replace(cfg, encoding=dataclasses.replace(cfg.encoding, channels=channels))
        enc = pipeline.encoding_config(c_cfg)
        parts = {name: [c for c in clips if splits.get(c.clip_id) == name] for name in ("train", "val")}
        x = pipeline.featurize(parts["train"], enc)
        y = np.array([int(c.label) for c in parts["train"]])
        vx = pipeline.featurize(parts["val"], enc)
        vy = np.array([int(c.label) for c in parts["val"]])
        _, history = train(x, y, vx, vy, pipeline.network_spec(x.shape, c_cfg), pipeline.train_config(c_cfg))
        best = max(h.val_accuracy for h in history)
        logger.info("C=%d val accuracy %.4f", channels, best)
        rows.append([channels, repr(best), len(history)])
    _write(out / "sweep.csv", _csv(rows))
    print(_csv(rows), end="")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="root seed for every stage")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--channels", type=int, help="time-encoding channels C")
    common.add_argument("--scale", type=float, help="working resolution as a fraction of the source frame")
    common.add_argument("--tau-iou", type=float, help="minimum IoU for short-term linking")
    common.add_argument("--alpha", type=float, help="relative re-id acceptance factor")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="target-har", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common], help="link detections into tracklets and fuse the target track")
    p.add_argument("--detections", required=True)
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--identities", help="ground-truth CSV (detection_id,is_target) for accuracy reporting")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("featurize", parents=[common], help="cut clips and write pose-evolution tensors")
    p.add_argument("--track")
    p.add_argument("--annotations")
    p.add_argument("--manifest")
    p.add_argument("--clips", help="clip JSONL (alternative to --track/--annotations)")
    p.add_argument("--png", action="store_true", help="also write per-joint PNGs")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train the action classifier")
    p.add_argument("--data", required=True, help="featurize output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the backward pass")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic inputs")
    p.add_argument("--kind", choices=("scenario", "actions"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep-channels", parents=[common], help="validation accuracy for C in 2..5")
    p.add_argument("--clips", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def _overrides(args) -> dict:
    out: dict = {}
    if args.seed is not None:
        out["seed"] = args.seed
    enc = {k: v for k, v in (("channels", args.channels), ("scale", args.scale)) if v is not None}
    if enc:
        out["encoding"] = enc
    trk = {k: v for k, v in (("tau_iou", args.tau_iou), ("alpha", args.alpha)) if v is not None}
    if trk:
        out["tracking"] = trk
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "featurize" and not args.clips and not (args.track and args.annotations):
        print("input error: featurize needs --clips or both --track and --annotations", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args, cfg, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, ParseError, FusionError, EmptyClipError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
