"""Stage glue shared by the CLI and the experiment scripts."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .classifier.network import NetworkSpec
from .classifier.training import TrainConfig
from .clipper import balance, segment_clips, split_assignment, split_by_subject
from .config import PipelineConfig
from .core_types import ActionClip, ActionLabel, Track
from .ingest import AnnotationSpan, ClipEntry, RunManifest, parse_clip_manifest, read_tensor, write_clip_manifest, write_tensor
from .long_term_fusion import FusionConfig, TrackletVerdict, fuse_target_track, select_reference
from .pose_evolution import EncodingConfig, pose_evolution_map
from .short_term_tracker import build_tracklets

logger = logging.getLogger(__name__)

TENSOR_DIR = "tensors"
CLIP_MANIFEST = "clips.csv"


def encoding_config(cfg: PipelineConfig, manifest: Optional[RunManifest] = None) -> EncodingConfig:
    e = cfg.encoding
    m = manifest or RunManifest()
    return EncodingConfig(e.channels, e.sigma, e.scale, e.confidence_floor, m.frame_height, m.frame_width)


def fusion_config(cfg: PipelineConfig) -> FusionConfig:
    t = cfg.tracking
    return FusionConfig(t.min_length, t.min_mean_keypoints, t.keypoint_floor, t.abs_threshold, t.alpha)


def train_config(cfg: PipelineConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(t.lr, t.batch_size, t.dropout, t.epochs, cfg.seed, t.sigma_aug, t.stop_at_accuracy, t.bn_recalibration)


@dataclass
class TrackingResult:
    tracklets: list
    track: Track
    verdicts: List[TrackletVerdict]
    reference_id: int
    unsupervised: bool


def run_tracking(frames, embeddings, manifest: RunManifest, cfg: PipelineConfig) -> TrackingResult:
    tracklets = build_tracklets(frames, cfg.tracking.tau_iou)
    fcfg = fusion_config(cfg)
    ref, unsupervised = select_reference(tracklets, fcfg, manifest.reference_tracklet, manifest.reference_detection)
    track, verdicts = fuse_target_track(tracklets, ref, embeddings, fcfg)
    return TrackingResult(tracklets, track, verdicts, ref.tracklet_id, unsupervised)


def make_clips(track: Track, spans: Sequence[AnnotationSpan], fps: float, cfg: PipelineConfig) -> List[ActionClip]:
    c = cfg.clips
    clips = segment_clips(track, spans, fps, c.min_dur, c.max_dur)
    return _drop_empty(clips)


def _drop_empty(clips: Sequence[ActionClip]) -> List[ActionClip]:
    kept = [c for c in clips if c.present()]
    if len(kept) < len(clips):
        logger.warning("dropped %d clips without target detections", len(clips) - len(kept))
    return kept


def assign_splits(clips: Sequence[ActionClip], cfg: PipelineConfig) -> Dict[str, str]:
    c = cfg.clips
    if c.balance_cap is not None:
        clips = balance(clips, c.balance_cap, seed=_stage(cfg, "balance"))
    splits = split_by_subject(clips, c.test_subjects, (), c.val_fraction, seed=_stage(cfg, "split"))
    return split_assignment(splits)


def _stage(cfg: PipelineConfig, name: str) -> int:
    from .synthetic import stage_seed

    return stage_seed(cfg.seed, name)


def featurize(clips: Sequence[ActionClip], enc: EncodingConfig) -> np.ndarray:
    """(N, 14*C, H, W) float32 stack of pose-evolution maps."""
    out = np.empty((len(clips),) + enc.shape, dtype=np.float32)
    for i, clip in enumerate(clips):
        out[i] = pose_evolution_map(clip, enc).values
    return out


def write_dataset(out_dir: Path, clips: Sequence[ActionClip], splits: Dict[str, str], enc: EncodingConfig) -> List[ClipEntry]:
    """Write the clip manifest and one tensor file per assigned clip."""
    out_dir = Path(out_dir)
    (out_dir / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for clip in clips:
        split = splits.get(clip.clip_id)
        if split is None:
            continue
        values = pose_evolution_map(clip, enc).values.astype(np.float32)
        blob = write_tensor(values, enc.channels, enc.scale, clip_id=clip.clip_id, label=clip.label.display)
        (out_dir / TENSOR_DIR / f"{clip.clip_id}.pev").write_bytes(blob)
        entries.append(ClipEntry(clip.clip_id, clip.subject_id, clip.label, clip.start_frame, clip.end_frame, split))
    (out_dir / CLIP_MANIFEST).write_text(write_clip_manifest(entries), encoding="utf-8")
    return entries


def load_split(data_dir: Path, split: str) -> Tuple[np.ndarray, np.ndarray, List[str], dict]:
    """(x, y, clip ids, tensor header) for one split of a featurized dataset."""
    data_dir = Path(data_dir)
    entries = [e for e in parse_clip_manifest((data_dir / CLIP_MANIFEST).read_bytes()) if e.split == split]
    xs, meta = [], {}
    for e in entries:
        meta, values = read_tensor((data_dir / TENSOR_DIR / f"{e.clip_id}.pev").read_bytes())
        xs.append(values)
    x = np.stack(xs) if xs else np.zeros((0, 0, 0, 0), dtype=np.float32)
    y = np.array([int(e.label) for e in entries], dtype=np.int64)
    return x, y, [e.clip_id for e in entries], meta


def network_spec(x_shape: Sequence[int], cfg: PipelineConfig) -> NetworkSpec:
    _, channels, height, width = x_shape
    return NetworkSpec(channels, height, width, tuple(cfg.train.block_filters), len(ActionLabel), cfg.train.dropout)
