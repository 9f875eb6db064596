"""Long-term tracking: prune tracklets and fuse the target's by appearance distance."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core_types import BoundingBox, Detection, Track, Tracklet

logger = logging.getLogger(__name__)

TARGET = "target"
NON_TARGET = "non-target"


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    min_length: int = 15
    min_mean_keypoints: float = 5.0
    keypoint_floor: float = 0.05
    # Exactly one rule is active: absolute threshold when set, else relative.
    abs_threshold: Optional[float] = None
    alpha: float = 0.6

    def __post_init__(self):
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")
        if not 0.0 <= self.min_mean_keypoints <= 17.0:
            raise ValueError("min_mean_keypoints must lie in [0, 17]")
        if self.abs_threshold is not None and self.abs_threshold <= 0:
            raise ValueError("abs_threshold must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class TrackletVerdict:
    tracklet_id: int
    predicted: str
    distance: Optional[float]
    reason: str  # pruned | fused | rejected


def mean_confident_keypoints(t: Tracklet, floor: float) -> float:
    counts = [sum(1 for k in d.keypoints if k.confidence >= floor) for d in t.detections]
    return float(np.mean(counts))


def prune(tracklets: Iterable[Tracklet], cfg: FusionConfig = FusionConfig()) -> List[Tracklet]:
    return [
        t
        for t in tracklets
        if len(t) >= cfg.min_length and mean_confident_keypoints(t, cfg.keypoint_floor) >= cfg.min_mean_keypoints
    ]


def sample_representative(t: Tracklet) -> Detection:
    """Highest-scoring detection; the earliest frame wins ties."""
    best = t.detections[0]
    for d in t.detections[1:]:
        if d.score > best.score:
            best = d
    return best


def affinity(f_i, f_ref) -> float:
    """Euclidean distance between two appearance vectors."""
    a = np.asarray(f_i, dtype=np.float64)
    b = np.asarray(f_ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def fallback_descriptor(image: np.ndarray, box: BoundingBox, grid: int = 3, bins: int = 8) -> np.ndarray:
    """Spatial color histogram of the box crop, L2-normalized.

    `image` is an (H, W, channels) uint8 array. The crop is split into a
    grid x grid layout with one `bins`-bin histogram per channel per cell.
    """
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, channels = img.shape
    x0 = int(np.clip(np.floor(box.x_min), 0, w))
    x1 = int(np.clip(np.ceil(box.x_max), 0, w))
    y0 = int(np.clip(np.floor(box.y_min), 0, h))
    y1 = int(np.clip(np.ceil(box.y_max), 0, h))
    dim = grid * grid * channels * bins
    if x1 <= x0 or y1 <= y0:
        logger.warning("zero-area crop for box %s; using zero descriptor", box)
        return np.zeros(dim)
    crop = img[y0:y1, x0:x1].astype(np.float64)
    ys = np.linspace(0, crop.shape[0], grid + 1).round().astype(int)
    xs = np.linspace(0, crop.shape[1], grid + 1).round().astype(int)
    parts = []
    for gy in range(grid):
        for gx in range(grid):
            cell = crop[ys[gy]:ys[gy + 1], xs[gx]:xs[gx + 1]]
            for ch in range(channels):
                hist, _ = np.histogram(cell[..., ch], bins=bins, range=(0.0, 256.0))
                parts.append(hist)
    desc = np.concatenate(parts).astype(np.float64)
    norm = np.linalg.norm(desc)
    return desc / norm if norm > 0 else desc


def representative_embeddings(
    tracklets: Sequence[Tracklet],
    embeddings: Optional[Mapping[int, Sequence[float]]] = None,
    frame_loader=None,
) -> Dict[int, np.ndarray]:
    """tracklet_id -> representative appearance vector.

    File embeddings (or ones attached to detections) take precedence; the
    color-histogram fallback is used only when none are available. Mixing the
    two sources in one run raises FusionError.
    """
    embeddings = embeddings or {}
    out: Dict[int, np.ndarray] = {}
    sources = set()
    for t in tracklets:
        rep = sample_representative(t)
        vec = embeddings.get(rep.detection_id)
        if vec is None and rep.embedding is not None:
            vec = rep.embedding
        if vec is not None:
            sources.add("file")
            out[t.tracklet_id] = np.asarray(vec, dtype=np.float64)
        elif frame_loader is not None:
            sources.add("fallback")
            out[t.tracklet_id] = fallback_descriptor(frame_loader(rep.frame_index), rep.box)
        else:
            raise FusionError(f"no embedding for detection {rep.detection_id} (tracklet {t.tracklet_id})")
    if len(sources) > 1:
        raise FusionError("embeddings mix file-provided and fallback descriptors; distances are not comparable")
    return out


def accept_threshold(distances: Sequence[float], cfg: FusionConfig) -> float:
    if cfg.abs_threshold is not None:
        return cfg.abs_threshold
    if len(distances) == 0:
        return 0.0
    return cfg.alpha * float(np.median(distances))


def pairwise_distances(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Condensed upper-triangle Euclidean distances."""
    if len(vectors) < 2:
        return np.zeros(0)
    x = np.stack(vectors)
    iu = np.triu_indices(len(vectors), k=1)
    diff = x[iu[0]] - x[iu[1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _overlaps(a: Tracklet, b: Tracklet) -> bool:
    return a.start_frame <= b.end_frame and b.start_frame <= a.end_frame


def fuse_target_track(
    tracklets: Sequence[Tracklet],
    reference: Tracklet,
    embeddings: Optional[Mapping[int, Sequence[float]]] = None,
    cfg: FusionConfig = FusionConfig(),
    frame_loader=None,
) -> Tuple[Track, List[TrackletVerdict]]:
    """Label tracklets target / non-target against the reference and fuse the targets.

    The reference bypasses pruning and is always accepted. Accepted
    tracklets that overlap in time are resolved in favor of the smaller
    distance.
    """
    survivors = prune(tracklets, cfg)
    survivor_ids = {t.tracklet_id for t in survivors}
    if reference.tracklet_id not in survivor_ids:
        survivors.append(reference)
        survivor_ids.add(reference.tracklet_id)
    if not survivors:
        raise FusionError("no tracklets survive pruning")

    vectors = representative_embeddings(survivors, embeddings, frame_loader)
    ref_vec = vectors[reference.tracklet_id]
    ordered = sorted(survivors, key=lambda t: t.tracklet_id)
    distances = {t.tracklet_id: affinity(vectors[t.tracklet_id], ref_vec) for t in ordered}
    threshold = accept_threshold(pairwise_distances([vectors[t.tracklet_id] for t in ordered]), cfg)

    candidates = [t for t in ordered if t.tracklet_id == reference.tracklet_id or distances[t.tracklet_id] < threshold]
    # Reference first, then by distance; ties by tracklet id.
    candidates.sort(key=lambda t: (t.tracklet_id != reference.tracklet_id, distances[t.tracklet_id], t.tracklet_id))
    kept: List[Tracklet] = []
    for t in candidates:
        if all(not _overlaps(t, k) for k in kept):
            kept.append(t)
    kept_ids = {t.tracklet_id for t in kept}

    verdicts = []
    for t in sorted(tracklets, key=lambda t: t.tracklet_id):
        tid = t.tracklet_id
        if tid not in survivor_ids:
            verdicts.append(TrackletVerdict(tid, NON_TARGET, None, "pruned"))
        elif tid in kept_ids:
            verdicts.append(TrackletVerdict(tid, TARGET, distances[tid], "fused"))
        else:
            verdicts.append(TrackletVerdict(tid, NON_TARGET, distances[tid], "rejected"))
    if reference.tracklet_id not in {t.tracklet_id for t in tracklets}:
        verdicts.append(TrackletVerdict(reference.tracklet_id, TARGET, 0.0, "fused"))
    track = Track(tuple(sorted(kept, key=lambda t: t.start_frame)))
    return track, verdicts


def select_reference(
    tracklets: Sequence[Tracklet],
    cfg: FusionConfig = FusionConfig(),
    tracklet_id: Optional[int] = None,
    detection_id: Optional[int] = None,
) -> Tuple[Tracklet, bool]:
    """Resolve the reference hint. Returns (reference, unsupervised).

    Without a hint the longest surviving tracklet is proposed; a tie for
    longest is ambiguous and raises FusionError.
    """
    if tracklet_id is not None:
        for t in tracklets:
            if t.tracklet_id == tracklet_id:
                return t, False
        raise FusionError(f"reference tracklet {tracklet_id} not found")
    if detection_id is not None:
        for t in tracklets:
            if any(d.detection_id == detection_id for d in t.detections):
                return t, False
        raise FusionError(f"reference detection {detection_id} not found in any tracklet")
    survivors = prune(tracklets, cfg)
    if not survivors:
        raise FusionError("no reference hint given and no tracklet survives pruning")
    longest = max(len(t) for t in survivors)
    top = [t for t in survivors if len(t) == longest]
    if len(top) > 1:
        raise FusionError(
            f"no reference hint given and {len(top)} tracklets tie for longest ({longest} frames); "
            "set reference_tracklet or reference_detection in the manifest"
        )
    return top[0], True


def tracklet_ground_truth(t: Tracklet, identity_of: Mapping[int, int], target_identity: int) -> bool:
    """True when most of the tracklet's detections belong to the target."""
    hits = sum(1 for d in t.detections if identity_of.get(d.detection_id) == target_identity)
    return 2 * hits > len(t)


def tracking_accuracy(verdicts: Sequence[TrackletVerdict], truth: Mapping[int, bool]) -> float:
    """Binary accuracy with pruned tracklets counted as predicted non-target."""
    if not verdicts:
        return 1.0
    correct = 0
    for v in verdicts:
        if v.tracklet_id not in truth:
            raise KeyError(f"no ground-truth label for tracklet {v.tracklet_id}")
        correct += (v.predicted == TARGET) == bool(truth[v.tracklet_id])
    return correct / len(verdicts)
