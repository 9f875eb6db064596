"""Pose-evolution maps: time-colored, time-aggregated joint heatmaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core_types import NUM_JOINTS, ActionClip, Detection, Keypoint, PoseEvolutionMap, HEAD_KEYPOINTS

NORM_EPS = 1e-12


class EmptyClipError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingConfig:
    channels: int = 3
    sigma: float = 2.0  # heatmap std in working-resolution pixels
    scale: float = 0.125
    confidence_floor: float = 0.05
    frame_height: int = 1080
    frame_width: int = 1920

    def __post_init__(self):
        if self.channels < 2:
            raise ValueError("channels must be >= 2")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must lie in (0, 1]")

    @property
    def height(self) -> int:
        return int(round(self.frame_height * self.scale))

    @property
    def width(self) -> int:
        return int(round(self.frame_width * self.scale))

    @property
    def shape(self):
        return (NUM_JOINTS * self.channels, self.height, self.width)


def reduce_head(pose17, floor: float = 0.05) -> np.ndarray:
    """Map COCO-17 keypoints onto the 14-joint skeleton; returns a (14, 3) array.

    Row 0 is the head: the confidence-weighted centroid of the five face
    keypoints at or above `floor`, carrying the largest face confidence (zero
    when none pass). Row 1 is the neck, the shoulder midpoint, present only
    when both shoulders pass `floor`. Rows 2-13 are COCO joints 5-16.
    """
    if isinstance(pose17, Detection):
        pose17 = pose17.keypoint_array()
    elif len(pose17) and isinstance(pose17[0], Keypoint):
        pose17 = np.array([(k.x, k.y, k.confidence) for k in pose17])
    p = np.asarray(pose17, dtype=np.float64)
    head = p[list(HEAD_KEYPOINTS)]
    ok = head[:, 2] >= floor
    out = np.zeros((NUM_JOINTS, 3))
    out[2:] = p[5:]
    if ok.any() and head[ok, 2].sum() > 0:
        w = head[ok, 2]
        out[0, :2] = (head[ok, :2] * w[:, None]).sum(axis=0) / w.sum()
        out[0, 2] = head[:, 2].max()
    shoulders = p[5:7]
    if np.all(shoulders[:, 2] >= floor):
        out[1, :2] = shoulders[:, :2].mean(axis=0)
        out[1, 2] = shoulders[:, 2].min()
    return out


def _axis_gaussians(centers: np.ndarray, size: int, sigma: float) -> np.ndarray:
    grid = np.arange(size, dtype=np.float64)
    return np.exp(-((grid[None, :] - centers[:, None]) ** 2) / (2.0 * sigma * sigma))


def joint_heatmap(kp, height: int, width: int, sigma: float, floor: float = 0.05) -> np.ndarray:
    """conf * Gaussian around (x, y), sampled at integer pixel centers."""
    if isinstance(kp, Keypoint):
        x, y, conf = kp.x, kp.y, kp.confidence
    else:
        x, y, conf = kp
    if conf < floor or conf <= 0:
        return np.zeros((height, width))
    gy = _axis_gaussians(np.array([y]), height, sigma)[0]
    gx = _axis_gaussians(np.array([x]), width, sigma)[0]
    return conf * np.outer(gy, gx)


def time_encoding(t: int, num_frames: int, channels: int) -> np.ndarray:
    """Piecewise-linear time weights over `channels` channels; sums to 1."""
    if num_frames < 1 or not 0 <= t < num_frames:
        raise ValueError("need 0 <= t < T")
    u = t / (num_frames - 1) if num_frames > 1 else 0.0
    pos = u * (channels - 1)
    k = min(int(np.floor(pos)), channels - 2)
    s = pos - k
    out = np.zeros(channels)
    out[k] = 1.0 - s
    out[k + 1] = s
    return out


def time_encoding_matrix(num_frames: int, channels: int) -> np.ndarray:
    """(T, C) stack of `time_encoding` rows."""
    return np.stack([time_encoding(t, num_frames, channels) for t in range(num_frames)])


def _normalize_channels(raw: np.ndarray) -> np.ndarray:
    peak = raw.reshape(raw.shape[0], -1).max(axis=1)
    out = np.zeros_like(raw)
    live = peak > NORM_EPS
    out[live] = raw[live] / peak[live, None, None]
    return np.clip(out, 0.0, 1.0)


def joint_evolution(seq: np.ndarray, channels: int) -> np.ndarray:
    """(T, H, W) heatmap sequence -> (C, H, W) per-channel max-normalized evolution."""
    seq = np.asarray(seq, dtype=np.float64)
    weights = time_encoding_matrix(seq.shape[0], channels)
    raw = np.tensordot(weights.T, seq, axes=(1, 0))
    return _normalize_channels(raw)


def _clip_poses(clip: ActionClip, floor: float) -> tuple:
    """(T, 14, 3) reduced poses with zero rows for missing frames."""
    frames = clip.detections
    poses = np.zeros((len(frames), NUM_JOINTS, 3))
    for t, d in enumerate(frames):
        if d is not None:
            poses[t] = reduce_head(d, floor)
    return poses, np.array([d is not None for d in frames])


def evolution_from_poses(poses: np.ndarray, cfg: EncodingConfig, present: Optional[np.ndarray] = None) -> np.ndarray:
    """(T, 14, 3) source-resolution poses -> (14*C, H, W) float array.

    The Gaussian is separable, so each joint's time-weighted sum reduces to a
    (H, T) @ (T, W) product per channel.
    """
    poses = np.asarray(poses, dtype=np.float64)
    num_frames = poses.shape[0]
    if present is None:
        present = np.ones(num_frames, dtype=bool)
    if not present.any():
        raise EmptyClipError("clip has no target detections")
    weights = time_encoding_matrix(num_frames, cfg.channels)
    h, w = cfg.height, cfg.width
    out = np.empty((NUM_JOINTS, cfg.channels, h, w))
    for j in range(NUM_JOINTS):
        x = poses[:, j, 0] * cfg.scale
        y = poses[:, j, 1] * cfg.scale
        conf = np.where(present & (poses[:, j, 2] >= cfg.confidence_floor), poses[:, j, 2], 0.0)
        gy = _axis_gaussians(y, h, cfg.sigma) * conf[:, None]
        gx = _axis_gaussians(x, w, cfg.sigma)
        raw = np.einsum("tc,ty,tx->cyx", weights, gy, gx, optimize=True)
        out[j] = _normalize_channels(raw)
    return out.reshape(NUM_JOINTS * cfg.channels, h, w)


def pose_evolution_map(clip: ActionClip, cfg: EncodingConfig = EncodingConfig()) -> PoseEvolutionMap:
    if not clip.present():
        raise EmptyClipError(f"clip {clip.clip_id or clip.start_frame} has no target detections")
    poses, present = _clip_poses(clip, cfg.confidence_floor)
    return PoseEvolutionMap(evolution_from_poses(poses, cfg, present), cfg.channels)


def multi_person_evolution(frames: Sequence[Sequence[Detection]], cfg: EncodingConfig) -> np.ndarray:
    """Evolution map with every detected person's joints, no target selection.

    Each frame's joint heatmap is the pixelwise max over people. Used for the
    no-tracking baseline.
    """
    num_frames = len(frames)
    if not any(frames):
        raise EmptyClipError("no detections in any frame")
    weights = time_encoding_matrix(num_frames, cfg.channels)
    h, w = cfg.height, cfg.width
    out = np.empty((NUM_JOINTS, cfg.channels, h, w))
    reduced = [[reduce_head(d, cfg.confidence_floor) for d in group] for group in frames]
    for j in range(NUM_JOINTS):
        seq = np.zeros((num_frames, h, w))
        for t, group in enumerate(reduced):
            for pose in group:
                x, y, conf = pose[j]
                if conf >= cfg.confidence_floor:
                    gy = _axis_gaussians(np.array([y * cfg.scale]), h, cfg.sigma)[0] * conf
                    gx = _axis_gaussians(np.array([x * cfg.scale]), w, cfg.sigma)[0]
                    np.maximum(seq[t], np.outer(gy, gx), out=seq[t])
        out[j] = _normalize_channels(np.tensordot(weights.T, seq, axes=(1, 0)))
    return out.reshape(NUM_JOINTS * cfg.channels, h, w)


def augment_noise(values: np.ndarray, sigma: float, seed=None) -> np.ndarray:
    """Add i.i.d. Gaussian noise and clamp to [0, 1]."""
    values = np.asarray(values)
    if sigma == 0:
        return values.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noisy = values + rng.normal(0.0, sigma, size=values.shape).astype(values.dtype)
    return np.clip(noisy, 0.0, 1.0)


def save_joint_pngs(values: np.ndarray, channels: int, out_dir, stem: str) -> list:
    """Write one PNG per joint; channels map to RGB for C=3, else the first three."""
    from pathlib import Path

    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    per_joint = values.reshape(NUM_JOINTS, channels, values.shape[-2], values.shape[-1])
    for j in range(NUM_JOINTS):
        rgb = np.zeros((3,) + per_joint.shape[2:])
        take = min(3, channels)
        rgb[:take] = per_joint[j, :take]
        img = Image.fromarray((np.clip(rgb, 0, 1).transpose(1, 2, 0) * 255).round().astype(np.uint8))
        path = out_dir / f"{stem}_joint{j:02d}.png"
        img.save(path)
        paths.append(path)
    return paths
