"""Deterministic synthetic scenes: multi-actor detection streams and labeled pose clips.

Actors are side-view stick figures: a head point (expanded to the five COCO
face keypoints) plus the twelve COCO limb joints. The neck of the 14-joint
skeleton is derived from the shoulders downstream. Coordinates are source-frame
pixels with y pointing down.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core_types import ActionClip, ActionLabel, Detection
from .ingest import AnnotationSpan, RunManifest

# Local body coordinates in units of body height: x forward, y up from the
# floor, hip center at x = 0. Rows: head, then COCO joints 5..16.
_STAND = np.array([
    [0.00, 0.92],                 # head
    [0.02, 0.80], [-0.02, 0.80],  # shoulders
    [0.02, 0.64], [-0.02, 0.64],  # elbows
    [0.03, 0.49], [-0.01, 0.49],  # wrists
    [0.02, 0.50], [-0.02, 0.50],  # hips
    [0.02, 0.27], [-0.02, 0.27],  # knees
    [0.02, 0.03], [-0.02, 0.03],  # ankles
])
_SIT = np.array([
    [-0.02, 0.67],
    [0.00, 0.55], [-0.04, 0.55],
    [0.04, 0.40], [0.00, 0.40],
    [0.18, 0.33], [0.14, 0.33],
    [0.02, 0.27], [-0.02, 0.27],
    [0.26, 0.29], [0.22, 0.29],
    [0.26, 0.03], [0.22, 0.03],
])
# Offsets of nose, eyes, ears from the head point (x forward, y up).
_FACE = np.array([[0.030, -0.010], [0.022, 0.008], [0.018, 0.008], [-0.004, 0.002], [-0.010, 0.002]])
_FACE_CONF = np.array([0.95, 0.9, 0.8, 0.85, 0.5])

WALK_SPEED = 12.0  # source px per frame
WALK_FREQ = 1.0  # strides per second
LEG_SWING = 0.12
ARM_SWING = 0.08


def stage_seed(root: int, stage: str) -> int:
    """Derive an independent 63-bit seed for a named stage from the root seed."""
    digest = hashlib.sha256(f"{int(root)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class Placement:
    hip_x: float
    floor_y: float
    height: float
    facing: int = 1


def local_pose(label: ActionLabel, progress: float, phase: float = 0.0) -> np.ndarray:
    """(13, 2) local pose for an action at `progress` in [0, 1]."""
    if label == ActionLabel.SITTING:
        return _SIT.copy()
    if label == ActionLabel.STANDING:
        return _STAND.copy()
    if label == ActionLabel.SIT_TO_STAND:
        return (1.0 - progress) * _SIT + progress * _STAND
    if label == ActionLabel.STAND_TO_SIT:
        return progress * _SIT + (1.0 - progress) * _STAND
    pose = _STAND.copy()
    swing = np.sin(phase)
    pose[11, 0] += LEG_SWING * swing       # left ankle
    pose[12, 0] -= LEG_SWING * swing
    pose[9, 0] += 0.5 * LEG_SWING * swing  # left knee
    pose[10, 0] -= 0.5 * LEG_SWING * swing
    pose[5, 0] -= ARM_SWING * swing        # left wrist
    pose[6, 0] += ARM_SWING * swing
    pose[3, 0] -= 0.5 * ARM_SWING * swing
    pose[4, 0] += 0.5 * ARM_SWING * swing
    return pose


def to_keypoints(local: np.ndarray, where: Placement) -> np.ndarray:
    """Local 13-point pose -> (17, 3) COCO keypoints in source pixels."""
    head = local[0]
    face = head[None, :] + _FACE
    pts = np.vstack([face, local[1:]])
    out = np.empty((17, 3))
    out[:, 0] = where.hip_x + where.facing * pts[:, 0] * where.height
    out[:, 1] = where.floor_y - pts[:, 1] * where.height
    out[:, 2] = np.concatenate([_FACE_CONF, np.full(12, 0.9)])
    return out


def pose_program(label: ActionLabel, num_frames: int, where: Placement, phase0: float = 0.0, fps: float = 30.0):
    """(T, 17, 3) noise-free keypoint sequence for one action clip.

    StandToSit is the frame-reversed SitToStand sequence.
    """
    if label == ActionLabel.STAND_TO_SIT:
        return pose_program(ActionLabel.SIT_TO_STAND, num_frames, where, phase0, fps)[::-1].copy()
    out = np.empty((num_frames, 17, 3))
    for t in range(num_frames):
        progress = t / (num_frames - 1) if num_frames > 1 else 0.0
        phase = phase0 + 2.0 * np.pi * WALK_FREQ * t / fps
        here = where
        if label == ActionLabel.WALKING:
            here = Placement(where.hip_x + where.facing * WALK_SPEED * t, where.floor_y, where.height, where.facing)
        out[t] = to_keypoints(local_pose(label, progress, phase), here)
    return out


def box_from_keypoints(kps: np.ndarray, height: float) -> np.ndarray:
    x0, y0 = kps[:, 0].min(), kps[:, 1].min()
    x1, y1 = kps[:, 0].max(), kps[:, 1].max()
    return np.array([x0 - 0.1 * height, y0 - 0.05 * height, x1 + 0.1 * height, y1 + 0.02 * height])


def _make_detection(kps, height, frame, det_id, rng, sigma_kp, sigma_box, frame_w, frame_h) -> Detection:
    noisy = kps.copy()
    if sigma_kp > 0:
        noisy[:, :2] += rng.normal(0.0, sigma_kp, size=(17, 2))
    box = box_from_keypoints(kps, height)
    if sigma_box > 0:
        box = box + rng.normal(0.0, sigma_box, size=4)
    box[[0, 2]] = np.clip(box[[0, 2]], 0.0, frame_w)
    box[[1, 3]] = np.clip(box[[1, 3]], 0.0, frame_h)
    box[2] = max(box[2], box[0])
    box[3] = max(box[3], box[1])
    noisy[:, 2] = np.clip(noisy[:, 2] + rng.normal(0.0, 0.03, size=17), 0.0, 1.0)
    score = float(np.clip(0.8 + 0.15 * rng.random(), 0.0, 1.0))
    return Detection.from_arrays(frame, box, noisy, score, det_id)


# -- action clips ------------------------------------------------------------


@dataclass(frozen=True)
class ActionDatasetConfig:
    clips_per_class: int = 100
    min_frames: int = 30
    max_frames: int = 90
    sigma_kp: float = 3.0
    position_jitter: float = 30.0
    height_range: Tuple[float, float] = (480.0, 560.0)
    random_facing: bool = True
    distractors: int = 0
    frame_width: int = 1920
    frame_height: int = 1080
    fps: float = 30.0
    seed: int = 0


@dataclass
class LabeledClips:
    """Per-clip target ActionClips, plus all-actor frames for multi-actor scenes."""

    clips: List[ActionClip]
    scene_frames: List[List[List[Detection]]] = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(c.label) for c in self.clips])


def _random_placement(rng, cfg: ActionDatasetConfig, center_x: float) -> Placement:
    facing = int(rng.choice([-1, 1])) if cfg.random_facing else 1
    return Placement(
        hip_x=center_x + rng.normal(0.0, cfg.position_jitter),
        floor_y=0.85 * cfg.frame_height + rng.normal(0.0, cfg.position_jitter / 2),
        height=rng.uniform(*cfg.height_range),
        facing=facing,
    )


def generate_action_dataset(cfg: ActionDatasetConfig = ActionDatasetConfig()) -> LabeledClips:
    """Balanced labeled clips, `clips_per_class` per class, interleaved by class.

    Walking actors start offset against their facing so the clip stays
    roughly centered. With `distractors` > 0 every clip also contains other
    actors performing random actions in separate horizontal slots, and the
    target's slot is random.
    """
    rng = np.random.default_rng(stage_seed(cfg.seed, "action-dataset"))
    clips: List[ActionClip] = []
    scenes: List[List[List[Detection]]] = []
    actors = 1 + cfg.distractors
    slot_w = cfg.frame_width / actors
    next_id = 0
    for i in range(cfg.clips_per_class):
        for label in ActionLabel:
            n = int(rng.integers(cfg.min_frames, cfg.max_frames + 1))
            target_slot = int(rng.integers(actors))
            sequences = []
            for slot in range(actors):
                act = label if slot == target_slot else ActionLabel(int(rng.integers(len(ActionLabel))))
                where = _random_placement(rng, cfg, slot_w * (slot + 0.5))
                if act == ActionLabel.WALKING:
                    where = Placement(where.hip_x - where.facing * WALK_SPEED * n / 2, where.floor_y, where.height, where.facing)
                seq = pose_program(act, n, where, rng.uniform(0, 2 * np.pi), cfg.fps)
                sequences.append((seq, where.height))
            frames: List[List[Detection]] = []
            target_dets = []
            subject = f"synth{i % 7:02d}"
            for t in range(n):
                group = []
                for slot, (seq, height) in enumerate(sequences):
                    det = _make_detection(seq[t], height, t, next_id, rng, cfg.sigma_kp, 0.0, cfg.frame_width, cfg.frame_height)
                    next_id += 1
                    group.append(det)
                    if slot == target_slot:
                        target_dets.append(det)
                frames.append(group)
            clip_id = f"clip{len(clips):05d}"
            clips.append(ActionClip(0, n - 1, label, tuple(target_dets), subject, clip_id))
            if cfg.distractors:
                scenes.append(frames)
    return LabeledClips(clips, scenes)


# -- multi-actor scenarios ---------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    num_actors: int = 4
    num_frames: int = 1200
    target: int = 0
    # (start_frame, duration, actor)
    occlusions: Tuple[Tuple[int, int, int], ...] = ((200, 10, 0), (650, 45, 1), (900, 20, 0))
    scene_changes: Tuple[int, ...] = (400, 800)
    sigma_box: float = 1.0
    sigma_kp: float = 2.0
    sigma_emb: float = 0.05
    embedding_dim: int = 32
    fps: float = 30.0
    frame_width: int = 1920
    frame_height: int = 1080
    subject_id: str = "s01"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.target < self.num_actors:
            raise ValueError("target index must be < num_actors")
        for start, duration, actor in self.occlusions:
            if not (0 <= start < self.num_frames and duration >= 0 and 0 <= actor < self.num_actors):
                raise ValueError(f"occlusion {(start, duration, actor)} outside the scenario")
        if any(not 0 < f < self.num_frames for f in self.scene_changes):
            raise ValueError("scene changes must fall inside the frame range")


@dataclass
class Scenario:
    config: ScenarioConfig
    frames: List[List[Detection]]
    embeddings: Dict[int, Tuple[float, ...]]
    identity: Dict[int, int]
    reference_detection: int
    annotations: List[AnnotationSpan]
    timelines: List[List[Tuple[int, int, ActionLabel]]]
    colors: np.ndarray

    @property
    def manifest(self) -> RunManifest:
        c = self.config
        return RunManifest(c.fps, c.frame_width, c.frame_height, c.subject_id, None, self.reference_detection)


def _timeline(rng, num_frames: int, fps: float) -> List[Tuple[int, int, ActionLabel]]:
    """Scripted (start, end, label) segments covering [0, num_frames)."""
    def secs(lo, hi):
        return max(1, int(round(rng.uniform(lo, hi) * fps)))

    segments = []
    state = ActionLabel.SITTING if rng.random() < 0.5 else ActionLabel.STANDING
    t = 0
    while t < num_frames:
        if state == ActionLabel.SITTING:
            dur, nxt = secs(2.0, 6.0), ActionLabel.SIT_TO_STAND
        elif state in (ActionLabel.SIT_TO_STAND,):
            dur, nxt = secs(1.0, 1.6), ActionLabel.STANDING
        elif state == ActionLabel.STAND_TO_SIT:
            dur, nxt = secs(1.0, 1.6), ActionLabel.SITTING
        elif state == ActionLabel.STANDING:
            dur = secs(1.5, 4.0)
            nxt = ActionLabel.WALKING if rng.random() < 0.6 else ActionLabel.STAND_TO_SIT
        else:
            dur, nxt = secs(2.0, 5.0), ActionLabel.STANDING
        segments.append((t, min(num_frames, t + dur) - 1, state))
        t += dur
        state = nxt
    return segments


# (body scale, floor line as a fraction of frame height) per camera setup.
CAMERA_SETUPS = ((1.0, 0.85), (0.5, 0.5))


def _zone_centers(cfg: ScenarioConfig) -> np.ndarray:
    w = cfg.frame_width / cfg.num_actors
    return w * (np.arange(cfg.num_actors) + 0.5)


def _derangement(rng, n: int) -> np.ndarray:
    if n < 2:
        return np.arange(n)
    while True:
        p = rng.permutation(n)
        if np.all(p != np.arange(n)):
            return p


def generate_scenario(cfg: ScenarioConfig = ScenarioConfig()) -> Scenario:
    """Multi-actor detection stream with ground truth.

    Each actor follows a scripted action timeline inside its own horizontal
    zone; walking bounces between the zone edges. A scene change switches
    between two camera setups (body scale and floor line) and moves every
    actor to a different zone, so no box keeps its IoU across the cut.
    Occlusions delete detections.
    """
    rng = np.random.default_rng(stage_seed(cfg.seed, "scenario"))
    n_act = cfg.num_actors
    timelines = [_timeline(rng, cfg.num_frames, cfg.fps) for _ in range(n_act)]
    identity_vecs = rng.standard_normal((n_act, cfg.embedding_dim))
    identity_vecs /= np.linalg.norm(identity_vecs, axis=1, keepdims=True)
    colors = rng.integers(30, 226, size=(n_act, 2, 3))
    heights = rng.uniform(460.0, 560.0, n_act)
    floor_jitter = rng.normal(0.0, 15.0, n_act)
    camera = 0
    centers = _zone_centers(cfg)
    zone = np.arange(n_act)
    offset = rng.uniform(-60.0, 60.0, n_act)
    facing = rng.choice([-1, 1], size=n_act)
    phase = rng.uniform(0.0, 2 * np.pi, n_act)
    half_range = 0.3 * cfg.frame_width / n_act

    hidden = np.zeros((n_act, cfg.num_frames), dtype=bool)
    for start, duration, actor in cfg.occlusions:
        hidden[actor, start : start + duration] = True
    changes = set(cfg.scene_changes)

    frames: List[List[Detection]] = []
    identity: Dict[int, int] = {}
    embeddings: Dict[int, Tuple[float, ...]] = {}
    seg_index = [0] * n_act
    next_id = 0
    for f in range(cfg.num_frames):
        if f in changes:
            zone = zone[_derangement(rng, n_act)]
            camera = 1 - camera
            offset = rng.uniform(-60.0, 60.0, n_act)
        group = []
        for a in range(n_act):
            segs = timelines[a]
            while segs[seg_index[a]][1] < f:
                seg_index[a] += 1
            s0, s1, label = segs[seg_index[a]]
            progress = (f - s0) / (s1 - s0) if s1 > s0 else 1.0
            if label == ActionLabel.WALKING:
                offset[a] += facing[a] * WALK_SPEED
                if abs(offset[a]) > half_range:
                    facing[a] = -facing[a]
                    offset[a] = np.clip(offset[a], -half_range, half_range)
                phase[a] += 2 * np.pi * WALK_FREQ / cfg.fps
            scale, floor = CAMERA_SETUPS[camera]
            height = heights[a] * scale
            floor_y = floor * cfg.frame_height + floor_jitter[a] * scale
            where = Placement(centers[zone[a]] + offset[a], floor_y, height, int(facing[a]))
            kps = to_keypoints(local_pose(label, progress, phase[a]), where)
            if hidden[a, f]:
                continue
            det = _make_detection(kps, height, f, 0, rng, cfg.sigma_kp, cfg.sigma_box, cfg.frame_width, cfg.frame_height)
            group.append((a, det))
        order = rng.permutation(len(group))
        out = []
        for k in order:
            a, det = group[k]
            det = Detection(det.frame_index, det.box, det.keypoints, det.score, next_id)
            identity[next_id] = a
            emb = identity_vecs[a] + rng.normal(0.0, cfg.sigma_emb, cfg.embedding_dim)
            embeddings[next_id] = tuple(float(v) for v in emb)
            out.append(det)
            next_id += 1
        frames.append(out)

    reference = _reference_detection(cfg, frames, identity, hidden)
    annotations = [AnnotationSpan(s, e, label, cfg.subject_id) for s, e, label in timelines[cfg.target]]
    return Scenario(cfg, frames, embeddings, identity, reference, annotations, timelines, colors)


def _reference_detection(cfg: ScenarioConfig, frames, identity, hidden) -> int:
    """Target detection in the middle of its longest uninterrupted run."""
    cuts = set(cfg.scene_changes)
    visible = ~hidden[cfg.target]
    runs, start = [], None
    for f in range(cfg.num_frames):
        if not visible[f]:
            if start is not None:
                runs.append((start, f - 1))
            start = None
        elif start is None:
            start = f
        elif f in cuts:
            runs.append((start, f - 1))
            start = f
    if start is not None:
        runs.append((start, cfg.num_frames - 1))
    first, last = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    mid = (first + last) // 2
    return next(d.detection_id for d in frames[mid] if identity[d.detection_id] == cfg.target)


def non_empty_frames(scenario: Scenario) -> List[List[Detection]]:
    return [g for g in scenario.frames if g]


def render_frame(scenario: Scenario, frame_index: int, scale: float = 0.25, seed: Optional[int] = None) -> np.ndarray:
    """Flat-shaded (H, W, 3) uint8 image: each actor's box in its two base colors.

    Boxes are drawn in detection order over a gray background with mild
    pixel noise. Coordinates are in the scaled frame; box inputs for the
    fallback descriptor must be scaled the same way.
    """
    c = scenario.config
    h, w = int(round(c.frame_height * scale)), int(round(c.frame_width * scale))
    rng = np.random.default_rng(stage_seed(c.seed if seed is None else seed, f"render:{frame_index}"))
    img = np.full((h, w, 3), 110.0) + rng.normal(0.0, 6.0, (h, w, 3))
    for det in scenario.frames[frame_index]:
        a = scenario.identity[det.detection_id]
        x0, y0, x1, y1 = (np.array(det.box.as_tuple()) * scale).round().astype(int)
        mid = (y0 + y1) // 2
        img[y0:mid, x0:x1] = scenario.colors[a, 0]
        img[mid:y1, x0:x1] = scenario.colors[a, 1]
        img[y0:y1, x0:x1] += rng.normal(0.0, 6.0, img[y0:y1, x0:x1].shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def tracklet_truth(tracklets, scenario: Scenario) -> Dict[int, bool]:
    from .long_term_fusion import tracklet_ground_truth

    return {t.tracklet_id: tracklet_ground_truth(t, scenario.identity, scenario.config.target) for t in tracklets}


def default_scenario_suite(seeds: Sequence[int] = (0, 1, 2)) -> List[ScenarioConfig]:
    """4 actors, occlusions of target and non-target actors, 2 scene changes."""
    return [ScenarioConfig(seed=s) for s in seeds]
