"""Shared data model for the tracking and action-classification pipeline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

NUM_KEYPOINTS = 17
NUM_JOINTS = 14
DEFAULT_FPS = 30.0

# COCO keypoint ordering.
COCO_KEYPOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
HEAD_KEYPOINTS = (0, 1, 2, 3, 4)
JOINT_NAMES = ("head", "neck") + COCO_KEYPOINTS[5:]


class ActionLabel(enum.IntEnum):
    """The five target actions, in confusion-matrix order."""

    SITTING = 0
    SIT_TO_STAND = 1
    STANDING = 2
    WALKING = 3
    STAND_TO_SIT = 4

    @property
    def display(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, text: str) -> "ActionLabel":
        key = text.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        try:
            return _BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown action label {text!r}") from None


_DISPLAY = {
    ActionLabel.SITTING: "Sitting",
    ActionLabel.SIT_TO_STAND: "SitToStand",
    ActionLabel.STANDING: "Standing",
    ActionLabel.WALKING: "Walking",
    ActionLabel.STAND_TO_SIT: "StandToSit",
}
_BY_KEY = {name.lower(): label for label, name in _DISPLAY.items()}


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float
    joint_id: int


@dataclass(frozen=True)
class Detection:
    """One person in one frame."""

    frame_index: int
    box: BoundingBox
    keypoints: Tuple[Keypoint, ...]
    score: float
    detection_id: int
    embedding: Optional[Tuple[float, ...]] = None

    def keypoint_array(self) -> np.ndarray:
        """(17, 3) array of x, y, confidence."""
        return np.array([(k.x, k.y, k.confidence) for k in self.keypoints], dtype=np.float64)

    @classmethod
    def from_arrays(
        cls,
        frame_index: int,
        box: Sequence[float],
        keypoints: np.ndarray,
        score: float,
        detection_id: int,
        embedding: Optional[Sequence[float]] = None,
    ) -> "Detection":
        kps = tuple(
            Keypoint(float(x), float(y), float(c), j) for j, (x, y, c) in enumerate(np.asarray(keypoints))
        )
        emb = None if embedding is None else tuple(float(v) for v in embedding)
        return cls(int(frame_index), BoundingBox(*(float(v) for v in box)), kps, float(score), int(detection_id), emb)


@dataclass(frozen=True)
class Tracklet:
    """Run of one identity over strictly consecutive frames."""

    tracklet_id: int
    detections: Tuple[Detection, ...]

    @property
    def start_frame(self) -> int:
        return self.detections[0].frame_index

    @property
    def end_frame(self) -> int:
        return self.detections[-1].frame_index

    def __len__(self) -> int:
        return len(self.detections)

    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)


@dataclass(frozen=True)
class Track:
    """The fused, temporally disjoint target timeline."""

    tracklets: Tuple[Tracklet, ...] = ()

    def coverage(self) -> set:
        out = set()
        for t in self.tracklets:
            out.update(t.frames())
        return out

    def detection_at(self) -> dict:
        """frame index -> target Detection."""
        return {d.frame_index: d for t in self.tracklets for d in t.detections}


@dataclass(frozen=True)
class ActionClip:
    start_frame: int
    end_frame: int
    label: ActionLabel
    # One entry per frame in [start_frame, end_frame]; None marks a missing target.
    detections: Tuple[Optional[Detection], ...] = ()
    subject_id: str = ""
    clip_id: str = ""

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame + 1

    def duration(self, fps: float = DEFAULT_FPS) -> float:
        return self.num_frames / fps

    def present(self) -> list:
        return [d for d in self.detections if d is not None]


@dataclass(frozen=True)
class PoseEvolutionMap:
    values: np.ndarray = field(repr=False)
    channels_per_joint: int = 3

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


Entity = Union[BoundingBox, Keypoint, Detection, Tracklet, Track, ActionClip, PoseEvolutionMap]


def validate(entity: Entity) -> Optional[str]:
    """Return the first violated invariant as a short message, or None when valid."""
    if isinstance(entity, BoundingBox):
        coords = entity.as_tuple()
        if not all(math.isfinite(v) for v in coords):
            return "non-finite box coordinate"
        if entity.x_min > entity.x_max:
            return "x_min > x_max"
        if entity.y_min > entity.y_max:
            return "y_min > y_max"
        return None
    if isinstance(entity, Keypoint):
        if not 0.0 <= entity.confidence <= 1.0:
            return "keypoint confidence outside [0, 1]"
        if not 0 <= entity.joint_id < NUM_KEYPOINTS:
            return "joint_id out of range"
        if not (math.isfinite(entity.x) and math.isfinite(entity.y)):
            return "non-finite keypoint coordinate"
        return None
    if isinstance(entity, Detection):
        if entity.frame_index < 0:
            return "negative frame index"
        problem = validate(entity.box)
        if problem:
            return problem
        if len(entity.keypoints) != NUM_KEYPOINTS:
            return "keypoint count != 17"
        for j, kp in enumerate(entity.keypoints):
            if kp.joint_id != j:
                return "keypoints not in joint order"
            problem = validate(kp)
            if problem:
                return problem
        if not 0.0 <= entity.score <= 1.0:
            return "score outside [0, 1]"
        return None
    if isinstance(entity, Tracklet):
        if not entity.detections:
            return "empty tracklet"
        frames = [d.frame_index for d in entity.detections]
        if any(b != a + 1 for a, b in zip(frames, frames[1:])):
            return "non-consecutive"
        for d in entity.detections:
            problem = validate(d)
            if problem:
                return problem
        return None
    if isinstance(entity, Track):
        previous_end = None
        for t in entity.tracklets:
            problem = validate(t)
            if problem:
                return problem
            if previous_end is not None and t.start_frame <= previous_end:
                return "overlapping or unsorted tracklets"
            previous_end = t.end_frame
        return None
    if isinstance(entity, ActionClip):
        if entity.start_frame > entity.end_frame:
            return "start_frame > end_frame"
        if entity.detections and len(entity.detections) != entity.num_frames:
            return "detections do not cover the clip frame range"
        for offset, d in enumerate(entity.detections):
            if d is not None and d.frame_index != entity.start_frame + offset:
                return "clip detection frame mismatch"
        return None
    if isinstance(entity, PoseEvolutionMap):
        v = entity.values
        if v.ndim != 3 or v.shape[0] != NUM_JOINTS * entity.channels_per_joint:
            return "shape is not (14*C, H, W)"
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            return "values outside [0, 1]"
        return None
    raise TypeError(f"not a core type: {type(entity).__name__}")


def check_partition(tracklets: Sequence[Tracklet]) -> Optional[str]:
    """Every detection belongs to at most one tracklet."""
    seen = set()
    for t in tracklets:
        for d in t.detections:
            if d.detection_id in seen:
                return f"detection {d.detection_id} in more than one tracklet"
            seen.add(d.detection_id)
    return None
