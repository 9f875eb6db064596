"""Short-term tracking: link detections in consecutive frames by IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .assignment import FORBIDDEN, solve_assignment
from .core_types import BoundingBox, Detection, Tracklet

DEFAULT_TAU_IOU = 0.3


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


@dataclass
class TrackerState:
    """Fold state over frames. `active` holds detection runs ending at `last_frame`."""

    active: List[List[Detection]] = field(default_factory=list)
    active_ids: List[int] = field(default_factory=list)
    closed: List[Tracklet] = field(default_factory=list)
    next_tracklet_id: int = 0
    last_frame: int = -1

    def close_all(self) -> "TrackerState":
        closed = self.closed + [Tracklet(i, tuple(run)) for i, run in zip(self.active_ids, self.active)]
        return TrackerState([], [], closed, self.next_tracklet_id, self.last_frame)

    def tracklets(self) -> List[Tracklet]:
        """Closed and active tracklets, ordered by id."""
        done = self.close_all().closed
        return sorted(done, key=lambda t: t.tracklet_id)


class FrameGapError(ValueError):
    pass


def iou_cost_matrix(tails: Sequence[Detection], dets: Sequence[Detection], tau_iou: float) -> np.ndarray:
    cost = np.full((len(tails), len(dets)), FORBIDDEN)
    for i, t in enumerate(tails):
        for j, d in enumerate(dets):
            overlap = iou(t.box, d.box)
            if overlap >= tau_iou and overlap > 0.0:
                cost[i, j] = 1.0 - overlap
    return cost


def link_frame(state: TrackerState, detections: Sequence[Detection], tau_iou: float = DEFAULT_TAU_IOU) -> TrackerState:
    """Extend active tracklets with one frame of detections.

    Detections must all belong to frame `state.last_frame + 1` (any frame is
    accepted when nothing is active yet).
    """
    frames = {d.frame_index for d in detections}
    if len(frames) > 1:
        raise ValueError("detections span more than one frame")
    frame = frames.pop() if frames else state.last_frame + 1
    if state.active and frame != state.last_frame + 1:
        raise FrameGapError(f"frame {frame} does not follow {state.last_frame}; close active tracklets first")

    detections = sorted(detections, key=lambda d: d.detection_id)
    tails = [run[-1] for run in state.active]
    matching = solve_assignment(iou_cost_matrix(tails, detections, tau_iou))

    matched_dets = {}
    for row, col in matching.pairs:
        matched_dets[row] = col
    active: List[List[Detection]] = []
    active_ids: List[int] = []
    closed = list(state.closed)
    for row, (run, tid) in enumerate(zip(state.active, state.active_ids)):
        if row in matched_dets:
            active.append(run + [detections[matched_dets[row]]])
            active_ids.append(tid)
        else:
            closed.append(Tracklet(tid, tuple(run)))
    next_id = state.next_tracklet_id
    for col in matching.unmatched_cols:
        active.append([detections[col]])
        active_ids.append(next_id)
        next_id += 1
    return TrackerState(active, active_ids, closed, next_id, frame)


def build_tracklets(frames: Sequence[Sequence[Detection]], tau_iou: float = DEFAULT_TAU_IOU) -> List[Tracklet]:
    """Fold `link_frame` over per-frame detection groups ordered by frame index.

    A gap in frame indices closes every active tracklet.
    """
    state = TrackerState()
    for group in frames:
        if not group:
            continue
        frame = group[0].frame_index
        if state.active and frame != state.last_frame + 1:
            state = state.close_all()
        state = link_frame(state, group, tau_iou)
    return state.tracklets()
