"""Cut the target track into labeled action clips; balance and split them."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from .core_types import DEFAULT_FPS, ActionClip, ActionLabel, Track
from .ingest import AnnotationSpan


def _frame_limits(fps: float, min_dur: float, max_dur: float):
    # Round to whole frames; 1e-9 absorbs float error in products like 0.2 * 30.
    min_frames = max(1, math.ceil(min_dur * fps - 1e-9))
    max_frames = max(min_frames, math.floor(max_dur * fps + 1e-9))
    return min_frames, max_frames


def _covered_runs(frames: Iterable[int]) -> List[tuple]:
    runs = []
    for f in sorted(frames):
        if runs and f == runs[-1][1] + 1:
            runs[-1][1] = f
        else:
            runs.append([f, f])
    return [tuple(r) for r in runs]


def segment_clips(
    track: Track,
    spans: Sequence[AnnotationSpan],
    fps: float = DEFAULT_FPS,
    min_dur: float = 0.2,
    max_dur: float = 4.0,
) -> List[ActionClip]:
    """Intersect annotation spans with track coverage and cut fixed-length clips.

    Pieces shorter than `min_dur` are dropped; longer pieces are cut into
    consecutive `max_dur` windows, keeping a trailing remainder only when it
    lasts at least `min_dur`.
    """
    by_frame = track.detection_at()
    runs = _covered_runs(by_frame)
    clips: List[ActionClip] = []
    for span in spans:
        for run_start, run_end in runs:
            lo, hi = max(span.start_frame, run_start), min(span.end_frame, run_end)
            if hi < lo:
                continue
            for start, end in split_span_frames(lo, hi, fps, min_dur, max_dur):
                dets = tuple(by_frame.get(f) for f in range(start, end + 1))
                clip_id = f"{span.subject_id}_{start:07d}_{end:07d}"
                clips.append(ActionClip(start, end, span.label, dets, span.subject_id, clip_id))
    return clips


def split_span_frames(start: int, end: int, fps: float = DEFAULT_FPS, min_dur: float = 0.2, max_dur: float = 4.0):
    """Frame windows the clip rule produces for one fully covered span."""
    min_frames, max_frames = _frame_limits(fps, min_dur, max_dur)
    out = []
    s = start
    while s <= end:
        e = min(s + max_frames - 1, end)
        if e - s + 1 >= min_frames:
            out.append((s, e))
        s = e + 1
    return out


def balance(clips: Sequence[ActionClip], cap: int, seed=None) -> List[ActionClip]:
    """Undersample each class above `cap` to exactly `cap`; order is preserved."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    rng = np.random.default_rng(seed)
    by_class: Dict[ActionLabel, List[int]] = defaultdict(list)
    for i, c in enumerate(clips):
        by_class[c.label].append(i)
    keep = set()
    for label in sorted(by_class):
        idx = by_class[label]
        if len(idx) > cap:
            idx = rng.choice(idx, size=cap, replace=False).tolist()
        keep.update(idx)
    return [c for i, c in enumerate(clips) if i in keep]


def split_by_subject(
    clips: Sequence[ActionClip],
    test_subjects: Iterable[str] = (),
    train_subjects: Iterable[str] = (),
    val_fraction: float = 0.1,
    seed=None,
) -> Dict[str, List[ActionClip]]:
    """Held-out subjects go to test; the rest split train/val by seeded clip shuffle."""
    test_set = set(test_subjects)
    train_set = set(train_subjects)
    both = test_set & train_set
    if both:
        raise ValueError(f"subjects in both train and test lists: {sorted(both)}")
    test = [c for c in clips if c.subject_id in test_set]
    pool = [c for c in clips if c.subject_id not in test_set and (not train_set or c.subject_id in train_set)]
    order = np.random.default_rng(seed).permutation(len(pool))
    n_val = int(round(len(pool) * val_fraction))
    val_idx = set(order[:n_val].tolist())
    train = [c for i, c in enumerate(pool) if i not in val_idx]
    val = [c for i, c in enumerate(pool) if i in val_idx]
    return {"train": train, "val": val, "test": test}


def split_assignment(splits: Mapping[str, Sequence[ActionClip]]) -> Dict[str, str]:
    """clip_id -> split name."""
    return {c.clip_id: name for name, group in splits.items() for c in group}
