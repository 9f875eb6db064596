from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_tracklet
from target_har.clipper import balance, segment_clips, split_by_subject, split_span_frames
from target_har.core_types import ActionClip, ActionLabel, Track
from target_har.ingest import AnnotationSpan


def spans_of(clips):
    return [(c.start_frame, c.end_frame) for c in clips]


def full_track(n_frames):
    return Track((make_tracklet(0, 0, n_frames),))


def test_short_span_is_dropped():
    # 0.1 s at 30 fps = 3 frames
    clips = segment_clips(full_track(100), [AnnotationSpan(10, 12, ActionLabel.SITTING, "s")])
    assert clips == []


def test_ten_second_span_splits_4_4_2():
    clips = segment_clips(full_track(400), [AnnotationSpan(0, 299, ActionLabel.WALKING, "s")])
    assert spans_of(clips) == [(0, 119), (120, 239), (240, 299)]
    assert [c.duration(30) for c in clips] == [4.0, 4.0, 2.0]


def test_exactly_four_seconds_is_one_clip():
    clips = segment_clips(full_track(400), [AnnotationSpan(5, 124, ActionLabel.STANDING, "s")])
    assert spans_of(clips) == [(5, 124)]


def test_boundary_min_duration_kept():
    # 0.2 s = 6 frames is kept, 5 frames dropped
    assert split_span_frames(0, 5) == [(0, 5)]
    assert split_span_frames(0, 4) == []


def test_short_remainder_dropped():
    assert split_span_frames(0, 122) == [(0, 119)]


def test_span_clipped_to_track_coverage_and_gaps():
    track = Track((make_tracklet(0, 0, 50), make_tracklet(1, 60, 50, first_id=100)))
    clips = segment_clips(track, [AnnotationSpan(30, 200, ActionLabel.SITTING, "s")])
    assert spans_of(clips) == [(30, 49), (60, 109)]
    for c in clips:
        assert all(d is not None for d in c.detections)
        assert c.label == ActionLabel.SITTING
        assert c.subject_id == "s"


@given(st.integers(0, 500), st.integers(0, 800), st.sampled_from([15.0, 25.0, 30.0, 60.0]))
def test_clip_rule_properties(start, length, fps):
    end = start + length
    windows = split_span_frames(start, end, fps)
    # Smallest frame count lasting >= 0.2 s; largest lasting <= 4 s.
    min_frames = next(n for n in range(1, 100) if n * 5 >= fps)
    max_frames = next(n for n in range(1000, 0, -1) if n <= 4 * fps)
    prev_end = start - 1
    for s, e in windows:
        assert min_frames <= e - s + 1 <= max_frames
        assert s == prev_end + 1
        prev_end = e
    # Only a remainder shorter than min_frames may be left uncovered.
    assert 0 <= end - prev_end < min_frames


def _clips(counts):
    out = []
    for label, n in counts.items():
        for i in range(n):
            out.append(ActionClip(i, i, label, (), f"s{i % 3}", f"{label.name}{i}"))
    return out


def test_balance_caps_classes():
    clips = _clips({ActionLabel.WALKING: 10, ActionLabel.SITTING: 3})
    out = balance(clips, 5, seed=0)
    assert Counter(c.label for c in out) == {ActionLabel.WALKING: 5, ActionLabel.SITTING: 3}
    assert balance(clips, 4000, seed=0) == clips


def test_balance_is_seeded_subset():
    clips = _clips({ActionLabel.WALKING: 20})
    a = balance(clips, 7, seed=1)
    assert a == balance(clips, 7, seed=1)
    assert all(c in clips for c in a)
    with pytest.raises(ValueError):
        balance(clips, -1)


def test_split_holds_out_subjects():
    clips = _clips({ActionLabel.WALKING: 30, ActionLabel.SITTING: 30})
    parts = split_by_subject(clips, test_subjects=["s0"], seed=0)
    assert all(c.subject_id == "s0" for c in parts["test"])
    assert not any(c.subject_id == "s0" for c in parts["train"] + parts["val"])


def test_split_ninety_ten():
    clips = _clips({ActionLabel.WALKING: 100})
    parts = split_by_subject(clips, seed=0)
    assert (len(parts["train"]), len(parts["val"]), len(parts["test"])) == (90, 10, 0)


def test_split_rejects_overlapping_lists():
    with pytest.raises(ValueError):
        split_by_subject([], test_subjects=["a"], train_subjects=["a"])
