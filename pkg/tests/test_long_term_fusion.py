import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_detection, make_tracklet
from target_har.core_types import BoundingBox, Tracklet, validate
from target_har.long_term_fusion import (
    NON_TARGET,
    TARGET,
    FusionConfig,
    FusionError,
    accept_threshold,
    affinity,
    fallback_descriptor,
    fuse_target_track,
    prune,
    representative_embeddings,
    sample_representative,
    select_reference,
    tracking_accuracy,
)


def test_affinity_is_euclidean():
    assert affinity([0, 0], [3, 4]) == 5.0
    with pytest.raises(ValueError):
        affinity([0, 0], [1, 2, 3])


def test_prune_rules():
    long_good = make_tracklet(0, 0, 20)
    short = make_tracklet(1, 0, 10, first_id=100)
    weak = make_tracklet(2, 0, 20, first_id=200, conf=0.01)
    kept = prune([long_good, short, weak], FusionConfig())
    assert [t.tracklet_id for t in kept] == [0]


def test_prune_boundary_length_is_kept():
    assert len(prune([make_tracklet(0, 0, 15)], FusionConfig(min_length=15))) == 1
    assert len(prune([make_tracklet(0, 0, 14)], FusionConfig(min_length=15))) == 0


def test_representative_is_highest_score_earliest_on_tie():
    dets = [make_detection(f, (0, 0, 10, 10), f, score=s) for f, s in enumerate([0.5, 0.9, 0.9, 0.3])]
    t = Tracklet(0, tuple(dets))
    assert sample_representative(t).detection_id == 1


def _tracklets_with_embeddings(vectors, length=20):
    tracklets, emb = [], {}
    for i, vec in enumerate(vectors):
        t = make_tracklet(i, i * length, length, first_id=i * 1000)
        tracklets.append(t)
        for d in t.detections:
            emb[d.detection_id] = tuple(vec)
    return tracklets, emb


def test_fuse_accepts_close_and_rejects_far():
    vecs = [[0, 0], [0.1, 0], [5, 5], [5.1, 5], [-5, 5]]
    tracklets, emb = _tracklets_with_embeddings(vecs)
    track, verdicts = fuse_target_track(tracklets, tracklets[0], emb)
    assert [v.predicted for v in verdicts] == [TARGET, TARGET, NON_TARGET, NON_TARGET, NON_TARGET]
    assert [t.tracklet_id for t in track.tracklets] == [0, 1]
    assert validate(track) is None


def test_absolute_threshold_overrides_relative_rule():
    vecs = [[0, 0], [1, 0], [2, 0]]
    tracklets, emb = _tracklets_with_embeddings(vecs)
    _, verdicts = fuse_target_track(tracklets, tracklets[0], emb, FusionConfig(abs_threshold=1.5))
    assert [v.predicted for v in verdicts] == [TARGET, TARGET, NON_TARGET]


def test_relative_threshold_is_alpha_times_median():
    assert accept_threshold([1.0, 2.0, 10.0], FusionConfig(alpha=0.5)) == 1.0


def test_reference_always_accepted_even_when_short():
    ref = make_tracklet(0, 0, 3)
    others, emb = _tracklets_with_embeddings([[0, 0], [9, 9]])
    others = [Tracklet(t.tracklet_id + 1, t.detections) for t in others]
    for d in ref.detections:
        emb[d.detection_id] = (0.0, 0.0)
    tracklets = [ref] + others
    _, verdicts = fuse_target_track(tracklets, ref, emb)
    assert verdicts[0].predicted == TARGET and verdicts[0].reason == "fused"


def test_overlap_resolved_by_smaller_distance():
    ref = make_tracklet(0, 0, 20, first_id=0)
    near = make_tracklet(1, 30, 20, first_id=100)
    nearer = make_tracklet(2, 40, 20, first_id=200)  # overlaps `near`
    far_a = make_tracklet(3, 100, 20, first_id=300)
    far_b = make_tracklet(4, 130, 20, first_id=400)
    emb = {}
    for t, vec in [(ref, (0, 0)), (near, (0.2, 0)), (nearer, (0.1, 0)), (far_a, (9, 0)), (far_b, (0, 9))]:
        for d in t.detections:
            emb[d.detection_id] = vec
    track, verdicts = fuse_target_track([ref, near, nearer, far_a, far_b], ref, emb)
    assert [t.tracklet_id for t in track.tracklets] == [0, 2]
    assert verdicts[1].reason == "rejected"


def test_missing_embedding_raises():
    t = make_tracklet(0, 0, 20)
    with pytest.raises(FusionError):
        fuse_target_track([t], t, {})


def test_mixed_embedding_sources_raise():
    a = make_tracklet(0, 0, 20)
    b = make_tracklet(1, 20, 20, first_id=100)
    emb = {d.detection_id: (0.0, 1.0) for d in a.detections}
    image = np.zeros((40, 40, 3), dtype=np.uint8)
    with pytest.raises(FusionError):
        representative_embeddings([a, b], emb, frame_loader=lambda f: image)


def test_select_reference_by_hints_and_tie():
    a = make_tracklet(0, 0, 20)
    b = make_tracklet(1, 0, 20, first_id=100)
    c = make_tracklet(2, 0, 30, first_id=200)
    assert select_reference([a, b], tracklet_id=1) == (b, False)
    assert select_reference([a, b], detection_id=105) == (b, False)
    with pytest.raises(FusionError):
        select_reference([a, b])
    assert select_reference([a, b, c]) == (c, True)
    with pytest.raises(FusionError):
        select_reference([a], tracklet_id=9)


def test_fallback_descriptor_shape_and_norm():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(60, 40, 3), dtype=np.uint8)
    d = fallback_descriptor(img, BoundingBox(5, 5, 30, 50))
    assert d.shape == (3 * 3 * 3 * 8,)
    assert np.linalg.norm(d) == pytest.approx(1.0)


def test_fallback_descriptor_empty_crop_is_zero():
    img = np.zeros((10, 10, 3), dtype=np.uint8)
    d = fallback_descriptor(img, BoundingBox(20, 20, 30, 30))
    assert not d.any()


def test_fallback_descriptor_separates_colors():
    red = np.zeros((30, 30, 3), dtype=np.uint8)
    red[..., 0] = 200
    blue = np.zeros((30, 30, 3), dtype=np.uint8)
    blue[..., 2] = 200
    b = BoundingBox(0, 0, 30, 30)
    assert affinity(fallback_descriptor(red, b), fallback_descriptor(red, b)) == 0.0
    assert affinity(fallback_descriptor(red, b), fallback_descriptor(blue, b)) > 1.0


def test_tracking_accuracy_counts_pruned_as_non_target():
    from target_har.long_term_fusion import TrackletVerdict

    verdicts = [TrackletVerdict(0, TARGET, 0.0, "fused"), TrackletVerdict(1, NON_TARGET, None, "pruned")]
    assert tracking_accuracy(verdicts, {0: True, 1: True}) == 0.5
    assert tracking_accuracy(verdicts, {0: True, 1: False}) == 1.0
    assert tracking_accuracy([], {}) == 1.0


@given(st.integers(0, 10_000))
def test_partition_invariant_under_rotation(seed):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(6, 8))
    tracklets, emb = _tracklets_with_embeddings(vecs)
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rotated = {k: tuple(np.asarray(v) @ q) for k, v in emb.items()}
    _, a = fuse_target_track(tracklets, tracklets[0], emb)
    _, b = fuse_target_track(tracklets, tracklets[0], rotated)
    assert [v.predicted for v in a] == [v.predicted for v in b]


@given(st.integers(0, 10_000))
def test_track_is_disjoint_and_sorted(seed):
    rng = np.random.default_rng(seed)
    tracklets, emb = [], {}
    for i in range(8):
        start = int(rng.integers(0, 100))
        t = make_tracklet(i, start, int(rng.integers(15, 40)), first_id=i * 1000)
        vec = tuple(rng.normal(size=4) * (0.1 if i % 2 == 0 else 3.0))
        for d in t.detections:
            emb[d.detection_id] = vec
        tracklets.append(t)
    track, verdicts = fuse_target_track(tracklets, tracklets[0], emb)
    assert validate(track) is None
    assert verdicts[0].predicted == TARGET
    starts = [t.start_frame for t in track.tracklets]
    assert starts == sorted(starts)
