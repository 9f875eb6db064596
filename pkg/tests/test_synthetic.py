import numpy as np
import pytest

from target_har.core_types import ActionLabel, validate
from target_har.short_term_tracker import build_tracklets, iou
from target_har.synthetic import (
    WALK_SPEED,
    ActionDatasetConfig,
    Placement,
    ScenarioConfig,
    generate_action_dataset,
    generate_scenario,
    pose_program,
    render_frame,
    stage_seed,
    tracklet_truth,
)

WHERE = Placement(hip_x=900.0, floor_y=900.0, height=500.0)


def short(num_frames, **kw):
    """Scenario config without the default events, which assume a long run."""
    kw.setdefault("occlusions", ())
    kw.setdefault("scene_changes", ())
    return ScenarioConfig(num_frames=num_frames, **kw)


def test_stage_seed_is_stable_and_distinct():
    assert stage_seed(3, "a") == stage_seed(3, "a")
    assert stage_seed(3, "a") != stage_seed(3, "b")
    assert stage_seed(3, "a") != stage_seed(4, "a")
    assert 0 <= stage_seed(0, "x") < 2**63


def test_stand_to_sit_is_reversed_sit_to_stand():
    up = pose_program(ActionLabel.SIT_TO_STAND, 20, WHERE)
    down = pose_program(ActionLabel.STAND_TO_SIT, 20, WHERE)
    np.testing.assert_array_equal(down, up[::-1])
    # Endpoints coincide with the static poses.
    np.testing.assert_allclose(up[0], pose_program(ActionLabel.SITTING, 1, WHERE)[0])
    np.testing.assert_allclose(up[-1], pose_program(ActionLabel.STANDING, 1, WHERE)[0])


@pytest.mark.parametrize("facing", [1, -1])
def test_walking_hips_move_monotonically(facing):
    seq = pose_program(ActionLabel.WALKING, 40, Placement(900.0, 900.0, 500.0, facing))
    hip_x = seq[:, 11:13, 0].mean(axis=1)
    steps = np.diff(hip_x) * facing
    np.testing.assert_allclose(steps, WALK_SPEED)


def test_static_actions_do_not_move():
    for label in (ActionLabel.SITTING, ActionLabel.STANDING):
        seq = pose_program(label, 10, WHERE)
        assert np.ptp(seq, axis=0).max() == 0.0


def test_action_dataset_is_balanced_and_valid():
    data = generate_action_dataset(ActionDatasetConfig(clips_per_class=3, seed=1))
    assert np.bincount(data.labels, minlength=5).tolist() == [3] * 5
    for clip in data.clips:
        assert validate(clip) is None
        assert 30 <= len(clip.detections) <= 90


def test_action_dataset_deterministic():
    cfg = ActionDatasetConfig(clips_per_class=2, seed=5)
    assert generate_action_dataset(cfg).clips == generate_action_dataset(cfg).clips
    other = generate_action_dataset(ActionDatasetConfig(clips_per_class=2, seed=6))
    assert other.clips != generate_action_dataset(cfg).clips


def test_distractor_scenes_contain_the_target():
    data = generate_action_dataset(ActionDatasetConfig(clips_per_class=1, distractors=2, seed=0))
    assert len(data.scene_frames) == len(data.clips)
    for clip, frames in zip(data.clips, data.scene_frames):
        assert all(len(g) == 3 for g in frames)
        assert all(d in g for d, g in zip(clip.detections, frames))


def test_scenario_deterministic():
    cfg = short(120, occlusions=((10, 5, 0),), scene_changes=(60,), seed=4)
    a, b = generate_scenario(cfg), generate_scenario(cfg)
    assert a.frames == b.frames and a.embeddings == b.embeddings and a.identity == b.identity


def test_noise_free_scenario_gives_one_tracklet_per_actor():
    cfg = ScenarioConfig(num_frames=150, occlusions=(), scene_changes=(), sigma_box=0.0, sigma_kp=0.0, seed=2)
    sc = generate_scenario(cfg)
    tracklets = build_tracklets(sc.frames)
    assert len(tracklets) == cfg.num_actors
    for t in tracklets:
        assert len(t) == cfg.num_frames
        assert len({sc.identity[d.detection_id] for d in t.detections}) == 1


def test_single_actor_boxes_overlap_frame_to_frame():
    sc = generate_scenario(short(200, num_actors=1, seed=3))
    boxes = [g[0].box for g in sc.frames]
    overlaps = np.array([iou(a, b) for a, b in zip(boxes, boxes[1:])])
    # Walking onset widens the box abruptly, but never below the link threshold.
    assert overlaps.min() > 0.5
    assert np.median(overlaps) > 0.9


def test_occlusion_removes_exactly_its_frames():
    cfg = ScenarioConfig(num_actors=2, num_frames=100, occlusions=((30, 7, 1),), scene_changes=(), seed=0)
    sc = generate_scenario(cfg)
    for f, group in enumerate(sc.frames):
        actors = sorted(sc.identity[d.detection_id] for d in group)
        assert actors == ([0] if 30 <= f < 37 else [0, 1])


def test_scene_change_breaks_every_box_overlap():
    cfg = ScenarioConfig(num_frames=100, occlusions=(), scene_changes=(50,), seed=1)
    sc = generate_scenario(cfg)
    before, after = sc.frames[49], sc.frames[50]
    by_actor = {sc.identity[d.detection_id]: d.box for d in before}
    for d in after:
        assert iou(by_actor[sc.identity[d.detection_id]], d.box) < 0.3


def test_reference_detection_belongs_to_target():
    sc = generate_scenario(short(300, occlusions=((100, 20, 1),), scene_changes=(150,), seed=0))
    assert sc.identity[sc.reference_detection] == sc.config.target
    assert sc.manifest.reference_detection == sc.reference_detection


def test_annotations_cover_the_scenario():
    sc = generate_scenario(short(300, occlusions=((100, 20, 1),), scene_changes=(150,), seed=0))
    spans = sc.annotations
    assert spans[0].start_frame == 0 and spans[-1].end_frame == 299
    assert all(a.end_frame + 1 == b.start_frame for a, b in zip(spans, spans[1:]))


def test_tracklet_truth_and_render():
    sc = generate_scenario(short(60, seed=0))
    truth = tracklet_truth(build_tracklets(sc.frames), sc)
    assert any(truth.values()) and not all(truth.values())
    img = render_frame(sc, 10, scale=0.1)
    assert img.shape == (108, 192, 3) and img.dtype == np.uint8
    np.testing.assert_array_equal(img, render_frame(sc, 10, scale=0.1))


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(num_actors=2, target=2)
    with pytest.raises(ValueError):
        ScenarioConfig(num_frames=10, occlusions=((20, 1, 0),))
    with pytest.raises(ValueError):
        ScenarioConfig(num_frames=10, scene_changes=(10,))
