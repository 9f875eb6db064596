import itertools
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from target_har.core_types import Detection, Tracklet  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_detection(frame, box, det_id=0, score=0.9, conf=0.9, embedding=None, kps=None):
    """Detection with keypoints spread inside the box unless `kps` is given."""
    x0, y0, x1, y1 = box
    if kps is None:
        kps = np.zeros((17, 3))
        kps[:, 0] = np.linspace(x0, x1, 17)
        kps[:, 1] = np.linspace(y0, y1, 17)
        kps[:, 2] = conf
    return Detection.from_arrays(frame, box, kps, score, det_id, embedding)


def make_tracklet(tid, start, length, box=(0, 0, 10, 20), first_id=0, conf=0.9, score=0.9, embedding=None):
    dets = tuple(
        make_detection(start + k, box, first_id + k, score=score, conf=conf, embedding=embedding) for k in range(length)
    )
    return Tracklet(tid, dets)


def brute_force_assignment(cost):
    """(size, total) of the best matching: most finite pairs first, then least cost."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n <= m:
        candidates = ((tuple(range(n)), p) for p in itertools.permutations(range(m), n))
    else:
        candidates = ((p, tuple(range(m))) for p in itertools.permutations(range(n), m))
    best_size, best = -1, np.inf
    for rs, cs in candidates:
        pairs = [(r, c) for r, c in zip(rs, cs) if np.isfinite(cost[r, c])]
        total = sum(cost[r, c] for r, c in pairs)
        if len(pairs) > best_size or (len(pairs) == best_size and total < best):
            best_size, best = len(pairs), total
    return max(best_size, 0), (0.0 if best_size <= 0 else float(best))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
