import numpy as np
import pytest

from symtrack.core import Detection, Shot, Tracklet


def make_det(det_id, frame, feature=(1.0, 0.0), bbox=(0.0, 0.0, 10.0, 10.0), context=None):
    ctx = None if context is None else np.asarray(context, dtype=float)
    return Detection(det_id, frame, tuple(bbox), 0.9, np.asarray(feature, dtype=float), ctx)


def make_tracklet(tid, dets, shot_id=0):
    """Tracklet from ``(det_id, frame)`` pairs."""
    return Tracklet(tid, shot_id, tuple(d for d, _ in dets), tuple(f for _, f in dets))


def span(tid, first_det, frames, shot_id=0):
    return make_tracklet(tid, [(first_det + i, f) for i, f in enumerate(frames)], shot_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def one_shot():
    return [Shot(0, 0, 100)]
