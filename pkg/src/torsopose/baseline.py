"""Analytical pose estimate from 3D joint positions.

Position: per camera seeing at least three joints, the componentwise median
of the joints' floor coordinates; the estimate is the mean over cameras.

Orientation: for each camera and each visible symmetric pair (shoulders,
hips) the facing direction is the left-to-right vector rotated +90 degrees
(counter-clockwise from above). Angles are averaged as unit vectors, first
per camera and then across cameras. When no pair is visible the previous
estimate is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .skeleton import JointId, Observation

PAIRS = ((JointId.LEFT_SHOULDER, JointId.RIGHT_SHOULDER), (JointId.LEFT_HIP, JointId.RIGHT_HIP))
MIN_JOINTS = 3
MIN_PAIR_SEPARATION = 1e-9


def circular_mean(angles) -> float | None:
    """Angle of the mean unit vector, in (-pi, pi]; None if it vanishes."""
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        return None
    s, c = np.sin(a).sum(), np.cos(a).sum()
    if np.hypot(s, c) < 1e-12:
        return None
    out = float(np.arctan2(s, c))
    return np.pi if out == -np.pi else out


def pair_orientation(left_xy, right_xy) -> float | None:
    """Facing angle of a symmetric joint pair, None when the points coincide."""
    v = np.asarray(right_xy, dtype=np.float64) - np.asarray(left_xy, dtype=np.float64)
    if np.hypot(*v) < MIN_PAIR_SEPARATION:
        return None
    out = float(np.arctan2(v[0], -v[1]))
    return np.pi if out == -np.pi else out


def baseline_position(views: Sequence[Observation]) -> tuple[float, float] | None:
    estimates = []
    for obs in views:
        xy = np.array([jd.xyz[:2] for jd in obs.joints if jd.xyz is not None])
        if len(xy) >= MIN_JOINTS:
            estimates.append(np.median(xy, axis=0))
    if not estimates:
        return None
    x, y = np.mean(estimates, axis=0)
    return float(x), float(y)


@dataclass
class BaselineState:
    previous: float | None = None


def baseline_orientation(views: Sequence[Observation],
                         state: BaselineState | None = None) -> tuple[float | None, BaselineState]:
    state = state or BaselineState()
    per_camera = []
    for obs in views:
        jm = obs.joint_map()
        angles = []
        for left, right in PAIRS:
            if left in jm and right in jm and jm[left].xyz is not None \
                    and jm[right].xyz is not None:
                a = pair_orientation(jm[left].xyz[:2], jm[right].xyz[:2])
                if a is not None:
                    angles.append(a)
        cam = circular_mean(angles)
        if cam is not None:
            per_camera.append(cam)
    alpha = circular_mean(per_camera)
    if alpha is None:
        return state.previous, state
    return alpha, BaselineState(alpha)
