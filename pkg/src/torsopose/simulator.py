"""Kinematic multi-camera simulator producing skeleton datasets.

Avatars walk smooth random-waypoint paths, stop and turn in place now and
then, and are posed from a fixed template with a simple gait. Joints are
projected through the rig; a noise model emulates detector jitter, missed
joints and cameras, region occlusions and confidence scores.

Orientation convention: ``alpha = 0`` faces world +x, positive
counter-clockwise seen from above. The avatar's left side is at +y when
``alpha = 0`` (right-handed frame, z up).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Rig, RoomBounds, default_rig, project_points, wrap_angle
from .skeleton import (
    HIST_SHAPE, NUM_JOINTS, Dataset, FrameBatch, GroundTruthPose, JointDetection, JointId,
    Observation, dump_dataset, merge_datasets,
)

J = JointId

# Body frame: x forward, y left, z up; origin on the floor below the shoulder midpoint.
_TEMPLATE = {
    J.NOSE: (0.10, 0.0, 1.62),
    J.LEFT_EYE: (0.08, 0.035, 1.66), J.RIGHT_EYE: (0.08, -0.035, 1.66),
    J.LEFT_EAR: (0.0, 0.075, 1.63), J.RIGHT_EAR: (0.0, -0.075, 1.63),
    J.LEFT_SHOULDER: (0.0, 0.20, 1.45), J.RIGHT_SHOULDER: (0.0, -0.20, 1.45),
    J.LEFT_ELBOW: (0.0, 0.23, 1.16), J.RIGHT_ELBOW: (0.0, -0.23, 1.16),
    J.LEFT_WRIST: (0.02, 0.23, 0.90), J.RIGHT_WRIST: (0.02, -0.23, 0.90),
    J.LEFT_HIP: (0.0, 0.10, 0.95), J.RIGHT_HIP: (0.0, -0.10, 0.95),
    J.LEFT_KNEE: (0.01, 0.10, 0.52), J.RIGHT_KNEE: (0.01, -0.10, 0.52),
    J.LEFT_ANKLE: (0.0, 0.10, 0.08), J.RIGHT_ANKLE: (0.0, -0.10, 0.08),
}
FACE = (J.NOSE, J.LEFT_EYE, J.RIGHT_EYE, J.LEFT_EAR, J.RIGHT_EAR)
REGIONS = {
    "upper": (J.LEFT_SHOULDER, J.RIGHT_SHOULDER, J.LEFT_ELBOW, J.RIGHT_ELBOW,
              J.LEFT_WRIST, J.RIGHT_WRIST),
    "lower": (J.LEFT_HIP, J.RIGHT_HIP, J.LEFT_KNEE, J.RIGHT_KNEE, J.LEFT_ANKLE, J.RIGHT_ANKLE),
    "left": tuple(j for j in JointId if j.name.startswith("LEFT_")),
    "right": tuple(j for j in JointId if j.name.startswith("RIGHT_")),
    "torso": (J.LEFT_SHOULDER, J.RIGHT_SHOULDER, J.LEFT_HIP, J.RIGHT_HIP),
}


@dataclass(frozen=True)
class AvatarTemplate:
    offsets: tuple = tuple(tuple(_TEMPLATE[j]) for j in JointId)
    arm_swing: float = 0.35  # radians at walking speed 1 m/s
    leg_swing: float = 0.40
    stride: float = 1.3      # meters per gait cycle

    def array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=np.float64)


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.0
    dropout: float = 0.0            # per joint
    camera_miss: float = 0.0        # per camera and frame
    region_occlusion: float = 0.0   # per observation: hide one body region
    self_occlusion: bool = False    # face joints hidden from cameras behind the person
    depth_sigma: float = 0.0        # meters, on the 3D joint positions
    score_mean: float = 0.85
    score_sd: float = 0.0
    histogram_noise: float = 0.05
    # an occluded joint may still be detected: its pixel is right but its depth
    # is read off the occluder, and the detector is less confident about it
    hidden_reported: float = 0.0
    hidden_score_mean: float = 0.45

    def __post_init__(self):
        for name in ("dropout", "camera_miss", "region_occlusion", "hidden_reported"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pixel_sigma < 0 or self.depth_sigma < 0 or self.score_sd < 0:
            raise ValueError("noise scales must be non-negative")

    @classmethod
    def from_dict(cls, d) -> "NoiseModel":
        return cls(**d)


NOISE_PROFILES = {
    "none": NoiseModel(histogram_noise=0.0),
    "moderate": NoiseModel(pixel_sigma=2.0, dropout=0.05, camera_miss=0.05,
                           region_occlusion=0.10, self_occlusion=True, depth_sigma=0.02,
                           score_sd=0.08),
    "occluded": NoiseModel(pixel_sigma=2.0, dropout=0.15, camera_miss=0.15,
                           region_occlusion=0.6, self_occlusion=True, depth_sigma=0.02,
                           score_sd=0.08, hidden_reported=0.5),
}


# ---------------------------------------------------------------- paths

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    phase: np.ndarray
    speed: np.ndarray

    def __len__(self):
        return len(self.t)

    def poses(self, person=0, source="sim") -> list[GroundTruthPose]:
        return [GroundTruthPose(float(t), float(x), float(y), float(a), person, source)
                for t, x, y, a in zip(self.t, self.x, self.y, self.alpha)]


def generate_path(room: RoomBounds, duration: float, seed: int, rate: float = 15.0,
                  margin: float = 0.6, template: AvatarTemplate | None = None) -> Trajectory:
    """Random-waypoint walk with bounded turn rate and stand-and-turn pauses."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    template = template or AvatarTemplate()
    rng = np.random.default_rng(seed)
    lim = np.array([max(room.hx - margin, 0.1), max(room.hy - margin, 0.1)])
    n = max(1, int(np.ceil(duration * rate)))
    dt = 1.0 / rate
    max_turn = 2.5  # rad/s
    pos = rng.uniform(-lim, lim)
    heading = rng.uniform(-np.pi, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    goal, speed_goal, turn_goal, hold = rng.uniform(-lim, lim), rng.uniform(0.5, 1.3), None, 0.0
    out = np.zeros((n, 5))
    for k in range(n):
        speed = 0.0
        if turn_goal is not None:
            err = wrap_angle(turn_goal - heading)
            heading = wrap_angle(heading + np.clip(err, -max_turn * dt, max_turn * dt))
            hold -= dt
            if hold <= 0 and abs(err) < 1e-3:
                turn_goal = None
                goal, speed_goal = rng.uniform(-lim, lim), rng.uniform(0.5, 1.3)
        else:
            delta = goal - pos
            dist = float(np.hypot(*delta))
            if dist < 0.25:
                if rng.random() < 0.5:
                    turn_goal, hold = rng.uniform(-np.pi, np.pi), rng.uniform(0.5, 2.5)
                else:
                    goal, speed_goal = rng.uniform(-lim, lim), rng.uniform(0.5, 1.3)
            else:
                err = wrap_angle(np.arctan2(delta[1], delta[0]) - heading)
                heading = wrap_angle(heading + np.clip(err, -max_turn * dt, max_turn * dt))
                # slow down while the heading is far from the goal direction
                speed = speed_goal * max(0.2, np.cos(min(abs(err), np.pi / 2)))
                pos = np.clip(pos + speed * dt * np.array([np.cos(heading), np.sin(heading)]),
                              -lim, lim)
                phase = (phase + 2 * np.pi * speed * dt / template.stride) % (2 * np.pi)
        out[k] = (pos[0], pos[1], heading, phase, speed)
    t = np.round(np.arange(n) * dt, 9)
    return Trajectory(t, out[:, 0], out[:, 1], wrap_angle(out[:, 2]), out[:, 3], out[:, 4])


# ---------------------------------------------------------------- posing

def _swing(offsets, pivot, angle):
    """Rotate body-frame points about the pivot's lateral axis (forward swing positive)."""
    d = offsets - pivot
    c, s = np.cos(angle), np.sin(angle)
    out = offsets.copy()
    out[:, 0] = pivot[0] + d[:, 0] * c - d[:, 2] * s
    out[:, 2] = pivot[2] + d[:, 0] * s + d[:, 2] * c
    return out


def pose_skeleton(template: AvatarTemplate, pose, phase: float = 0.0,
                  swing: float = 0.0) -> np.ndarray:
    """World positions (17, 3) of the template placed at ``pose``.

    ``pose`` provides ``x``, ``y`` and ``alpha``; ``swing`` in [0, 1] scales
    the gait amplitude (0 = standing still).
    """
    body = template.array()
    if swing:
        arm = template.arm_swing * swing * np.sin(phase)
        leg = template.leg_swing * swing * np.sin(phase)
        for side, sign in (("LEFT", 1.0), ("RIGHT", -1.0)):
            sh, el, wr = J[f"{side}_SHOULDER"], J[f"{side}_ELBOW"], J[f"{side}_WRIST"]
            hp, kn, an = J[f"{side}_HIP"], J[f"{side}_KNEE"], J[f"{side}_ANKLE"]
            # arms swing opposite to the leg on the same side
            body[[el, wr]] = _swing(body[[el, wr]], body[sh], -sign * arm)
            body[[kn, an]] = _swing(body[[kn, an]], body[hp], sign * leg)
    ca, sa = np.cos(pose.alpha), np.sin(pose.alpha)
    world = np.empty_like(body)
    world[:, 0] = pose.x + ca * body[:, 0] - sa * body[:, 1]
    world[:, 1] = pose.y + sa * body[:, 0] + ca * body[:, 1]
    world[:, 2] = body[:, 2]
    return world


# ---------------------------------------------------------------- detection

def signature_histogram(person: int, seed: int, bins_per_person: int = 6) -> np.ndarray:
    """Appearance signature; different persons of one seed get disjoint bins."""
    n_bins = HIST_SHAPE[0] * HIST_SHAPE[1]
    perm = np.random.default_rng([seed, 7919]).permutation(n_bins)
    chosen = perm[(person * bins_per_person) % n_bins:][:bins_per_person]
    w = np.random.default_rng([seed, 104729, person]).dirichlet(np.full(bins_per_person, 4.0))
    h = np.zeros(n_bins)
    h[chosen] = w
    return h.reshape(HIST_SHAPE)


def perturb_histogram(h, sigma, rng) -> np.ndarray:
    if sigma == 0:
        return h.copy()
    out = h * np.exp(rng.normal(0.0, sigma, size=h.shape))
    return out / out.sum()


def synthesize_frame(joints: np.ndarray, rig: Rig, noise: NoiseModel, t: float, rng,
                     *, alpha: float | None = None, person: int | None = 0,
                     histogram=None, depth: bool = True) -> list[Observation]:
    """Emulated detector output of every camera for one posed skeleton."""
    obs = []
    for cam in rig.cameras:
        if noise.camera_miss and rng.random() < noise.camera_miss:
            continue
        pixels, _, visible = project_points(joints, cam)
        keep = visible.copy()
        if noise.self_occlusion and alpha is not None:
            facing = np.array([np.cos(alpha), np.sin(alpha)])
            to_cam = cam.center[:2] - joints[J.NOSE, :2]
            if facing @ to_cam <= 0:
                keep[list(FACE)] = False
        hidden = np.zeros(NUM_JOINTS, dtype=bool)
        if noise.region_occlusion and rng.random() < noise.region_occlusion:
            names = sorted(REGIONS)
            region = list(REGIONS[names[int(rng.integers(len(names)))]])
            hidden[region] = keep[region]
            keep[region] = False
        if noise.hidden_reported:
            hidden &= rng.random(NUM_JOINTS) < noise.hidden_reported
            keep |= hidden
        else:
            hidden[:] = False
        if noise.dropout:
            keep &= rng.random(NUM_JOINTS) >= noise.dropout
        if noise.pixel_sigma:
            pixels = pixels + rng.normal(0.0, noise.pixel_sigma, size=pixels.shape)
        if noise.score_sd:
            scores = np.clip(rng.normal(noise.score_mean, noise.score_sd, NUM_JOINTS), 0.05, 1.0)
        else:
            scores = np.full(NUM_JOINTS, noise.score_mean)
        world = joints
        if depth and noise.depth_sigma:
            world = joints + rng.normal(0.0, noise.depth_sigma, size=joints.shape)
        if hidden.any():
            k = np.flatnonzero(hidden)
            scores[k] = np.clip(rng.normal(noise.hidden_score_mean, noise.score_sd, k.size),
                                0.05, 1.0)
            if depth:
                # slide along the viewing ray onto an occluder nearer the camera
                frac = rng.uniform(0.5, 0.95, size=(k.size, 1))
                world = world.copy()
                world[k] = cam.center + (world[k] - cam.center) * frac
        dets = tuple(
            JointDetection(JointId(j), float(pixels[j, 0]), float(pixels[j, 1]),
                           float(scores[j]), tuple(float(c) for c in world[j]) if depth else None)
            for j in np.flatnonzero(keep))
        if not dets:
            continue
        hist = None
        if histogram is not None:
            hist = perturb_histogram(histogram, noise.histogram_noise, rng)
        obs.append(Observation(cam.id, dets, t, hist, person))
    return obs


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class GenerationConfig:
    frames: int
    seed: int = 0
    rate: float = 15.0
    people: int = 1
    noise: NoiseModel = field(default_factory=NoiseModel)
    source: str = "sim"
    depth: bool = True
    histograms: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = asdict(self.noise)
        return d

    @classmethod
    def from_dict(cls, d) -> "GenerationConfig":
        d = dict(d)
        noise = d.get("noise", {})
        if isinstance(noise, str):
            d["noise"] = NOISE_PROFILES[noise]
        else:
            d["noise"] = NoiseModel.from_dict(noise)
        return cls(**d)


def config_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def simulate(cfg: GenerationConfig, rig: Rig | None = None,
             template: AvatarTemplate | None = None) -> Dataset:
    """Dataset with ``cfg.frames`` ground-truth-bearing frames."""
    if cfg.frames < 0:
        raise ValueError("frames must be non-negative")
    rig = rig or default_rig()
    template = template or AvatarTemplate()
    if cfg.frames == 0:
        return Dataset([], [], rig)
    duration = cfg.frames / cfg.rate
    paths = [generate_path(rig.room, duration, seed=cfg.seed * 1000 + p, rate=cfg.rate,
                           template=template)
             for p in range(cfg.people)]
    signatures = [signature_histogram(p, cfg.seed) if cfg.histograms else None
                  for p in range(cfg.people)]
    rng = np.random.default_rng([cfg.seed, 31337])
    frames, truth = [], []
    for k in range(cfg.frames):
        t = float(paths[0].t[k])
        observations = []
        for p, path in enumerate(paths):
            gt = GroundTruthPose(t, float(path.x[k]), float(path.y[k]), float(path.alpha[k]),
                                 p, cfg.source)
            swing = min(1.0, float(path.speed[k]))
            joints = pose_skeleton(template, gt, float(path.phase[k]), swing)
            observations += synthesize_frame(joints, rig, cfg.noise, t, rng, alpha=gt.alpha,
                                             person=p, histogram=signatures[p],
                                             depth=cfg.depth)
            truth.append(gt)
        frames.append(FrameBatch(t, tuple(observations)))
    return Dataset(frames, truth, rig)


def generate_dataset(parts, out_path, rig: Rig | None = None,
                     template: AvatarTemplate | None = None) -> dict:
    """Write a (possibly mixed-profile) dataset plus ``<out>.manifest.json``.

    ``parts`` is one :class:`GenerationConfig` or a list of them; parts are
    concatenated in time. Returns the manifest.
    """
    if isinstance(parts, GenerationConfig):
        parts = [parts]
    rig = rig or default_rig()
    ds = merge_datasets([simulate(p, rig, template) for p in parts])
    out_path = Path(out_path)
    dump_dataset(ds, out_path)
    samples = sum(1 for _ in ds.samples())
    sources: dict[str, int] = {}
    for g in ds.ground_truth:
        sources[g.source] = sources.get(g.source, 0) + 1
    manifest = {
        "dataset": out_path.name,
        "seeds": [p.seed for p in parts],
        "config_hash": config_hash({"parts": [p.to_dict() for p in parts],
                                    "rig": rig.to_dict()}),
        "frames": len(ds.frames),
        "ground_truth": len(ds.ground_truth),
        "samples": samples,
        "observations": sum(len(f.observations) for f in ds.frames),
        "sources": sources,
        "sha256": hashlib.sha256(out_path.read_bytes()).hexdigest(),
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


__all__ = [
    "AvatarTemplate", "GenerationConfig", "NOISE_PROFILES", "NoiseModel", "Trajectory",
    "generate_dataset", "generate_path", "pose_skeleton", "signature_histogram", "simulate",
    "synthesize_frame",
]
