"""Joint taxonomy, skeleton observations and the dataset JSON format.

Dataset document layout (``version`` 1)::

    {
      "version": 1,
      "rig": {...},                      # optional, see geometry.Rig.to_dict
      "frames": [
        {"t": 0.0,
         "observations": [
           {"camera": 0, "person": 0,    # person is an optional simulator label
            "joints": [{"name": "nose", "u": 321.5, "v": 200.1,
                        "score": 0.93, "xyz": [0.1, 0.2, 1.6]}],
            "histogram": {"shape": [16, 16], "index": [...], "value": [...]}}
         ]}
      ],
      "ground_truth": [{"t": 0.0, "person": 0, "x": 0.5, "y": -1.0,
                        "alpha": 0.3, "source": "sim"}]
    }

``xyz`` is present only for depth cameras. Histograms may also be given as
a dense nested list or omitted (treated as an empty ROI).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .geometry import Rig

SCHEMA_VERSION = 1
HIST_SHAPE = (16, 16)


class JointId(enum.IntEnum):
    NOSE = 0
    LEFT_EYE = 1
    RIGHT_EYE = 2
    LEFT_EAR = 3
    RIGHT_EAR = 4
    LEFT_SHOULDER = 5
    RIGHT_SHOULDER = 6
    LEFT_ELBOW = 7
    RIGHT_ELBOW = 8
    LEFT_WRIST = 9
    RIGHT_WRIST = 10
    LEFT_HIP = 11
    RIGHT_HIP = 12
    LEFT_KNEE = 13
    RIGHT_KNEE = 14
    LEFT_ANKLE = 15
    RIGHT_ANKLE = 16

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, name: str) -> "JointId":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown joint {name!r}") from None


NUM_JOINTS = len(JointId)
J = JointId

_PARENT = {
    J.LEFT_EYE: J.NOSE, J.RIGHT_EYE: J.NOSE,
    J.LEFT_EAR: J.LEFT_EYE, J.RIGHT_EAR: J.RIGHT_EYE,
    J.LEFT_SHOULDER: J.NOSE, J.RIGHT_SHOULDER: J.NOSE,
    J.LEFT_ELBOW: J.LEFT_SHOULDER, J.RIGHT_ELBOW: J.RIGHT_SHOULDER,
    J.LEFT_WRIST: J.LEFT_ELBOW, J.RIGHT_WRIST: J.RIGHT_ELBOW,
    J.LEFT_HIP: J.LEFT_SHOULDER, J.RIGHT_HIP: J.RIGHT_SHOULDER,
    J.LEFT_KNEE: J.LEFT_HIP, J.RIGHT_KNEE: J.RIGHT_HIP,
    J.LEFT_ANKLE: J.LEFT_KNEE, J.RIGHT_ANKLE: J.RIGHT_KNEE,
}


def kinematic_parent(j: JointId) -> JointId | None:
    return _PARENT.get(JointId(j))


def mirror(j: JointId) -> JointId | None:
    j = JointId(j)
    if j is J.NOSE:
        return None
    name = j.name
    if name.startswith("LEFT_"):
        return J["RIGHT_" + name[5:]]
    return J["LEFT_" + name[6:]]


MIRROR_PAIRS = tuple((j, mirror(j)) for j in JointId if j.name.startswith("LEFT_"))


class DatasetError(ValueError):
    """Schema or invariant violation in a dataset document."""


@dataclass(frozen=True)
class JointDetection:
    joint: JointId
    u: float
    v: float
    score: float
    xyz: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"{self.joint.label}: score {self.score} outside [0, 1]")
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError(f"{self.joint.label}: non-finite pixel")

    @property
    def pixel(self) -> tuple[float, float]:
        return self.u, self.v


@dataclass(frozen=True)
class Observation:
    """One camera's detection of one person at one instant."""

    camera: int
    joints: tuple[JointDetection, ...]
    timestamp: float
    histogram: np.ndarray | None = field(default=None, compare=False, repr=False)
    person: int | None = None

    def __post_init__(self):
        if not self.joints:
            raise ValueError(f"camera {self.camera} t={self.timestamp}: no joints")
        ids = [jd.joint for jd in self.joints]
        if len(set(ids)) != len(ids):
            dup = sorted({j.label for j in ids if ids.count(j) > 1})
            raise ValueError(
                f"camera {self.camera} t={self.timestamp}: duplicate joints {dup}")
        if not np.isfinite(self.timestamp):
            raise ValueError(f"camera {self.camera}: non-finite timestamp")
        object.__setattr__(self, "joints", tuple(sorted(self.joints, key=lambda d: d.joint)))
        if self.histogram is not None:
            object.__setattr__(self, "histogram", _check_histogram(self.histogram))

    def joint_map(self) -> dict[JointId, JointDetection]:
        return {jd.joint: jd for jd in self.joints}

    @property
    def has_world(self) -> bool:
        return all(jd.xyz is not None for jd in self.joints)


@dataclass(frozen=True)
class GroundTruthPose:
    t: float
    x: float
    y: float
    alpha: float
    person: int = 0
    source: str = "sim"


@dataclass(frozen=True)
class FrameBatch:
    timestamp: float
    observations: tuple[Observation, ...]

    def __post_init__(self):
        seen = set()
        for o in self.observations:
            if o.person is None:
                continue
            key = (o.camera, o.person)
            if key in seen:
                raise ValueError(f"t={self.timestamp}: two observations for camera "
                                 f"{o.camera} person {o.person}")
            seen.add(key)


@dataclass
class Dataset:
    frames: list[FrameBatch]
    ground_truth: list[GroundTruthPose]
    rig: Rig | None = None

    def samples(self) -> Iterator[tuple[GroundTruthPose, tuple[Observation, ...]]]:
        """Yield ``(truth, views)`` for every ground-truth pose seen by a camera.

        Views are the labelled observations of that person in the matching
        frame, one per camera, ordered by camera id.
        """
        by_t = {f.timestamp: f for f in self.frames}
        for gt in self.ground_truth:
            frame = by_t.get(gt.t)
            if frame is None:
                continue
            views = tuple(sorted((o for o in frame.observations if o.person == gt.person),
                                 key=lambda o: o.camera))
            if views:
                yield gt, views


def _check_histogram(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != HIST_SHAPE:
        raise ValueError(f"histogram shape {h.shape}, expected {HIST_SHAPE}")
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise ValueError("histogram has negative or non-finite bins")
    s = h.sum()
    if s != 0.0 and abs(s - 1.0) > 1e-9:
        raise ValueError(f"histogram sums to {s}, expected 0 or 1")
    h = h.copy()
    h.setflags(write=False)
    return h


# ---------------------------------------------------------------- parsing

def _req(d, key, path):
    if not isinstance(d, dict):
        raise DatasetError(f"{path}: expected an object")
    if key not in d:
        raise DatasetError(f"{path}.{key}: missing")
    return d[key]


def _num(x, path) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DatasetError(f"{path}: expected a number, got {type(x).__name__}")
    return float(x)


def _parse_histogram(h, path):
    if h is None:
        return None
    try:
        if isinstance(h, dict):
            shape = tuple(h.get("shape", HIST_SHAPE))
            if shape != HIST_SHAPE:
                raise ValueError(f"shape {shape}, expected {HIST_SHAPE}")
            dense = np.zeros(HIST_SHAPE[0] * HIST_SHAPE[1])
            idx = np.asarray(h["index"], dtype=np.int64)
            val = np.asarray(h["value"], dtype=np.float64)
            if idx.shape != val.shape:
                raise ValueError("index/value length mismatch")
            dense[idx] = val
            return dense.reshape(HIST_SHAPE)
        return np.asarray(h, dtype=np.float64)
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise DatasetError(f"{path}: {exc}") from None


def _parse_joint(d, path) -> JointDetection:
    name = _req(d, "name", path)
    try:
        joint = JointId.from_label(str(name))
    except ValueError as exc:
        raise DatasetError(f"{path}.name: {exc}") from None
    xyz = d.get("xyz")
    if xyz is not None:
        if not isinstance(xyz, list) or len(xyz) != 3:
            raise DatasetError(f"{path}.xyz: expected 3 numbers")
        xyz = tuple(_num(c, f"{path}.xyz") for c in xyz)
    try:
        return JointDetection(joint, _num(_req(d, "u", path), f"{path}.u"),
                              _num(_req(d, "v", path), f"{path}.v"),
                              _num(_req(d, "score", path), f"{path}.score"), xyz)
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"{path}: {exc}") from None


def _parse_observation(d, t, path) -> Observation:
    camera = _req(d, "camera", path)
    if isinstance(camera, bool) or not isinstance(camera, int):
        raise DatasetError(f"{path}.camera: expected an integer")
    joints_doc = _req(d, "joints", path)
    if not isinstance(joints_doc, list):
        raise DatasetError(f"{path}.joints: expected a list")
    joints = [_parse_joint(j, f"{path}.joints[{k}]") for k, j in enumerate(joints_doc)]
    ts = _num(d["t"], f"{path}.t") if "t" in d else t
    person = d.get("person")
    try:
        return Observation(camera, tuple(joints), ts,
                           _parse_histogram(d.get("histogram"), f"{path}.histogram"),
                           None if person is None else int(person))
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"{path}: {exc}") from None


def parse_dataset(doc: dict) -> Dataset:
    """Validate a dataset document and return frames sorted by time."""
    if not isinstance(doc, dict):
        raise DatasetError("$: expected an object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise DatasetError(f"$.version: unsupported version {version!r}")
    frames_doc = doc.get("frames", [])
    if not isinstance(frames_doc, list):
        raise DatasetError("$.frames: expected a list")
    frames = []
    for k, f in enumerate(frames_doc):
        path = f"$.frames[{k}]"
        t = _num(_req(f, "t", path), f"{path}.t")
        obs_doc = _req(f, "observations", path)
        if not isinstance(obs_doc, list):
            raise DatasetError(f"{path}.observations: expected a list")
        obs = tuple(_parse_observation(o, t, f"{path}.observations[{i}]")
                    for i, o in enumerate(obs_doc))
        try:
            frames.append(FrameBatch(t, obs))
        except ValueError as exc:
            raise DatasetError(f"{path}: {exc}") from None
    frames.sort(key=lambda fr: fr.timestamp)
    for a, b in zip(frames, frames[1:]):
        if a.timestamp == b.timestamp:
            raise DatasetError(f"$.frames: duplicate frame time {a.timestamp}")
    last: dict[int, float] = {}
    for fr in frames:
        for o in fr.observations:
            if o.timestamp < last.get(o.camera, -np.inf):
                raise DatasetError(
                    f"camera {o.camera}: timestamp {o.timestamp} precedes {last[o.camera]}")
            last[o.camera] = o.timestamp

    gts = []
    for k, g in enumerate(doc.get("ground_truth", [])):
        path = f"$.ground_truth[{k}]"
        gts.append(GroundTruthPose(
            _num(_req(g, "t", path), f"{path}.t"), _num(_req(g, "x", path), f"{path}.x"),
            _num(_req(g, "y", path), f"{path}.y"),
            _num(_req(g, "alpha", path), f"{path}.alpha"),
            int(g.get("person", 0)), str(g.get("source", "sim"))))
    rig = None
    if doc.get("rig") is not None:
        try:
            rig = Rig.from_dict(doc["rig"])
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"$.rig: {exc}") from None
    return Dataset(frames, gts, rig)


def parse_observation_stream(doc: dict) -> list[FrameBatch]:
    return parse_dataset(doc).frames


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return parse_dataset(json.load(fh))


# ---------------------------------------------------------------- emitting

def _emit_histogram(h):
    if h is None:
        return None
    flat = np.asarray(h).ravel()
    idx = np.flatnonzero(flat)
    return {"shape": list(HIST_SHAPE), "index": idx.tolist(), "value": flat[idx].tolist()}


def _emit_observation(o: Observation, frame_t: float) -> dict:
    d = {"camera": o.camera}
    if o.person is not None:
        d["person"] = o.person
    if o.timestamp != frame_t:
        d["t"] = o.timestamp
    joints = []
    for jd in o.joints:
        j = {"name": jd.joint.label, "u": jd.u, "v": jd.v, "score": jd.score}
        if jd.xyz is not None:
            j["xyz"] = list(jd.xyz)
        joints.append(j)
    d["joints"] = joints
    hist = _emit_histogram(o.histogram)
    if hist is not None:
        d["histogram"] = hist
    return d


def emit_dataset(ds: Dataset) -> dict:
    doc: dict = {"version": SCHEMA_VERSION}
    if ds.rig is not None:
        doc["rig"] = ds.rig.to_dict()
    doc["frames"] = [
        {"t": f.timestamp, "observations": [_emit_observation(o, f.timestamp)
                                            for o in f.observations]}
        for f in ds.frames
    ]
    doc["ground_truth"] = [
        {"t": g.t, "person": g.person, "x": g.x, "y": g.y, "alpha": g.alpha,
         "source": g.source}
        for g in ds.ground_truth
    ]
    return doc


def dump_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(emit_dataset(ds), separators=(",", ":")))


def merge_datasets(parts: Iterable[Dataset]) -> Dataset:
    """Concatenate datasets, shifting times so frames stay strictly ordered."""
    frames, gts, rig, offset = [], [], None, 0.0
    for ds in parts:
        rig = rig or ds.rig
        if not ds.frames:
            continue
        shift = offset - ds.frames[0].timestamp
        for f in ds.frames:
            obs = tuple(Observation(o.camera, o.joints, o.timestamp + shift, o.histogram, o.person)
                        for o in f.observations)
            frames.append(FrameBatch(f.timestamp + shift, obs))
        gts.extend(GroundTruthPose(g.t + shift, g.x, g.y, g.alpha, g.person, g.source)
                   for g in ds.ground_truth)
        offset = frames[-1].timestamp + 1.0
    return Dataset(frames, gts, rig)
