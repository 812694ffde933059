"""Appearance-based association of observations to tracked people.

Each observation carries a hue/saturation histogram of its ROI. A new
observation is compared against the recent history of every live track
with the Bhattacharyya (Hellinger) distance; the median over the last ``Q``
history entries decides the match.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .skeleton import HIST_SHAPE, FrameBatch, Observation


class MatcherError(RuntimeError):
    pass


def hs_histogram(hue, saturation, bins=HIST_SHAPE) -> np.ndarray:
    """Normalized 2D histogram over hue in [0, 1) and saturation in [0, 1].

    Empty input gives an all-zero histogram.
    """
    hue = np.asarray(hue, dtype=np.float64).ravel()
    sat = np.asarray(saturation, dtype=np.float64).ravel()
    h, _, _ = np.histogram2d(hue, sat, bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    total = h.sum()
    return h / total if total > 0 else h


def bhattacharyya_distance(a, b) -> float:
    """Hellinger form sqrt(1 - BC), in [0, 1]; 1 if either histogram is empty."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.sum() == 0.0 or b.sum() == 0.0:
        return 1.0
    bc = float(np.sum(np.sqrt(a * b)))
    return float(np.sqrt(max(0.0, 1.0 - bc)))


@dataclass(frozen=True)
class MatcherConfig:
    d_max: float = 0.65
    confirm_seconds: float = 2.0
    expire_seconds: float = 2.0
    history_depth: int = 10

    def __post_init__(self):
        if not 0.0 < self.d_max < 1.0:
            raise ValueError("d_max must lie in (0, 1)")
        if self.confirm_seconds <= 0 or self.expire_seconds <= 0:
            raise ValueError("confirm/expire windows must be positive")
        if self.history_depth < 1:
            raise ValueError("history_depth must be >= 1")


class TrackStatus(str, enum.Enum):
    CANDIDATE = "candidate"
    CONFIRMED = "confirmed"
    EXPIRED = "expired"


@dataclass
class PersonTrack:
    person_id: int
    first_seen: float
    last_matched: float
    status: TrackStatus = TrackStatus.CANDIDATE
    # time-ordered observations across all cameras, newest last
    history: deque = field(default_factory=lambda: deque(maxlen=256))
    latest: dict = field(default_factory=dict)  # camera -> most recent Observation

    def add(self, obs: Observation) -> None:
        self.history.append(obs)
        prev = self.latest.get(obs.camera)
        if prev is None or obs.timestamp >= prev.timestamp:
            self.latest[obs.camera] = obs
        self.last_matched = max(self.last_matched, obs.timestamp)


def _median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


def observation_distance(obs: Observation, track: PersonTrack, cfg: MatcherConfig) -> float:
    if not track.history:
        raise MatcherError(f"track {track.person_id} has no history")
    recent = list(track.history)[-cfg.history_depth:]
    return _median([bhattacharyya_distance(obs.histogram if obs.histogram is not None else 0.0,
                                           h.histogram if h.histogram is not None else 0.0)
                    for h in recent])


def latest_views(track: PersonTrack, num_cameras: int | None = None) -> tuple[Observation, ...]:
    """Most recent observation per camera, ordered by camera id."""
    if not track.latest:
        raise MatcherError(f"track {track.person_id} has no observations")
    views = tuple(track.latest[c] for c in sorted(track.latest))
    if num_cameras is not None and len(views) > num_cameras:
        raise MatcherError(f"track {track.person_id} seen by {len(views)} cameras "
                           f"but rig has {num_cameras}")
    return views


@dataclass(frozen=True)
class TrackEvent:
    track: int
    event: str
    t: float

    def to_dict(self) -> dict:
        return {"track": self.track, "event": self.event, "t": self.t}


class Matcher:
    """State machine creating, updating and removing tracked people.

    Not thread-safe; ``step`` calls must be serialized by the owner.
    """

    def __init__(self, cfg: MatcherConfig | None = None):
        self.cfg = cfg or MatcherConfig()
        self.tracks: dict[int, PersonTrack] = {}
        self.last_t = -np.inf
        self._next_id = 0

    def confirmed(self) -> list[PersonTrack]:
        return [tr for tr in self.tracks.values() if tr.status is TrackStatus.CONFIRMED]

    def step(self, frame: FrameBatch) -> tuple[list[TrackEvent], dict[int, int]]:
        """Process one frame.

        Returns the emitted events and the assignment ``{observation index:
        track id}`` for the frame's observations.
        """
        cfg, t = self.cfg, frame.timestamp
        if t < self.last_t:
            raise MatcherError(f"frame time {t} precedes previous frame {self.last_t}")
        self.last_t = t
        events: list[TrackEvent] = []

        for pid in sorted(self.tracks):
            tr = self.tracks[pid]
            if t - tr.last_matched > cfg.expire_seconds:
                tr.status = TrackStatus.EXPIRED
                events.append(TrackEvent(pid, "expired", t))
                del self.tracks[pid]

        pairs = []
        for k, obs in enumerate(frame.observations):
            for pid in sorted(self.tracks):
                d = observation_distance(obs, self.tracks[pid], cfg)
                if d < cfg.d_max:
                    pairs.append((d, pid, k))
        pairs.sort()

        assignment: dict[int, int] = {}
        used: set[tuple[int, int]] = set()  # (track, camera)
        for d, pid, k in pairs:
            cam = frame.observations[k].camera
            if k in assignment or (pid, cam) in used:
                continue
            assignment[k] = pid
            used.add((pid, cam))

        matched = set()
        for k, obs in enumerate(frame.observations):
            pid = assignment.get(k)
            if pid is None:
                continue
            self.tracks[pid].add(obs)
            matched.add(pid)
        # leftovers first try tracks born in this frame (same person, other camera)
        fresh: list[int] = []
        for k, obs in enumerate(frame.observations):
            if k in assignment:
                continue
            best = None
            for pid in fresh:
                if (pid, obs.camera) in used:
                    continue
                d = observation_distance(obs, self.tracks[pid], cfg)
                if d < cfg.d_max and (best is None or d < best[0]):
                    best = (d, pid)
            if best is not None:
                pid = best[1]
                self.tracks[pid].add(obs)
            else:
                pid = self._next_id
                self._next_id += 1
                tr = PersonTrack(pid, first_seen=obs.timestamp, last_matched=obs.timestamp)
                tr.add(obs)
                self.tracks[pid] = tr
                fresh.append(pid)
                events.append(TrackEvent(pid, "created", t))
            assignment[k] = pid
            used.add((pid, obs.camera))

        for pid in sorted(matched):
            tr = self.tracks[pid]
            if (tr.status is TrackStatus.CANDIDATE
                    and tr.last_matched - tr.first_seen >= cfg.confirm_seconds):
                tr.status = TrackStatus.CONFIRMED
                events.append(TrackEvent(pid, "confirmed", t))
        return events, assignment
