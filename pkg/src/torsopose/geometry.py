"""Camera models, room bounds and coordinate normalization.

World frame: z up, floor plane at z = 0, origin at the rig's common
reference point on the floor. Camera frame: x right, y down, z along
the optical axis (OpenCV convention).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class CameraModel:
    id: int
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(repr=False)  # world -> camera, 3x3
    translation: np.ndarray = field(repr=False)  # world -> camera, meters

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"camera {self.id}: resolution must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"camera {self.id}: focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=ORTHONORMAL_TOL, rtol=0.0):
            raise ValueError(f"camera {self.id}: rotation is not orthonormal")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def center(self) -> np.ndarray:
        """Camera optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, id, eye, target, *, fx, fy=None, width=640, height=480,
                cx=None, cy=None):
        """Build a camera at ``eye`` (world, meters) aimed at ``target``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("look_at: viewing direction is vertical")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        return cls(
            id=id, fx=fx, fy=fy if fy is not None else fx,
            cx=width / 2 if cx is None else cx, cy=height / 2 if cy is None else cy,
            width=width, height=height, rotation=R, translation=-R @ eye,
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "resolution": [self.width, self.height],
            "intrinsics": {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy},
            "extrinsics": {
                "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        intr = d["intrinsics"]
        ext = d["extrinsics"]
        w, h = d["resolution"]
        return cls(
            id=int(d["id"]), fx=float(intr["fx"]), fy=float(intr["fy"]),
            cx=float(intr["cx"]), cy=float(intr["cy"]), width=int(w), height=int(h),
            rotation=np.array(ext["rotation"], dtype=np.float64),
            translation=np.array(ext["translation"], dtype=np.float64),
        )


@dataclass(frozen=True)
class RoomBounds:
    """Half-extents (meters) of the room along world x, y, z."""

    hx: float
    hy: float
    hz: float

    def __post_init__(self):
        if min(self.hx, self.hy, self.hz) <= 0:
            raise ValueError("room half-extents must be positive")

    @property
    def half_extents(self) -> np.ndarray:
        return np.array([self.hx, self.hy, self.hz])

    def to_dict(self) -> dict:
        return {"half_extents": [self.hx, self.hy, self.hz]}

    @classmethod
    def from_dict(cls, d: dict) -> "RoomBounds":
        hx, hy, hz = d["half_extents"]
        return cls(float(hx), float(hy), float(hz))


@dataclass(frozen=True)
class Rig:
    """Calibrated camera set plus the room it covers."""

    cameras: tuple[CameraModel, ...]
    room: RoomBounds

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("rig has no cameras")
        ids = [c.id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate camera ids in rig")
        object.__setattr__(self, "cameras", tuple(sorted(self.cameras, key=lambda c: c.id)))

    @property
    def num_cameras(self) -> int:
        return len(self.cameras)

    def camera(self, camera_id: int) -> CameraModel:
        for cam in self.cameras:
            if cam.id == camera_id:
                return cam
        raise KeyError(f"unknown camera id {camera_id}")

    def camera_index(self, camera_id: int) -> int:
        """Position of ``camera_id`` in the one-hot camera encoding."""
        for k, cam in enumerate(self.cameras):
            if cam.id == camera_id:
                return k
        raise KeyError(f"unknown camera id {camera_id}")

    def to_dict(self) -> dict:
        return {"cameras": [c.to_dict() for c in self.cameras], "room": self.room.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Rig":
        return cls(tuple(CameraModel.from_dict(c) for c in d["cameras"]),
                   RoomBounds.from_dict(d["room"]))

    @classmethod
    def load(cls, path) -> "Rig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_rig(room: RoomBounds | None = None, *, fx: float = 465.0) -> Rig:
    """Three wall-mounted 640x480 cameras in room corners, 2.5 m high.

    ``fx`` of 465 px gives roughly a 69 degree horizontal field of view.
    """
    room = room or RoomBounds(3.0, 3.0, 2.0)
    corners = [(room.hx, room.hy), (-room.hx, room.hy), (-room.hx, -room.hy)]
    cams = []
    for k, (x, y) in enumerate(corners):
        eye = (0.97 * x, 0.97 * y, 2.5)
        cams.append(CameraModel.look_at(k, eye, (0.0, 0.0, 0.9), fx=fx))
    return Rig(tuple(cams), room)


def project_point(point, camera: CameraModel) -> tuple[np.ndarray, float, bool]:
    """Pinhole projection of a world point.

    Returns ``(pixel, depth, visible)`` where ``depth`` is the camera-frame z
    coordinate and ``visible`` is false when the point lies behind the camera
    or outside the image rectangle.
    """
    # shares the vectorized code path so both give bit-identical pixels
    pixels, depth, visible = project_points(np.asarray(point, dtype=np.float64)[None], camera)
    return pixels[0], float(depth[0]), bool(visible[0])


def project_points(points: np.ndarray, camera: CameraModel):
    """Vectorized :func:`project_point` over an (n, 3) array."""
    pts = np.asarray(points, dtype=np.float64)
    R, t = camera.rotation, camera.translation
    # explicit sums rather than matmul: per-row results must not depend on batch size
    p_cam = np.stack([R[r, 0] * pts[:, 0] + R[r, 1] * pts[:, 1] + R[r, 2] * pts[:, 2] + t[r]
                      for r in range(3)], axis=1)
    depth = p_cam[:, 2]
    in_front = depth > 0.0
    safe = np.where(in_front, depth, 1.0)
    u = camera.fx * p_cam[:, 0] / safe + camera.cx
    v = camera.fy * p_cam[:, 1] / safe + camera.cy
    pixels = np.stack([u, v], axis=1)
    visible = in_front & (u >= 0) & (u <= camera.width) & (v >= 0) & (v <= camera.height)
    pixels[~in_front] = np.nan
    return pixels, depth, visible


def normalize_pixel(pixel, resolution) -> np.ndarray:
    """Map image coordinates to [-1, 1]^2 with y pointing up.

    Off-image inputs are clamped rather than rejected.
    """
    w, h = resolution
    if w <= 0 or h <= 0:
        raise ValueError("resolution must be positive")
    x, y = pixel
    half_w, half_h = w / 2.0, h / 2.0
    out = np.array([(x - half_w) / half_w, (half_h - y) / half_h])
    return np.clip(out, -1.0, 1.0)


def normalize_world(point, room: RoomBounds) -> np.ndarray:
    """Divide each world axis by the room half-extent, clamped to [-1, 1]."""
    return np.clip(np.asarray(point, dtype=np.float64) / room.half_extents, -1.0, 1.0)


def denormalize_pose(xy, room: RoomBounds) -> np.ndarray:
    """Inverse of :func:`normalize_world` on the floor axes, in millimetres."""
    xy = np.asarray(xy, dtype=np.float64)
    return xy * np.array([room.hx, room.hy]) * 1000.0


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if w.ndim == 0 else w


def angle_difference(a, b):
    """Smallest signed difference a - b, in [-pi, pi]."""
    return wrap_angle(np.asarray(a) - np.asarray(b))
