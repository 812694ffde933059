"""Person graphs built from a set of per-camera views.

Every view contributes one node per detected joint plus a *body* node; all
body nodes hang off a single *superbody* node whose final-layer output is
the pose prediction. Node order is fixed: superbody first, then views by
camera id, each view's body node followed by its parts in joint order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Rig, RoomBounds, normalize_pixel, normalize_world
from .skeleton import NUM_JOINTS, JointId, Observation, kinematic_parent, mirror

BODY_KIND = NUM_JOINTS  # 17
SUPERBODY_KIND = NUM_JOINTS + 1  # 18
NUM_KINDS = NUM_JOINTS + 2


class Relation(enum.IntEnum):
    KINEMATIC_UP = 0    # child -> parent
    KINEMATIC_DOWN = 1  # parent -> child
    MIRROR = 2
    PART_BODY = 3
    BODY_PART = 4
    BODY_SUPER = 5
    SUPER_BODY = 6
    SELF_LOOP = 7


NUM_RELATIONS = len(Relation)
INVERSE = {
    Relation.KINEMATIC_UP: Relation.KINEMATIC_DOWN,
    Relation.KINEMATIC_DOWN: Relation.KINEMATIC_UP,
    Relation.MIRROR: Relation.MIRROR,
    Relation.PART_BODY: Relation.BODY_PART,
    Relation.BODY_PART: Relation.PART_BODY,
    Relation.BODY_SUPER: Relation.SUPER_BODY,
    Relation.SUPER_BODY: Relation.BODY_SUPER,
}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureLayout:
    """Column offsets of the node-type, camera, coordinate and score blocks."""

    num_cameras: int
    mode: str = "2d"

    def __post_init__(self):
        if self.mode not in ("2d", "3d"):
            raise ValueError(f"mode must be '2d' or '3d', got {self.mode!r}")

    @property
    def coord_width(self) -> int:
        return 2 if self.mode == "2d" else 5

    @property
    def type_slice(self) -> slice:
        return slice(0, NUM_KINDS)

    @property
    def camera_slice(self) -> slice:
        return slice(NUM_KINDS, NUM_KINDS + self.num_cameras)

    @property
    def coord_slice(self) -> slice:
        s = NUM_KINDS + self.num_cameras
        return slice(s, s + self.coord_width)

    @property
    def score_index(self) -> int:
        return NUM_KINDS + self.num_cameras + self.coord_width

    @property
    def width(self) -> int:
        return self.score_index + 1


@dataclass(frozen=True)
class ViewSubgraph:
    camera: int
    joints: tuple[JointId, ...]
    # local node 0 is the body node, node k (k >= 1) is joints[k - 1]
    edges: tuple[tuple[int, int, int], ...]  # (src, dst, relation)

    @property
    def num_nodes(self) -> int:
        return len(self.joints) + 1


@dataclass(frozen=True, eq=False)
class SkeletonGraph:
    kinds: np.ndarray       # (n,) node kind index
    cameras: np.ndarray     # (n,) camera index in the rig, -1 for superbody
    src: np.ndarray         # (e,)
    dst: np.ndarray         # (e,)
    rel: np.ndarray         # (e,)
    features: np.ndarray    # (n, width)
    layout: FeatureLayout
    superbody: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.kinds)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def tobytes(self) -> bytes:
        return b"".join(a.tobytes() for a in (self.kinds, self.cameras, self.src, self.dst,
                                               self.rel, self.features))

    def to_dict(self) -> dict:
        """Debug dump: nodes, kinds, edges with relations and feature rows."""
        def kind_name(k):
            if k == BODY_KIND:
                return "body"
            if k == SUPERBODY_KIND:
                return "superbody"
            return JointId(int(k)).label
        return {
            "mode": self.layout.mode,
            "num_cameras": self.layout.num_cameras,
            "nodes": [{"index": i, "kind": kind_name(k), "camera": int(c),
                       "features": self.features[i].tolist()}
                      for i, (k, c) in enumerate(zip(self.kinds, self.cameras))],
            "edges": [{"src": int(s), "dst": int(d), "relation": Relation(int(r)).name.lower()}
                      for s, d, r in zip(self.src, self.dst, self.rel)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def build_view_subgraph(obs: Observation) -> ViewSubgraph:
    joints = tuple(jd.joint for jd in obs.joints)
    if not joints:
        raise GraphError(f"camera {obs.camera}: observation has no joints")
    local = {j: k + 1 for k, j in enumerate(joints)}
    edges = []
    for j, n in local.items():
        edges.append((n, 0, Relation.PART_BODY))
        edges.append((0, n, Relation.BODY_PART))
        parent = kinematic_parent(j)
        if parent is not None and parent in local:
            edges.append((n, local[parent], Relation.KINEMATIC_UP))
            edges.append((local[parent], n, Relation.KINEMATIC_DOWN))
        m = mirror(j)
        if m is not None and m in local:
            edges.append((local[m], n, Relation.MIRROR))
    for n in range(len(joints) + 1):
        edges.append((n, n, Relation.SELF_LOOP))
    return ViewSubgraph(obs.camera, joints, tuple((s, d, int(r)) for s, d, r in edges))


def _camera_indexer(rig: Rig | None, num_cameras: int | None):
    if rig is not None:
        return rig.camera_index, rig.num_cameras
    if num_cameras is None:
        raise GraphError("either a rig or num_cameras is required")
    return (lambda cid: int(cid)), num_cameras


def assemble_person_graph(views: Sequence[Observation], mode: str = "2d",
                          rig: Rig | None = None, room: RoomBounds | None = None,
                          *, num_cameras: int | None = None,
                          resolution=(640, 480)) -> SkeletonGraph:
    """Union of view subgraphs plus the superbody node, features encoded.

    ``rig`` supplies camera indexing, per-camera resolution and the room
    (unless ``room`` is given). Without a rig, camera ids are used as
    indices directly and ``resolution`` applies to every camera.
    """
    cam_index, n_cams = _camera_indexer(rig, num_cameras)
    layout = FeatureLayout(n_cams, mode)
    if room is None and rig is not None:
        room = rig.room
    if not views:
        raise GraphError("empty view set")
    views = sorted(views, key=lambda o: o.camera)
    cams = [o.camera for o in views]
    if len(set(cams)) != len(cams):
        raise GraphError(f"duplicate camera ids in view set: {cams}")
    if len(views) > n_cams:
        raise GraphError(f"{len(views)} views but only {n_cams} cameras")

    kinds = [SUPERBODY_KIND]
    cameras = [-1]
    src, dst, rel = [0], [0], [int(Relation.SELF_LOOP)]
    feats = []
    feats.append(np.zeros(layout.width))
    feats[0][SUPERBODY_KIND] = 1.0
    for obs in views:
        sub = build_view_subgraph(obs)
        k = cam_index(obs.camera)
        if not 0 <= k < n_cams:
            raise GraphError(f"camera {obs.camera} outside the rig")
        base = len(kinds)
        kinds.append(BODY_KIND)
        cameras.append(k)
        kinds.extend(int(j) for j in sub.joints)
        cameras.extend([k] * len(sub.joints))
        for s, d, r in sub.edges:
            src.append(s + base)
            dst.append(d + base)
            rel.append(r)
        src += [base, 0]
        dst += [0, base]
        rel += [int(Relation.BODY_SUPER), int(Relation.SUPER_BODY)]
        res = rig.camera(obs.camera).resolution if rig is not None else resolution
        feats.extend(_view_rows(obs, k, layout, res, room))

    src_a, dst_a, rel_a = (np.asarray(a, dtype=np.int64) for a in (src, dst, rel))
    order = np.lexsort((rel_a, src_a, dst_a))
    features = np.vstack(feats)
    return SkeletonGraph(np.asarray(kinds, dtype=np.int64), np.asarray(cameras, dtype=np.int64),
                         src_a[order], dst_a[order], rel_a[order], features, layout)


def _view_rows(obs: Observation, cam_idx: int, layout: FeatureLayout, resolution,
               room: RoomBounds | None):
    body = np.zeros(layout.width)
    body[BODY_KIND] = 1.0
    body[layout.camera_slice.start + cam_idx] = 1.0
    rows = [body]
    for jd in obs.joints:
        row = np.zeros(layout.width)
        row[int(jd.joint)] = 1.0
        row[layout.camera_slice.start + cam_idx] = 1.0
        c = layout.coord_slice.start
        row[c:c + 2] = normalize_pixel(jd.pixel, resolution)
        if layout.mode == "3d":
            if jd.xyz is None:
                raise GraphError(f"camera {obs.camera}: {jd.joint.label} lacks 3D "
                                 "coordinates required in 3d mode")
            if room is None:
                raise GraphError("3d mode requires room bounds")
            row[c + 2:c + 5] = normalize_world(jd.xyz, room)
        row[layout.score_index] = jd.score
        rows.append(row)
    return rows


def encode_features(g: SkeletonGraph) -> np.ndarray:
    """Feature matrix of an assembled graph (rows follow node order)."""
    return g.features


# ------------------------------------------------------------ MLP inputs

def mlp_block_width(layout: FeatureLayout) -> int:
    """Per-camera feature width: joints x (coords + score), then the camera one-hot."""
    return NUM_JOINTS * (layout.coord_width + 1) + layout.num_cameras


def mlp_inputs(g: SkeletonGraph) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-size positional input for the MLP baseline.

    Returns ``(features, mask)`` of shapes (cameras, block) and
    (cameras, joints). Missing joints are zero-filled with mask bit 0;
    cameras without a view get an all-zero block, one-hot included.
    """
    layout = g.layout
    per = layout.coord_width + 1
    feats = np.zeros((layout.num_cameras, mlp_block_width(layout)))
    mask = np.zeros((layout.num_cameras, NUM_JOINTS))
    onehot0 = NUM_JOINTS * per
    cs, si = layout.coord_slice, layout.score_index
    for i in range(g.num_nodes):
        kind, cam = int(g.kinds[i]), int(g.cameras[i])
        if kind == SUPERBODY_KIND:
            continue
        if kind == BODY_KIND:
            feats[cam, onehot0 + cam] = 1.0
            continue
        feats[cam, kind * per:kind * per + layout.coord_width] = g.features[i, cs]
        feats[cam, kind * per + layout.coord_width] = g.features[i, si]
        mask[cam, kind] = 1.0
    return feats, mask
