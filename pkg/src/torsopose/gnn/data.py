"""Training samples and minibatch assembly.

All graphs of a :class:`SampleSet` are packed into flat arrays so a batch
is a gather plus an index offset, not a Python loop over graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..geometry import RoomBounds
from ..graph import FeatureLayout, SkeletonGraph, mlp_inputs
from .structure import GraphStructure


def pose_target(x, y, alpha, room: RoomBounds) -> np.ndarray:
    """Regression target (x / hx, y / hy, sin alpha, cos alpha)."""
    return np.array([x / room.hx, y / room.hy, np.sin(alpha), np.cos(alpha)])


@dataclass
class GraphBatch:
    features: np.ndarray
    structure: GraphStructure
    targets: np.ndarray | None  # (B, 4)

    @property
    def size(self) -> int:
        return len(self.structure.targets)


@dataclass
class MLPBatch:
    features: np.ndarray  # (B, cameras, block)
    mask: np.ndarray      # (B, cameras, joints)
    targets: np.ndarray | None

    @property
    def size(self) -> int:
        return self.features.shape[0]


class SampleSet:
    """Encoded graphs with their regression targets."""

    def __init__(self, graphs: Sequence[SkeletonGraph], targets=None, ids=None):
        if not graphs:
            raise ValueError("empty sample set")
        self.layout: FeatureLayout = graphs[0].layout
        for g in graphs:
            if g.layout != self.layout:
                raise ValueError("graphs use different feature layouts")
        self.graphs = list(graphs)
        self.targets = None if targets is None else np.asarray(targets, dtype=np.float64)
        if self.targets is not None and self.targets.shape != (len(graphs), 4):
            raise ValueError(f"targets shape {self.targets.shape}, expected ({len(graphs)}, 4)")
        self.ids = list(range(len(graphs))) if ids is None else list(ids)

        n_nodes = np.array([g.num_nodes for g in graphs])
        n_edges = np.array([g.num_edges for g in graphs])
        self.node_ptr = np.concatenate([[0], np.cumsum(n_nodes)])
        self.edge_ptr = np.concatenate([[0], np.cumsum(n_edges)])
        self.features = np.vstack([g.features for g in graphs])
        self.src = np.concatenate([g.src for g in graphs])
        self.dst = np.concatenate([g.dst for g in graphs])
        self.rel = np.concatenate([g.rel for g in graphs])
        self.superbody = np.array([g.superbody for g in graphs])
        self._mlp = None

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def feature_width(self) -> int:
        return self.layout.width

    def subset(self, index) -> "SampleSet":
        index = np.asarray(index)
        return SampleSet([self.graphs[i] for i in index],
                         None if self.targets is None else self.targets[index],
                         [self.ids[i] for i in index])

    @staticmethod
    def _ranges(ptr, index):
        starts, stops = ptr[index], ptr[index + 1]
        counts = stops - starts
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        flat = np.arange(counts.sum()) - np.repeat(offsets - starts, counts)
        return flat, counts, offsets

    def graph_batch(self, index) -> GraphBatch:
        index = np.asarray(index, dtype=np.int64)
        nodes, n_counts, n_off = self._ranges(self.node_ptr, index)
        edges, e_counts, _ = self._ranges(self.edge_ptr, index)
        shift = np.repeat(n_off, e_counts)
        structure = GraphStructure(
            int(n_counts.sum()), self.src[edges] + shift, self.dst[edges] + shift,
            self.rel[edges], targets=n_off + self.superbody[index])
        return GraphBatch(self.features[nodes], structure,
                          None if self.targets is None else self.targets[index])

    def _mlp_arrays(self):
        if self._mlp is None:
            pairs = [mlp_inputs(g) for g in self.graphs]
            self._mlp = (np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]))
        return self._mlp

    def mlp_batch(self, index) -> MLPBatch:
        index = np.asarray(index, dtype=np.int64)
        feats, mask = self._mlp_arrays()
        return MLPBatch(feats[index], mask[index],
                        None if self.targets is None else self.targets[index])

    def batch(self, index, family: str):
        return self.mlp_batch(index) if family == "mlp" else self.graph_batch(index)
