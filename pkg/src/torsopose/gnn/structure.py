"""Edge bookkeeping shared by the graph layers.

A :class:`GraphStructure` holds a (possibly block-diagonal batched) graph.
For a stack of ``L`` layers whose output is only needed at a few target
rows, :meth:`GraphStructure.plan` works backwards through the receptive
field so that each layer computes only the rows the next one reads.
Each layer then sees a :class:`LayerGraph` with its own compact input and
output index spaces.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..graph import NUM_RELATIONS, Relation

MESSAGE_RELATIONS = NUM_RELATIONS - 1  # self-loops feed the separate self weight
SELF_LOOP = int(Relation.SELF_LOOP)


class StructureError(ValueError):
    pass


class LayerGraph:
    """Edges from an input row space (size ``n_in``) to an output row space.

    ``self_idx[i]`` is the input-space row of output row ``i``.
    ``in_degree_dst`` and ``in_degree_src`` are full-graph in-degrees of the
    edge endpoints, used by the symmetric GCN normalization.
    """

    def __init__(self, n_in, n_out, src, dst, rel, self_idx, deg_dst, deg_src):
        order = np.lexsort((rel, src, dst))
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.src = np.ascontiguousarray(src[order])
        self.dst = np.ascontiguousarray(dst[order])
        self.rel = np.ascontiguousarray(rel[order])
        self.self_idx = np.asarray(self_idx, dtype=np.int64)
        self.deg_dst = np.asarray(deg_dst, dtype=np.float64)[order]
        self.deg_src = np.asarray(deg_src, dtype=np.float64)[order]

    @cached_property
    def indptr(self) -> np.ndarray:
        counts = np.bincount(self.dst, minlength=self.n_out)
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @cached_property
    def gcn_matrix(self) -> sp.csr_matrix:
        coef = 1.0 / np.sqrt(self.deg_dst * self.deg_src)
        return sp.csr_matrix((coef, self.src, self.indptr), shape=(self.n_out, self.n_in))

    @cached_property
    def relation_ops(self) -> list[tuple[int, np.ndarray, sp.csr_matrix]]:
        """Per message relation: (relation, output rows, mean-aggregation matrix)."""
        ops = []
        for r in range(MESSAGE_RELATIONS):
            m = self.rel == r
            if not m.any():
                continue
            d, s = self.dst[m], self.src[m]
            rows, local = np.unique(d, return_inverse=True)
            counts = np.bincount(local, minlength=len(rows)).astype(np.float64)
            mat = sp.csr_matrix((1.0 / counts[local], (local, s)),
                                shape=(len(rows), self.n_in))
            ops.append((r, rows, mat))
        return ops

    @cached_property
    def segment_starts(self) -> np.ndarray:
        """Start offset of each output row's incoming edges; every row must have one."""
        counts = np.diff(self.indptr)
        if np.any(counts == 0):
            bad = int(np.flatnonzero(counts == 0)[0])
            raise StructureError(f"output row {bad} has no incoming edges (missing self-loop?)")
        return self.indptr[:-1]

    def attention_matrix(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values, self.src, self.indptr), shape=(self.n_out, self.n_in))


class GraphStructure:
    """Directed, relation-labelled graph on ``num_nodes`` nodes."""

    def __init__(self, num_nodes, src, dst, rel, targets=None):
        self.num_nodes = int(num_nodes)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.rel = np.asarray(rel, dtype=np.int64)
        if not (len(self.src) == len(self.dst) == len(self.rel)):
            raise StructureError("edge arrays differ in length")
        if len(self.src) and (min(self.src.min(), self.dst.min()) < 0
                              or max(self.src.max(), self.dst.max()) >= self.num_nodes):
            raise StructureError("edge endpoint out of range")
        if len(self.rel) and (self.rel.min() < 0 or self.rel.max() >= NUM_RELATIONS):
            raise StructureError(f"unknown relation label {int(self.rel.max())}")
        self.targets = (np.arange(self.num_nodes) if targets is None
                        else np.asarray(targets, dtype=np.int64))
        self._plans: dict[tuple, list[LayerGraph]] = {}

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_nodes).astype(np.float64)

    def full_layer(self) -> LayerGraph:
        idx = np.arange(self.num_nodes)
        deg = self.in_degree
        return LayerGraph(self.num_nodes, self.num_nodes, self.src, self.dst, self.rel,
                          idx, deg[self.dst], deg[self.src])

    def plan(self, num_layers: int, prune: bool = True) -> list[LayerGraph]:
        """Per-layer graphs for a stack whose last output rows are ``targets``.

        With ``prune=False`` every layer runs on all nodes and the final
        output rows are still reordered to ``targets``.
        """
        key = (num_layers, prune)
        if key in self._plans:
            return self._plans[key]
        n = self.num_nodes
        deg = self.in_degree
        row_sets = [self.targets]
        for _ in range(num_layers - 1):
            cur = row_sets[-1]
            if not prune:
                row_sets.append(np.arange(n))
                continue
            inside = np.zeros(n, dtype=bool)
            inside[cur] = True
            feeders = self.src[inside[self.dst]]
            row_sets.append(np.unique(np.concatenate([cur, feeders])))
        row_sets.append(np.arange(n))
        row_sets.reverse()  # row_sets[l] = input rows of layer l, row_sets[l+1] its output rows

        layers = []
        for l in range(num_layers):
            rin, rout = row_sets[l], row_sets[l + 1]
            lookup_in = np.full(n, -1, dtype=np.int64)
            lookup_in[rin] = np.arange(len(rin))
            out_pos = np.full(n, -1, dtype=np.int64)
            out_pos[rout] = np.arange(len(rout))
            m = out_pos[self.dst] >= 0
            s, d, r = self.src[m], self.dst[m], self.rel[m]
            if np.any(lookup_in[s] < 0) or np.any(lookup_in[rout] < 0):
                raise StructureError("inconsistent receptive field plan")
            layers.append(LayerGraph(len(rin), len(rout), lookup_in[s], out_pos[d], r,
                                     lookup_in[rout], deg[d], deg[s]))
        self._plans[key] = layers
        return layers
