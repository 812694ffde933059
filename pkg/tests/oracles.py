"""Independent reference implementations used by the tests.

Everything here is written as plain loops over nodes, without the sparse
machinery of the library, so a shared bug cannot hide in both.
"""

from __future__ import annotations

import math

import numpy as np

from torsopose.gnn.structure import MESSAGE_RELATIONS, GraphStructure
from torsopose.graph import Relation

SELF = int(Relation.SELF_LOOP)


# ---------------------------------------------------------------- geometry

def project_oracle(point, cam):
    """Pinhole projection written out component by component."""
    R = cam.rotation
    t = cam.translation
    xc = [sum(R[r][k] * point[k] for k in range(3)) + t[r] for r in range(3)]
    u = cam.fx * xc[0] / xc[2] + cam.cx
    v = cam.fy * xc[1] / xc[2] + cam.cy
    return u, v, xc[2]


# ---------------------------------------------------------------- graphs

def random_graph(rng, n=None, p=0.15, self_loops=True):
    """Random directed graph with unique (src, dst) pairs and message relations."""
    n = int(rng.integers(5, 61)) if n is None else n
    src, dst, rel = [], [], []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p:
                src.append(j)
                dst.append(i)
                rel.append(int(rng.integers(MESSAGE_RELATIONS)))
        if self_loops:
            src.append(i)
            dst.append(i)
            rel.append(SELF)
    return n, np.array(src), np.array(dst), np.array(rel)


def incoming(n, src, dst):
    """Per node, the list of (edge index, source) pairs."""
    out = [[] for _ in range(n)]
    for e, (s, d) in enumerate(zip(src, dst)):
        out[d].append((e, s))
    return out


def _act(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    return x


def gcn_oracle(h, n, src, dst, W, b, act="identity"):
    deg = [0] * n
    for d in dst:
        deg[d] += 1
    out = np.zeros((n, W.shape[1]))
    for i in range(n):
        acc = np.array(b, dtype=np.float64)
        for j in range(n):
            mult = sum(1 for s, d in zip(src, dst) if s == j and d == i)
            if mult:
                acc = acc + mult * (h[j] @ W) / math.sqrt(deg[i] * deg[j])
        out[i] = acc
    return _act(out, act)


def rgcn_oracle(h, n, src, dst, rel, W_rel, W0, b, act="identity"):
    out = np.zeros((n, W0.shape[1]))
    for i in range(n):
        acc = h[i] @ W0 + b
        for r in range(W_rel.shape[0]):
            nbrs = [s for s, d, q in zip(src, dst, rel) if d == i and q == r]
            if nbrs:
                acc = acc + sum(h[j] @ W_rel[r] for j in nbrs) / len(nbrs)
        out[i] = acc
    return _act(out, act)


def gat_oracle(h, n, src, dst, W, a_src, a_dst, b, act="identity", concat=True):
    K, F = a_src.shape
    z = (h @ W).reshape(n, K, F)
    heads = np.zeros((n, K, F))
    for i in range(n):
        nbrs = [s for s, d in zip(src, dst) if d == i]
        for k in range(K):
            scores = []
            for j in nbrs:
                e = float(a_dst[k] @ z[i, k] + a_src[k] @ z[j, k])
                scores.append(e if e > 0 else 0.2 * e)
            m = max(scores)
            ex = [math.exp(s - m) for s in scores]
            tot = sum(ex)
            for w, j in zip(ex, nbrs):
                heads[i, k] += (w / tot) * z[j, k]
    comb = heads.reshape(n, K * F) if concat else heads.mean(axis=1)
    return _act(comb + b, act)


def gat_attention_oracle(h, n, src, dst, W, a_src, a_dst):
    """Attention weight per edge (in the given edge order), head 0."""
    F = a_src.shape[1]
    z = (h @ W)[:, :F]
    alpha = np.zeros(len(src))
    for i in range(n):
        edges = [e for e, d in enumerate(dst) if d == i]
        raw = []
        for e in edges:
            v = float(a_dst[0] @ z[i] + a_src[0] @ z[src[e]])
            raw.append(v if v > 0 else 0.2 * v)
        m = max(raw)
        ex = [math.exp(v - m) for v in raw]
        for e, w in zip(edges, ex):
            alpha[e] = w / sum(ex)
    return alpha


def structure_of(n, src, dst, rel):
    return GraphStructure(n, src, dst, rel)


# ---------------------------------------------------------------- gradients

def finite_difference_check(model, batch, eps=1e-6, max_entries=None, rng=None):
    """Max entrywise relative error between analytic and central-difference grads.

    Relative error is |a - n| / max(|a| + |n|, 1e-6). Central differences of an
    O(1) loss at eps=1e-6 carry ~1e-10 of roundoff, so gradients that are
    exactly zero (e.g. attention terms cancelled by the softmax) would otherwise
    report spurious relative errors; below the floor they are compared absolutely.
    """
    _, grads = model.loss_and_grad(batch)
    worst = 0.0
    for name in sorted(model.params):
        p = model.params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_entries,
                                                                   replace=False))
        g = grads[name].reshape(-1)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            lp, _ = model.loss_and_grad(batch)
            flat[k] = orig - eps
            lm, _ = model.loss_and_grad(batch)
            flat[k] = orig
            num = (lp - lm) / (2 * eps)
            err = abs(num - g[k]) / max(abs(num) + abs(g[k]), 1e-6)
            worst = max(worst, err)
    return worst
