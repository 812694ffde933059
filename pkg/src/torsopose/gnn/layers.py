"""Graph convolution (GCN), relational GCN, graph attention and dense layers.

Each layer has a ``*_layer_forward`` returning ``(out, cache)`` and a
matching ``*_layer_backward`` returning ``(d_input, grads)``. Layers run on
a :class:`~torsopose.gnn.structure.LayerGraph`, so output rows may be a
subset of input rows. The ``gcn_forward`` / ``rgcn_forward`` /
``gat_forward`` helpers apply one layer to every node of a full graph.
"""

from __future__ import annotations

import numpy as np

from .structure import MESSAGE_RELATIONS, GraphStructure, LayerGraph

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeError(ValueError):
    pass


def activate(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(dout, pre, out, kind):
    if kind == "relu":
        return dout * (pre > 0)
    if kind == "tanh":
        return dout * (1.0 - out * out)
    return dout


def _check_width(h, w_in, name):
    if h.ndim != 2 or h.shape[1] != w_in:
        raise ShapeError(f"{name}: input width {h.shape[-1]} does not match weight width {w_in}")


# ------------------------------------------------------------------ dense

def dense_forward(x, W, b, activation):
    _check_width(x, W.shape[0], "dense")
    pre = x @ W + b
    out = activate(pre, activation)
    return out, (x, pre, out)


def dense_backward(dout, cache, W, activation):
    x, pre, out = cache
    g = activate_backward(dout, pre, out, activation)
    return g @ W.T, {"W": x.T @ g, "b": g.sum(axis=0)}


# ------------------------------------------------------------------ GCN

def gcn_layer_forward(h, lg: LayerGraph, W, b, activation):
    """h'_i = act(sum_{j in IN(i)} W h_j / sqrt(|IN(i)| |IN(j)|) + b)."""
    _check_width(h, W.shape[0], "gcn")
    agg = lg.gcn_matrix @ h
    pre = agg @ W + b
    out = activate(pre, activation)
    return out, (agg, pre, out)


def gcn_layer_backward(dout, cache, lg: LayerGraph, W, activation):
    agg, pre, out = cache
    g = activate_backward(dout, pre, out, activation)
    dh = lg.gcn_matrix.T @ (g @ W.T)
    return dh, {"W": agg.T @ g, "b": g.sum(axis=0)}


# ------------------------------------------------------------------ RGCN

def relation_weights(params):
    """Per-relation matrices, from a basis decomposition when present."""
    if "coeff" in params:
        return np.einsum("rb,bio->rio", params["coeff"], params["bases"])
    return params["W_rel"]


def rgcn_layer_forward(h, lg: LayerGraph, params, activation):
    """h'_i = act(sum_r sum_{j in N_i^r} W_r h_j / |N_i^r| + W_0 h_i + b)."""
    W0, b = params["W0"], params["b"]
    _check_width(h, W0.shape[0], "rgcn")
    W_rel = relation_weights(params)
    if W_rel.shape[0] != MESSAGE_RELATIONS:
        raise ShapeError(f"rgcn: expected {MESSAGE_RELATIONS} relation weights, "
                         f"got {W_rel.shape[0]}")
    h_self = h[lg.self_idx]
    pre = h_self @ W0 + b
    aggs = []
    for r, rows, mat in lg.relation_ops:
        agg = mat @ h
        pre[rows] += agg @ W_rel[r]
        aggs.append(agg)
    out = activate(pre, activation)
    return out, (h_self, aggs, W_rel, pre, out)


def rgcn_layer_backward(dout, cache, lg: LayerGraph, params, activation):
    h_self, aggs, W_rel, pre, out = cache
    g = activate_backward(dout, pre, out, activation)
    W0 = params["W0"]
    dh = np.zeros((lg.n_in, W0.shape[0]))
    dh[lg.self_idx] += g @ W0.T  # output rows are distinct
    dW_rel = np.zeros_like(W_rel)
    for (r, rows, mat), agg in zip(lg.relation_ops, aggs):
        gr = g[rows]
        dW_rel[r] = agg.T @ gr
        dh += mat.T @ (gr @ W_rel[r].T)
    grads = {"W0": h_self.T @ g, "b": g.sum(axis=0)}
    if "coeff" in params:
        grads["coeff"] = np.einsum("rio,bio->rb", dW_rel, params["bases"])
        grads["bases"] = np.einsum("rb,rio->bio", params["coeff"], dW_rel)
    else:
        grads["W_rel"] = dW_rel
    return dh, grads


# ------------------------------------------------------------------ GAT

def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def gat_layer_forward(h, lg: LayerGraph, params, activation, concat=True):
    """Multi-head graph attention.

    Per head k: e_ij = LeakyReLU(a_dst . z_i + a_src . z_j) with z = W h,
    alpha_ij = softmax over j in N_i, head output sum_j alpha_ij z_j. Heads
    are concatenated (``concat``) or averaged; bias and activation follow.
    """
    W, a_src, a_dst, b = params["W"], params["a_src"], params["a_dst"], params["b"]
    _check_width(h, W.shape[0], "gat")
    K, F = a_src.shape
    starts = lg.segment_starts
    z = (h @ W).reshape(lg.n_in, K, F)
    s_src = np.einsum("nkf,kf->nk", z, a_src)
    s_dst = np.einsum("nkf,kf->nk", z[lg.self_idx], a_dst)
    raw = s_dst[lg.dst] + s_src[lg.src]
    score = _leaky(raw)
    smax = np.maximum.reduceat(score, starts, axis=0)
    ex = np.exp(score - smax[lg.dst])
    denom = np.add.reduceat(ex, starts, axis=0)
    alpha = ex / denom[lg.dst]
    agg = np.empty((lg.n_out, K, F))
    mats = []
    for k in range(K):
        A = lg.attention_matrix(alpha[:, k])
        agg[:, k, :] = A @ z[:, k, :]
        mats.append(A)
    combined = agg.reshape(lg.n_out, K * F) if concat else agg.mean(axis=1)
    pre = combined + b
    out = activate(pre, activation)
    return out, (h, z, raw, alpha, mats, pre, out, concat)


def gat_layer_backward(dout, cache, lg: LayerGraph, params, activation):
    h, z, raw, alpha, mats, pre, out, concat = cache
    W, a_src, a_dst = params["W"], params["a_src"], params["a_dst"]
    K, F = a_src.shape
    g = activate_backward(dout, pre, out, activation)
    db = g.sum(axis=0)
    gk = g.reshape(lg.n_out, K, F) if concat else np.repeat(g[:, None, :] / K, K, axis=1)
    dz = np.empty_like(z)
    for k in range(K):
        dz[:, k, :] = mats[k].T @ gk[:, k, :]
    dalpha = np.einsum("ekf,ekf->ek", gk[lg.dst], z[lg.src])
    starts = lg.segment_starts
    weighted = np.add.reduceat(alpha * dalpha, starts, axis=0)
    dscore = alpha * (dalpha - weighted[lg.dst])
    draw = dscore * np.where(raw > 0, 1.0, LEAKY_SLOPE)
    d_dst = np.add.reduceat(draw, starts, axis=0)  # (n_out, K)
    d_src = np.zeros((lg.n_in, K))
    for k in range(K):
        d_src[:, k] = np.bincount(lg.src, weights=draw[:, k], minlength=lg.n_in)
    z_self = z[lg.self_idx]
    grads = {
        "a_dst": np.einsum("nk,nkf->kf", d_dst, z_self),
        "a_src": np.einsum("nk,nkf->kf", d_src, z),
        "b": db,
    }
    dz += d_src[:, :, None] * a_src[None]
    dz[lg.self_idx] += d_dst[:, :, None] * a_dst[None]
    dz_flat = dz.reshape(lg.n_in, K * F)
    grads["W"] = h.T @ dz_flat
    return dz_flat @ W.T, grads


def attention_coefficients(h, structure: GraphStructure, params):
    """Attention weights per edge of ``structure.full_layer()`` order, shape (E, heads)."""
    lg = structure.full_layer()
    _, cache = gat_layer_forward(h, lg, params, "identity")
    return lg, cache[3]


# ------------------------------------------------ whole-graph convenience

def gcn_forward(h, structure: GraphStructure, W, activation="identity", b=None):
    b = np.zeros(W.shape[1]) if b is None else b
    return gcn_layer_forward(np.asarray(h, dtype=np.float64), structure.full_layer(),
                             W, b, activation)[0]


def rgcn_forward(h, structure: GraphStructure, W_rel, W0, activation="identity", b=None,
                 coeff=None):
    """One RGCN layer over all nodes.

    ``W_rel`` holds one matrix per message relation, or the basis matrices
    when ``coeff`` (relations x bases) is given.
    """
    params = {"W0": W0, "b": np.zeros(W0.shape[1]) if b is None else b}
    if coeff is not None:
        params.update(coeff=coeff, bases=W_rel)
    else:
        params["W_rel"] = W_rel
    return rgcn_layer_forward(np.asarray(h, dtype=np.float64), structure.full_layer(),
                              params, activation)[0]


def gat_forward(h, structure: GraphStructure, W, a_src, a_dst, activation="identity", b=None,
                concat=True):
    a_src = np.atleast_2d(a_src)
    a_dst = np.atleast_2d(a_dst)
    K, F = a_src.shape
    width = K * F if concat else F
    params = {"W": W, "a_src": a_src, "a_dst": a_dst,
              "b": np.zeros(width) if b is None else b}
    return gat_layer_forward(np.asarray(h, dtype=np.float64), structure.full_layer(),
                             params, activation, concat)[0]
