"""Layer stacks, parameter storage, forward/backward passes and checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import RoomBounds, wrap_angle
from ..graph import FeatureLayout, mlp_block_width
from ..skeleton import NUM_JOINTS
from . import layers as L
from .data import GraphBatch, MLPBatch
from .structure import MESSAGE_RELATIONS

FAMILIES = ("gcn", "rgcn", "gat", "mlp")
OUTPUT_WIDTH = 4
CHECKPOINT_FORMAT = "torsopose-checkpoint"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # gcn | rgcn | gat | dense
    in_dim: int
    out_dim: int
    activation: str = "relu"
    num_bases: int | None = None  # rgcn
    heads: int = 1                # gat
    concat: bool = True           # gat: concatenate heads, else average

    def __post_init__(self):
        if self.kind not in ("gcn", "rgcn", "gat", "dense"):
            raise ModelError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ModelError("layer widths must be positive")
        if self.activation not in L.ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        if self.num_bases is not None and not 1 <= self.num_bases <= MESSAGE_RELATIONS:
            raise ModelError(f"num_bases must lie in [1, {MESSAGE_RELATIONS}]")
        if self.heads < 1:
            raise ModelError("heads must be >= 1")

    @property
    def width(self) -> int:
        """Output width seen by the next layer."""
        if self.kind == "gat" and self.concat:
            return self.heads * self.out_dim
        return self.out_dim


@dataclass
class Architecture:
    """Layer stack for a model family.

    Graph families use ``layers`` only. The MLP uses ``layers`` for the
    per-camera encoder (shared across cameras) and ``head`` after
    concatenation.
    """

    family: str
    layout: FeatureLayout
    layers: list[LayerSpec]
    head: list[LayerSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        if not self.layers:
            raise ModelError("architecture needs at least one layer")
        stacks = [self.layers] + ([self.head] if self.family == "mlp" else [])
        if self.family == "mlp" and not self.head:
            raise ModelError("mlp needs a head")
        first_in = (mlp_block_width(self.layout) + NUM_JOINTS if self.family == "mlp"
                    else self.layout.width)
        if self.layers[0].in_dim != first_in:
            raise ModelError(f"first layer expects {self.layers[0].in_dim} inputs, "
                             f"features have {first_in}")
        for stack in stacks:
            for a, b in zip(stack, stack[1:]):
                if a.width != b.in_dim:
                    raise ModelError(f"layer widths do not chain: {a.width} -> {b.in_dim}")
        if self.family == "mlp":
            if self.head[0].in_dim != self.layout.num_cameras * self.layers[-1].width:
                raise ModelError("mlp head input must equal cameras x encoder width")
        last = stacks[-1][-1]
        if last.width != OUTPUT_WIDTH:
            raise ModelError(f"last layer width {last.width}, expected {OUTPUT_WIDTH}")

    def to_dict(self) -> dict:
        return {"family": self.family,
                "layout": {"num_cameras": self.layout.num_cameras, "mode": self.layout.mode},
                "layers": [asdict(s) for s in self.layers],
                "head": [asdict(s) for s in self.head]}

    @classmethod
    def from_dict(cls, d) -> "Architecture":
        return cls(d["family"], FeatureLayout(**d["layout"]),
                   [LayerSpec(**s) for s in d["layers"]],
                   [LayerSpec(**s) for s in d.get("head", [])])


def graph_architecture(family, layout: FeatureLayout, hidden, activation="relu",
                       num_bases=None, heads=1) -> Architecture:
    """Graph-layer stack: hidden widths then a linear 4-wide output layer."""
    kind = family
    specs, width = [], layout.width
    for h in hidden:
        spec = LayerSpec(kind, width, h, activation, num_bases if kind == "rgcn" else None,
                         heads if kind == "gat" else 1, True)
        specs.append(spec)
        width = spec.width
    specs.append(LayerSpec(kind, width, OUTPUT_WIDTH, "identity",
                           num_bases if kind == "rgcn" else None,
                           heads if kind == "gat" else 1, False))
    return Architecture(family, layout, specs)


def mlp_architecture(layout: FeatureLayout, encoder, head, activation="relu") -> Architecture:
    specs, width = [], mlp_block_width(layout) + NUM_JOINTS
    for h in encoder:
        specs.append(LayerSpec("dense", width, h, activation))
        width = h
    head_specs, width = [], layout.num_cameras * width
    for h in head:
        head_specs.append(LayerSpec("dense", width, h, activation))
        width = h
    head_specs.append(LayerSpec("dense", width, OUTPUT_WIDTH, "identity"))
    return Architecture("mlp", layout, specs, head_specs)


def _uniform(rng, shape, fan_in, gain):
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# Uniform init with variance gain^2 / fan_in.
INIT_GAIN = {"relu": np.sqrt(2.0), "tanh": 1.0, "identity": 1.0}


def init_layer(spec: LayerSpec, rng) -> dict[str, np.ndarray]:
    g = INIT_GAIN[spec.activation]
    i, o = spec.in_dim, spec.out_dim
    if spec.kind in ("dense", "gcn"):
        return {"W": _uniform(rng, (i, o), i, g), "b": np.zeros(o)}
    if spec.kind == "rgcn":
        # messages from several relations plus the self term add up
        gr = g / np.sqrt(2.0)
        p = {"W0": _uniform(rng, (i, o), i, gr), "b": np.zeros(o)}
        if spec.num_bases is None:
            p["W_rel"] = _uniform(rng, (MESSAGE_RELATIONS, i, o), i, gr)
        else:
            B = spec.num_bases
            p["bases"] = _uniform(rng, (B, i, o), i, gr)
            p["coeff"] = _uniform(rng, (MESSAGE_RELATIONS, B), B, 1.0)
        return p
    K = spec.heads
    return {"W": _uniform(rng, (i, K * o), i, g),
            "a_src": _uniform(rng, (K, o), o, 1.0),
            "a_dst": _uniform(rng, (K, o), o, 1.0),
            "b": np.zeros(spec.width)}


class Model:
    def __init__(self, arch: Architecture, params: dict[str, np.ndarray] | None = None,
                 seed: int = 0, meta: dict | None = None):
        self.arch = arch
        self.meta = dict(meta or {})
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for prefix, stack in self._stacks():
                for k, spec in enumerate(stack):
                    for name, val in init_layer(spec, rng).items():
                        params[f"{prefix}.{k}.{name}"] = val
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    @property
    def family(self) -> str:
        return self.arch.family

    @property
    def layout(self) -> FeatureLayout:
        return self.arch.layout

    def _stacks(self):
        yield "layers", self.arch.layers
        if self.arch.family == "mlp":
            yield "head", self.arch.head

    def layer_params(self, prefix, k) -> dict[str, np.ndarray]:
        pre = f"{prefix}.{k}."
        return {name[len(pre):]: v for name, v in self.params.items() if name.startswith(pre)}

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "Model":
        return Model(self.arch, {k: v.copy() for k, v in self.params.items()}, meta=self.meta)

    # ---------------------------------------------------------- forward

    def forward(self, batch, *, prune=True, return_cache=False):
        """Predictions of shape (B, 4) for a batch."""
        if self.family == "mlp":
            out, cache = self._mlp_forward(batch)
        else:
            out, cache = self._graph_forward(batch, prune)
        return (out, cache) if return_cache else out

    def node_outputs(self, batch: GraphBatch) -> np.ndarray:
        """Final-layer output for every node, unpruned."""
        s = batch.structure
        from .structure import GraphStructure
        full = GraphStructure(s.num_nodes, s.src, s.dst, s.rel)
        return self._graph_forward(GraphBatch(batch.features, full, None), prune=False)[0]

    def _graph_forward(self, batch: GraphBatch, prune):
        specs = self.arch.layers
        plan = batch.structure.plan(len(specs), prune=prune)
        h = batch.features
        caches = []
        for k, (spec, lg) in enumerate(zip(specs, plan)):
            p = self.layer_params("layers", k)
            if spec.kind == "gcn":
                h, c = L.gcn_layer_forward(h, lg, p["W"], p["b"], spec.activation)
            elif spec.kind == "rgcn":
                h, c = L.rgcn_layer_forward(h, lg, p, spec.activation)
            elif spec.kind == "gat":
                h, c = L.gat_layer_forward(h, lg, p, spec.activation, spec.concat)
            else:
                raise ModelError(f"layer kind {spec.kind!r} in a graph model")
            if not np.all(np.isfinite(h)):
                raise FloatingPointError(f"non-finite activations after layer {k}")
            caches.append(c)
        return h, (plan, caches)

    def _mlp_forward(self, batch: MLPBatch):
        B, C, _ = batch.features.shape
        if batch.mask.shape != (B, C, NUM_JOINTS):
            raise L.ShapeError(f"mask shape {batch.mask.shape} does not match features "
                               f"{batch.features.shape}")
        x = np.concatenate([batch.features, batch.mask], axis=2).reshape(B * C, -1)
        caches = []
        for k, spec in enumerate(self.arch.layers):
            p = self.layer_params("layers", k)
            x, c = L.dense_forward(x, p["W"], p["b"], spec.activation)
            caches.append(c)
        x = x.reshape(B, -1)
        for k, spec in enumerate(self.arch.head):
            p = self.layer_params("head", k)
            x, c = L.dense_forward(x, p["W"], p["b"], spec.activation)
            caches.append(c)
        return x, (B, C, caches)

    def encode_views(self, batch: MLPBatch) -> np.ndarray:
        """Per-camera embeddings of the shared MLP encoder, shape (B, C, width)."""
        B, C, _ = batch.features.shape
        x = np.concatenate([batch.features, batch.mask], axis=2).reshape(B * C, -1)
        for k, spec in enumerate(self.arch.layers):
            p = self.layer_params("layers", k)
            x, _ = L.dense_forward(x, p["W"], p["b"], spec.activation)
        return x.reshape(B, C, -1)

    # ---------------------------------------------------------- backward

    def backward(self, dout, cache) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter given d loss / d output."""
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        if self.family == "mlp":
            B, C, caches = cache
            n_enc = len(self.arch.layers)
            g = dout
            for k in reversed(range(len(self.arch.head))):
                spec = self.arch.head[k]
                p = self.layer_params("head", k)
                g, gr = L.dense_backward(g, caches[n_enc + k], p["W"], spec.activation)
                for name, v in gr.items():
                    grads[f"head.{k}.{name}"] += v
            g = g.reshape(B * C, -1)
            for k in reversed(range(n_enc)):
                spec = self.arch.layers[k]
                p = self.layer_params("layers", k)
                g, gr = L.dense_backward(g, caches[k], p["W"], spec.activation)
                for name, v in gr.items():
                    grads[f"layers.{k}.{name}"] += v
            return grads
        plan, caches = cache
        g = dout
        for k in reversed(range(len(self.arch.layers))):
            spec = self.arch.layers[k]
            p = self.layer_params("layers", k)
            lg = plan[k]
            if spec.kind == "gcn":
                g, gr = L.gcn_layer_backward(g, caches[k], lg, p["W"], spec.activation)
            elif spec.kind == "rgcn":
                g, gr = L.rgcn_layer_backward(g, caches[k], lg, p, spec.activation)
            else:
                g, gr = L.gat_layer_backward(g, caches[k], lg, p, spec.activation)
            for name, v in gr.items():
                grads[f"layers.{k}.{name}"] += v
        return grads

    def loss_and_grad(self, batch):
        pred, cache = self.forward(batch, return_cache=True)
        value, dpred = mse_loss(pred, batch.targets)
        return value, self.backward(dpred, cache)

    # ---------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "architecture": self.arch.to_dict(),
            "meta": self.meta,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d) -> "Model":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ModelError("not a supported checkpoint")
        try:
            params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                      for k, v in d["params"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed checkpoint parameters: {exc}") from None
        model = cls(Architecture.from_dict(d["architecture"]), params, meta=d.get("meta"))
        expected = Model(model.arch).params
        if set(expected) != set(params) or any(expected[k].shape != params[k].shape
                                                for k in params):
            raise ModelError("checkpoint parameters do not match the architecture")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -------------------------------------------------------------- loss & output

def mse_loss(pred, target):
    """Mean squared error over all components and its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    diff = pred - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def mse_components(pred, target) -> dict[str, float]:
    """Global, position (x, y) and orientation (sin, cos) mean squared errors."""
    diff = np.atleast_2d(np.asarray(pred, dtype=np.float64) - np.asarray(target))
    sq = diff * diff
    return {"global": float(sq.mean()), "position": float(sq[:, :2].mean()),
            "orientation": float(sq[:, 2:].mean())}


@dataclass(frozen=True)
class PoseEstimate:
    x_norm: float
    y_norm: float
    sin_alpha: float
    cos_alpha: float
    x: float      # meters
    y: float      # meters
    alpha: float  # radians in (-pi, pi]
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def pose_from_output(out, room: RoomBounds) -> PoseEstimate:
    xn, yn, s, c = (float(v) for v in out)
    low = s == 0.0 and c == 0.0
    alpha = 0.0 if low else wrap_angle(np.arctan2(s, c))
    return PoseEstimate(xn, yn, s, c, xn * room.hx, yn * room.hy, alpha, low)


def predict(model: Model, graph, room: RoomBounds) -> PoseEstimate:
    """Pose read from the superbody node of one encoded graph."""
    from .data import SampleSet
    out = model.forward(SampleSet([graph]).batch([0], model.family))
    return pose_from_output(out[0], room)
