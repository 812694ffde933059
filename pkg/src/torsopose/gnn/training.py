"""Minibatch training with Adam, early stopping, and random hyperparameter search."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import SampleSet
from .model import Architecture, Model, graph_architecture, mlp_architecture, mse_components

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    weight_decay: float = 0.0
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")


class Adam:
    """Adam with decoupled weight decay."""

    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)
            if c.weight_decay:
                update = update + c.weight_decay * params[k]
            params[k] -= c.lr * update


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def write_csv(self, path):
        if not self.rows:
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def evaluate_mse(model: Model, data: SampleSet, batch_size=512) -> dict[str, float]:
    preds = predict_all(model, data, batch_size)
    return mse_components(preds, data.targets)


def predict_all(model: Model, data: SampleSet, batch_size=512) -> np.ndarray:
    out = []
    for s in range(0, len(data), batch_size):
        idx = np.arange(s, min(s + batch_size, len(data)))
        out.append(model.forward(data.batch(idx, model.family)))
    return np.vstack(out)


def train(model: Model, train_set: SampleSet, dev_set: SampleSet | None,
          cfg: TrainConfig) -> tuple[Model, History]:
    """Train in place; returns the parameters with the lowest dev global MSE."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    for ds in (train_set, dev_set):
        if ds is not None and ds.layout != model.layout:
            raise ValueError("dataset feature layout does not match the model")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg)
    history = History()
    best, best_dev, stale = model.copy(), math.inf, 0
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = np.sort(order[s:s + cfg.batch_size])
            batch = train_set.batch(idx, model.family)
            try:
                loss, grads = model.loss_and_grad(batch)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from None
            if not math.isfinite(loss):
                raise TrainingDiverged(f"epoch {epoch}: loss is {loss}")
            total += loss * len(idx)
            opt.step(model.params, grads)
        train_mse = total / n
        row = {"epoch": epoch, "train_mse": train_mse}
        if dev_set is not None:
            dev = evaluate_mse(model, dev_set)
            row.update(dev_mse=dev["global"], dev_position_mse=dev["position"],
                       dev_orientation_mse=dev["orientation"])
            score = dev["global"]
        else:
            score = train_mse
        history.add(**row)
        log.debug("epoch %d %s", epoch, row)
        if score < best_dev:
            best, best_dev, stale = model.copy(), score, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best.params
    return model, history


# ------------------------------------------------------------ random search

@dataclass(frozen=True)
class SearchSpace:
    families: tuple[str, ...] = ("rgcn", "gat")
    layers: tuple[int, int] = (2, 6)
    hidden: tuple[int, int] = (16, 128)
    heads: tuple[int, int] = (1, 4)
    bases: tuple[int, int] = (1, 8)
    activations: tuple[str, ...] = ("relu", "tanh")
    lr: tuple[float, float] = (1e-4, 1e-2)


@dataclass(frozen=True)
class Trial:
    family: str
    hidden: tuple[int, ...]
    activation: str
    heads: int
    num_bases: int | None
    lr: float

    def architecture(self, layout) -> Architecture:
        if self.family == "mlp":
            split = max(1, len(self.hidden) // 2)
            return mlp_architecture(layout, self.hidden[:split], self.hidden[split:],
                                    self.activation)
        return graph_architecture(self.family, layout, self.hidden, self.activation,
                                  self.num_bases, self.heads)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def sample_trial(space: SearchSpace, rng) -> Trial:
    from .structure import MESSAGE_RELATIONS
    family = space.families[int(rng.integers(len(space.families)))]
    n_layers = int(rng.integers(space.layers[0], space.layers[1] + 1))
    # the output layer counts as one of the layers
    hidden = tuple(int(rng.integers(space.hidden[0], space.hidden[1] + 1))
                   for _ in range(max(1, n_layers - 1)))
    activation = space.activations[int(rng.integers(len(space.activations)))]
    heads = int(rng.integers(space.heads[0], space.heads[1] + 1))
    bases = int(rng.integers(space.bases[0], space.bases[1] + 1))
    lr = float(np.exp(rng.uniform(np.log(space.lr[0]), np.log(space.lr[1]))))
    if family == "gat":
        # concatenated heads multiply the width; keep the per-layer total in range
        hidden = tuple(max(1, h // heads) for h in hidden)
    return Trial(family, hidden, activation, heads if family == "gat" else 1,
                 min(bases, MESSAGE_RELATIONS) if family == "rgcn" else None, lr)


@dataclass
class SearchResult:
    best: Trial
    best_model: Model
    best_dev: float
    trials: list[dict]


def random_search(space: SearchSpace, train_set: SampleSet, dev_set: SampleSet, budget: int,
                  seed: int, base_cfg: TrainConfig | None = None) -> SearchResult:
    """Sample ``budget`` configurations, train each, keep the lowest dev MSE."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    base_cfg = base_cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    trials, best = [], None
    for k in range(budget):
        trial = sample_trial(space, rng)
        cfg = TrainConfig(**{**asdict(base_cfg), "lr": trial.lr, "seed": seed + k})
        model = Model(trial.architecture(train_set.layout), seed=seed + k)
        try:
            model, hist = train(model, train_set, dev_set, cfg)
            dev = evaluate_mse(model, dev_set)["global"]
        except TrainingDiverged as exc:
            log.warning("trial %d diverged: %s", k, exc)
            dev = math.inf
        record = {"trial": k, **trial.to_dict(), "dev_mse": dev}
        trials.append(record)
        log.info("trial %d %s dev_mse=%.5g", k, trial, dev)
        if best is None or dev < best[2]:
            best = (trial, model, dev)
    return SearchResult(best[0], best[1], best[2], trials)
