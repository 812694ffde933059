"""Evaluation reports for trained models and the analytical baseline."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import BaselineState, baseline_orientation, baseline_position
from .geometry import Rig, RoomBounds, angle_difference
from .gnn.data import SampleSet, pose_target
from .gnn.model import Model, mse_components
from .gnn.training import predict_all
from .graph import GraphError, assemble_person_graph
from .skeleton import Dataset, GroundTruthPose, emit_dataset


class EvaluationError(ValueError):
    pass


def dataset_fingerprint(ds: Dataset) -> str:
    blob = json.dumps(emit_dataset(ds), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _rig_of(ds: Dataset, rig: Rig | None) -> Rig:
    rig = rig or ds.rig
    if rig is None:
        raise EvaluationError("dataset has no rig; pass one explicitly")
    return rig


def build_samples(ds: Dataset, mode: str, rig: Rig | None = None,
                  room: RoomBounds | None = None) -> tuple[SampleSet, list[GroundTruthPose]]:
    """Encode every (ground truth, view set) pair of a dataset."""
    rig = _rig_of(ds, rig)
    room = room or rig.room
    graphs, targets, truths = [], [], []
    for gt, views in ds.samples():
        graphs.append(assemble_person_graph(views, mode, rig, room))
        targets.append(pose_target(gt.x, gt.y, gt.alpha, room))
        truths.append(gt)
    if not graphs:
        raise EvaluationError("dataset contains no observed ground-truth poses")
    return SampleSet(graphs, np.array(targets)), truths


@dataclass
class EvalReport:
    estimator: str          # architecture family or "analytical"
    mode: str               # feature mode, "3d" for the analytical baseline
    train_set: str
    samples: int
    mse: dict[str, float]   # global / position / orientation, normalized units
    mae_mm: float           # mean Euclidean floor-position error
    mae_x_mm: float
    mae_y_mm: float
    mae_deg: float          # mean absolute circular angle error
    dataset: str            # dataset fingerprint
    config_hash: str = ""
    predictions: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_report(estimator, mode, train_set, truths: Sequence[GroundTruthPose], xs, ys, alphas,
                room: RoomBounds, dataset: str, config_hash: str = "",
                raw=None) -> EvalReport:
    """Assemble a report; ``raw`` (n, 4) network outputs, if given, feed the MSEs."""
    xs, ys, alphas = (np.asarray(a, dtype=np.float64) for a in (xs, ys, alphas))
    gx = np.array([g.x for g in truths])
    gy = np.array([g.y for g in truths])
    ga = np.array([g.alpha for g in truths])
    pred = (np.stack([xs / room.hx, ys / room.hy, np.sin(alphas), np.cos(alphas)], axis=1)
            if raw is None else np.asarray(raw, dtype=np.float64))
    target = np.stack([gx / room.hx, gy / room.hy, np.sin(ga), np.cos(ga)], axis=1)
    dx, dy = (xs - gx) * 1000.0, (ys - gy) * 1000.0
    dang = np.abs(angle_difference(alphas, ga))
    preds = [{"id": k, "t": g.t, "person": g.person, "x_gt": g.x, "y_gt": g.y,
              "alpha_gt": g.alpha, "x": float(x), "y": float(y), "alpha": float(a)}
             for k, (g, x, y, a) in enumerate(zip(truths, xs, ys, alphas))]
    return EvalReport(
        estimator=estimator, mode=mode, train_set=train_set, samples=len(truths),
        mse=mse_components(pred, target), mae_mm=float(np.mean(np.hypot(dx, dy))),
        mae_x_mm=float(np.mean(np.abs(dx))), mae_y_mm=float(np.mean(np.abs(dy))),
        mae_deg=float(np.degrees(np.mean(dang))), dataset=dataset, config_hash=config_hash,
        predictions=preds)


def evaluate_model(model: Model, ds: Dataset, rig: Rig | None = None) -> EvalReport:
    rig = _rig_of(ds, rig)
    if rig.num_cameras != model.layout.num_cameras:
        raise EvaluationError(f"model expects {model.layout.num_cameras} cameras, "
                              f"rig has {rig.num_cameras}")
    try:
        samples, truths = build_samples(ds, model.layout.mode, rig)
    except GraphError as exc:
        raise EvaluationError(f"dataset does not match model mode "
                              f"{model.layout.mode!r}: {exc}") from None
    out = predict_all(model, samples)
    room = rig.room
    alphas = np.arctan2(out[:, 2], out[:, 3])
    return make_report(model.family, model.layout.mode, model.meta.get("train_set", ""),
                       truths, out[:, 0] * room.hx, out[:, 1] * room.hy, alphas, room,
                       dataset_fingerprint(ds), model.meta.get("config_hash", ""), raw=out)


def evaluate_baseline(ds: Dataset, rig: Rig | None = None) -> EvalReport:
    """Analytical estimator over the dataset in time order, state kept per person.

    When no camera sees three joints, the previous position is kept (room
    center initially); an orientation that was never observed counts as 0.
    """
    rig = _rig_of(ds, rig)
    states: dict[int, BaselineState] = {}
    last_pos: dict[int, tuple[float, float]] = {}
    truths, xs, ys, alphas = [], [], [], []
    for gt, views in ds.samples():
        if not all(o.has_world for o in views):
            raise EvaluationError("analytical baseline needs 3D joint positions")
        pos = baseline_position(views)
        if pos is None:
            pos = last_pos.get(gt.person, (0.0, 0.0))
        last_pos[gt.person] = pos
        alpha, states[gt.person] = baseline_orientation(views, states.get(gt.person))
        truths.append(gt)
        xs.append(pos[0])
        ys.append(pos[1])
        alphas.append(0.0 if alpha is None else alpha)
    if not truths:
        raise EvaluationError("dataset contains no observed ground-truth poses")
    return make_report("analytical", "3d", "", truths, xs, ys, alphas, rig.room,
                       dataset_fingerprint(ds))


# ------------------------------------------------------------ comparison

TABLE_METRICS = (
    ("Orientation MSE", lambda r: r.mse["orientation"]),
    ("Position MSE", lambda r: r.mse["position"]),
    ("Global MSE", lambda r: r.mse["global"]),
    ("Position MAE (mm)", lambda r: r.mae_mm),
    ("Orientation MAE (deg)", lambda r: r.mae_deg),
)
COLUMN_ORDER = ("mlp", "gcn", "rgcn", "gat", "analytical")


def _check_same_dataset(reports):
    ref = reports[0]
    for r in reports[1:]:
        if r.dataset != ref.dataset or r.samples != ref.samples:
            raise EvaluationError(
                f"reports cover different datasets ({ref.dataset}/{ref.samples} vs "
                f"{r.dataset}/{r.samples})")


def comparison_table(reports: Sequence[EvalReport]) -> str:
    """Markdown tables, one per metric: rows (training set, mode), columns estimators."""
    _check_same_dataset(reports)
    cols = sorted({r.estimator for r in reports},
                  key=lambda c: (COLUMN_ORDER.index(c) if c in COLUMN_ORDER else 99, c))
    rows = sorted({(r.train_set, r.mode) for r in reports if r.estimator != "analytical"})
    baseline = [r for r in reports if r.estimator == "analytical"]
    cell = {(r.train_set, r.mode, r.estimator): r for r in reports}
    out = []
    for title, metric in TABLE_METRICS:
        out.append(f"### {title}\n")
        out.append("| | " + " | ".join(c.upper() if c != "analytical" else "Analytical"
                                       for c in cols) + " |")
        out.append("|---" * (len(cols) + 1) + "|")
        for ts, mode in rows or [("", "3d")]:
            vals = []
            for c in cols:
                r = baseline[0] if c == "analytical" and baseline else cell.get((ts, mode, c))
                vals.append("-" if r is None else f"{metric(r):.4g}")
            label = f"{ts} - {mode.upper()} features" if ts else f"{mode.upper()} features"
            out.append(f"| {label} | " + " | ".join(vals) + " |")
        out.append("")
    return "\n".join(out)


def report_name(r: EvalReport) -> str:
    parts = [r.estimator]
    if r.train_set:
        parts.append(r.train_set)
    if r.estimator != "analytical":
        parts.append(r.mode)
    return "_".join(parts)


def write_trace(reports: Sequence[EvalReport], path) -> int:
    """Per-sample CSV: ground truth followed by each estimator's prediction."""
    _check_same_dataset(reports)
    names = [report_name(r) for r in reports]
    header = ["id", "t", "person", "x_gt", "y_gt", "alpha_gt"]
    for n in names:
        header += [f"{n}_x", f"{n}_y", f"{n}_alpha"]
    ref = reports[0].predictions
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, p in enumerate(ref):
            row = [p["id"], repr(p["t"]), p["person"], repr(p["x_gt"]), repr(p["y_gt"]),
                   repr(p["alpha_gt"])]
            for r in reports:
                q = r.predictions[k]
                row += [repr(q["x"]), repr(q["y"]), repr(q["alpha"])]
            w.writerow(row)
    return len(ref)


def compare(reports: Sequence[EvalReport]) -> dict:
    """Metric deltas of every report relative to the first one."""
    _check_same_dataset(reports)
    ref = reports[0]
    deltas = {}
    for r in reports:
        deltas[report_name(r)] = {
            "global_mse": r.mse["global"] - ref.mse["global"],
            "position_mse": r.mse["position"] - ref.mse["position"],
            "orientation_mse": r.mse["orientation"] - ref.mse["orientation"],
            "mae_mm": r.mae_mm - ref.mae_mm,
            "mae_deg": r.mae_deg - ref.mae_deg,
        }
    return deltas
