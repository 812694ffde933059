"""Command-line interface.

Subcommands: simulate, track, train, search, eval, baseline, compare, infer.
Every subcommand accepts ``--config FILE`` (JSON object keyed by option
name, dashes or underscores); explicit flags override the file.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


log = logging.getLogger("torsopose")

REQUIRED = {
    "simulate": ["out"],
    "track": ["input"],
    "train": ["train", "out"],
    "search": ["train", "dev", "out"],
    "eval": ["model", "data"],
    "baseline": ["data"],
    "compare": ["reports"],
    "infer": ["model", "input"],
}


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torsopose", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON file supplying option values")
        return sp

    sp = add("simulate", "generate a synthetic multi-camera dataset")
    sp.add_argument("--rig", help="camera rig JSON (default: built-in 3-camera rig)")
    sp.add_argument("--room", help="room JSON with half_extents, overrides the rig's room")
    sp.add_argument("--frames", type=int, default=1000)
    sp.add_argument("--noise", default="moderate",
                    help="noise profile name (none, moderate, occluded) or JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rate", type=float, default=15.0, help="frames per second")
    sp.add_argument("--people", type=int, default=1)
    sp.add_argument("--source", default="sim", help="label stored with the ground truth")
    sp.add_argument("--parts", help="JSON list of generation configs for mixed datasets")
    sp.add_argument("--no-depth", action="store_true", help="omit 3D joint positions")
    sp.add_argument("--out", help="output dataset path (required)")

    sp = add("track", "run the appearance matcher over a dataset and print events")
    sp.add_argument("--in", dest="input", help="dataset JSON (required)")
    sp.add_argument("--d-max", type=float, default=0.65)
    sp.add_argument("--confirm-seconds", type=float, default=2.0)
    sp.add_argument("--expire-seconds", type=float, default=2.0)
    sp.add_argument("--history-depth", type=int, default=10)
    sp.add_argument("--out", help="write JSON lines here instead of stdout")

    for name, help_ in (("train", "train one model"),
                        ("search", "random hyperparameter search")):
        sp = add(name, help_)
        sp.add_argument("--train", help="training dataset (required)")
        sp.add_argument("--dev", help="development dataset" + (" (required)"
                                                                 if name == "search" else ""))
        sp.add_argument("--mode", choices=("2d", "3d"), default="2d")
        sp.add_argument("--epochs", type=int, default=50)
        sp.add_argument("--batch-size", type=int, default=32)
        sp.add_argument("--weight-decay", type=float, default=0.0)
        sp.add_argument("--patience", type=int, default=10)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--label", default="", help="training-set name stored in the model")
        sp.add_argument("--out", help="checkpoint path (required)")
        if name == "train":
            sp.add_argument("--family", choices=("gcn", "rgcn", "gat", "mlp"), default="rgcn")
            sp.add_argument("--hidden", type=_ints, default=[64, 64, 64],
                            help="comma-separated hidden widths; for mlp the first half "
                                 "is the per-camera encoder, the rest the head")
            sp.add_argument("--activation", choices=("relu", "tanh"), default="relu")
            sp.add_argument("--bases", type=int, default=None)
            sp.add_argument("--heads", type=int, default=1)
            sp.add_argument("--lr", type=float, default=1e-3)
            sp.add_argument("--history", help="training history CSV")
        else:
            sp.add_argument("--budget", type=int, default=10)
            sp.add_argument("--families", default="rgcn,gat")
            sp.add_argument("--trials", help="write per-trial results (JSON)")

    sp = add("eval", "evaluate a checkpoint on a dataset")
    sp.add_argument("--model", help="checkpoint (required)")
    sp.add_argument("--data", help="dataset with ground truth (required)")
    sp.add_argument("--out", help="report JSON path")

    sp = add("baseline", "evaluate the analytical estimator on a dataset")
    sp.add_argument("--data", help="dataset with ground truth and 3D joints (required)")
    sp.add_argument("--out", help="report JSON path")

    sp = add("compare", "tabulate reports over the same dataset")
    sp.add_argument("--reports", nargs="+", help="report JSON files (required)")
    sp.add_argument("--trace", help="per-sample CSV output")
    sp.add_argument("--table", help="markdown table output (default: stdout)")

    sp = add("infer", "track people and estimate their poses frame by frame")
    sp.add_argument("--model", help="checkpoint (required)")
    sp.add_argument("--in", dest="input", help="observation stream JSON (required)")
    sp.add_argument("--rig", help="rig JSON if the stream has none")
    sp.add_argument("--out", help="write JSON lines here instead of stdout")
    sp.add_argument("--dump-graphs", help="write each input graph as a JSON line here")
    return p


def _parse(argv):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            dest = {"in": "input"}.get(k, k.replace("-", "_"))
            if dest not in known:
                parser.error(f"unknown option {k!r} in config")
            defaults[dest] = v
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.error("missing required option(s): " +
                  ", ".join("--" + ("in" if m == "input" else m.replace("_", "-"))
                            for m in missing))
    return args


def _write_lines(lines, path):
    text = "".join(json.dumps(l, sort_keys=True) + "\n" for l in lines)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _noise(spec):
    from .simulator import NOISE_PROFILES, NoiseModel
    if isinstance(spec, dict):
        return NoiseModel.from_dict(spec)
    if spec in NOISE_PROFILES:
        return NOISE_PROFILES[spec]
    return NoiseModel.from_dict(json.loads(Path(spec).read_text()))


def cmd_simulate(a):
    from .geometry import RoomBounds, Rig, default_rig
    from .simulator import GenerationConfig, generate_dataset
    room = RoomBounds.from_dict(json.loads(Path(a.room).read_text())) if a.room else None
    if a.rig:
        rig = Rig.load(a.rig)
        if room is not None:
            rig = Rig(rig.cameras, room)
    else:
        rig = default_rig(room)
    if a.parts:
        raw = a.parts if isinstance(a.parts, list) else json.loads(Path(a.parts).read_text())
        parts = []
        for d in raw:
            d = dict(d)
            d["noise"] = _noise(d.get("noise", "moderate"))
            parts.append(GenerationConfig(**d))
    else:
        parts = [GenerationConfig(a.frames, a.seed, a.rate, a.people, _noise(a.noise), a.source,
                                  not a.no_depth)]
    manifest = generate_dataset(parts, a.out, rig)
    print(json.dumps(manifest, sort_keys=True))
    return 0


def cmd_track(a):
    from .matcher import Matcher, MatcherConfig
    from .skeleton import load_dataset
    ds = load_dataset(a.input)
    m = Matcher(MatcherConfig(a.d_max, a.confirm_seconds, a.expire_seconds, a.history_depth))
    lines = []
    for frame in ds.frames:
        events, _ = m.step(frame)
        lines += [e.to_dict() for e in events]
    _write_lines(lines, a.out)
    return 0


def _train_meta(a, extra=None):
    from .simulator import config_hash
    payload = {k: v for k, v in vars(a).items() if k not in ("config", "verbose", "out")}
    meta = {"train_set": a.label, "config_hash": config_hash(payload)}
    meta.update(extra or {})
    return meta


def cmd_train(a):
    from .evaluation import build_samples
    from .gnn import Model, TrainConfig, graph_architecture, mlp_architecture, train
    from .skeleton import load_dataset
    tr, _ = build_samples(load_dataset(a.train), a.mode)
    dev = build_samples(load_dataset(a.dev), a.mode)[0] if a.dev else None
    if a.family == "mlp":
        split = max(1, len(a.hidden) // 2)
        arch = mlp_architecture(tr.layout, a.hidden[:split], a.hidden[split:], a.activation)
    else:
        arch = graph_architecture(a.family, tr.layout, a.hidden, a.activation, a.bases, a.heads)
    model = Model(arch, seed=a.seed, meta=_train_meta(a))
    cfg = TrainConfig(lr=a.lr, epochs=a.epochs, batch_size=a.batch_size, seed=a.seed,
                      weight_decay=a.weight_decay, patience=a.patience)
    model, hist = train(model, tr, dev, cfg)
    model.save(a.out)
    if a.history:
        hist.write_csv(a.history)
    last = hist.rows[-1]
    print(json.dumps({"epochs": len(hist.rows), **last}, sort_keys=True))
    return 0


def cmd_search(a):
    from .evaluation import build_samples
    from .gnn import SearchSpace, TrainConfig, random_search
    from .skeleton import load_dataset
    tr, _ = build_samples(load_dataset(a.train), a.mode)
    dev, _ = build_samples(load_dataset(a.dev), a.mode)
    space = SearchSpace(families=tuple(f for f in a.families.split(",") if f))
    base = TrainConfig(epochs=a.epochs, batch_size=a.batch_size, seed=a.seed,
                       weight_decay=a.weight_decay, patience=a.patience)
    res = random_search(space, tr, dev, a.budget, a.seed, base)
    res.best_model.meta = _train_meta(a, {"trial": res.best.to_dict()})
    res.best_model.save(a.out)
    if a.trials:
        Path(a.trials).write_text(json.dumps(res.trials, indent=1, sort_keys=True))
    print(json.dumps({"best": res.best.to_dict(), "dev_mse": res.best_dev}, sort_keys=True))
    return 0


def _summary(report):
    return {k: v for k, v in report.to_dict().items() if k != "predictions"}


def cmd_eval(a):
    from .evaluation import evaluate_model
    from .gnn import Model
    from .skeleton import load_dataset
    report = evaluate_model(Model.load(a.model), load_dataset(a.data))
    if a.out:
        report.save(a.out)
    print(json.dumps(_summary(report), sort_keys=True))
    return 0


def cmd_baseline(a):
    from .evaluation import evaluate_baseline
    from .skeleton import load_dataset
    report = evaluate_baseline(load_dataset(a.data))
    if a.out:
        report.save(a.out)
    print(json.dumps(_summary(report), sort_keys=True))
    return 0


def cmd_compare(a):
    from .evaluation import EvalReport, comparison_table, write_trace
    reports = [EvalReport.load(p) for p in a.reports]
    table = comparison_table(reports)
    if a.trace:
        write_trace(reports, a.trace)
    if a.table:
        Path(a.table).write_text(table)
    else:
        print(table)
    return 0


def cmd_infer(a):
    from .geometry import Rig
    from .gnn import Model, predict
    from .graph import assemble_person_graph
    from .matcher import Matcher, latest_views
    from .skeleton import load_dataset
    model = Model.load(a.model)
    ds = load_dataset(a.input)
    rig = Rig.load(a.rig) if a.rig else ds.rig
    if rig is None:
        raise ValueError("the stream has no rig; pass --rig")
    matcher = Matcher()
    lines, graphs = [], []
    for frame in ds.frames:
        matcher.step(frame)
        for track in sorted(matcher.confirmed(), key=lambda tr: tr.person_id):
            if track.last_matched != frame.timestamp:
                continue
            g = assemble_person_graph(latest_views(track, rig.num_cameras), model.layout.mode,
                                      rig)
            est = predict(model, g, rig.room)
            lines.append({"t": frame.timestamp, "track": track.person_id, **est.to_dict()})
            if a.dump_graphs:
                graphs.append({"t": frame.timestamp, "track": track.person_id,
                               **g.to_dict()})
    _write_lines(lines, a.out)
    if a.dump_graphs:
        _write_lines(graphs, a.dump_graphs)
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "track": cmd_track, "train": cmd_train, "search": cmd_search,
    "eval": cmd_eval, "baseline": cmd_baseline, "compare": cmd_compare, "infer": cmd_infer,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stderr.close()
        return 0
    except Exception as exc:  # noqa: BLE001 - reported as exit code 1
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
