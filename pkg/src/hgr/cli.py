"""Command-line entry point: ``hgr <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .autodiff.params import CheckpointError
from .config import ABLATIONS, ExperimentConfig
from .data import DatasetError, data_root, load_dataset, validate_dataset
from .experiments import (binary_select, cross_dataset_eval, desk_gradcheck, level_reports, query_graph, retrieve,
                          run_binary_benchmark, train_experiment)
from .grammar import SyntheticGrammar
from .graph import GraphError, build_graph, graph_to_dict, rule_parse
from .metrics import format_table, reports_csv, reports_json, score_binary
from .synthetic import InfeasibleSplit, generate_world, load_world, write_world
from .train import TrainingError, load_checkpoint, save_checkpoint
from .video import FeatureFileError

GRADCHECK_TOLERANCE = 1e-4


class CliError(Exception):
    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


# -- config plumbing -------------------------------------------------------------

def resolve_config(args):
    exp = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    tr, world = exp.train, exp.world
    if args.seed is not None:
        tr = replace(tr, seed=args.seed)
        world = replace(world, seed=args.seed)
    for name in args.ablation or ():
        tr = replace(tr, **{ABLATIONS[name]: True})
    if args.normalize_local:
        tr = replace(tr, normalize_local=args.normalize_local)
    exp = replace(exp, train=tr, world=world)
    if args.out:
        exp = replace(exp, out_dir=args.out)
    if args.topk is not None:
        exp = replace(exp, eval=replace(exp.eval, topk=args.topk))
    if args.per_level:
        exp = replace(exp, eval=replace(exp.eval, per_level=True))
    return exp


def _dataset_dir(args, exp):
    return data_root(args.data or exp.data_dir)


def _emit(text):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- commands ------------------------------------------------------------------------

def cmd_gen_data(args, exp):
    out = Path(args.out or exp.data_dir)
    world = generate_world(spec=exp.world)
    write_world(world, out)
    print(json.dumps({"out": str(out), "videos": len(world.dataset.videos),
                      "splits": {k: len(v) for k, v in world.dataset.splits.items()}}, sort_keys=True))


def cmd_parse(args, exp):
    grammar = SyntheticGrammar.default()
    sentences = [args.sentence] if args.sentence else [ln.strip() for ln in sys.stdin if ln.strip()]
    for s in sentences:
        toks, frames = rule_parse(s, grammar)
        print(json.dumps(graph_to_dict(build_graph(toks, frames)), sort_keys=True, separators=(",", ":")))


def cmd_train(args, exp):
    ds = load_dataset(_dataset_dir(args, exp))
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp.save(out / "config.json")
    model, result = train_experiment(exp, ds, log_path=out / "log.jsonl", timing_path=out / "timing.jsonl")
    save_checkpoint(out / "best", model, result.best_epoch, result.best_report, exp.train)
    meta = json.loads((out / "best.meta.json").read_text())
    meta["experiment_hash"] = exp.hash()
    (out / "best.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(json.dumps({"best_epoch": result.best_epoch, "val_rsum": result.best_report["rsum"],
                      "checkpoint": str(out / "best")}, sort_keys=True))


def _load_model(args):
    if not args.checkpoint:
        raise CliError("--checkpoint is required")
    model, _meta = load_checkpoint(args.checkpoint)
    return model


def _report_outputs(rows, args, per_level, stem="eval"):
    if not per_level:
        rows = {"fusion": rows["fusion"]}
    _emit(format_table(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(reports_json(rows) + "\n")
        (out / f"{stem}.csv").write_text(reports_csv(rows))


def cmd_eval(args, exp):
    model = _load_model(args)
    ds = load_dataset(_dataset_dir(args, exp))
    split = args.split or exp.eval.split
    if split not in ds.splits or not ds.splits[split]:
        raise CliError(f"dataset has no non-empty split {split!r}")
    _report_outputs(level_reports(model, ds, split), args, exp.eval.per_level)


def cmd_eval_cross(args, exp):
    model = _load_model(args)
    ds = load_dataset(_dataset_dir(args, exp), strict=True)
    t2v, v2t = cross_dataset_eval(model, ds, args.split or exp.eval.split)
    _report_outputs({"fusion": (t2v, v2t)}, args, False, stem="eval_cross")


def cmd_retrieve(args, exp):
    if not args.query:
        raise CliError("--query is required")
    model = _load_model(args)
    ds = load_dataset(_dataset_dir(args, exp))
    split = args.split or "all"
    videos = ds.split(split)[0]
    hits = retrieve(model, videos, query_graph(args.query), exp.eval.topk)
    print(f"query: {args.query}")
    print(f"{'rank':>4}  {'video':<10} {'fusion':>8} {'event':>8} {'action':>8} {'entity':>8}")
    for h in hits:
        print(f"{h['rank']:>4}  {h['video_id']:<10} {h['fusion']:>8.4f} {h['event']:>8.4f} "
              f"{h['action']:>8.4f} {h['entity']:>8.4f}")


def cmd_select(args, exp):
    model = _load_model(args)
    root = _dataset_dir(args, exp)
    if args.triplets:
        ds = load_dataset(root)
        grammar = SyntheticGrammar.default()
        pos, neg, kinds = [], [], []
        with open(args.triplets) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    gp = build_graph(*rule_parse(rec["positive"], grammar))
                    gn = build_graph(*rule_parse(rec["negative"], grammar))
                except GraphError as exc:
                    raise CliError(f"{args.triplets}:{lineno}: {exc}") from None
                _ok, margin = binary_select(model, ds.videos[rec["video_id"]], gp, gn)
                pos.append(margin)
                neg.append(0.0)
                kinds.append(rec["kind"])
        rep = score_binary(pos, neg, kinds)
    else:
        world = load_world(root)
        rep, _trip, _p, _n = run_binary_benchmark(model, world, seed=exp.eval.bench_seed,
                                                  split=args.split or exp.eval.split)
    _emit(rep.table())
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "select.json").write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n")


def cmd_gradcheck(args, exp):
    res = desk_gradcheck(seed=args.seed or 0, max_entries=args.max_entries)
    for name, err in sorted(res.per_parameter.items()):
        print(f"{name:<24} {err:.3e}")
    ok = res.max_error <= GRADCHECK_TOLERANCE
    print(f"max relative error {res.max_error:.3e} over {res.entries} entries in {res.seconds:.1f}s: "
          f"{'PASS' if ok else 'FAIL'} (tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def cmd_report(args, exp):
    if not args.log:
        raise CliError("--log is required")
    epochs = []
    with open(args.log) as fh:
        for line in fh:
            rec = json.loads(line)
            if "val_rsum" in rec:
                epochs.append(rec)
    if not epochs:
        raise CliError(f"{args.log}: no epoch records")
    lines = [f"{'epoch':>5} {'mean_loss':>10} {'val_rsum':>9}"]
    lines += [f"{r['epoch']:>5} {r['mean_loss']:>10.5f} {r['val_rsum']:>9.2f}" for r in epochs]
    _emit("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "epochs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mean_loss", "val_rsum"])
            for r in epochs:
                w.writerow([r["epoch"], r["mean_loss"], r["val_rsum"]])
        if args.plot:
            _plot(epochs, out / "curves.png")


def _plot(epochs, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise CliError("plotting needs matplotlib (pip install hgr[plot])") from None
    fig, ax = plt.subplots(1, 2, figsize=(8, 3))
    ep = [r["epoch"] for r in epochs]
    ax[0].plot(ep, [r["mean_loss"] for r in epochs])
    ax[0].set_title("mean training loss")
    ax[1].plot(ep, [r["val_rsum"] for r in epochs])
    ax[1].set_title("validation rsum")
    for a in ax:
        a.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path)


def cmd_validate(args, exp):
    report = validate_dataset(_dataset_dir(args, exp))
    print(json.dumps(report, indent=1, sort_keys=True))
    if not report["ok"]:
        raise DatasetError(report["problems"])


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the synthetic world into a dataset directory"),
    "parse": (cmd_parse, "parse sentences of the synthetic grammar into graph JSON"),
    "train": (cmd_train, "train a model and keep the best validation checkpoint"),
    "eval": (cmd_eval, "retrieval metrics for a checkpoint on a dataset split"),
    "eval-cross": (cmd_eval_cross, "zero-shot metrics on another dataset"),
    "retrieve": (cmd_retrieve, "top-k videos for an ad-hoc query"),
    "select": (cmd_select, "binary selection accuracy per perturbation kind"),
    "gradcheck": (cmd_gradcheck, "finite-difference check of the full loss"),
    "report": (cmd_report, "tables and plots from a training log"),
    "validate": (cmd_validate, "check a dataset directory exhaustively"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--topk", type=int)
    common.add_argument("--per-level", action="store_true", help="event/action/entity/fusion breakdown")
    common.add_argument("--ablation", action="append", choices=sorted(ABLATIONS))
    common.add_argument("--normalize-local", choices=("sum", "mean"))
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("--data", help="dataset directory (relative paths fall back to $HGR_DATA_DIR)")
    common.add_argument("--checkpoint", help="checkpoint stem, e.g. runs/x/best")
    common.add_argument("--split")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hgr", description="hierarchical graph reasoning for video-text retrieval")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "parse":
            p.add_argument("sentence", nargs="?")
        if name == "retrieve":
            p.add_argument("--query")
        if name == "select":
            p.add_argument("--triplets", help="JSON-lines {video_id, positive, negative, kind}")
        if name == "gradcheck":
            p.add_argument("--max-entries", type=int, help="probe a seeded sample of each parameter")
        if name == "report":
            p.add_argument("--log")
            p.add_argument("--plot", action="store_true")
    return parser


def _fail(kind, message, problems=()):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "problems": list(problems)}, indent=1) + "\n")
    return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        exp = resolve_config(args)
        if args.print_config:
            sys.stdout.write(exp.pretty())
            return 0
        rc = COMMANDS[args.command][0](args, exp)
        return rc or 0
    except CliError as exc:
        return _fail("usage", str(exc), exc.problems)
    except DatasetError as exc:
        return _fail("dataset", "dataset failed validation", exc.problems)
    except (GraphError, FeatureFileError, CheckpointError, InfeasibleSplit, TrainingError) as exc:
        return _fail(type(exc).__name__, str(exc))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
