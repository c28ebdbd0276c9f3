"""Command-line surface for batch runs against a store directory.

Subcommands: simulate | preprocess | train | classify | stable-select |
evaluate | serve. A JSON config file can seed any subcommand's options;
explicit flags override it. Exit codes: 0 ok, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class CliError(Exception):
    """Validation problem; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _store_root(args):
    return Path(args.store or os.environ.get("SPI_STORE", "store"))


def build_parser() -> _Parser:
    p = _Parser(prog="spihits", description=__doc__)
    p.add_argument("--store", default=None,
                   help="store root (default: $SPI_STORE or ./store)")
    p.add_argument("--config", default=None,
                   help="JSON file with defaults for the subcommand")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a labeled synthetic dataset")
    sim.add_argument("--singles", type=int, default=165)
    sim.add_argument("--negatives", type=int, default=390)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--fluence", type=float, default=1000.0)
    sim.add_argument("--background", type=float, default=0.01)
    sim.add_argument("--prefix", default="pat")
    sim.add_argument("--split", default=None,
                     choices=("train", "validation", "test"))
    sim.add_argument("--out", default=None, help="override store root")

    pre = sub.add_parser("preprocess",
                         help="size-estimate patterns and tag the size filter")
    pre.add_argument("--size-lo", type=float, default=55.0)
    pre.add_argument("--size-hi", type=float, default=84.0)
    pre.add_argument("--export-images", default=None,
                     help="also write PNGs into this directory")
    pre.add_argument("--colormap", default="jet", choices=("jet", "grayscale"))
    pre.add_argument("--scale", default="linear", choices=("linear", "log"))

    tr = sub.add_parser("train", help="train a detector family")
    tr.add_argument("--iterations", type=int, default=2500)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--checkpoint-every", type=int, default=100)
    tr.add_argument("--input-size", type=int, default=128)
    tr.add_argument("--colormap", default="jet", choices=("jet", "grayscale"))
    tr.add_argument("--scale", default="linear", choices=("linear", "log"))
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--threshold", type=float, default=0.24)
    tr.add_argument("--labels", default="auto", choices=("auto", "truth", "human"))
    tr.add_argument("--no-resume", action="store_true")
    tr.add_argument("--validate", action="store_true",
                    help="compute the validation F1 curve after training")

    cl = sub.add_parser("classify", help="classify the dataset with a checkpoint")
    cl.add_argument("--family", required=True)
    cl.add_argument("--iteration", type=int, required=True)
    cl.add_argument("--threshold", type=float, default=0.24)
    cl.add_argument("--name", default=None, help="selection name to write")

    ss = sub.add_parser("stable-select",
                        help="intersect five consecutive checkpoints")
    ss.add_argument("--family", required=True)
    ss.add_argument("--start", type=int, required=True,
                    help="first checkpoint iteration")
    ss.add_argument("--count", type=int, default=5)
    ss.add_argument("--threshold", type=float, default=0.24)
    ss.add_argument("--name", default="stable")

    ev = sub.add_parser("evaluate", help="compare two selections")
    ev.add_argument("--selection", required=True)
    ev.add_argument("--reference", required=True)
    ev.add_argument("--json", action="store_true",
                    help="machine-precision JSON instead of the table row")

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8787)
    sv.add_argument("--ui", default=None,
                    help="directory with the built console (default: "
                         "./frontend/dist when present)")
    return p


def _apply_config_file(parser, argv):
    # Pre-scan for --config and fold its values in as subcommand defaults;
    # anything passed explicitly on the command line still wins.
    pre = _Parser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return argv, {}
    path = Path(known.config)
    if not path.exists():
        raise CliError(f"config file {path} does not exist")
    try:
        values = json.loads(path.read_text())
    except ValueError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(values, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return argv, values


def _merge_config(parser, args, file_values, argv):
    if not file_values:
        return args
    valid = set(vars(args))
    unknown = set(file_values) - valid
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                for a in argv if a.startswith("--")}
    for key, value in file_values.items():
        if key not in explicit:
            setattr(args, key, value)
    return args


# -- subcommand bodies --------------------------------------------------------

def cmd_simulate(args):
    from .patterns import DetectorGeometry
    from .simulator import SimConfig, make_dataset

    root = Path(args.out) if args.out else _store_root(args)
    config = SimConfig(n_single=args.singles, n_negative=args.negatives,
                       seed=args.seed, fluence=args.fluence,
                       background=args.background)
    store = make_dataset(config, DetectorGeometry(), root,
                         id_prefix=args.prefix, split=args.split)
    print(f"wrote {len(store.entries)} patterns to {root}")
    return 0


def cmd_preprocess(args):
    from .preprocess import RenderSpec, estimate_size, rasterize, size_filter, \
        to_png_bytes
    from .store import Store

    store = Store(_store_root(args))
    if not store.entries:
        raise CliError(f"no dataset at {_store_root(args)}")
    export = Path(args.export_images) if args.export_images else None
    if export:
        export.mkdir(parents=True, exist_ok=True)
    spec = RenderSpec(colormap=args.colormap, scale=args.scale)
    n_pass = 0
    for pid in store.ids:
        pattern = store.read_pattern(pid)
        d = estimate_size(pattern, store.geometry)
        store.entries[pid].size_estimate_nm = d
        if d is not None and size_filter(d, args.size_lo, args.size_hi):
            n_pass += 1
        if export:
            (export / f"{pid}.png").write_bytes(
                to_png_bytes(rasterize(pattern, spec)))
    store.write_manifest()
    print(f"estimated sizes for {len(store.entries)} patterns; "
          f"{n_pass} inside [{args.size_lo}, {args.size_hi}] nm")
    return 0


def cmd_train(args):
    from .detector import DetectorConfig
    from .pipeline import TrainConfig, build_examples, train, validate_family
    from .preprocess import RenderSpec
    from .service import _training_ids, _validation_ids
    from .store import Store

    store = Store(_store_root(args))
    if not store.entries:
        raise CliError(f"no dataset at {_store_root(args)}")
    detector = DetectorConfig(
        input_size=args.input_size, stages=5,
        channels=DetectorConfig.desk_scale().channels
        if args.input_size == 128 else None,
        decision_threshold=args.threshold,
    )
    config = TrainConfig(
        iterations=args.iterations,
        batch_size=args.batch_size,
        checkpoint_every=args.checkpoint_every,
        detector=detector,
        render=RenderSpec(colormap=args.colormap, scale=args.scale),
        seed=args.seed,
    )
    ids, labels = _training_ids(store, args.labels)
    if not ids:
        raise CliError("no labeled patterns to train on")
    examples = build_examples(store, ids, config.render,
                              detector.input_size, labels=labels)
    result = train(config, examples, store, resume=not args.no_resume)
    last = result.loss_curve[-1]
    print(f"family {result.family}: {len(result.checkpoint_iterations)} "
          f"checkpoints, loss {last[1]:.4f} at iteration {last[0]}")
    if args.validate:
        val_ids = _validation_ids(store)
        if not val_ids:
            raise CliError("no validation split to validate against")
        val_examples = build_examples(store, val_ids, config.render,
                                      detector.input_size)
        curve = validate_family(store, result.family, val_examples,
                                args.threshold)
        for it, rep in curve:
            f1 = "undefined" if rep.f1 is None else f"{rep.f1:.3f}"
            print(f"  iteration {it}: f1 {f1}")
    return 0


def cmd_classify(args):
    from .pipeline import build_examples, select_with_checkpoint
    from .preprocess import RenderSpec
    from .store import LABEL_SINGLE, LabelRecord, Store, StoreError

    store = Store(_store_root(args))
    if not store.entries:
        raise CliError(f"no dataset at {_store_root(args)}")
    try:
        manifest = store.read_family_manifest(args.family)
        render = RenderSpec(**manifest["config"]["render"])
        input_size = manifest["config"]["detector"]["input_size"]
    except StoreError:
        render = RenderSpec()
        input_size = 128
    examples = build_examples(store, store.ids, render, input_size, labels={})
    selection = select_with_checkpoint(store, args.family, args.iteration,
                                       examples, args.threshold)
    author = f"model:{args.family}:{args.iteration}"
    for pid in store.ids:
        store.append_label(LabelRecord(
            pattern_id=pid,
            label=LABEL_SINGLE if pid in selection.ids else "non_single",
            author=author,
        ))
    name = args.name or f"{args.family}-i{args.iteration}-t{args.threshold:g}"
    store.write_selection(name, selection)
    print(f"selection {name}: {len(selection.ids)} single hits "
          f"of {len(store.ids)}")
    return 0


def cmd_stable_select(args):
    from .pipeline import build_examples, stable_select
    from .preprocess import RenderSpec
    from .store import Store, StoreError

    store = Store(_store_root(args))
    try:
        manifest = store.read_family_manifest(args.family)
        render = RenderSpec(**manifest["config"]["render"])
        input_size = manifest["config"]["detector"]["input_size"]
    except StoreError:
        render = RenderSpec()
        input_size = 128
    examples = build_examples(store, store.ids, render, input_size, labels={})
    stable = stable_select(store, args.family, args.start, examples,
                           args.threshold, n_checkpoints=args.count)
    store.write_selection(args.name, stable.final)
    print(f"checkpoints {stable.iterations}: counts {stable.counts} "
          f"(population std {stable.counts_std:.1f})")
    print(f"selection {args.name}: {len(stable.final.ids)} stable single hits")
    return 0


def cmd_evaluate(args):
    from .pipeline import evaluate_selection
    from .store import Store

    store = Store(_store_root(args))
    sel = store.read_selection(args.selection)
    ref = store.read_selection(args.reference)
    report = evaluate_selection(sel, ref, set(store.ids))
    if args.json:
        print(json.dumps(report.to_machine_dict(), indent=1, sort_keys=True))
    else:
        human = report.to_human_dict()
        cols = ("predicted_count", "intersection", "iou", "accuracy",
                "precision", "recall")
        names = ("single hits", "intersection", "IoU", "accuracy",
                 "precision", "recall")
        print("  ".join(f"{n}: {human[c]}" for n, c in zip(names, cols)))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    ui = Path(args.ui) if args.ui else Path("frontend/dist")
    app = create_app(_store_root(args), ui_dir=ui if ui.is_dir() else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "classify": cmd_classify,
    "stable-select": cmd_stable_select,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv, file_values = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        args = _merge_config(parser, args, file_values, argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        from .store import StoreError

        if isinstance(exc, (ValueError, KeyError, StoreError)):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
