#!/usr/bin/env python3
"""Desk-scale end-to-end run: simulate, train, validate, stable-select.

Writes everything into a store directory and prints a summary table.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spihits.detector import DetectorConfig
from spihits.metrics import SelectionSet
from spihits.patterns import DetectorGeometry
from spihits.pipeline import (
    TrainConfig,
    build_examples,
    detect_saturation,
    evaluate_selection,
    stable_select,
    train,
    validate_family,
)
from spihits.preprocess import RenderSpec
from spihits.simulator import SimConfig, make_dataset
from spihits.store import Store


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk_scale")
    ap.add_argument("--iterations", type=int, default=2500)
    ap.add_argument("--train-singles", type=int, default=165)
    ap.add_argument("--train-negatives", type=int, default=390)
    ap.add_argument("--val-singles", type=int, default=53)
    ap.add_argument("--val-negatives", type=int, default=283)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sim-seed", type=int, default=1234)
    ap.add_argument("--colormap", default="jet", choices=("jet", "grayscale"))
    ap.add_argument("--scale", default="linear", choices=("linear", "log"))
    ap.add_argument("--threshold", type=float, default=0.24)
    args = ap.parse_args()

    geometry = DetectorGeometry()
    root = Path(args.out)
    store = Store(root, geometry=geometry)

    t0 = time.time()
    if not store.entries:
        make_dataset(
            SimConfig(n_single=args.train_singles,
                      n_negative=args.train_negatives, seed=args.sim_seed),
            geometry, root, id_prefix="trn", split="train",
        )
        make_dataset(
            SimConfig(n_single=args.val_singles,
                      n_negative=args.val_negatives, seed=args.sim_seed + 1),
            geometry, root, id_prefix="val", split="validation",
        )
        store = Store(root)
    print(f"dataset: {len(store.entries)} patterns ({time.time()-t0:.1f}s)")

    render = RenderSpec(colormap=args.colormap, scale=args.scale)
    config = TrainConfig(
        iterations=args.iterations,
        detector=DetectorConfig.desk_scale(),
        render=render,
        seed=args.seed,
    )

    t0 = time.time()
    train_ids = [pid for pid, e in store.entries.items() if e.split == "train"]
    val_ids = [pid for pid, e in store.entries.items() if e.split == "validation"]
    train_ex = build_examples(store, train_ids, render,
                              config.detector.input_size)
    val_ex = build_examples(store, val_ids, render, config.detector.input_size)
    print(f"rendered {len(train_ex)}+{len(val_ex)} inputs "
          f"({time.time()-t0:.1f}s)")

    t0 = time.time()
    result = train(config, train_ex, store)
    print(f"trained {args.iterations} iterations ({time.time()-t0:.1f}s), "
          f"family {result.family}")
    losses = [v for _, v in result.loss_curve]
    k = min(100, len(losses))
    print(f"loss: first-{k} mean {sum(losses[:k])/k:.4f}  "
          f"last-{k} mean {sum(losses[-k:])/k:.4f}")

    t0 = time.time()
    curve = validate_family(store, result.family, val_ex, args.threshold)
    print(f"validated {len(curve)} checkpoints ({time.time()-t0:.1f}s)")
    for it, rep in curve:
        f1 = "undef" if rep.f1 is None else f"{rep.f1:.3f}"
        print(f"  iter {it:5d}  acc {rep.accuracy:.3f}  f1 {f1}")

    f1_curve = [(it, rep.f1) for it, rep in curve]
    sat = detect_saturation(f1_curve) if len(f1_curve) >= 20 else "n/a (short)"
    print(f"saturation: {sat}")

    cadence = config.checkpoint_every
    start = args.iterations - 4 * cadence
    stable = stable_select(store, result.family, start, val_ex, args.threshold)
    print(f"stable selection over {stable.iterations}: counts {stable.counts} "
          f"std {stable.counts_std:.1f} final {len(stable.final.ids)}")
    store.write_selection("stable", stable.final)

    truth = SelectionSet(
        method="ground-truth", threshold=None,
        ids={pid for pid in val_ids if store.entries[pid].label == "single"},
    )
    store.write_selection("truth-validation", truth)
    rep = evaluate_selection(stable, truth, set(val_ids))
    print("evaluation vs ground truth:", rep.to_human_dict())


if __name__ == "__main__":
    main()
