#!/usr/bin/env python3
"""Render a handful of simulated patterns in all four representations.

Useful for eyeballing what the classifier actually sees: singles are
smooth bullseyes, multi-particle scenes carry interference fringes,
droplets collapse to a bright core, blanks are noise speckle.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from spihits.patterns import DetectorGeometry
from spihits.preprocess import RenderSpec, rasterize, to_png_bytes
from spihits.simulator import (
    SimConfig,
    plan_dataset,
    render_pattern,
)

SPECS = [RenderSpec(colormap=c, scale=s)
         for c in ("jet", "grayscale") for s in ("linear", "log")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/gallery")
    ap.add_argument("--per-kind", type=int, default=2)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    geometry = DetectorGeometry()
    config = SimConfig(n_single=args.per_kind, n_negative=3 * args.per_kind,
                       seed=args.seed)

    for i, frame in enumerate(plan_dataset(config, geometry)):
        rng = np.random.default_rng(config.seed ^ i)
        pattern = render_pattern(frame.scene, geometry, config, rng,
                                 pattern_id=frame.id)
        for spec in SPECS:
            name = f"{frame.kind}-{frame.id}-{spec.tag}.png"
            (out / name).write_bytes(to_png_bytes(rasterize(pattern, spec)))
        print(f"{frame.id}: {frame.kind}"
              + (f" d={frame.true_diameter_nm:.0f} nm" if frame.true_diameter_nm
                 else ""))
    print(f"wrote {4 * len(plan_dataset(config, geometry))} images to {out}")


if __name__ == "__main__":
    main()
