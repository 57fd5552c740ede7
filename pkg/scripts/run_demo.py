#!/usr/bin/env python3
"""Generate a synthetic fixture, stylise it and dump every intermediate.

Prints the run report; all images land under ``out_dir``.
"""

import argparse
import logging
from pathlib import Path

from facestyle.pipeline import PipelineConfig, run_pipeline
from facestyle.synthetic import write_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--scale", type=float, default=0.25)
    ap.add_argument("--mode", choices=["argmax", "mmse"], default="argmax")
    ap.add_argument("--refine", choices=["off", "blockmatch"], default="off")
    ap.add_argument("--exemplars", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    files = write_fixture(args.out_dir / "fixture", n_exemplars=args.exemplars, seed=args.seed)
    config = PipelineConfig(working_scale=args.scale, selection_mode=args.mode,
                            refine=args.refine)
    res = run_pipeline(files["input"], files["landmarks"], files["manifest"], config,
                       out_path=args.out_dir / "output.png", dump_dir=args.out_dir / "dump")
    for k, v in res.report.items():
        print(f"{k} = {v}")


if __name__ == "__main__":
    main()
