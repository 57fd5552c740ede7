"""``stylize`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import PipelineConfig, PipelineError, load_config, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stylize",
        description="Transfer the style of a headshot collection onto a face photo.")
    p.add_argument("--input", required=True, help="input photo (PNG/JPEG)")
    p.add_argument("--landmarks", required=True, help="68-point landmark file for the input")
    p.add_argument("--collection", required=True, help="collection manifest")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--scale", type=float, default=None, help="working scale (default 1.0)")
    p.add_argument("--mode", choices=["argmax", "mmse"], default=None)
    p.add_argument("--refine", choices=["off", "blockmatch"], default=None)
    p.add_argument("--dump-dir", default=None, help="write intermediate diagnostics here")
    p.add_argument("--matte", default=None, help="foreground matte (1-channel image)")
    p.add_argument("--background", default=None, help="replacement background image")
    p.add_argument("--config", default=None, help="key = value config overrides")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else PipelineConfig()
        overrides = {}
        if args.scale is not None:
            overrides["working_scale"] = args.scale
        if args.mode is not None:
            overrides["selection_mode"] = args.mode
        if args.refine is not None:
            overrides["refine"] = args.refine
        if args.dump_dir is not None:
            overrides["dump_intermediate"] = True
        try:
            config = config.replace(**overrides)
        except ValueError as exc:
            raise PipelineError("config", str(exc)) from exc
        if (args.matte is None) != (args.background is None):
            raise PipelineError("config", "--matte and --background must be given together")
        result = run_pipeline(args.input, args.landmarks, args.collection, config,
                              out_path=args.out, matte_path=args.matte,
                              background_path=args.background, dump_dir=args.dump_dir)
    except PipelineError as exc:
        print(f"stylize: {exc}", file=sys.stderr)
        return 2
    r = result.report
    print(f"wrote {args.out} ({r['width']}x{r['height']}, {r['exemplars']} exemplars, "
          f"bp {r['bp_iterations']} iters, labels {r['label_histogram']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
