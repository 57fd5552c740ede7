#!/usr/bin/env python3
"""Write a synthetic portrait, its landmarks and a styled exemplar collection."""

import argparse

from facestyle.synthetic import write_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--width", type=int, default=1000)
    ap.add_argument("--height", type=int, default=1320)
    ap.add_argument("--exemplars", type=int, default=3)
    ap.add_argument("--self", dest="include_input", action="store_true",
                    help="collection holds only the input itself")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    files = write_fixture(args.out_dir, args.width, args.height, args.exemplars,
                          include_input=args.include_input, seed=args.seed)
    for name, path in files.items():
        print(f"{name:10s} {path}")


if __name__ == "__main__":
    main()
