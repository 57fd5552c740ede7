#!/usr/bin/env python3
"""Run every acceptance check and print one PASS/FAIL line each."""

import runpy
from pathlib import Path

if __name__ == "__main__":
    runpy.run_path(str(Path(__file__).resolve().parents[1] / "tests" / "test_acceptance.py"),
                   run_name="__main__")
