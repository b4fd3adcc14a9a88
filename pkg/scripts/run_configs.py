#!/usr/bin/env python3
"""Run every shipped config through the CLI and print one status line per run."""
import argparse
import sys
from pathlib import Path

from ratebound.cli import main

# command per config; step_violation is expected to exit with 3
PLAN = [
    ("gaussian_smoke.ini", "simulate", 0),
    ("exponential_rate.ini", "rate", 0),
    ("exponential_simulate.ini", "simulate", 0),
    ("exponential_coverage.ini", "coverage", 0),
    ("lad_rate.ini", "rate", 0),
    ("cp_known.ini", "bound", 0),
    ("cp_known.ini", "simulate", 0),
    ("cp_unknown_sweep.ini", "simulate", 0),
    ("root_n.ini", "bound", 0),
    ("step_violation.ini", "bound", 3),
]


def run(out_root, threads):
    configs = Path(__file__).resolve().parent.parent / "configs"
    bad = 0
    for name, cmd, expect in PLAN:
        out = Path(out_root) / f"{Path(name).stem}_{cmd}"
        code = main([cmd, "--config", str(configs / name), "--out", str(out),
                     "--threads", str(threads)])
        ok = code == expect
        bad += not ok
        print(f"{'ok ' if ok else 'BAD'} {cmd:9s} {name:26s} exit {code} (expected {expect})")
    return 1 if bad else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--threads", type=int, default=4)
    a = ap.parse_args()
    sys.exit(run(a.out, a.threads))
