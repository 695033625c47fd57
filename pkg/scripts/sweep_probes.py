"""Solve the default instance, run the probe ladders, print fitted slopes.

Usage: python scripts/sweep_probes.py [OUT_DIR]

Writes the standard run artifacts plus sweep_regularity.csv and
sweep_commutator.csv to OUT_DIR (default runs/sweep), then echoes the
regularity-quotient slopes and the commutator-decay exponents read back
from diagnostics.csv.
"""

import csv
import sys

from kmfg.cli import cmd_sweep, parse_config


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/sweep"
    config = parse_config(f"run.name = sweep\nrun.out_dir = {out_dir}\n")
    status = cmd_sweep(config)
    with open(f"{out_dir}/diagnostics.csv") as handle:
        rows = list(csv.reader(handle))
    print(f"wrote {out_dir}")
    for name, param, value in rows[1:]:
        if "slope" in name or "exponent" in name:
            label = f"{name} {param}".strip()
            print(f"{label:32s} {float(value):+.3f}")
    return status


if __name__ == "__main__":
    sys.exit(main())
