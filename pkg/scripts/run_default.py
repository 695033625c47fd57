"""Solve the default desk-scale instance and print the headline diagnostics.

Usage: python scripts/run_default.py [OUT_DIR]

Writes the standard run artifacts (manifest.txt, convergence.csv, field
CSVs, diagnostics.csv) to OUT_DIR (default runs/default) and prints the
final gap, feasibility and energy residual.
"""

import sys

from kmfg.cli import cmd_solve, parse_config


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/default"
    config = parse_config(f"run.name = default\nrun.out_dir = {out_dir}\n")
    status = cmd_solve(config)
    with open(f"{out_dir}/convergence.csv") as handle:
        last = handle.read().strip().splitlines()[-1].split(",")
    print(f"wrote {out_dir}")
    print(f"iterations      {last[0]}")
    print(f"duality gap     {float(last[3]):.3e}")
    print(f"feasibility     {float(last[4]):.3e}")
    print(f"energy residual {float(last[5]):.3e}")
    print(f"seconds         {float(last[6]):.1f}")
    return status


if __name__ == "__main__":
    sys.exit(main())
