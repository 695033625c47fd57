"""Cross-check the primal-dual solver against the conic reference solver.

Usage: python scripts/oracle_check.py

Solves the nx = nv = nt = 4 instance both ways and prints the two
objective values and their relative disagreement.  Small grids want
balanced primal/dual steps, hence step_ratio = 1.
"""

import sys

from kmfg.grid import build_grid
from kmfg.model import ModelSpec
from kmfg.oracle import oracle_solve
from kmfg.solver import SolverConfig, evaluate_B, pdhg_solve


def main() -> int:
    grid = build_grid(1, 4, 4, 4, 1.0, 2.0)
    model = ModelSpec()
    flow_ref, b_ref = oracle_solve(model, grid)
    config = SolverConfig(tol_gap=1e-6, tol_feas=1e-6, step_ratio=1.0)
    flow, value, record = pdhg_solve(model, grid, config)
    b_val = evaluate_B(flow, model)
    rel = abs(b_val - b_ref) / (1.0 + abs(b_ref))
    print(f"oracle objective  {b_ref:.9f}")
    print(f"solver objective  {b_val:.9f}  ({record.iters[-1]} iterations)")
    print(f"relative gap      {rel:.3e}")
    return 0 if rel <= 1e-3 else 1


if __name__ == "__main__":
    sys.exit(main())
