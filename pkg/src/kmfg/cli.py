"""Configuration parsing, run orchestration and bit-stable CSV artifacts.

Config files are UTF-8 text in a flat `key = value` format, one pair per
line, `#` comments allowed.  Keys live in a single dotted namespace
(grid.*, model.*, m0.*, solver.*, probe.*, oracle.*, run.*); unknown
keys are rejected with the line and column of the offense.  Every float
is written back with 17 significant digits, so configs and CSVs
round-trip parse -> print -> parse exactly.

Artifacts of a run directory:

    manifest.txt       resolved config (same grammar) + version comments
    convergence.csv    iter,primal,dual,gap,feas,energy_residual,seconds
    fields_m.csv       t,x...,v...,value   (row order: time, x-index, v-index)
    fields_u.csv       same schema, value-function nodes
    fields_w<a>.csv    same schema per velocity component, interval times
    diagnostics.csv    name,param,value

All files are written to a temporary name in the target directory and
renamed into place, so a failed run never leaves partial CSVs.  Exit
codes: 0 success, 1 numerical failure, 2 usage or config error.
"""

from __future__ import annotations

import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from kmfg.grid import ConfigError, GridSpec, ScalarField, VectorField, build_grid
from kmfg.model import M0Spec, ModelSpec, build_initial_density
from kmfg.oracle import OracleConfig, oracle_solve
from kmfg.solver import (
    FlowState,
    SolverConfig,
    SolverError,
    ValueState,
    evaluate_B,
    pdhg_solve,
    recover_value_state,
)

__version__ = "1.0.0"


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def _parse_float(s: str) -> float:
    return float(s)


def _parse_int(s: str) -> int:
    return int(s, 10)


def _parse_str(s: str) -> str:
    return s


def _parse_floats(s: str) -> tuple:
    if s == "auto":
        return "auto"
    return tuple(float(p) for p in s.replace(",", " ").split())


def _fmt_floats(v) -> str:
    if v == "auto":
        return "auto"
    return ", ".join(_fmt_float(x) for x in v)


def _parse_float_or_auto(s: str):
    return "auto" if s == "auto" else float(s)


def _fmt_float_or_auto(v) -> str:
    return "auto" if v == "auto" else _fmt_float(v)


def _parse_centers(s: str) -> tuple:
    """Semicolon-separated bump centers, each a comma-separated d-tuple."""
    out = []
    for part in s.split(";"):
        part = part.strip()
        if part:
            out.append(tuple(float(p) for p in part.replace(",", " ").split()))
    return tuple(out)


def _fmt_centers(v) -> str:
    return "; ".join(", ".join(_fmt_float(x) for x in c) for c in v)


# key -> (parse, format, default)
_SCHEMA = {
    "run.name": (_parse_str, str, "run"),
    "run.out_dir": (_parse_str, str, "out"),
    "run.seed": (_parse_int, str, 0),
    "grid.d": (_parse_int, str, 1),
    "grid.nx": (_parse_int, str, 16),
    "grid.nv": (_parse_int, str, 16),
    "grid.nt": (_parse_int, str, 16),
    "grid.T": (_parse_float, _fmt_float, 1.0),
    "grid.v_max": (_parse_float, _fmt_float, 2.0),
    "model.q": (_parse_float, _fmt_float, 2.0),
    "model.s": (_parse_float, _fmt_float, 2.0),
    "model.r": (_parse_float, _fmt_float, 2.0),
    "model.c_F": (_parse_float, _fmt_float, 1.0),
    "model.c_G": (_parse_float, _fmt_float, 1.0),
    "model.c_H": (_parse_float, _fmt_float, 1.0),
    "model.C_H": (_parse_float, _fmt_float, 0.0),
    "m0.x_centers": (_parse_centers, _fmt_centers, ((0.5,),)),
    "m0.x_width": (_parse_float, _fmt_float, 0.12),
    "m0.v_center": (_parse_floats, _fmt_floats, (0.0,)),
    "m0.v_sigma": (_parse_float, _fmt_float, 0.3),
    "solver.init": (_parse_str, str, "streaming"),
    "solver.tau": (_parse_float_or_auto, _fmt_float_or_auto, "auto"),
    "solver.sigma": (_parse_float_or_auto, _fmt_float_or_auto, "auto"),
    "solver.theta": (_parse_float, _fmt_float, 1.0),
    "solver.step_ratio": (_parse_float, _fmt_float, 256.0),
    "solver.max_iter": (_parse_int, str, 20000),
    "solver.tol_gap": (_parse_float, _fmt_float, 1e-4),
    "solver.tol_feas": (_parse_float, _fmt_float, 1e-5),
    "solver.prox_tol": (_parse_float, _fmt_float, 1e-12),
    "solver.check_every": (_parse_int, str, 100),
    "probe.deltas": (_parse_floats, _fmt_floats, "auto"),
    "probe.t0": (_parse_float_or_auto, _fmt_float_or_auto, "auto"),
    "probe.eps_ladder": (_parse_floats, _fmt_floats, "auto"),
    "probe.delta_x_ladder": (_parse_floats, _fmt_floats, "auto"),
    "oracle.max_cells": (_parse_int, str, 4096),
}


@dataclass
class RunConfig:
    """Resolved flat configuration; round-trips losslessly through the
    `key = value` file format."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, (_, _, default) in _SCHEMA.items():
            self.values.setdefault(key, default)
        unknown = set(self.values) - set(_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")

    def __getitem__(self, key: str):
        return self.values[key]

    def grid(self) -> GridSpec:
        v = self.values
        return build_grid(v["grid.d"], v["grid.nx"], v["grid.nv"], v["grid.nt"],
                          v["grid.T"], v["grid.v_max"])

    def model(self) -> ModelSpec:
        v = self.values
        m0 = M0Spec(x_centers=v["m0.x_centers"], x_width=v["m0.x_width"],
                    v_center=v["m0.v_center"], v_sigma=v["m0.v_sigma"])
        return ModelSpec(q=v["model.q"], s=v["model.s"], r=v["model.r"],
                         c_F=v["model.c_F"], c_G=v["model.c_G"],
                         c_H=v["model.c_H"], C_H=v["model.C_H"], m0_spec=m0)

    def solver(self) -> SolverConfig:
        v = self.values
        tau = None if v["solver.tau"] == "auto" else v["solver.tau"]
        sigma = None if v["solver.sigma"] == "auto" else v["solver.sigma"]
        return SolverConfig(tau=tau, sigma=sigma, theta=v["solver.theta"],
                            step_ratio=v["solver.step_ratio"],
                            max_iter=v["solver.max_iter"],
                            tol_gap=v["solver.tol_gap"],
                            tol_feas=v["solver.tol_feas"],
                            prox_tol=v["solver.prox_tol"],
                            check_every=v["solver.check_every"])


def parse_config(text: str) -> RunConfig:
    """Parse the flat `key = value` grammar; errors carry line and column
    (1-based) of the offending token."""
    values = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError(f"line {ln}, col {col}: expected `key = value`")
        key_part, val_part = line.split("=", 1)
        key = key_part.strip()
        key_col = raw.index(key) + 1 if key else 1
        if key not in _SCHEMA:
            raise ConfigError(f"line {ln}, col {key_col}: unknown key {key!r}")
        val = val_part.strip()
        val_col = raw.index("=") + 2 + (len(val_part) - len(val_part.lstrip()))
        if not val:
            raise ConfigError(f"line {ln}, col {val_col}: empty value for {key}")
        parse, _, _ = _SCHEMA[key]
        try:
            values[key] = parse(val)
        except ValueError:
            raise ConfigError(
                f"line {ln}, col {val_col}: bad value {val!r} for {key}"
            ) from None
    return RunConfig(values=values)


def format_config(config: RunConfig) -> str:
    lines = []
    for key in _SCHEMA:
        _, fmt, _ = _SCHEMA[key]
        lines.append(f"{key} = {fmt(config.values[key])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# atomic CSV artifacts
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _field_csv(grid: GridSpec, values: np.ndarray, times: np.ndarray) -> str:
    coord_names = [f"x{a}" for a in range(grid.d)] + [f"v{a}" for a in range(grid.d)]
    if grid.d == 1:
        coord_names = ["x", "v"]
    lines = ["t," + ",".join(coord_names) + ",value"]
    coords = [grid.x_nodes] * grid.d + [grid.v_nodes] * grid.d
    n_slices = values.shape[0]
    flat = values.reshape(n_slices, -1)
    idx_grid = np.stack(
        np.meshgrid(*[np.arange(grid.nx)] * grid.d + [np.arange(grid.nv)] * grid.d,
                    indexing="ij"),
        axis=-1,
    ).reshape(-1, 2 * grid.d)
    coord_strs = [
        [_fmt_float(axis_coords[i]) for i in range(len(axis_coords))]
        for axis_coords in coords
    ]
    for k in range(n_slices):
        t_str = _fmt_float(times[k])
        row_vals = flat[k]
        for j, multi in enumerate(idx_grid):
            cells = [t_str]
            for a in range(2 * grid.d):
                cells.append(coord_strs[a][multi[a]])
            cells.append(_fmt_float(row_vals[j]))
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _convergence_csv(record) -> str:
    lines = ["iter,primal,dual,gap,feas,energy_residual,seconds"]
    for it, primal, dual, gap, feas, energy, secs in record.rows():
        lines.append(
            f"{it},{_fmt_float(primal)},{_fmt_float(dual)},{_fmt_float(gap)},"
            f"{_fmt_float(feas)},{_fmt_float(energy)},{_fmt_float(secs)}"
        )
    return "\n".join(lines) + "\n"


def _diagnostics_csv(rows) -> str:
    lines = ["name,param,value"]
    for name, param, value in rows:
        lines.append(f"{name},{param},{_fmt_float(value)}")
    return "\n".join(lines) + "\n"


def write_fields(out_dir: str, grid: GridSpec, flow: FlowState, value: ValueState):
    t_nodes = grid.t_nodes
    _atomic_write(os.path.join(out_dir, "fields_m.csv"),
                  _field_csv(grid, flow.m.values, t_nodes))
    _atomic_write(os.path.join(out_dir, "fields_u.csv"),
                  _field_csv(grid, value.u.values, t_nodes))
    for a in range(grid.d):
        _atomic_write(os.path.join(out_dir, f"fields_w{a}.csv"),
                      _field_csv(grid, flow.w.values[a], t_nodes[:-1]))


def read_field_csv(path: str, grid: GridSpec, kind: str) -> np.ndarray:
    """Inverse of _field_csv; trusts the documented row order after
    validating the header and row count."""
    with open(path, "r") as handle:
        header = handle.readline().strip().split(",")
        expected_cols = 2 + 2 * grid.d
        if len(header) != expected_cols or header[0] != "t" or header[-1] != "value":
            raise ConfigError(f"{path}: unexpected header {header}")
        data = [line.rsplit(",", 1)[-1] for line in handle if line.strip()]
    n_slices = grid.n_slices(kind)
    per_slice = int(np.prod(grid.slice_shape))
    if len(data) != n_slices * per_slice:
        raise ConfigError(
            f"{path}: {len(data)} rows, expected {n_slices * per_slice}"
        )
    return np.array(data, dtype=float).reshape((n_slices,) + grid.slice_shape)


# ---------------------------------------------------------------------------
# diagnostics assembly
# ---------------------------------------------------------------------------

def _diagnostic_rows(grid: GridSpec, model: ModelSpec, flow: FlowState,
                     value: ValueState, record=None) -> list:
    from kmfg.diagnostics import (
        coupling_residuals,
        energy_equality_residual,
        fenchel_young_residuals,
    )
    from kmfg.solver import evaluate_A
    from kmfg.transport import mass_per_slice

    rows = []
    b_val = evaluate_B(flow, model)
    a_val = evaluate_A(value, model, flow.m.values[0])
    rows.append(("primal_objective", "", b_val))
    rows.append(("dual_objective", "", -a_val))
    rows.append(("duality_gap", "", (a_val + b_val) / max(1.0, abs(b_val))))
    masses = mass_per_slice(flow.m)
    rows.append(("mass_drift", "", float(np.max(np.abs(masses - masses[0])))))
    rows.append(("energy_equality", "", energy_equality_residual(flow, value, model)))
    fy = fenchel_young_residuals(flow, value, model)
    rows.append(("fenchel_young_F", "mean", fy["mean_F"]))
    rows.append(("fenchel_young_G", "mean", fy["mean_G"]))
    cr = coupling_residuals(flow, value, model)
    rows.append(("coupling_beta_f", "", cr["beta_f"]))
    rows.append(("coupling_betaT_g", "", cr["betaT_g"]))
    rows.append(("coupling_w_drift", "", cr["w_coupling"]))
    if record is not None:
        rows.append(("iterations", "", float(record.iters[-1])))
        rows.append(("final_feas", "", record.feas[-1]))
    return rows


def _sweep_rows(grid: GridSpec, model: ModelSpec, flow: FlowState,
                value: ValueState, config: RunConfig) -> tuple:
    from kmfg.diagnostics import (
        CommutatorProbe,
        RegularityProbe,
        commutator_decay,
        regularity_quotient,
    )

    deltas = config["probe.deltas"]
    deltas = None if deltas == "auto" else deltas
    t0 = config["probe.t0"]
    t0 = None if t0 == "auto" else t0

    reg_lines = ["probe,delta,lhs,ratio"]
    diag_rows = []
    for probe in (RegularityProbe.kinetic(grid, deltas=deltas, t0=t0),
                  RegularityProbe.spatial(grid, deltas=deltas, t0=t0)):
        out = regularity_quotient(flow, value, probe, model)
        for d, lhs, ratio in zip(out["deltas"], out["lhs"], out["ratio"]):
            reg_lines.append(
                f"{probe.name},{_fmt_float(d)},{_fmt_float(lhs)},{_fmt_float(ratio)}"
            )
        diag_rows.append((f"regularity_slope_{probe.name}", "", out["slope"]))

    eps_ladder = config["probe.eps_ladder"]
    dx_ladder = config["probe.delta_x_ladder"]
    default_probe = CommutatorProbe.default(grid)
    probe = CommutatorProbe(
        eps_ladder=default_probe.eps_ladder if eps_ladder == "auto" else eps_ladder,
        delta_x_ladder=default_probe.delta_x_ladder if dx_ladder == "auto" else dx_ladder,
    )
    out = commutator_decay(flow.m, probe)
    com_lines = ["eps,delta_x,l1"]
    for eps, dx, l1 in out["rows"]:
        com_lines.append(f"{_fmt_float(eps)},{_fmt_float(dx)},{_fmt_float(l1)}")
    diag_rows.append(("commutator_eps_slope", "", out["eps_slope"]))
    diag_rows.append(("commutator_delta_x_slope", "", out["delta_x_slope"]))
    diag_rows.append(("commutator_identity", "", out["identity_agreement"]))
    return "\n".join(reg_lines) + "\n", "\n".join(com_lines) + "\n", diag_rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _write_manifest(out_dir: str, config: RunConfig):
    body = (
        f"# kmfg {__version__}\n"
        f"# numpy {np.__version__}\n"
        + format_config(config)
    )
    _atomic_write(os.path.join(out_dir, "manifest.txt"), body)


def _solve_from_config(config: RunConfig):
    grid = config.grid()
    model = config.model()
    solver_config = config.solver()
    init = config["solver.init"]
    return grid, model, pdhg_solve(model, grid, solver_config, init=init)


def cmd_solve(config: RunConfig, sweep: bool = False) -> int:
    grid, model, (flow, value, record) = _solve_from_config(config)
    out_dir = config["run.out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    _write_manifest(out_dir, config)
    _atomic_write(os.path.join(out_dir, "convergence.csv"), _convergence_csv(record))
    write_fields(out_dir, grid, flow, value)
    rows = _diagnostic_rows(grid, model, flow, value, record)
    if sweep:
        reg_csv, com_csv, extra = _sweep_rows(grid, model, flow, value, config)
        _atomic_write(os.path.join(out_dir, "sweep_regularity.csv"), reg_csv)
        _atomic_write(os.path.join(out_dir, "sweep_commutator.csv"), com_csv)
        rows.extend(extra)
    _atomic_write(os.path.join(out_dir, "diagnostics.csv"), _diagnostics_csv(rows))
    return 0


def load_run(run_dir: str):
    """Rehydrate (config, grid, model, flow, value) from a run directory."""
    manifest = os.path.join(run_dir, "manifest.txt")
    if not os.path.isfile(manifest):
        raise ConfigError(f"{run_dir}: missing manifest.txt")
    with open(manifest, "r") as handle:
        config = parse_config(handle.read())
    grid = config.grid()
    model = config.model()
    m = read_field_csv(os.path.join(run_dir, "fields_m.csv"), grid, "node")
    u = read_field_csv(os.path.join(run_dir, "fields_u.csv"), grid, "node")
    w = np.stack([
        read_field_csv(os.path.join(run_dir, f"fields_w{a}.csv"), grid, "interval")
        for a in range(grid.d)
    ])
    flow = FlowState(m=ScalarField(grid, "node", m), w=VectorField(grid, w))
    value = recover_value_state(ScalarField(grid, "node", u), model)
    return config, grid, model, flow, value


def cmd_verify(run_dir: str) -> int:
    config, grid, model, flow, value = load_run(run_dir)
    rows = _diagnostic_rows(grid, model, flow, value)
    _atomic_write(os.path.join(run_dir, "diagnostics.csv"), _diagnostics_csv(rows))
    return 0


def cmd_oracle(config: RunConfig) -> int:
    grid = config.grid()
    model = config.model()
    oracle_config = OracleConfig(max_cells=config["oracle.max_cells"])
    flow, b_val = oracle_solve(model, grid, oracle_config)
    out_dir = config["run.out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    _write_manifest(out_dir, config)
    _atomic_write(os.path.join(out_dir, "fields_m.csv"),
                  _field_csv(grid, flow.m.values, grid.t_nodes))
    for a in range(grid.d):
        _atomic_write(os.path.join(out_dir, f"fields_w{a}.csv"),
                      _field_csv(grid, flow.w.values[a], grid.t_nodes[:-1]))
    _atomic_write(os.path.join(out_dir, "diagnostics.csv"),
                  _diagnostics_csv([("oracle_objective", "", b_val)]))
    return 0


def cmd_sweep(config: RunConfig) -> int:
    return cmd_solve(config, sweep=True)


def _load_config_file(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


USAGE = """usage: kmfg <command> <argument>

commands:
  solve  CONFIG   solve the density problem, write run artifacts
  verify RUN_DIR  recompute diagnostics.csv from stored fields
  oracle CONFIG   small-grid reference solve
  sweep  CONFIG   solve, then run the probe ladders
"""


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if len(argv) != 2 or argv[0] not in ("solve", "verify", "oracle", "sweep"):
        sys.stderr.write(USAGE)
        return 2
    command, target = argv
    try:
        if command == "verify":
            return cmd_verify(target)
        config = _load_config_file(target)
        if command == "solve":
            return cmd_solve(config)
        if command == "oracle":
            return cmd_oracle(config)
        return cmd_sweep(config)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (SolverError, RuntimeError, FloatingPointError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
