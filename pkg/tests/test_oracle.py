import numpy as np
import pytest

from kmfg.grid import ConfigError, build_grid
from kmfg.model import ModelSpec
from kmfg.oracle import OracleConfig, oracle_prox, oracle_solve
from kmfg.solver import SolverConfig, evaluate_B, pdhg_solve, prox_perspective


def test_oracle_prox_negative_input_origin():
    model = ModelSpec()
    m, w = oracle_prox(model, -2.0, np.zeros(1), 0.5)
    assert m == 0.0
    assert np.all(w == 0.0)


def test_oracle_prox_quadratic_closed_form():
    model = ModelSpec(c_F=2.0, C_H=0.5)
    tau = 0.3
    for mt in (0.5, 1.0, 4.0):
        m, w = oracle_prox(model, mt, np.zeros(1), tau)
        want = max(0.0, (mt - tau * model.C_H) / (1.0 + tau * model.c_F))
        assert m == pytest.approx(want, abs=1e-6)
        assert np.max(np.abs(w)) <= 1e-8


def test_oracle_prox_matches_fast_prox_randomized():
    model = ModelSpec(c_F=0.8, C_H=0.1)
    rng = np.random.default_rng(5)
    for _ in range(12):
        mt = rng.uniform(-0.5, 3.0)
        wt = rng.uniform(-2.0, 2.0, size=1)
        tau = rng.uniform(0.05, 1.5)
        m_ref, w_ref = oracle_prox(model, mt, wt, tau)
        m, w = prox_perspective(mt, wt, tau, model)
        assert m == pytest.approx(m_ref, abs=1e-7)
        assert np.allclose(w, w_ref, atol=1e-7)


def test_oracle_rejects_large_grids():
    g = build_grid(1, 32, 32, 32, 1.0, 2.0)
    with pytest.raises(ConfigError):
        oracle_solve(ModelSpec(), g, OracleConfig(max_cells=4096))


def test_oracle_zero_coupling_value_small():
    # on this coarse grid the streaming density dips negative, so genuine
    # kinetic cost is needed to stay in the cone; the value is positive
    g = build_grid(1, 4, 4, 4, 1.0, 2.0)
    model = ModelSpec(c_F=0.0, c_G=0.0, C_H=0.0)
    flow, b_val = oracle_solve(model, g)
    assert np.isfinite(b_val)
    assert b_val >= 0.0


def test_oracle_matches_pdhg_small_grid():
    # nv=8 keeps six interior velocity layers, so the flux is genuinely active
    g = build_grid(1, 4, 8, 4, 1.0, 2.0)
    model = ModelSpec()
    flow_ref, b_ref = oracle_solve(model, g)
    cfg = SolverConfig(max_iter=20_000, tol_gap=1e-6, tol_feas=1e-6,
                       step_ratio=128.0, check_every=100)
    flow, value, rec = pdhg_solve(model, g, cfg)
    b_val = evaluate_B(flow, model)
    assert abs(b_val - b_ref) <= 1e-3 * (1.0 + abs(b_ref))
    err = np.abs(flow.m.values - flow_ref.m.values).sum() * g.cell_volume
    assert err <= 1e-2
