"""Slow, independent brute-force solvers used to mint reference values.

oracle_solve poses the discretized density problem directly as a conic
program (the r=2 perspective is quad_over_lin, couplings are power atoms)
and hands it to an interior-point solver through cvxpy.  It shares no
code path with the primal-dual iteration beyond the linear operator
definition, so agreement of the two objectives is a genuine cross-check
of the duality certificate.

oracle_prox brute-forces the joint (m, w) proximal problem by dense grid
search plus Nelder-Mead refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from kmfg.grid import ConfigError, GridSpec, ScalarField, VectorField, boundary_mask
from kmfg.model import InitialDensity, ModelSpec, build_initial_density
from kmfg.solver import FlowState, evaluate_B, perspective_cost
from kmfg.transport import apply_K


@dataclass(frozen=True)
class OracleConfig:
    max_cells: int = 4096
    budget: int = 1_000_000
    tol: float = 1e-8


def _check_size(grid: GridSpec, config: OracleConfig):
    cells = grid.nx**grid.d * grid.nv**grid.d * grid.nt
    if cells > config.max_cells:
        raise ConfigError(
            f"oracle grid has {cells} cells, above the cap {config.max_cells}"
        )


def oracle_solve(model: ModelSpec, grid: GridSpec, config: OracleConfig | None = None,
                 m0: InitialDensity | None = None):
    """High-accuracy solve of the density problem on a capped grid.

    Returns (FlowState, objective value).
    """
    import cvxpy as cp

    config = config or OracleConfig()
    _check_size(grid, config)
    if m0 is None:
        m0 = build_initial_density(grid, model.m0_spec)
    m0v = m0.values
    interior = ~boundary_mask(grid)
    S = int(np.prod(grid.slice_shape))
    nt = grid.nt
    dtv = grid.dt * grid.cell_volume
    vol = grid.cell_volume

    int_idx = np.flatnonzero(interior.ravel())
    n_int = len(int_idx)
    mf = cp.Variable((nt, S), nonneg=True)
    w = cp.Variable((grid.d, nt, n_int)) if n_int else None

    # continuity constraints, assembled from the same dense stencil matrices
    # the residual operator uses
    Dx = _dense_x_transport(grid)
    Dv = [_dense_v_divergence(grid, a) for a in range(grid.d)]
    cons = []
    m_prev = m0v.ravel()
    for k in range(nt):
        expr = (mf[k] - (m_prev if k == 0 else mf[k - 1])) / grid.dt + Dx @ mf[k]
        if n_int:
            for a in range(grid.d):
                expr = expr + (Dv[a][:, int_idx] @ w[a, k])
        cons.append(expr == 0)

    cF = np.broadcast_to(np.asarray(model.c_F, float), grid.slice_shape).ravel()
    cG = np.broadcast_to(np.asarray(model.c_G, float), grid.slice_shape).ravel()
    obj = 0
    for k in range(nt):
        mk_full = m0v.ravel() if k == 0 else mf[k - 1]
        if k > 0 and np.any(cF > 0):
            obj = obj + dtv * cp.sum(cp.multiply(cF, cp.power(mf[k - 1], model.q))) / model.q
        if n_int:
            # m L(-w/m) = c_L |w|^2/(2m) + C_H m for r = 2
            stack = cp.vstack([w[a, k] for a in range(grid.d)])
            if k == 0:
                pers = sum(
                    cp.quad_over_lin(stack[:, j], float(m0v.ravel()[int_idx[j]]))
                    for j in range(n_int)
                )
            else:
                mk_int = mf[k - 1][int_idx]
                pers = sum(
                    cp.quad_over_lin(stack[:, j], mk_int[j]) for j in range(n_int)
                )
            obj = obj + dtv * model.c_L / 2.0 * pers
        if model.C_H > 0:
            obj = obj + dtv * model.C_H * cp.sum(mk_full)
    if np.any(cG > 0):
        obj = obj + vol * cp.sum(cp.multiply(cG, cp.power(mf[nt - 1], model.s))) / model.s

    prob = cp.Problem(cp.Minimize(obj), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except (cp.error.SolverError, KeyError):
        prob.solve()
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed with status {prob.status}")

    m_full = np.empty((nt + 1,) + grid.slice_shape)
    m_full[0] = m0v
    m_full[1:] = np.clip(mf.value, 0.0, None).reshape((nt,) + grid.slice_shape)
    w_full = np.zeros((grid.d, nt) + grid.slice_shape)
    if n_int:
        wv = w.value
        for a in range(grid.d):
            flat = np.zeros((nt, S))
            flat[:, int_idx] = wv[a]
            w_full[a] = flat.reshape((nt,) + grid.slice_shape)
        # clipping m to the cone can strand solver-noise flux on empty
        # cells, where the perspective cost is infinite by convention
        for k in range(nt):
            w_full[:, k] *= m_full[k] > 1e-12
    flow = FlowState(m=ScalarField(grid, "node", m_full), w=VectorField(grid, w_full))
    return flow, evaluate_B(flow, model)


def _dense_x_transport(grid: GridSpec) -> np.ndarray:
    """Dense matrix of the slice operator v . D_x^c (flattened cells)."""
    S = int(np.prod(grid.slice_shape))
    from kmfg.transport import x_transport

    mat = np.zeros((S, S))
    basis = np.zeros(grid.slice_shape)
    for j in range(S):
        basis.ravel()[j] = 1.0
        mat[:, j] = x_transport(grid, basis).ravel()
        basis.ravel()[j] = 0.0
    return mat


def _dense_v_divergence(grid: GridSpec, a: int) -> np.ndarray:
    from kmfg.transport import _central_diff_zero

    S = int(np.prod(grid.slice_shape))
    mat = np.zeros((S, S))
    basis = np.zeros(grid.slice_shape)
    for j in range(S):
        basis.ravel()[j] = 1.0
        mat[:, j] = _central_diff_zero(grid, basis, grid.v_axis(a)).ravel()
        basis.ravel()[j] = 0.0
    return mat


def oracle_prox(model: ModelSpec, m_tilde: float, w_tilde, tau: float) -> tuple:
    """Brute-force joint prox of F(m) + m L(-w/m) on one cell: dense grid
    search in (m, |w| direction fixed) followed by Nelder-Mead."""
    w_tilde = np.atleast_1d(np.asarray(w_tilde, dtype=float))
    d = len(w_tilde)

    def objective(z):
        m = z[0]
        w = z[1:]
        if m < 0:
            return np.inf
        if m == 0:
            pers = 0.0 if np.all(w == 0) else np.inf
        else:
            pers = float(perspective_cost(model, np.array([m]), w.reshape(d, 1))[0])
        val = float(np.asarray(model.F_val(m))) + pers
        return tau * val + 0.5 * ((m - m_tilde) ** 2 + ((w - w_tilde) ** 2).sum())

    # dense scan over m with w on the segment [0, w_tilde] scaled by m
    best = (np.inf, np.zeros(d + 1))
    for m in np.linspace(0.0, max(abs(m_tilde), 1.0) * 3.0 + 1.0, 400):
        for lam in np.linspace(0.0, 1.0, 40):
            z = np.concatenate([[m], lam * w_tilde])
            val = objective(z)
            if val < best[0]:
                best = (val, z)
    z0 = best[1]
    if z0[0] > 0:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        if res.fun <= best[0]:
            z0 = res.x
    m = max(z0[0], 0.0)
    return m, (z0[1:] if m > 0 else np.zeros(d))
