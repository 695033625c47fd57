"""Chambolle-Pock primal-dual solver for the discrete density problem.

Primal variables: node density m (slice 0 pinned to m0) and interval flux
w.  The objective pairs interval k with the left node,

    B(m, w) = sum_k dt vol [F(m^k) + m^k L(-w^k/m^k)] + sum vol G(m^nt),

so the joint prox splits into prox_perspective on the pairs (m^k, w^k),
k = 1..nt-1, a closed-form w-only prox on interval 0 (m^0 is pinned) and
prox_terminal on m^nt.

The dual multiplier lambda^k of constraint row k is identified with the
value function through u^{k+1} = -lambda^k/(dt vol).  Conjugating the
discrete Lagrangian exactly gives the discrete relaxed dual

    A(u) = sum_{k=1}^{nt-1} dt vol F*(beta^k) + vol sum G*(beta_T)
           + dt vol sum m0 H(D_v u^1) - vol sum u^1 m0 - dt vol sum F(m0)

with beta^k = -(u^{k+1}-u^k)/dt - v.D_x u^k + H(D_v u^{k+1}) and
beta_T = u^nt - dt v.D_x u^nt, the velocity gradient masked to zero on
the flux-free boundary layers.  Weak duality A + B >= 0 then holds
exactly for feasible (m, w), so the recorded gap is a true certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from kmfg.grid import ConfigError, GridSpec, ScalarField, VectorField, boundary_mask
from kmfg.model import InitialDensity, ModelSpec, build_initial_density
from kmfg.transport import apply_K_adjoint, free_streaming, transpose_K, v_gradient, x_transport


class SolverError(RuntimeError):
    """Divergence or prox failure inside the primal-dual loop."""


@dataclass
class FlowState:
    m: ScalarField
    w: VectorField


@dataclass
class ValueState:
    u: ScalarField
    beta: ScalarField
    beta_T: np.ndarray


@dataclass
class SolverConfig:
    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    step_ratio: float = 256.0
    max_iter: int = 20_000
    tol_gap: float = 1e-4
    tol_feas: float = 1e-5
    prox_tol: float = 1e-12
    check_every: int = 100

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ConfigError("solver.tau must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("solver.sigma must be positive")
        if self.step_ratio <= 0:
            raise ConfigError("solver.step_ratio must be positive")
        if self.max_iter < 1 or self.check_every < 1:
            raise ConfigError("solver iteration counts must be positive")


@dataclass
class ConvergenceRecord:
    iters: list = field(default_factory=list)
    primal: list = field(default_factory=list)
    dual: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    feas: list = field(default_factory=list)
    energy_residual: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, it, b_val, a_val, gap, feas, energy, secs):
        self.iters.append(int(it))
        self.primal.append(float(b_val))
        # recorded dual objective is -A, the lower bound on the primal value
        self.dual.append(float(-a_val))
        self.gap.append(float(gap))
        self.feas.append(float(feas))
        self.energy_residual.append(float(energy))
        self.seconds.append(float(secs))

    def rows(self):
        return list(
            zip(self.iters, self.primal, self.dual, self.gap, self.feas,
                self.energy_residual, self.seconds)
        )


# ---------------------------------------------------------------------------
# masked linear operator (free variables: m nodes 1..nt, interior w)
# ---------------------------------------------------------------------------

def _K_free(grid: GridSpec, mf: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Continuity operator with m^0 = 0 (the pinned part moves into b)."""
    from kmfg.transport import v_divergence

    res = mf / grid.dt + x_transport(grid, mf) + v_divergence(grid, w)
    res[1:] -= mf[:-1] / grid.dt
    return res


def _K_free_T(grid: GridSpec, mu: np.ndarray, interior: np.ndarray) -> tuple:
    out_m, out_w = transpose_K(grid, mu)
    out_w *= interior
    return out_m[1:], out_w


def estimate_op_norm(grid: GridSpec, tol: float = 1e-6, max_iter: int = 10_000) -> float:
    """Power iteration for the masked operator norm, with a 1.01 safety
    factor on top of the converged estimate."""
    rng = np.random.default_rng(12345)
    interior = ~boundary_mask(grid)
    mf = rng.standard_normal((grid.nt,) + grid.slice_shape)
    w = rng.standard_normal((grid.d, grid.nt) + grid.slice_shape) * interior
    prev = 0.0
    for _ in range(max_iter):
        r = _K_free(grid, mf, w)
        mf, w = _K_free_T(grid, r, interior)
        lam = np.sqrt((mf * mf).sum() + (w * w).sum())
        if lam == 0.0:
            return 1.01
        mf /= lam
        w /= lam
        if abs(lam - prev) <= tol * lam:
            return 1.01 * np.sqrt(lam)
        prev = lam
    raise SolverError("operator-norm power iteration did not converge")


# ---------------------------------------------------------------------------
# proximal maps
# ---------------------------------------------------------------------------

def prox_perspective(m_tilde, w_tilde, tau, model: ModelSpec, prox_tol: float = 1e-12,
                     x0=None):
    """Joint prox of F(m) + m L(-w/m) + indicator{m >= 0} (quadratic case).

    Eliminating w gives w(m) = w_tilde m/(m + tau c_L) and a scalar
    strictly convex problem in m solved by safeguarded Newton/bisection.
    Fully vectorized; m_tilde may be any array with w_tilde carrying the
    d components on its leading axis.  x0 optionally warm starts the
    Newton iteration (the prox output of a nearby input is a good guess).
    """
    if model.r != 2.0:
        raise ConfigError("prox_perspective requires the quadratic case r=2")
    m_tilde = np.asarray(m_tilde, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    scalar_in = m_tilde.ndim == 0
    m_tilde = np.atleast_1d(m_tilde)
    if w_tilde.ndim == m_tilde.ndim:
        w_tilde = w_tilde[None]
    cL = model.c_L
    q = model.q
    cF = np.broadcast_to(np.asarray(model.c_F, dtype=float), m_tilde.shape)
    w2 = (w_tilde * w_tilde).sum(axis=0)
    tcl = tau * cL
    half_w2 = 0.5 * tcl * w2

    def derivs(m):
        t1 = m + tcl
        t2 = t1 * t1
        if q == 2.0:
            fterm = cF * m
            dfterm = cF
        else:
            fterm = cF * m ** (q - 1.0)
            dfterm = cF * (q - 1.0) * np.maximum(m, 1e-300) ** (q - 2.0)
        d1 = tau * (fterm + model.C_H) + m - m_tilde - half_w2 / t2
        d2 = tau * dfterm + 1.0 + 2.0 * half_w2 / (t2 * t1)
        return d1, d2

    # dpsi(0) >= 0 means the constrained minimizer sits at the origin
    at_zero = tau * model.C_H - m_tilde - half_w2 / (tcl * tcl) >= 0.0
    active = ~at_zero
    # dpsi > 0 is guaranteed above this point, so [0, hi] brackets the root
    hi = np.maximum(m_tilde, 0.0) + half_w2 / (tcl * tcl) + tau * model.C_H + 1e-300
    lo = np.zeros_like(hi)
    if x0 is None:
        x = np.clip(m_tilde, 0.0, hi)
    else:
        x = np.clip(np.asarray(x0, dtype=float), 0.0, hi)
    converged = False
    for _ in range(100):
        d1, d2 = derivs(x)
        if np.max(np.abs(d1) * active) <= prox_tol:
            converged = True
            break
        lo = np.where(d1 < 0.0, x, lo)
        hi = np.where(d1 > 0.0, x, hi)
        xn = x - d1 / d2
        inside = (xn > lo) & (xn < hi)
        x = np.where(inside, xn, 0.5 * (lo + hi))
    if not converged:
        d1, _ = derivs(x)
        err = np.abs(d1) * active
        if np.max(err) > 1e-9:
            idx = np.unravel_index(np.argmax(err), err.shape)
            raise SolverError(
                f"prox_perspective root finder stalled at cell {idx}: "
                f"m_tilde={m_tilde[idx]}, |dpsi|={err[idx]}"
            )
    m = np.where(at_zero, 0.0, x)
    w = w_tilde * m / (m + tau * cL)
    if scalar_in:
        return float(m[0]), w[:, 0]
    return m, w


def prox_terminal(m_tilde, tau, model: ModelSpec, prox_tol: float = 1e-12):
    """argmin_{m >= 0} G(m) + (m - m_tilde)^2/(2 tau)."""
    m_tilde = np.asarray(m_tilde, dtype=float)
    cG = np.asarray(model.c_G, dtype=float)
    if model.s == 2.0:
        out = np.maximum(0.0, m_tilde / (1.0 + tau * cG))
        return out if out.ndim else float(out)
    scalar_in = m_tilde.ndim == 0
    m_tilde = np.atleast_1d(m_tilde)
    cG = np.broadcast_to(cG, m_tilde.shape)
    s = model.s

    def dpsi(m):
        return tau * cG * m ** (s - 1.0) + m - m_tilde

    at_zero = m_tilde <= 0.0
    lo = np.zeros_like(m_tilde)
    hi = np.maximum(m_tilde, 1e-30)
    x = np.clip(m_tilde, 0.0, None)
    for _ in range(200):
        d1 = dpsi(x)
        if np.max(np.abs(np.where(at_zero, 0.0, d1))) <= prox_tol:
            break
        lo = np.where(d1 < 0.0, x, lo)
        hi = np.where(d1 > 0.0, x, hi)
        dd = tau * cG * (s - 1.0) * np.maximum(x, 1e-300) ** (s - 2.0) + 1.0
        xn = x - d1 / dd
        inside = (xn > lo) & (xn < hi)
        x = np.where(inside, xn, 0.5 * (lo + hi))
    out = np.where(at_zero, 0.0, x)
    if scalar_in:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------

def perspective_cost(model: ModelSpec, m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Cellwise m L(-w/m) with the convention 0 at m=w=0, +inf at m=0, w!=0."""
    m = np.asarray(m, dtype=float)
    wmag2 = (np.asarray(w, dtype=float) ** 2).sum(axis=0)
    pos = m > 0.0
    safe_m = np.where(pos, m, 1.0)
    rp = model.r_conj
    coef = model.c_H ** (-1.0 / (model.r - 1.0))
    out = coef * np.sqrt(wmag2) ** rp / (rp * safe_m ** (rp - 1.0)) + model.C_H * m
    out = np.where(pos, out, np.where(wmag2 > 0.0, np.inf, 0.0))
    out = np.where(m < 0.0, np.inf, out)
    return out


def evaluate_B(flow: FlowState, model: ModelSpec) -> float:
    grid = flow.m.grid
    dtv = grid.dt * grid.cell_volume
    total = 0.0
    for k in range(grid.nt):
        cell = model.F_val(flow.m.values[k]) + perspective_cost(model, flow.m.values[k], flow.w.values[:, k])
        total += dtv * float(np.sum(cell))
    total += grid.cell_volume * float(np.sum(model.G_val(flow.m.values[grid.nt])))
    return total


def masked_dv_right(u: ScalarField) -> np.ndarray:
    """D_v u at the right node of each interval, zeroed on the flux-free
    boundary layers (the conjugation sees no w there)."""
    grid = u.grid
    interior = ~boundary_mask(grid)
    out = np.empty((grid.d, grid.nt) + grid.slice_shape)
    for k in range(grid.nt):
        out[:, k] = v_gradient(grid, u.values[k + 1]) * interior
    return out


def recover_value_state(u: ScalarField, model: ModelSpec) -> ValueState:
    """Define (beta, beta_T) from u with equality in the discrete HJ relation."""
    grid = u.grid
    a, _ = apply_K_adjoint(u)
    dvu = masked_dv_right(u)
    beta = np.empty((grid.nt,) + grid.slice_shape)
    for k in range(grid.nt):
        beta[k] = a.values[k] + model.H_val(dvu[:, k])
    beta_T = u.values[grid.nt] - grid.dt * x_transport(grid, u.values[grid.nt])
    return ValueState(u=u, beta=ScalarField(grid, "interval", beta), beta_T=beta_T)


def evaluate_A(value: ValueState, model: ModelSpec, m0: np.ndarray) -> float:
    """Exact discrete relaxed dual objective (a lower bound -A <= min B)."""
    grid = value.u.grid
    dtv = grid.dt * grid.cell_volume
    dvu = masked_dv_right(value.u)
    total = 0.0
    for k in range(1, grid.nt):
        total += dtv * float(np.sum(model.F_star(value.beta.values[k])))
    total += grid.cell_volume * float(np.sum(model.G_star(value.beta_T)))
    total += dtv * float(np.sum(m0 * model.H_val(dvu[:, 0])))
    total -= grid.cell_volume * float(np.sum(value.u.values[1] * m0))
    total -= dtv * float(np.sum(model.F_val(m0)))
    return total


def duality_gap(a_val: float, b_val: float) -> float:
    return (a_val + b_val) / max(1.0, abs(b_val))


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

def _initial_flow(grid: GridSpec, m0: np.ndarray, init) -> tuple:
    if isinstance(init, FlowState):
        return init.m.values[1:].copy(), init.w.values.copy()
    w = np.zeros((grid.d, grid.nt) + grid.slice_shape)
    if init in (None, "streaming"):
        _, disc = free_streaming(m0, grid)
        # coarse grids can undershoot zero; start from the projected cone
        return np.clip(disc.values[1:], 0.0, None), w
    if init == "constant":
        return np.repeat(m0[None], grid.nt, axis=0), w
    raise ConfigError(f"unknown solver initialization {init!r}")


def pdhg_solve(model: ModelSpec, grid: GridSpec, config: SolverConfig,
               init=None, m0: InitialDensity | None = None):
    """Run the primal-dual iteration; returns (FlowState, ValueState,
    ConvergenceRecord).  init may be a FlowState or one of "streaming"
    (default) / "constant"."""
    from kmfg.diagnostics import energy_equality_residual

    if m0 is None:
        m0 = build_initial_density(grid, model.m0_spec)
    m0v = m0.values
    interior = ~boundary_mask(grid)
    vol = grid.cell_volume
    dtv = grid.dt * vol

    norm_K = estimate_op_norm(grid)
    base = np.sqrt(0.99) / norm_K
    tau = config.tau if config.tau is not None else base * config.step_ratio
    sigma = config.sigma if config.sigma is not None else base / config.step_ratio
    if tau * sigma * norm_K**2 > 0.99 * 1.01**2 + 1e-9:
        raise ConfigError("step sizes violate tau sigma |K|^2 <= 0.99")

    b = np.zeros((grid.nt,) + grid.slice_shape)
    b[0] = m0v / grid.dt

    mf, w = _initial_flow(grid, m0v, init)
    w *= interior
    lam = np.zeros((grid.nt,) + grid.slice_shape)
    mf_bar, w_bar = mf.copy(), w.copy()

    record = ConvergenceRecord()
    t0 = time.perf_counter()
    tau_run = tau * dtv
    tau_term = tau * vol
    prev_abs_gap = None

    def flow_of(mf_arr, w_arr):
        m_full = np.concatenate([m0v[None], mf_arr], axis=0)
        return FlowState(m=ScalarField(grid, "node", m_full), w=VectorField(grid, w_arr.copy()))

    def value_of(lam_arr):
        u = np.empty((grid.nt + 1,) + grid.slice_shape)
        u[1:] = -lam_arr / dtv
        u[0] = u[1]
        return recover_value_state(ScalarField(grid, "node", u), model)

    def check(it):
        nonlocal prev_abs_gap
        flow = flow_of(mf, w)
        value = value_of(lam)
        b_val = evaluate_B(flow, model)
        a_val = evaluate_A(value, model, m0v)
        res = _K_free(grid, mf, w) - b
        feas = float(np.sqrt((res * res).sum() * dtv))
        gap = duality_gap(a_val, b_val)
        energy = energy_equality_residual(flow, value, model)
        record.append(it, b_val, a_val, gap, feas, energy, time.perf_counter() - t0)
        if not np.isfinite(b_val) or not np.isfinite(a_val):
            raise SolverError(f"objective became non-finite at iteration {it}")
        if prev_abs_gap is not None and abs(gap) > 10.0 * prev_abs_gap and abs(gap) > 1.0:
            raise SolverError(f"duality gap diverging at iteration {it}: {gap:.3e}")
        prev_abs_gap = abs(gap)
        return abs(gap) <= config.tol_gap and feas <= config.tol_feas, flow, value

    done, flow, value = check(0)
    it = 0
    m_warm = None
    while not done and it < config.max_iter:
        it += 1
        lam += sigma * (_K_free(grid, mf_bar, w_bar) - b)
        gm, gw = _K_free_T(grid, lam, interior)
        m_t = mf - tau * gm
        w_t = w - tau * gw

        mf_new = np.empty_like(mf)
        w_new = np.empty_like(w)
        # interval 0: m^0 pinned, w-only prox in closed form
        w_new[:, 0] = w_t[:, 0] * m0v / (m0v + tau_run * model.c_L)
        # intervals 1..nt-1 pair w^k with the free node m^k
        if grid.nt > 1:
            mm, ww = prox_perspective(m_t[:-1], w_t[:, 1:], tau_run, model,
                                      config.prox_tol, x0=m_warm)
            m_warm = mm
            mf_new[:-1] = mm
            w_new[:, 1:] = ww
        mf_new[-1] = prox_terminal(m_t[-1], tau_term, model)
        w_new *= interior

        mf_bar = mf_new + config.theta * (mf_new - mf)
        w_bar = w_new + config.theta * (w_new - w)
        mf, w = mf_new, w_new

        if it % config.check_every == 0 or it == config.max_iter:
            done, flow, value = check(it)

    if record.iters[-1] != it:
        done, flow, value = check(it)
    return flow, value, record
