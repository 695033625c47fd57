"""Discrete kinetic continuity operator and its exact adjoint.

The residual on time interval k is

    K_k(m, w) = (m^{k+1} - m^k)/dt + v . D_x m^{k+1} + Div_v w^k

with a centered periodic stencil in x (skew-adjoint, so mass is conserved
and discrete duality is exact) and a centered stencil in v that reads 0
outside the box.  The transport term sits on slice k+1, which keeps the
forward free-streaming solve well posed and the time stencil
lower-bidiagonal.
"""

from __future__ import annotations

import numpy as np

from kmfg.grid import (
    ConfigError,
    GridSpec,
    ScalarField,
    VectorField,
    _shift_axis_periodic,
    boundary_mask,
    integrate_slice,
)


def x_transport(grid: GridSpec, slice_values: np.ndarray) -> np.ndarray:
    """v . D_x^c applied to one slice (centered periodic differences)."""
    out = np.zeros_like(slice_values)
    for a in range(grid.d):
        axis = grid.x_axis(a) + (slice_values.ndim - 2 * grid.d)
        diff = (np.roll(slice_values, -1, axis=axis) - np.roll(slice_values, 1, axis=axis)) / (2.0 * grid.dx)
        out += grid.v_broadcast(a) * diff
    return out


def _central_diff_zero(grid: GridSpec, values: np.ndarray, axis: int) -> np.ndarray:
    """Centered difference along a bounded axis with zero out-of-range reads."""
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    dst[axis] = slice(0, -1)
    src[axis] = slice(1, None)
    out[tuple(dst)] = values[tuple(src)]
    dst[axis] = slice(1, None)
    src[axis] = slice(0, -1)
    out[tuple(dst)] -= values[tuple(src)]
    return out / (2.0 * grid.dv)


def v_divergence(grid: GridSpec, w_slice: np.ndarray) -> np.ndarray:
    """Div_v^c of a stacked vector field w_slice[a] (centered, zero-flux);
    extra axes between the component axis and the slice axes are allowed."""
    extra = w_slice.ndim - 1 - 2 * grid.d
    out = np.zeros(w_slice.shape[1:])
    for a in range(grid.d):
        out += _central_diff_zero(grid, w_slice[a], grid.v_axis(a) + extra)
    return out


def v_gradient(grid: GridSpec, slice_values: np.ndarray) -> np.ndarray:
    """Centered v-gradient of one scalar slice, stacked on a leading axis."""
    extra = slice_values.ndim - 2 * grid.d
    return np.stack(
        [_central_diff_zero(grid, slice_values, grid.v_axis(a) + extra) for a in range(grid.d)]
    )


def apply_K(m: ScalarField, w: VectorField) -> ScalarField:
    """Continuity residual per time interval."""
    grid = m.grid
    if w.grid is not grid and w.grid != grid:
        raise ConfigError("m and w live on different grids")
    if m.kind != "node":
        raise ConfigError("m must be a node-in-time field")
    res = (
        (m.values[1:] - m.values[:-1]) / grid.dt
        + x_transport(grid, m.values[1:])
        + v_divergence(grid, w.values)
    )
    return ScalarField(grid, "interval", res)


def apply_K_adjoint(u: ScalarField) -> tuple:
    """Hamilton-Jacobi transport pair read off a node value function:
    (-d_t u - v . D_x u, -D_v u), both on time intervals.

    The time difference is forward from node k, the spatial transport is
    taken at node k and the velocity gradient at node k+1; with this
    staggering the pair is the exact transpose of apply_K under the
    multiplier correspondence lambda^k = -dt vol u^{k+1} (see transpose_K
    for the raw matrix transpose including boundary rows).
    """
    grid = u.grid
    if u.kind != "node":
        raise ConfigError("u must be a node-in-time field")
    a = -(u.values[1:] - u.values[:-1]) / grid.dt - x_transport(grid, u.values[:-1])
    gv = -v_gradient(grid, u.values[1:])
    return ScalarField(grid, "interval", a), VectorField(grid, gv)


def transpose_K(grid: GridSpec, mu: np.ndarray) -> tuple:
    """Exact matrix transpose of apply_K acting on an interval multiplier.

    Returns (node array of shape (nt+1, ...), vector array (d, nt, ...))
    such that sum_k <K_k(m,w), mu_k> = <m, out_m> + <w, out_w> in the raw
    (unweighted) dot product, boundary rows included.
    """
    out_m = np.zeros((grid.nt + 1,) + grid.slice_shape)
    out_m[:-1] -= mu / grid.dt
    # skew-adjointness of the centered periodic stencil:
    # <v.Dx m, mu> = <m, -v.Dx mu>
    out_m[1:] += mu / grid.dt - x_transport(grid, mu)
    out_w = -v_gradient(grid, mu)
    return out_m, out_w


def mass_per_slice(m: ScalarField) -> np.ndarray:
    return np.array([integrate_slice(m, k) for k in range(m.values.shape[0])])


def first_v_moment(m: ScalarField) -> np.ndarray:
    grid = m.grid
    v_abs = np.zeros(grid.slice_shape)
    for a in range(grid.d):
        v_abs = v_abs + grid.v_broadcast(a) ** 2
    v_abs = np.sqrt(v_abs)
    return np.array(
        [float((m.values[k] * v_abs).sum()) * grid.cell_volume for k in range(m.values.shape[0])]
    )


def free_streaming(m0: np.ndarray, grid: GridSpec) -> tuple:
    """Zero-control transport of m0; returns (continuum, discrete) node fields.

    The continuum field evaluates m0(x - v t, v) by periodic interpolation.
    The discrete field solves (I + dt v.Dx) m^{k+1} = m^k step by step; the
    step matrix is diagonal in x-Fourier space with eigenvalues
    1 + i dt v sin(2 pi kappa/nx)/dx, never singular, so no dt bound is
    needed for solvability.
    """
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != grid.slice_shape:
        raise ConfigError("m0 slice has the wrong shape")
    x_axes = tuple(range(grid.d))

    # discrete scheme via FFT in x
    lam = np.zeros(grid.slice_shape, dtype=complex)
    for a in range(grid.d):
        kappa = np.fft.fftfreq(grid.nx) * grid.nx
        s = np.sin(2.0 * np.pi * kappa / grid.nx) / grid.dx
        shape = [1] * (2 * grid.d)
        shape[grid.x_axis(a)] = grid.nx
        lam = lam + 1j * s.reshape(shape) * grid.v_broadcast(a)
    denom = 1.0 + grid.dt * lam
    discrete = np.empty((grid.nt + 1,) + grid.slice_shape)
    discrete[0] = m0
    fcur = np.fft.fftn(m0, axes=x_axes)
    for k in range(1, grid.nt + 1):
        fcur = fcur / denom
        discrete[k] = np.real(np.fft.ifftn(fcur, axes=x_axes))

    # continuum evaluation by per-velocity-node periodic shifts
    continuum = np.empty((grid.nt + 1,) + grid.slice_shape)
    continuum[0] = m0
    for k in range(1, grid.nt + 1):
        t = grid.t_nodes[k]
        for jv in np.ndindex(*(grid.nv,) * grid.d):
            sub = m0[(Ellipsis,) + jv]
            for a in range(grid.d):
                shift = -grid.v_nodes[jv[a]] * t / grid.dx
                sub = _shift_axis_periodic(sub, a, shift)
            continuum[(k, Ellipsis) + jv] = sub
    return (
        ScalarField(grid, "node", continuum),
        ScalarField(grid, "node", discrete),
    )


def reachable_mask(m0: np.ndarray, grid: GridSpec, threshold: float = 1e-14) -> np.ndarray:
    """Grid version of the reachable set: everything for t > 0, the support
    of m0 at t = 0 (full controllability of the double integrator)."""
    mask = np.ones((grid.nt + 1,) + grid.slice_shape, dtype=bool)
    mask[0] = np.asarray(m0) > threshold
    return mask
