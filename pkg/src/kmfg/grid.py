"""Discrete phase-space lattice and field containers.

The position domain is the unit torus T^d (d = 1 or 2), split into nx
cells per axis with spacing dx = 1/nx.  The velocity domain is the box
[-v_max, v_max]^d with nv cell-centered nodes per axis, v_j = -v_max +
(j + 1/2) dv.  Time is [0, T] with nt steps.

Scalar fields live either on time nodes (nt+1 slices: m, u) or on time
intervals (nt slices: beta, components of w).  Each slice has shape
(nx,)*d + (nv,)*d with the spatial axes first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Invalid grid, model or run configuration."""


@dataclass(frozen=True)
class GridSpec:
    d: int
    nx: int
    nv: int
    nt: int
    T: float
    v_max: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigError(f"spatial dimension must be 1 or 2, got {self.d}")
        for name in ("nx", "nv", "nt"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 2:
                raise ConfigError(f"{name} must be an integer >= 2, got {n!r}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not self.v_max > 0:
            raise ConfigError(f"v_max must be positive, got {self.v_max}")

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.nv

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def v_nodes(self) -> np.ndarray:
        return -self.v_max + (np.arange(self.nv) + 0.5) * self.dv

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    @property
    def slice_shape(self) -> tuple:
        return (self.nx,) * self.d + (self.nv,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d * self.dv**self.d

    def x_axis(self, a: int) -> int:
        """Array axis (within a slice) of spatial coordinate a."""
        return a

    def v_axis(self, a: int) -> int:
        """Array axis (within a slice) of velocity coordinate a."""
        return self.d + a

    def v_broadcast(self, a: int) -> np.ndarray:
        """Velocity nodes of axis a, shaped to broadcast over a slice."""
        shape = [1] * (2 * self.d)
        shape[self.v_axis(a)] = self.nv
        return self.v_nodes.reshape(shape)

    def n_slices(self, kind: str) -> int:
        if kind == "node":
            return self.nt + 1
        if kind == "interval":
            return self.nt
        raise ConfigError(f"unknown field kind {kind!r}")


def build_grid(d: int, nx: int, nv: int, nt: int, T: float, v_max: float) -> GridSpec:
    return GridSpec(d=d, nx=nx, nv=nv, nt=nt, T=float(T), v_max=float(v_max))


@dataclass
class ScalarField:
    """Real field on the lattice, time-major.

    kind is "node" (nt+1 slices) or "interval" (nt slices).
    """

    grid: GridSpec
    kind: str
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n_slices(self.kind),) + self.grid.slice_shape
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise ConfigError(
                f"field shape {self.values.shape} does not match {expected} "
                f"for kind {self.kind!r}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec, kind: str) -> "ScalarField":
        return cls(grid, kind, np.zeros((grid.n_slices(kind),) + grid.slice_shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.kind, self.values.copy())


@dataclass
class VectorField:
    """Velocity-vector field (one interval-in-time component per v-axis).

    Components are stacked along a leading axis: values[a] is component a.
    By construction w vanishes on the two outermost v-layers of every
    velocity axis (zero-flux truncation of the unbounded velocity domain).
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.d, self.grid.nt) + self.grid.slice_shape
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise ConfigError(
                f"vector field shape {self.values.shape} does not match {expected}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.d, grid.nt) + grid.slice_shape))

    def component(self, a: int) -> ScalarField:
        return ScalarField(self.grid, "interval", self.values[a])

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.values.copy())


def boundary_mask(grid: GridSpec) -> np.ndarray:
    """Boolean slice mask, True on the two outermost v-layers (bottom and
    top) of any velocity axis.  The centered divergence telescopes to the
    outermost values, so zeroing w there makes the v-flux exactly zero."""
    mask = np.zeros(grid.slice_shape, dtype=bool)
    for a in range(grid.d):
        axis = grid.v_axis(a)
        idx = [slice(None)] * 2 * grid.d
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = grid.nv - 1
        mask[tuple(idx)] = True
    return mask


def integrate_slice(f: ScalarField, k: int) -> float:
    """Discrete integral of slice k over the phase-space box."""
    if not 0 <= k < f.values.shape[0]:
        raise IndexError(f"time index {k} out of range for kind {f.kind!r}")
    return float(f.values[k].sum()) * f.grid.cell_volume


def _shift_axis_periodic(arr: np.ndarray, axis: int, t: float) -> np.ndarray:
    """Sample arr at index i + t along a periodic axis, linear interpolation."""
    i0 = int(np.floor(t))
    frac = t - i0
    lo = np.roll(arr, -i0, axis=axis)
    if frac == 0.0:
        return lo
    hi = np.roll(arr, -(i0 + 1), axis=axis)
    return (1.0 - frac) * lo + frac * hi


def _take_zero(arr: np.ndarray, axis: int, offset: int) -> np.ndarray:
    n = arr.shape[axis]
    idx = np.arange(n) + offset
    valid = (idx >= 0) & (idx < n)
    out = np.take(arr, np.clip(idx, 0, n - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n
    return out * valid.reshape(shape)


def _shift_axis_zero(arr: np.ndarray, axis: int, t: float) -> np.ndarray:
    """Sample arr at index i + t along a bounded axis; outside reads are 0."""
    i0 = int(np.floor(t))
    frac = t - i0
    lo = _take_zero(arr, axis, i0)
    if frac == 0.0:
        return lo
    hi = _take_zero(arr, axis, i0 + 1)
    return (1.0 - frac) * lo + frac * hi


def shift_slice(grid: GridSpec, slice_values: np.ndarray, delta, a_x: float, a_v: float) -> np.ndarray:
    """Evaluate a slice at (x + a_x*delta, v + a_v*delta) by multilinear
    interpolation; periodic wrap in x, zero outside the velocity box."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.shape != (grid.d,):
        raise ConfigError(f"shift delta must have {grid.d} components")
    out = slice_values
    for a in range(grid.d):
        sx = a_x * delta[a] / grid.dx
        if sx != 0.0:
            out = _shift_axis_periodic(out, grid.x_axis(a), sx)
        sv = a_v * delta[a] / grid.dv
        if sv != 0.0:
            out = _shift_axis_zero(out, grid.v_axis(a), sv)
    return out


def shift_field(f: ScalarField, k: int, delta, a_x: float, a_v: float) -> np.ndarray:
    """Shifted evaluation f(k, x + a_x*delta, v + a_v*delta) of one slice."""
    if not 0 <= k < f.values.shape[0]:
        raise IndexError(f"time index {k} out of range for kind {f.kind!r}")
    return shift_slice(f.grid, f.values[k], delta, a_x, a_v)
