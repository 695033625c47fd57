"""Problem data: Hamiltonian, Lagrangian, couplings and conjugates.

Power-law families throughout:

    F(m) = c_F m^q / q   (m >= 0, +inf below),   f = c_F m^(q-1),
    G(m) = c_G m^s / s,                           g = c_G m^(s-1),
    H(p) = c_H |p|^r / r - C_H,
    L(a) = c_H^(-1/(r-1)) |a|^r' / r' + C_H   (Fenchel conjugate of H),
    F*(b) = c_F^(-1/(q-1)) (b_+)^q' / q',     likewise G*.

Conjugates of the couplings are taken over m >= 0, so F* vanishes on
b <= 0 and is non-decreasing.  c_F and c_G may be scalars or per-cell
arrays broadcastable over a phase-space slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from kmfg.grid import ConfigError, GridSpec


@dataclass(frozen=True)
class M0Spec:
    """Initial density: periodic bumps in x times a Gaussian in v.

    x_centers holds one center per bump (each a d-tuple in torus
    coordinates); the x profile is a product over axes of the wrapped
    bump exp(kappa (cos(2 pi (x-c)) - 1)) with kappa = 1/(2 pi x_width)^2,
    which matches a Gaussian of std x_width near the center.
    """

    x_centers: tuple = ((0.5,),)
    x_width: float = 0.12
    v_center: tuple = (0.0,)
    v_sigma: float = 0.3

    def __post_init__(self):
        if not self.x_width > 0 or not self.v_sigma > 0:
            raise ConfigError("m0 widths must be positive")


@dataclass(frozen=True)
class ModelSpec:
    q: float = 2.0
    s: float = 2.0
    r: float = 2.0
    c_F: object = 1.0
    c_G: object = 1.0
    c_H: float = 1.0
    C_H: float = 0.0
    m0_spec: M0Spec = field(default_factory=M0Spec)

    def __post_init__(self):
        if not self.q > 1:
            raise ConfigError(f"q must exceed 1, got {self.q}")
        if not 1 < self.s <= self.q:
            raise ConfigError(f"s must lie in (1, q], got {self.s}")
        if not self.r > 1:
            raise ConfigError(f"r must exceed 1, got {self.r}")
        if np.any(np.asarray(self.c_F) < 0) or np.any(np.asarray(self.c_G) < 0):
            raise ConfigError("c_F and c_G must be nonnegative")
        if not self.c_H > 0:
            raise ConfigError(f"c_H must be positive, got {self.c_H}")
        if self.C_H < 0:
            raise ConfigError(f"C_H must be nonnegative, got {self.C_H}")

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def s_conj(self) -> float:
        return self.s / (self.s - 1.0)

    @property
    def r_conj(self) -> float:
        return self.r / (self.r - 1.0)

    @property
    def c_L(self) -> float:
        """Quadratic Lagrangian coefficient for r=2: L = c_L |a|^2/2 + C_H."""
        if self.r != 2.0:
            raise ConfigError("c_L is only defined for the quadratic case r=2")
        return 1.0 / self.c_H

    # ---- couplings -------------------------------------------------

    def F_val(self, m):
        m = np.asarray(m, dtype=float)
        mp = np.where(m < 0, 0.0, m)
        out = np.asarray(self.c_F * mp**self.q / self.q)
        out = np.where(m < 0, np.inf, out)
        return out if out.ndim else float(out)

    def f_val(self, m):
        m = np.asarray(m, dtype=float)
        out = np.asarray(self.c_F * np.clip(m, 0.0, None) ** (self.q - 1.0))
        return out if out.ndim else float(out)

    def F_star(self, beta):
        return _power_conjugate(beta, self.c_F, self.q)

    def G_val(self, m):
        m = np.asarray(m, dtype=float)
        mp = np.where(m < 0, 0.0, m)
        out = np.asarray(self.c_G * mp**self.s / self.s)
        out = np.where(m < 0, np.inf, out)
        return out if out.ndim else float(out)

    def g_val(self, m):
        m = np.asarray(m, dtype=float)
        out = np.asarray(self.c_G * np.clip(m, 0.0, None) ** (self.s - 1.0))
        return out if out.ndim else float(out)

    def G_star(self, u):
        return _power_conjugate(u, self.c_G, self.s)

    # ---- Hamiltonian / Lagrangian ----------------------------------

    def H_val(self, p):
        """H at momentum p; p has the d vector components on the leading axis."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        mag = np.sqrt((p * p).sum(axis=0))
        out = np.asarray(self.c_H * mag**self.r / self.r - self.C_H)
        return out if out.ndim else float(out)

    def D_pH(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if self.r == 2.0:
            return self.c_H * p
        mag = np.sqrt((p * p).sum(axis=0))
        safe = np.where(mag > 0, mag, 1.0)
        return self.c_H * np.where(mag > 0, safe ** (self.r - 2.0), 0.0) * p

    def L_val(self, alpha):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        mag = np.sqrt((alpha * alpha).sum(axis=0))
        coef = self.c_H ** (-1.0 / (self.r - 1.0))
        out = np.asarray(coef * mag**self.r_conj / self.r_conj + self.C_H)
        return out if out.ndim else float(out)


def _power_conjugate(y, coef, expo):
    """Conjugate of m -> coef m^expo / expo over m >= 0, elementwise."""
    y = np.asarray(y, dtype=float)
    yp = np.clip(y, 0.0, None)
    conj = expo / (expo - 1.0)
    coef = np.asarray(coef, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(coef > 0, coef ** (-1.0 / (expo - 1.0)), np.inf)
        # coef = 0 means the coupling is identically 0 on m >= 0, whose
        # conjugate is the indicator of {y <= 0}.
        out = np.where(yp > 0, scale * yp**conj / conj, 0.0)
    out = np.asarray(out)
    return out if out.ndim else float(out)


def fenchel_conjugate_numeric(phi, y: float, lo: float, hi: float, depth: int = 80) -> float:
    """sup_{x in [lo, hi]} y*x - phi(x) by grid search plus golden-section
    refinement around the best sample.  Oracle for conjugate identities."""
    xs = np.linspace(lo, hi, 512)
    vals = np.array([y * x - phi(x) for x in xs])
    if not np.all(np.isfinite(vals)):
        raise ConfigError("non-finite sample in fenchel_conjugate_numeric")
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = y * c - phi(c)
    fd = y * d - phi(d)
    for _ in range(depth):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = y * c - phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = y * d - phi(d)
    best = max(fc, fd, vals[i])
    return float(best)


@dataclass
class InitialDensity:
    values: np.ndarray
    normalization: float


def build_initial_density(grid: GridSpec, spec: M0Spec) -> InitialDensity:
    """Normalized product density on one slice; rejects configurations whose
    Gaussian velocity tail has more than 1e-8 mass outside the box."""
    for a in range(grid.d):
        lo = (-grid.v_max - spec.v_center[a]) / spec.v_sigma
        hi = (grid.v_max - spec.v_center[a]) / spec.v_sigma
        outside = 1.0 - (ndtr(hi) - ndtr(lo))
        if outside >= 1e-8:
            raise ConfigError(
                f"velocity-box truncation loses {outside:.2e} Gaussian mass "
                f"on axis {a}; raise v_max or shrink m0 v_sigma"
            )

    kappa = 1.0 / (2.0 * np.pi * spec.x_width) ** 2
    profile = np.zeros(grid.slice_shape)
    for center in spec.x_centers:
        bump = np.ones(grid.slice_shape)
        for a in range(grid.d):
            x = grid.x_nodes
            shape = [1] * (2 * grid.d)
            shape[grid.x_axis(a)] = grid.nx
            bump = bump * np.exp(
                kappa * (np.cos(2.0 * np.pi * (x - center[a])) - 1.0)
            ).reshape(shape)
        profile = profile + bump
    for a in range(grid.d):
        v = grid.v_broadcast(a)
        profile = profile * np.exp(-((v - spec.v_center[a]) ** 2) / (2.0 * spec.v_sigma**2))

    mass = float(profile.sum()) * grid.cell_volume
    if mass <= 0:
        raise ConfigError("initial density has nonpositive mass")
    return InitialDensity(values=profile / mass, normalization=mass)


def check_growth_bounds(model: ModelSpec, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Sampled verification of the two-sided power-law growth bounds on H,
    F and G with the model's own constants.  Report-only."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(-5.0, 5.0, size=(1, n_samples))
    mag = np.abs(p[0])
    H = model.H_val(p)
    c = max(model.c_H, 1.0 / model.c_H)
    h_lo = mag**model.r / (c * model.r) - model.C_H
    h_hi = c * mag**model.r / model.r + model.C_H
    report = {
        "H_bounds_hold": bool(np.all(h_lo <= H + 1e-12) and np.all(H <= h_hi + 1e-12)),
        "H_tightest_c": c,
    }
    m = rng.uniform(0.0, 10.0, size=n_samples)
    for name, coef, expo, val in (
        ("F", model.c_F, model.q, model.F_val(m)),
        ("G", model.c_G, model.s, model.G_val(m)),
    ):
        cmax = float(np.max(np.asarray(coef)))
        if cmax > 0:
            cc = max(cmax, 1.0 / float(np.min(np.asarray(coef))))
            lo = m**expo / (cc * expo)
            hi = cc * m**expo / expo
            ok = bool(np.all(lo <= val + 1e-12) and np.all(val <= hi + 1e-12))
        else:
            cc = 0.0
            ok = bool(np.all(np.asarray(val) == 0.0))
        report[f"{name}_bounds_hold"] = ok
        report[f"{name}_tightest_c"] = cc
    return report
