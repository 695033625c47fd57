import numpy as np
import pytest

from kmfg.grid import ScalarField, VectorField, boundary_mask, build_grid
from kmfg.model import M0Spec, build_initial_density
from kmfg.transport import (
    apply_K,
    apply_K_adjoint,
    first_v_moment,
    free_streaming,
    mass_per_slice,
    reachable_mask,
    transpose_K,
    v_divergence,
    x_transport,
)


def _grid(d=1, n=8, nt=8):
    return build_grid(d, n, n, nt, 1.0, 2.0)


def _random_triple(g, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((g.nt + 1,) + g.slice_shape)
    w = rng.standard_normal((g.d, g.nt) + g.slice_shape) * ~boundary_mask(g)
    mu = rng.standard_normal((g.nt,) + g.slice_shape)
    return m, w, mu


def test_constant_density_zero_flux_in_kernel():
    g = _grid()
    m = ScalarField(g, "node", np.ones((g.nt + 1,) + g.slice_shape))
    res = apply_K(m, VectorField.zeros(g))
    assert np.max(np.abs(res.values)) == 0.0


def test_divergence_free_w_in_kernel():
    g = _grid()
    rng = np.random.default_rng(1)
    m = ScalarField(g, "node", np.broadcast_to(rng.random(g.slice_shape), (g.nt + 1,) + g.slice_shape).copy())
    # w independent of v on the interior reads zero through the centered
    # stencil only if constant across the read cells; build one whose
    # divergence stencil cancels exactly: w_j equal on j-1, j+1 pairs
    w = VectorField.zeros(g)
    res = apply_K(m, w)
    # m constant in t with x-dependence: only transport term remains
    expected = x_transport(g, m.values[0])
    assert np.allclose(res.values[0], expected, atol=1e-14)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_exact_adjoint_identity(d, seed):
    g = build_grid(d, 4 if d == 2 else 8, 6 if d == 2 else 8, 5, 1.0, 2.0)
    m, w, mu = _random_triple(g, seed)
    K = apply_K(ScalarField(g, "node", m), VectorField(g, w))
    lhs = float((K.values * mu).sum())
    tm, tw = transpose_K(g, mu)
    rhs = float((m * tm).sum() + (w * tw).sum())
    scale = np.linalg.norm(K.values.ravel()) * np.linalg.norm(mu.ravel()) + 1.0
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_adjoint_identity_100_random_triples():
    g = _grid()
    worst = 0.0
    for seed in range(100):
        m, w, mu = _random_triple(g, seed)
        K = apply_K(ScalarField(g, "node", m), VectorField(g, w))
        lhs = float((K.values * mu).sum())
        tm, tw = transpose_K(g, mu)
        rhs = float((m * tm).sum() + (w * tw).sum())
        scale = np.linalg.norm(K.values.ravel()) * np.linalg.norm(mu.ravel()) + 1.0
        worst = max(worst, abs(lhs - rhs) / scale)
    assert worst <= 1e-12


def test_hj_transport_of_constant_and_linear_time():
    g = _grid()
    u_const = ScalarField(g, "node", np.full((g.nt + 1,) + g.slice_shape, 3.7))
    a, gv = apply_K_adjoint(u_const)
    assert np.max(np.abs(a.values)) == 0.0
    # zero-fill stencil sees the box edge, so only the interior vanishes
    interior = ~boundary_mask(g)
    assert np.max(np.abs(gv.values * interior)) == 0.0

    t_vals = g.t_nodes[:, None, None] * np.ones(g.slice_shape)
    u_time = ScalarField(g, "node", t_vals)
    a, gv = apply_K_adjoint(u_time)
    assert np.allclose(a.values, -1.0, atol=1e-13)
    assert np.max(np.abs(gv.values * interior)) == 0.0


def test_adjoint_matches_transpose_under_multiplier_map():
    # lambda^k = -dt vol u^{k+1} turns the raw transpose into the
    # Hamilton-Jacobi transport pair on the interior nodes
    g = _grid()
    rng = np.random.default_rng(3)
    u = rng.standard_normal((g.nt + 1,) + g.slice_shape)
    lam = -g.dt * g.cell_volume * u[1:]
    tm, tw = transpose_K(g, lam)
    a, gv = apply_K_adjoint(ScalarField(g, "node", u))
    scale = g.dt * g.cell_volume
    assert np.allclose(tm[1:g.nt], -scale * a.values[1:], atol=1e-13)
    assert np.allclose(tw, scale * (-gv.values), atol=1e-13)


def test_skew_symmetry_x_transport():
    g = _grid()
    rng = np.random.default_rng(5)
    for _ in range(5):
        slc = rng.standard_normal(g.slice_shape)
        val = float((x_transport(g, slc) * slc).sum()) * g.cell_volume
        assert abs(val) <= 1e-12


def test_zero_flux_divergence_sums_to_zero():
    g = _grid()
    rng = np.random.default_rng(6)
    w = rng.standard_normal((g.d, g.nt) + g.slice_shape) * ~boundary_mask(g)
    div = v_divergence(g, w)
    sums = div.sum(axis=-1)
    assert np.max(np.abs(sums)) <= 1e-13


def test_free_streaming_discrete_in_kernel_and_mass():
    g = _grid(n=16, nt=16)
    m0 = build_initial_density(g, M0Spec())
    cont, disc = free_streaming(m0.values, g)
    res = apply_K(disc, VectorField.zeros(g))
    assert np.max(np.abs(res.values)) <= 1e-12
    masses = mass_per_slice(disc)
    assert np.max(np.abs(masses - masses[0])) <= 1e-12
    assert masses[0] == pytest.approx(1.0, abs=1e-12)


def test_free_streaming_refinement():
    errs = []
    for n in (8, 16, 32):
        g = build_grid(1, n, 16, n, 1.0, 2.0)
        m0 = build_initial_density(g, M0Spec())
        cont, disc = free_streaming(m0.values, g)
        err = np.abs(cont.values - disc.values).sum() * g.cell_volume * g.dt
        errs.append(err)
    assert errs[1] < errs[0]
    assert errs[2] < errs[1]


def test_mass_conservation_feasible_flow():
    g = _grid()
    rng = np.random.default_rng(9)
    w = rng.standard_normal((g.d, g.nt) + g.slice_shape) * ~boundary_mask(g)
    # integrate the scheme forward with this w to build a feasible flow
    m0 = build_initial_density(g, M0Spec()).values
    m = np.empty((g.nt + 1,) + g.slice_shape)
    m[0] = m0
    from kmfg.transport import v_divergence as divv
    for k in range(g.nt):
        rhs = m[k] - g.dt * divv(g, w[:, k : k + 1])[0]
        # solve (I + dt v Dx) m^{k+1} = rhs via FFT in x
        kap = np.fft.fftfreq(g.nx) * g.nx
        lam = 1j * np.sin(2 * np.pi * kap / g.nx)[:, None] / g.dx * g.v_nodes[None, :]
        m[k + 1] = np.real(np.fft.ifft(np.fft.fft(rhs, axis=0) / (1 + g.dt * lam), axis=0))
    flow_m = ScalarField(g, "node", m)
    res = apply_K(flow_m, VectorField(g, w))
    assert np.max(np.abs(res.values)) <= 1e-10
    masses = mass_per_slice(flow_m)
    assert np.max(np.abs(masses - masses[0])) <= 1e-12


def test_first_v_moment_zero_density():
    g = _grid()
    m = ScalarField.zeros(g, "node")
    assert np.all(first_v_moment(m) == 0.0)


def test_reachable_mask():
    g = _grid()
    m0 = np.zeros(g.slice_shape)
    m0[: g.nx // 2] = 1.0
    mask = reachable_mask(m0, g)
    assert mask[1:].all()
    assert mask[0, : g.nx // 2].all()
    assert not mask[0, g.nx // 2 :].any()
    strictly_pos = reachable_mask(np.ones(g.slice_shape), g)
    assert strictly_pos.all()
