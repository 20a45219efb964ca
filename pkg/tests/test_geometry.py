"""Backend contracts: calibration identities, positivity, quadrature, Ricci."""

from __future__ import annotations

import math

import numpy as np
import pytest

from krflab.cohomology import (
    Hirzebruch,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
    class_path,
    intersection_pairing,
)
from krflab.errors import DomainError, PositivityError, UnsupportedOperationError
from krflab.geometry import (
    CalabiBackend,
    HomogeneousBackend,
    HomogeneousOracle,
    SeparableTorusBackend,
    closed_form_homogeneous,
    make_backend,
)
from krflab.grids import line_grid, periodic_grid


@pytest.fixture(scope="module")
def calabi_fiber():
    return CalabiBackend(class_path(Hirzebruch(1), (2, 5)), nodes=512, radius=20.0)


@pytest.fixture(scope="module")
def calabi_contraction():
    return CalabiBackend(class_path(Hirzebruch(1), (1, 1.2)), nodes=512, radius=20.0)


@pytest.fixture(scope="module")
def torus2():
    return SeparableTorusBackend(class_path(TorusSeparable(2), (1, 1)), nodes_per_factor=128)


def smooth_torus_state(backend, amp=1e-3):
    u = backend.initial_state()
    for k, grid in enumerate(backend.grids):
        sl = slice(backend._offsets[k], backend._offsets[k + 1])
        u[sl] = amp * np.sin(2 * np.pi * (k + 1) * grid.nodes / grid.length)
    return u


# -- grids -------------------------------------------------------------------


def test_grid_derivative_accuracy():
    errs = []
    for n in (128, 256):
        g = line_grid(5.0, n)
        f = np.sin(g.nodes)
        errs.append(np.abs(g.d2(f) + np.sin(g.nodes)).max())
    assert errs[0] / errs[1] > 3.0  # second order
    g = line_grid(5.0, 256)
    assert np.abs(g.d1(np.sin(g.nodes)) - np.cos(g.nodes)).max() < 1e-3


def test_grid_exact_on_constants():
    for g in (line_grid(5.0, 64), periodic_grid(1.0, 64), line_grid(5.0, 64, stretch=1.5)):
        c = np.full(g.n, 0.8764)
        assert np.all(g.d1(c) == 0.0)
        assert np.all(g.d2(c) == 0.0)


def test_stretched_grid_nodes():
    g = line_grid(10.0, 64, stretch=2.0)
    assert g.nodes[0] == pytest.approx(-10.0) and g.nodes[-1] == pytest.approx(10.0)
    assert np.all(np.diff(g.nodes) > 0)
    # tanh map clusters nodes near the ends
    assert np.diff(g.nodes)[0] < np.diff(g.nodes)[g.n // 2]


def test_periodic_quadrature():
    g = periodic_grid(2.0, 64)
    assert g.quad(np.ones(64)) == pytest.approx(2.0)


# -- calibration identities ----------------------------------------------------


def test_ma_log_zero_at_calibration(calabi_fiber, torus2):
    for be in (calabi_fiber, torus2, HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))):
        m = be.ma_log(be.initial_state(), 0.0)
        assert np.all(m == 0.0)


def test_trace_w0_is_n_at_start(calabi_fiber, torus2):
    assert np.all(calabi_fiber.trace_w0(calabi_fiber.initial_state(), 0.0) == 2.0)
    phi = torus2.trace_w0(torus2.initial_state(), 0.0)
    assert torus2.field_stats(phi).max == pytest.approx(2.0, abs=1e-14)


def test_laplacian_of_constant_is_exactly_zero(calabi_fiber, torus2):
    v = np.ones(calabi_fiber.num_unknowns)
    assert np.all(calabi_fiber.laplacian(calabi_fiber.initial_state(), 0.0, v) == 0.0)
    v = np.ones(torus2.num_unknowns)
    assert np.all(torus2.laplacian(torus2.initial_state(), 0.0, v) == 0.0)


def test_laplacian_of_full_potential_is_n(calabi_fiber):
    # Delta psi = 2 up to O(h^2); halving h cuts the error by ~4
    errs = []
    for n in (256, 512):
        be = CalabiBackend(class_path(Hirzebruch(1), (2, 5)), nodes=n, radius=20.0)
        psi = be.reference_potential(0.0).values
        lap = be.laplacian(be.initial_state(), 0.0, psi)
        errs.append(np.abs(lap - 2.0).max())
    assert errs[1] < 0.05
    assert errs[0] / errs[1] > 3.0


# -- homogeneous backend -------------------------------------------------------


def test_homogeneous_ma_log_closed_form():
    be = HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))
    t = 0.37
    expected = 2.0 * math.log((2.0 * math.exp(-t) - 1.0) / 1.0)
    assert be.ma_log(be.initial_state(), t)[0] == pytest.approx(expected, abs=1e-14)


def test_homogeneous_reference_and_domain():
    be = HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))
    ref = be.reference_potential(0.0)
    assert ref.values[0] == pytest.approx(3.0)
    with pytest.raises(DomainError):
        be.reference_potential(math.log(2) + 0.01)


def test_ke_fixed_point_einstein_structure():
    be = HomogeneousBackend(class_path(ProductOfKEFactors(((-1, 1), (-1, 1))), (1, 1)))
    probe = be.ricci_probe(be.initial_state(), 2.0)
    assert probe.min_ratio == pytest.approx(-1.0)
    assert probe.r_min == pytest.approx(-2.0) and probe.r_max == pytest.approx(-2.0)
    # stationary: ma_log vanishes for all t
    assert be.ma_log(be.initial_state(), 5.0)[0] == 0.0


def test_fano_type_one_scalar_curvature():
    # R = 6 / c(t) with c(t) = 3(2q - 1); R (T - t) stays bounded near T = ln 2
    be = HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))
    T = math.log(2)
    vals = []
    for dt in (1e-2, 1e-3, 1e-4):
        probe = be.ricci_probe(be.initial_state(), T - dt)
        vals.append(probe.r_max * dt)
    assert all(1.0 < v < 3.0 for v in vals)


def test_closed_form_homogeneous_values():
    # initial condition
    assert closed_form_homogeneous(ProjectiveSpace(2), (3,), 0.0) == 0.0
    # flat torus closed form u = -n (t - 1 + e^{-t})
    for t in (0.5, 2.0, 10.0):
        want = -2.0 * (t - 1.0 + math.exp(-t))
        assert closed_form_homogeneous(TorusSeparable(2), (1, 1), t) == pytest.approx(
            want, abs=1e-12
        )
    # golden value, adaptive quadrature cross-checked at 30 digits
    T = math.log(2)
    assert closed_form_homogeneous(ProjectiveSpace(2), (3,), T - 0.1) == pytest.approx(
        -0.83733277876878245, abs=1e-10
    )
    with pytest.raises(UnsupportedOperationError):
        closed_form_homogeneous(Hirzebruch(1), (2, 5), 0.1)


def test_oracle_satisfies_its_ode():
    # independent consistency: centered finite difference of u vs g - u
    orc = HomogeneousOracle(class_path(ProjectiveSpace(2), (3,)))
    h = 1e-5
    for t in (0.1, 0.3, 0.55):
        du = (orc.u(t + h) - orc.u(t - h)) / (2 * h)
        assert du == pytest.approx(orc.u_t(t), abs=1e-7)
        ddu = (orc.u_t(t + h) - orc.u_t(t - h)) / (2 * h)
        assert ddu == pytest.approx(orc.u_tt(t), abs=1e-6)


def test_oracle_quadrature_matches_closed_form_on_torus():
    # dual route: quadrature pathway vs the flat-torus closed form
    orc = HomogeneousOracle(class_path(TorusSeparable(2), (1, 1)))
    orc._pure_scaling = False  # force the quadrature branch
    for t in (0.5, 3.0):
        assert orc.u(t) == pytest.approx(-2.0 * (t - 1.0 + math.exp(-t)), abs=1e-11)


# -- positivity --------------------------------------------------------------


def test_positivity_reference_true_and_margins(calabi_fiber):
    u0 = calabi_fiber.initial_state()
    assert calabi_fiber.positivity(u0, 0.0) == (True, pytest.approx(1.0))
    # margin decays with the collapsing class
    m1 = calabi_fiber.positivity(u0, 0.3).margin
    m2 = calabi_fiber.positivity(u0, 0.6).margin
    assert 0 < m2 < m1 < 1.0


def test_positivity_detects_concavity(calabi_fiber):
    u = -0.5 * calabi_fiber.grid.nodes ** 2  # u'' = -1 beats every psi''_ref node
    check = calabi_fiber.positivity(u, 0.0)
    assert not check.ok
    with pytest.raises(PositivityError):
        calabi_fiber.ma_log(u, 0.0)


def test_reference_potential_domain_error(calabi_fiber):
    with pytest.raises(DomainError):
        calabi_fiber.reference_potential(math.log(2))


# -- divisor weight ------------------------------------------------------------


def test_divisor_log_sigma_values(calabi_fiber):
    w = calabi_fiber.divisor_log_sigma()
    rho = calabi_fiber.grid.nodes
    assert np.all(w <= 0)
    i0 = np.argmin(np.abs(rho))
    assert w[i0] == pytest.approx(-math.log(2), abs=3e-2)  # node nearest rho = 0
    exact = rho - np.logaddexp(0.0, rho)
    assert np.allclose(w, exact)
    # w(-10) = -10 - log(1 + e^{-10})
    i = np.argmin(np.abs(rho + 10))
    assert w[i] == pytest.approx(rho[i] - math.log1p(math.exp(rho[i])), abs=1e-14)
    # asymptote: w/rho -> 1 at the contracted end, w -> 0^- at the other
    assert w[0] / rho[0] == pytest.approx(1.0, abs=1e-8)
    assert -1e-8 < w[-1] < 0


def test_divisor_unsupported_off_calabi(torus2):
    with pytest.raises(UnsupportedOperationError):
        torus2.divisor_log_sigma()


# -- volume consistency -----------------------------------------------------------


@pytest.mark.parametrize("omega0", [(2, 5), (1, 1.2)])
def test_volume_consistency_calabi(omega0):
    path = class_path(Hirzebruch(1), omega0)
    ts = [0.0] + [0.25 * path.T, 0.6 * path.T, 0.95 * path.T]
    for nodes, tol in ((512, 0.01), (2048, 0.0025)):
        be = CalabiBackend(path, nodes=nodes, radius=20.0)
        u0 = be.initial_state()
        for t in ts:
            v_quad = be.quadrature_volume(u0, t)
            v_cohom = path.volume_at(t)
            assert abs(v_quad / v_cohom - 1.0) < tol


def test_volume_consistency_torus(torus2):
    path = torus2.path
    u = smooth_torus_state(torus2)
    for t in (0.0, 1.0, 5.0):
        assert torus2.quadrature_volume(u, t) == pytest.approx(path.volume_at(t), rel=1e-12)


def test_volume_consistency_homogeneous():
    path = class_path(ProjectiveSpace(2), (3,))
    be = HomogeneousBackend(path)
    for t in (0.0, 0.4):
        assert be.quadrature_volume(be.initial_state(), t) == pytest.approx(
            path.volume_at(t), rel=1e-14
        )


# -- trace / AM-GM ---------------------------------------------------------------


def test_am_gm_gap_nonnegative(calabi_fiber, torus2):
    u = smooth_torus_state(torus2)
    assert torus2.am_gm_min_gap(u, 0.5) >= -1e-12
    rho = calabi_fiber.grid.nodes
    uc = 1e-3 * np.sin(rho) * np.exp(-0.1 * rho**2)
    assert calabi_fiber.am_gm_min_gap(uc, 0.2) >= -1e-12
    be = HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))
    assert be.am_gm_min_gap(be.initial_state(), 0.5) >= -1e-12


def test_trace_w0_positive_along_path(calabi_contraction):
    u0 = calabi_contraction.initial_state()
    for t in (0.0, 0.1, 0.17):
        phi = calabi_contraction.trace_w0(u0, t)
        assert np.all(phi > 0)


def test_eigen_ratio_range_at_start(calabi_fiber):
    lo, hi = calabi_fiber.eigen_ratio_range(calabi_fiber.initial_state(), 0.0)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)


# -- Ricci -------------------------------------------------------------------------


def test_torus_flat_ricci(torus2):
    probe = torus2.ricci_probe(torus2.initial_state(), 0.7)
    assert probe.r_min == 0.0 and probe.r_max == 0.0


@pytest.mark.parametrize("omega0", [(2, 5), (1, 1.2)])
def test_calabi_ricci_gauss_bonnet(omega0):
    # int R dV / 2 must reproduce (-K).[omega_t] from the intersection form
    path = class_path(Hirzebruch(1), omega0)
    be = CalabiBackend(path, nodes=1024, radius=20.0)
    u0 = be.initial_state()
    minus_k = tuple(-c for c in path.omega_inf)
    for t in (0.0, 0.4 * path.T):
        p, s = be.psi_derivatives(u0, t)
        g = np.log(p) + np.log(s)
        r_field = (2.0 - be.a * be.grid.d1(g)) / (be.a * p) - be.grid.d2(g) / s
        lhs = be.grid.quad(r_field * 2.0 * be.a * p * s) / 2.0
        coords_t = tuple(path.coords_at(t))
        rhs = float(intersection_pairing(path.model, minus_k, coords_t))
        assert abs(lhs - rhs) < 0.01 * max(1.0, abs(rhs))


# -- dispatch ------------------------------------------------------------------


def test_make_backend_dispatch():
    assert isinstance(make_backend(class_path(Hirzebruch(1), (2, 5)), nodes=64), CalabiBackend)
    assert isinstance(
        make_backend(class_path(TorusSeparable(2), (1, 1)), nodes_per_factor=32),
        SeparableTorusBackend,
    )
    assert isinstance(
        make_backend(class_path(ProjectiveSpace(2), (3,))), HomogeneousBackend
    )
    assert isinstance(
        make_backend(class_path(ProductOfKEFactors(((-1, 1), (0, 1))), (2, 1))),
        HomogeneousBackend,
    )
