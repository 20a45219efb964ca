"""Integrator contracts: exact time derivatives, oracle matches, order, schedule."""

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
)
from krflab.errors import ConfigError
from krflab.flow import (
    FlowState,
    StepController,
    compute_ut,
    compute_utt,
    evolve,
    snapshot_schedule,
    step,
    temporal_convergence_order,
)
from krflab.geometry import (
    CalabiBackend,
    HomogeneousBackend,
    HomogeneousOracle,
    SeparableTorusBackend,
)


@pytest.fixture(scope="module")
def cp2_backend():
    return HomogeneousBackend(class_path(ProjectiveSpace(2), (3,)))


@pytest.fixture(scope="module")
def cp2_traj(cp2_backend):
    ctl = StepController(eps_stop=1e-3, newton_tol=1e-12)
    return evolve(cp2_backend, ctl, extra_snapshots=(math.log(2) - 0.1,))


@pytest.fixture(scope="module")
def torus_backend():
    return SeparableTorusBackend(class_path(TorusSeparable(2), (1, 1)), nodes_per_factor=64)


def test_compute_ut_is_zero_at_start(cp2_backend):
    u0 = cp2_backend.initial_state()
    assert np.all(compute_ut(cp2_backend, u0, 0.0) == 0.0)


def test_compute_ut_matches_ode_right_side(cp2_traj, cp2_backend):
    oracle = HomogeneousOracle(cp2_backend.path)
    for s in cp2_traj.snapshots:
        want = oracle.g(s.t) - float(s.u[0])
        assert s.ut[0] == pytest.approx(want, abs=1e-10)


def test_compute_utt_ke_fixed_point():
    be = HomogeneousBackend(class_path(ProductOfKEFactors(((-1, 1), (-1, 1))), (1, 1)))
    u0 = be.initial_state()
    ut = compute_ut(be, u0, 3.0)
    assert np.all(ut == 0.0)
    assert np.all(compute_utt(be, u0, ut, 3.0) == 0.0)


def test_compute_utt_matches_oracle(cp2_traj, cp2_backend):
    oracle = HomogeneousOracle(cp2_backend.path)
    for s in cp2_traj.snapshots[1:]:
        utt = compute_utt(cp2_backend, s.u, s.ut, s.t)
        assert utt[0] == pytest.approx(oracle.u_tt(s.t), abs=1e-8)


def test_evolve_homogeneous_matches_oracle(cp2_traj, cp2_backend):
    oracle = HomogeneousOracle(cp2_backend.path)
    errs = [abs(float(s.u[0]) - oracle.u(s.t)) for s in cp2_traj.snapshots]
    assert max(errs) < 1e-8


def test_single_step_oracle_example(cp2_backend):
    # one accepted step of dt = 1e-3 from t = 0 stays within 1e-6 of the oracle
    ctl = StepController(dt_init=1e-3, eps_stop=1e-3, newton_tol=1e-12)
    u0 = cp2_backend.initial_state()
    s0 = FlowState(0.0, u0, compute_ut(cp2_backend, u0, 0.0))
    s1 = step(s0, ctl, cp2_backend)
    oracle = HomogeneousOracle(cp2_backend.path)
    assert abs(float(s1.u[0]) - oracle.u(s1.t)) < 1e-6


def test_ke_fixed_point_is_scheme_fixed_point():
    be = HomogeneousBackend(class_path(ProductOfKEFactors(((-1, 1), (-1, 1))), (1, 1)))
    ctl = StepController(dt_init=0.05, step_tol=None, t_max=5.0)
    s = FlowState(0.0, be.initial_state(), compute_ut(be, be.initial_state(), 0.0))
    for _ in range(40):
        s = step(s, ctl, be)
        assert float(np.abs(s.u).max()) == 0.0


def test_evolve_torus_closed_form(torus_backend):
    ctl = StepController(eps_stop=1e-3, t_max=20.0, newton_tol=1e-12)
    traj = evolve(torus_backend, ctl)
    assert traj.termination == "ReachedStop"
    assert len(traj.snapshots) == 40
    for s in traj.snapshots:
        want = -2.0 * (s.t - 1.0 + math.exp(-s.t))
        stats = torus_backend.field_stats(s.u)
        assert abs(stats.mean - want) < 1e-8
        assert stats.max - stats.min == 0.0  # flat fields stay bitwise flat


def test_evolve_determinism(torus_backend):
    ctl = StepController(eps_stop=1e-3, t_max=5.0, infinite_snapshots=11)
    t1 = evolve(torus_backend, ctl)
    t2 = evolve(torus_backend, ctl)
    for a, b in zip(t1.snapshots, t2.snapshots):
        assert a.t == b.t
        assert np.array_equal(a.u, b.u) and np.array_equal(a.ut, b.ut)


def test_temporal_order_is_one_on_calabi():
    path = class_path(Hirzebruch(1), (1, 1.2))
    be = CalabiBackend(path, nodes=128, radius=15.0)
    ctl = StepController(eps_stop=1e-3)
    u0 = be.initial_state()
    # advance to a generic state, then Richardson-measure over [t0, t0 + T/8]
    from krflab.flow import integrate_fixed

    T = path.T
    u = integrate_fixed(be, ctl, u0, 0.0, T / 10, T / 200)
    order = temporal_convergence_order(be, ctl, u, T / 10, horizon=T / 8, dt=T / 40)
    assert 0.8 <= order <= 1.2


def test_spatial_convergence_second_order():
    # snapshot potentials at N and 2N agree to O(h^2) on smooth windows
    path = class_path(Hirzebruch(1), (1, 1.2))
    ctl = StepController(eps_stop=1e-2, step_tol=1e-8)
    sols = {}
    for n in (128, 256, 512):
        be = CalabiBackend(path, nodes=n, radius=15.0)
        traj = evolve(be, ctl, snapshot_times=(0.0, path.T / 2))
        sols[n] = (be.grid.nodes, traj.snapshots[-1].u)
    x_c = sols[128][0]
    u_fine = np.interp(x_c, sols[512][0], sols[512][1])
    errs = []
    for n in (128, 256):
        x, u = sols[n]
        ui = np.interp(x_c, x, u)
        errs.append(np.abs(ui - u_fine)[4:-4].max())
    assert errs[0] / errs[1] > 2.5  # ~4 for clean O(h^2)


def test_snapshot_schedule_finite():
    ctl = StepController(eps_stop=1e-3)
    T = math.log(2)
    sched = snapshot_schedule(T, ctl)
    assert sched[0] == 0.0
    assert sched[-1] == pytest.approx(T - 1e-3)
    assert np.all(np.diff(sched) > 0)
    # >= 10 snapshots inside the last decade of log(T - t)
    gaps = T - sched
    in_last_decade = np.sum(gaps <= 10 * gaps[-1] * (1 + 1e-12))
    assert in_last_decade >= 10


def test_snapshot_schedule_infinite():
    ctl = StepController(t_max=20.0, infinite_snapshots=40)
    sched = snapshot_schedule(math.inf, ctl)
    assert len(sched) == 40
    assert sched[0] == 0.0 and sched[-1] == 20.0


def test_snapshot_schedule_extra_times():
    ctl = StepController(eps_stop=1e-3)
    T = math.log(2)
    want = T - 0.1
    sched = snapshot_schedule(T, ctl, extra=(want,))
    assert np.any(np.abs(sched - want) < 1e-15)


def test_controller_validation():
    with pytest.raises(ConfigError):
        StepController(dt_init=1e-3, dt_min=1e-2)
    with pytest.raises(ConfigError):
        StepController(eps_stop=-1.0)


def test_evolve_positivity_bookkeeping(torus_backend):
    ctl = StepController(eps_stop=1e-3, t_max=5.0, infinite_snapshots=11)
    traj = evolve(torus_backend, ctl)
    assert traj.positivity_violations == 0
    assert traj.min_positivity_margin > 0
    assert len(traj.snapshot_dts) == len(traj.snapshots)


def test_cached_derivative_vs_time_difference():
    # the cached ut is the true trajectory slope, checked by a finite difference
    path = class_path(Hirzebruch(1), (2, 5))
    be = CalabiBackend(path, nodes=128, radius=15.0)
    ctl = StepController(eps_stop=1e-2)
    from krflab.flow import integrate_fixed

    u = integrate_fixed(be, ctl, be.initial_state(), 0.0, 0.1, 1e-3)
    t = 0.1
    h = 1e-4
    u_p = integrate_fixed(be, ctl, u, t, h, h / 4)
    fd = (u_p - u) / h
    ut = compute_ut(be, u, t)
    # first-order-in-h agreement away from the boundary rows
    assert np.abs(fd - ut)[2:-2].max() < 0.05
