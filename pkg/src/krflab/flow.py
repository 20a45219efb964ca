"""Time integration of the scalar potential flow du/dt = ma_log(u, t) - u.

The stepper is an implicit exponential Euler scheme: writing the flow as
(e^t u)' = e^t ma_log(u, t), one step of size dt solves

    v = e^{-dt} u + int_t^{t+dt} e^{s-t-dt} ma_log(v, s) ds

for v by damped Newton, with the s-integral evaluated by Gauss-Legendre
quadrature and the reduced Laplacian at (v, t+dt) as the Jacobian core,
J = I - (1 - e^{-dt}) Laplacian (plus the backend's constraint rows).  The
scheme is first order on generic states, unconditionally keeps the stiff
degeneration near T implicit, and integrates the state-independent part of
ma_log exactly, so spatially constant solutions (homogeneous models, flat
torus data) are reproduced to quadrature accuracy rather than O(dt).

Local error is controlled by step doubling; snapshots approach a finite
singular time geometrically (quarter-octave ladder in T - t) so that
log(T - t) diagnostics are sampled uniformly in log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, PositivityError
from .geometry.base import ReducedBackend

TERMINATION_REACHED_STOP = "ReachedStop"
TERMINATION_POSITIVITY = "PositivityBreakdown"
TERMINATION_DT_UNDERFLOW = "DtUnderflow"
TERMINATION_NEWTON = "NewtonDiverged"

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


class StepFailure(Exception):
    """Internal control flow: a raw step could not be completed."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason  # "positivity" | "newton"


@dataclass
class StepController:
    """Adaptive stepping parameters.

    step_tol is the step-doubling local error tolerance; None disables the
    doubling control and takes single raw steps of the current dt (used for
    fixed-step runs and convergence-order measurements).  eps_stop is the
    halt offset for finite T (the run stops at T - eps_stop); t_max bounds
    infinite-horizon runs.
    """

    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 0.5
    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    step_tol: float | None = 1e-7
    eps_stop: float = 1e-3
    t_max: float = 20.0
    dt_t_fraction: float = 0.1  # cap dt <= fraction * (T - t) for finite T
    max_steps: int = 500_000
    # snapshot schedule
    snapshots_per_octave: int = 4
    uniform_early_snapshots: int = 8
    infinite_snapshots: int = 40

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigError(
                f"need 0 < dt_min <= dt_init <= dt_max, got "
                f"({self.dt_min}, {self.dt_init}, {self.dt_max})"
            )
        if self.eps_stop <= 0:
            raise ConfigError("eps_stop must be positive")


@dataclass
class FlowState:
    """Potential and its cached exact time derivative at one instant."""

    t: float
    u: np.ndarray
    ut: np.ndarray  # always ma_log(u, t) - u, never a time difference


@dataclass
class Trajectory:
    backend: ReducedBackend
    controller: StepController
    snapshots: list[FlowState]
    snapshot_dts: list[float]
    termination: str
    accepted_steps: int = 0
    rejected_steps: int = 0
    newton_iterations: int = 0
    min_positivity_margin: float = math.inf
    positivity_violations: int = 0  # on accepted states; must stay 0
    rows: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def T(self) -> float:
        return self.backend.path.T

    def reached_stop(self) -> bool:
        return self.termination == TERMINATION_REACHED_STOP

    def singularity_detected(self) -> bool:
        """Breakdown before the stop marker with margins trending to zero."""
        if self.reached_stop():
            return False
        margins = [
            self.backend.positivity(s.u, s.t).margin for s in self.snapshots[-3:]
        ]
        return len(margins) >= 2 and margins[-1] < 1e-3 and margins[-1] <= min(margins)


def compute_ut(backend: ReducedBackend, u: np.ndarray, t: float) -> np.ndarray:
    """Exact du/dt from the equation itself (no time differencing)."""
    return backend.ma_log(u, t) - u


def compute_utt(
    backend: ReducedBackend, u: np.ndarray, ut: np.ndarray, t: float
) -> np.ndarray:
    """d2u/dt2 = Laplacian(ut) - e^{-t} <omega_tilde, omega_0 - omega_inf> - ut."""
    path = backend.path
    diff = tuple(float(a) - float(b) for a, b in zip(path.omega0, path.omega_inf))
    return (
        backend.laplacian(u, t, ut)
        - math.exp(-t) * backend.trace_class(diff, u, t)
        - ut
    )


def _raw_step(backend, ctl, u, t, dt, ut_hint=None):
    """One implicit exponential-Euler solve; returns (v, newton_iters, margin).

    Newton stops on the increment norm ||J^{-1} r|| < newton_tol (u-scale).
    The raw residual rows carry the Monge-Ampere log, whose floating-point
    noise is amplified by 1/psi'' at the ansatz tails; the Jacobian carries
    the same factor, so the increment measures the actual state error.
    """
    t_new = t + dt
    s_nodes = t + 0.5 * dt * (_GAUSS_X + 1.0)
    w_eff = 0.5 * dt * _GAUSS_W * np.exp(s_nodes - t_new)
    decay = math.exp(-dt)
    gamma = -math.expm1(-dt)

    def residual(v):
        acc = v - decay * u - backend.step_nonlinearity(v, s_nodes, w_eff)
        bc = backend.constraint_residual(v, t_new)
        if bc is not None:
            idx, vals = bc
            acc[idx] = vals
        return acc

    v = u if ut_hint is None else u + dt * ut_hint
    try:
        r = residual(v)
    except PositivityError:
        if ut_hint is None:
            raise StepFailure("positivity", f"state not positivity-valid over [{t}, {t_new}]")
        v = u
        try:
            r = residual(v)
        except PositivityError:
            raise StepFailure("positivity", f"state not positivity-valid over [{t}, {t_new}]")
    rnorm = float(np.abs(r).max())

    iters = 0
    while rnorm >= ctl.newton_tol:
        if iters >= ctl.max_newton_iters:
            raise StepFailure("newton", f"no convergence in {iters} iterations (|r|={rnorm:.3e})")
        solver = backend.linear_step_solver(v, t_new, gamma)
        delta = solver(-r)
        iters += 1
        if float(np.abs(delta).max()) < ctl.newton_tol:
            # converged in state space; take the full correction if valid
            v_try = v + delta
            try:
                r_try = residual(v_try)
            except PositivityError:
                break
            v, r = v_try, r_try
            break
        alpha = 1.0
        stalled = False
        while True:
            v_try = v + alpha * delta
            try:
                r_try = residual(v_try)
                rnorm_try = float(np.abs(r_try).max())
            except PositivityError:
                rnorm_try = math.inf
            if rnorm_try < rnorm * (1.0 - 0.25 * alpha) or rnorm_try < ctl.newton_tol:
                v, r, rnorm = v_try, r_try, rnorm_try
                break
            alpha *= 0.5
            if alpha < 2.0**-10:
                stalled = True
                break
        if stalled:
            # the residual floor is set by fp noise of the Monge-Ampere log at
            # the ansatz tails; a stall with a negligible pending increment
            # means the state itself is converged
            if float(np.abs(delta).max()) < 30.0 * ctl.newton_tol:
                break
            raise StepFailure("newton", "line search stalled")

    check = backend.positivity(v, t_new)
    if not check.ok:
        raise StepFailure("positivity", f"accepted candidate violates floor at t={t_new:.6g}")
    return v, iters, check.margin


def _attempt(backend, ctl, u, t, dt, ut_hint):
    """Raw step or doubled pair; returns (u_new, error_estimate, iters, margin)."""
    if ctl.step_tol is None:
        v, iters, margin = _raw_step(backend, ctl, u, t, dt, ut_hint)
        return v, None, iters, margin
    v_full, it0, _ = _raw_step(backend, ctl, u, t, dt, ut_hint)
    v_h1, it1, _ = _raw_step(backend, ctl, u, t, 0.5 * dt, ut_hint)
    v_half, it2, margin = _raw_step(backend, ctl, v_h1, t + 0.5 * dt, 0.5 * dt, None)
    est = float(np.abs(v_full - v_half).max())
    return v_half, est, it0 + it1 + it2, margin


def step(state: FlowState, controller: StepController, backend: ReducedBackend) -> FlowState:
    """One accepted adaptive step from `state` (dt starts at controller.dt_init)."""
    dt = min(controller.dt_init, controller.dt_max)
    T = backend.path.T
    while True:
        if math.isfinite(T):
            dt = min(dt, max(controller.dt_min, controller.dt_t_fraction * (T - state.t)))
        try:
            u_new, est, _, _ = _attempt(backend, controller, state.u, state.t, dt, state.ut)
        except StepFailure:
            if dt <= controller.dt_min * (1 + 1e-9):
                raise
            dt = max(controller.dt_min, 0.5 * dt)
            continue
        if est is not None and est > controller.step_tol:
            if dt <= controller.dt_min * (1 + 1e-9):
                raise StepFailure("newton", "dt underflow in step()")
            dt = max(controller.dt_min, 0.5 * dt)
            continue
        t_new = state.t + dt
        return FlowState(t=t_new, u=u_new, ut=compute_ut(backend, u_new, t_new))


def snapshot_schedule(
    T: float,
    controller: StepController,
    extra: tuple[float, ...] = (),
) -> np.ndarray:
    """Snapshot times: uniform early part plus a geometric approach to T.

    Finite T: the ladder T - t_j = T * 2^{-j/per_octave} (uniform in
    log(T - t)) down to the stop marker T - eps_stop, together with a
    uniform grid on [0, T/2].  Infinite T: uniform on [0, t_max].
    """
    if math.isinf(T):
        times = set(np.linspace(0.0, controller.t_max, controller.infinite_snapshots))
        stop = controller.t_max
        times.update(t for t in extra if 0.0 <= t <= stop)
    else:
        stop = T - controller.eps_stop
        if stop <= 0:
            raise ConfigError(f"eps_stop {controller.eps_stop} >= T {T}")
        times = {0.0, stop}
        times.update(np.linspace(0.0, T / 2, controller.uniform_early_snapshots + 1))
        j = controller.snapshots_per_octave
        while True:
            gap = T * 2.0 ** (-j / controller.snapshots_per_octave)
            if gap <= controller.eps_stop:
                break
            times.add(T - gap)
            j += 1
        times.update(t for t in extra if 0.0 <= t <= stop)
    out = sorted(times)
    dedup = [out[0]]
    scale = max(1.0, abs(stop))
    for t in out[1:]:
        if t - dedup[-1] > 1e-12 * scale:
            dedup.append(t)
    dedup[-1] = stop if abs(dedup[-1] - stop) <= 1e-12 * scale else dedup[-1]
    return np.array(dedup)


def evolve(
    backend: ReducedBackend,
    controller: StepController | None = None,
    snapshot_times=None,
    extra_snapshots: tuple[float, ...] = (),
    row_collector=None,
) -> Trajectory:
    """Integrate from u(.,0) = 0 along the snapshot schedule.

    Halts at T - eps_stop (finite T) or t_max; a positivity breakdown before
    the stop marker terminates the run with the corresponding reason (the
    report layer decides whether that is a numerically reached singularity).
    """
    ctl = controller or StepController()
    T = backend.path.T
    if snapshot_times is None:
        schedule = snapshot_schedule(T, ctl, tuple(extra_snapshots))
    else:
        schedule = np.asarray(sorted(set(float(t) for t in snapshot_times)))
    u = backend.initial_state()
    t = 0.0
    ut = compute_ut(backend, u, 0.0)
    traj = Trajectory(
        backend=backend,
        controller=ctl,
        snapshots=[FlowState(0.0, u.copy(), ut.copy())],
        snapshot_dts=[min(ctl.dt_init, ctl.dt_max)],
        termination=TERMINATION_REACHED_STOP,
    )
    m0 = backend.positivity(u, 0.0)
    traj.min_positivity_margin = m0.margin
    if not m0.ok:
        traj.positivity_violations += 1

    dt = min(ctl.dt_init, ctl.dt_max)
    if math.isfinite(T):
        dt = min(dt, T / 1000.0)
    last_dt = dt
    done = False
    for target in schedule[1:]:
        if done:
            break
        while t < target * (1 - 1e-15) - 1e-300:
            if traj.accepted_steps + traj.rejected_steps > ctl.max_steps:
                raise ConfigError("max_steps exceeded; controller settings inconsistent")
            dt_eff = min(dt, target - t)
            if math.isfinite(T):
                dt_eff = min(dt_eff, max(ctl.dt_min, ctl.dt_t_fraction * (T - t)))
            try:
                u_new, est, iters, margin = _attempt(backend, ctl, u, t, dt_eff, ut)
            except StepFailure as fail:
                traj.rejected_steps += 1
                if dt_eff <= ctl.dt_min * (1 + 1e-9):
                    traj.termination = (
                        TERMINATION_POSITIVITY
                        if fail.reason == "positivity"
                        else TERMINATION_NEWTON
                    )
                    done = True
                    break
                dt = max(ctl.dt_min, 0.5 * dt_eff)
                continue
            traj.newton_iterations += iters
            if est is not None and est > ctl.step_tol:
                traj.rejected_steps += 1
                if dt_eff <= ctl.dt_min * (1 + 1e-9):
                    traj.termination = TERMINATION_DT_UNDERFLOW
                    done = True
                    break
                dt = max(ctl.dt_min, dt_eff * max(0.2, 0.75 * math.sqrt(ctl.step_tol / est)))
                continue
            # accept
            t_new = t + dt_eff
            if abs(t_new - target) <= 1e-12 * max(1.0, abs(target)):
                t_new = float(target)
            u, t = u_new, t_new
            ut = compute_ut(backend, u, t)
            traj.accepted_steps += 1
            last_dt = dt_eff
            traj.min_positivity_margin = min(traj.min_positivity_margin, margin)
            if est is not None:
                grown = dt_eff * min(1.5, max(0.4, 0.75 * math.sqrt(ctl.step_tol / max(est, 1e-300))))
                # a landing-clamped step must not shrink the preferred dt
                clamped = dt_eff < 0.999 * dt
                dt = min(ctl.dt_max, max(grown, dt) if clamped else grown)
        else:
            traj.snapshots.append(FlowState(t, u.copy(), ut.copy()))
            traj.snapshot_dts.append(last_dt)
    if row_collector is not None:
        traj.rows = [
            row_collector(backend, s, d)
            for s, d in zip(traj.snapshots, traj.snapshot_dts)
        ]
    return traj


def integrate_fixed(backend, ctl, u0, t0, horizon, dt):
    """Fixed-step raw integration over [t0, t0+horizon]; no error control."""
    n = max(1, round(horizon / dt))
    h = horizon / n
    u, t = u0.copy(), t0
    ctl = replace(ctl, step_tol=None)
    for _ in range(n):
        u, _, _ = _raw_step(backend, ctl, u, t, h, None)
        t += h
    return u


def temporal_convergence_order(backend, ctl, u0, t0, horizon, dt) -> float:
    """Richardson measurement of the scheme order from a fixed smooth state."""
    u_a = integrate_fixed(backend, ctl, u0, t0, horizon, dt)
    u_b = integrate_fixed(backend, ctl, u0, t0, horizon, dt / 2)
    u_c = integrate_fixed(backend, ctl, u0, t0, horizon, dt / 4)
    e1 = float(np.abs(u_a - u_b).max())
    e2 = float(np.abs(u_b - u_c).max())
    return math.log2(e1 / e2)
