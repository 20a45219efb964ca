"""Inequality and asymptotics harness over computed trajectories.

Every report fits its constant as the empirical supremum over the trajectory
(so a finite value on one run is vacuous by itself), records the margin
series, and leaves the verdict at BoundedUnstable until refinement deltas
are attached: BoundedStable additionally requires < 10% drift of the fitted
constant under dt halving, grid doubling and eps halving.  Divergence to
-infinity is certified by the strongest finite test: the last-snapshot max
below every rung of a threshold ladder and monotone decrease across the
final decade of snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticError
from .flow import Trajectory, compute_utt

VERDICT_BOUNDED_STABLE = "BoundedStable"
VERDICT_BOUNDED_UNSTABLE = "BoundedUnstable"
VERDICT_DIVERGES = "Diverges"
VERDICT_MEASURED = "Measured"  # diagnostic-only series, never gated

STABILITY_THRESHOLD = 0.10
DIVERGENCE_LADDER = (1.0, 2.0, 4.0)
SUBLEVEL_LADDER = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
SCHWARZ_C2_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)

CSV_COLUMNS = [
    "t", "dt", "min_u", "max_u", "mean_u", "U", "x_min", "min_ut", "max_ut",
    "max_et_utt_plus_ut", "max_phi", "V_cohom", "max_utu", "min_utu",
    "osc_utu", "max_composite", "pos_margin",
]


@dataclass
class DiagnosticsRow:
    """Per-snapshot scalar diagnostics (the CSV row, plus a few extras)."""

    t: float
    dt: float
    min_u: float
    max_u: float
    mean_u: float
    U: float  # min_X u, tracked as the Lipschitz function of the Ricci chain
    x_min: float
    min_ut: float
    max_ut: float
    max_et_utt_plus_ut: float
    max_phi: float
    V_cohom: float
    max_utu: float
    min_utu: float
    osc_utu: float
    max_composite: float  # max of (e^t - 1) du/dt - u - n t
    pos_margin: float
    # extras (not in the pinned CSV column set)
    mean_ut: float = math.nan
    mean_utu: float = math.nan
    dU_dt: float = math.nan  # du/dt at the argmin of u
    omega_exp_utu: float = math.nan  # int e^{ut+u} Omega (volume identity check)

    def csv_values(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class InequalityReport:
    name: str
    constant: float
    margins: list  # (t, slack) series; slack >= 0 where the bound holds
    verdict: str = VERDICT_BOUNDED_UNSTABLE
    extra: dict = field(default_factory=dict)
    refinement_deltas: dict = field(default_factory=dict)
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "constant": self.constant,
            "verdict": self.verdict,
            "extra": dict(self.extra),
            "refinement_deltas": dict(self.refinement_deltas),
            "margins": [[t, v] for t, v in self.margins],
            "notes": self.notes,
        }


@dataclass
class AsymptoticFit:
    target: str
    model: str
    k_hat: float
    window: tuple[float, float]
    residual: float
    k_reference: int

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "model": self.model,
            "k_hat": self.k_hat,
            "window": list(self.window),
            "residual": self.residual,
            "k_reference": self.k_reference,
        }


def diagnostics_row(backend, state, dt) -> DiagnosticsRow:
    u, ut, t = state.u, state.ut, state.t
    s_u = backend.field_stats(u)
    s_ut = backend.field_stats(ut)
    utt = compute_utt(backend, u, ut, t)
    mask = backend.second_derivative_mask(u, ut, t)
    if mask is None:
        max_acc = backend.field_stats(utt + ut).max
    else:
        max_acc = float((utt + ut)[mask].max())
    s_phi = backend.field_stats(backend.trace_w0(u, t))
    utu = ut + u
    s_utu = backend.field_stats(utu)
    n = backend.path.n
    comp = math.expm1(t) * ut - u
    s_comp = backend.field_stats(comp)
    return DiagnosticsRow(
        t=t,
        dt=dt,
        min_u=s_u.min,
        max_u=s_u.max,
        mean_u=s_u.mean,
        U=s_u.min,
        x_min=s_u.argmin_coord,
        min_ut=s_ut.min,
        max_ut=s_ut.max,
        max_et_utt_plus_ut=math.exp(t) * max_acc,
        max_phi=s_phi.max,
        V_cohom=backend.path.volume_at(t),
        max_utu=s_utu.max,
        min_utu=s_utu.min,
        osc_utu=s_utu.max - s_utu.min,
        max_composite=s_comp.max - n * t,
        pos_margin=backend.positivity(u, t).margin,
        mean_ut=s_ut.mean,
        mean_utu=s_utu.mean,
        dU_dt=backend.value_at_argmin(u, ut),
        omega_exp_utu=backend.omega_integral_exp(utu),
    )


def collect_rows(traj: Trajectory) -> list[DiagnosticsRow]:
    """Rows for every snapshot, cached on the trajectory."""
    if not traj.rows or not isinstance(traj.rows[0], DiagnosticsRow):
        traj.rows = [
            diagnostics_row(traj.backend, s, d)
            for s, d in zip(traj.snapshots, traj.snapshot_dts)
        ]
    return traj.rows


def _require_rows(traj, minimum=10):
    rows = collect_rows(traj)
    if len(rows) < minimum:
        raise DiagnosticError(f"need at least {minimum} snapshots, got {len(rows)}")
    return rows


def _final_window(traj) -> list[int]:
    """Indices of the final decade of snapshots (log(T - t) for finite T)."""
    rows = collect_rows(traj)
    T = traj.T
    if math.isfinite(T):
        gap_last = T - rows[-1].t
        return [i for i, r in enumerate(rows) if T - r.t <= 10.0 * gap_last * (1 + 1e-9)]
    t_max = rows[-1].t
    return [i for i, r in enumerate(rows) if r.t >= 0.5 * t_max - 1e-12]


# ---------------------------------------------------------------------------
# section-2 decreasing estimates


def essential_decreasing_report(traj) -> InequalityReport:
    """du/dt <= (n t + C)/(e^t - 1), fitted as C = sup (e^t - 1) du/dt - n t."""
    rows = _require_rows(traj)
    n = traj.backend.path.n
    vals = [(r.t, math.expm1(r.t) * r.max_ut - n * r.t) for r in rows]
    c = max(v for _, v in vals)
    return InequalityReport(
        name="essential_decreasing",
        constant=c,
        margins=[(t, c - v) for t, v in vals],
    )


def volume_form_decreasing_report(traj) -> InequalityReport:
    """d2u/dt2 + du/dt <= C e^{-t}; corollary du/dt <= C' e^{-t}."""
    rows = _require_rows(traj)
    vals = [(r.t, r.max_et_utt_plus_ut) for r in rows]
    c = max(v for _, v in vals)
    c_cor = max(math.exp(r.t) * r.max_ut for r in rows)
    return InequalityReport(
        name="volume_form_decreasing",
        constant=c,
        margins=[(t, c - v) for t, v in vals],
        extra={"corollary_ut": c_cor},
    )


def inf_u_report(traj) -> InequalityReport:
    """The conjecture probe: C = -inf u over the trajectory."""
    rows = _require_rows(traj, minimum=2)
    c = -min(r.min_u for r in rows)
    return InequalityReport(
        name="inf_u",
        constant=c,
        margins=[(r.t, r.min_u + c) for r in rows],
    )


# ---------------------------------------------------------------------------
# lower bounds (semi-ample / divisor / non-collapsing)

_SEMI_AMPLE_FLAGS = {
    "fiber-wall-semiample-fibration",
    "section-wall-semiample-contraction",
    "total-collapse",
}


def lower_bound_report(traj, mode: str) -> InequalityReport:
    from .cohomology import classify_regime

    backend = traj.backend
    regime = classify_regime(backend.path)
    rows = _require_rows(traj, minimum=2)
    T = traj.T

    if mode == "semi_ample":
        if not (math.isfinite(T) and regime.limit_flag in _SEMI_AMPLE_FLAGS):
            raise DiagnosticError(
                f"semi-ample lower bound needs a finite-T semi-ample limit class, "
                f"regime is {regime.describe()}"
            )
        vals = []
        for s in traj.snapshots:
            combo = -math.expm1(s.t - T) * s.ut + s.u  # (1 - e^{t-T}) du/dt + u
            vals.append((s.t, backend.field_stats(combo).min))
        c = -min(v for _, v in vals)
        c_u = -min(r.min_u for r in rows)
        return InequalityReport(
            name="lower_bound_semi_ample",
            constant=c,
            margins=[(t, v + c) for t, v in vals],
            extra={"inf_u": -c_u, "ut_scale": c},
            notes="representative potential f = 0 (ansatz limit class is non-negative)",
        )

    if mode == "divisor":
        try:
            w = backend.divisor_log_sigma()
        except Exception as exc:
            raise DiagnosticError(f"divisor mode unsupported: {exc}")
        if not math.isfinite(T):
            raise DiagnosticError("divisor lower bound needs finite T")
        vals = [
            (s.t, float((w - s.u).max()))  # C >= log|sigma|^2 - u pointwise
            for s in traj.snapshots
        ]
        c = max(v for _, v in vals)
        return InequalityReport(
            name="lower_bound_divisor",
            constant=c,
            margins=[(t, c - v) for t, v in vals],
        )

    if mode == "noncollapsing":
        if regime.k != 0:
            raise DiagnosticError(
                f"non-collapsing bound needs [omega_T]^n > 0, regime is {regime.describe()}"
            )
        vals = []
        for s, r in zip(traj.snapshots, rows):
            ratio = backend.omega_integral_exp(s.u) / r.V_cohom
            vals.append((s.t, ratio))
        c = min(v for _, v in vals)
        sup_max_u = min(r.max_u for r in rows)
        return InequalityReport(
            name="lower_bound_noncollapsing",
            constant=c,
            margins=[(t, v - c) for t, v in vals],
            extra={"inf_max_u": sup_max_u},
            notes="int e^u Omega >= c V(t); bounded below iff u does not sink uniformly",
        )

    raise DiagnosticError(f"unknown lower-bound mode {mode!r}")


# ---------------------------------------------------------------------------
# parabolic Schwarz and the metric sandwich


def _sandwich_feasible(samples, c) -> float:
    """Smallest slack of the two-sided bound at constant c (>= 0 iff holds)."""
    worst = math.inf
    with np.errstate(over="ignore", under="ignore"):
        for ratios, m in samples:
            up = c * np.exp(-c * m) - ratios
            lo = ratios - np.exp(c * m) / c
            worst = min(worst, float(up.min()), float(lo.min()))
    return worst


def schwarz_report(traj) -> InequalityReport:
    """sup log(phi) + C2 ((e^t-1) du/dt - u - nt) scanned over C2, plus the
    pointwise two-sided metric comparison against omega_0."""
    rows = _require_rows(traj)
    backend = traj.backend
    c2_grid = np.array(SCHWARZ_C2_GRID)
    sups = np.full(len(c2_grid), -math.inf)
    per_snapshot = []
    samples_cache = []
    for s in traj.snapshots:
        vals = backend.schwarz_composite_max(s.u, s.ut, s.t, c2_grid)
        per_snapshot.append(vals)
        sups = np.maximum(sups, vals)
        samples_cache.append(backend.sandwich_samples(s.u, s.ut, s.t))
    best = int(np.argmin(sups))
    c2_star = float(c2_grid[best])
    c_star = float(sups[best])

    # smallest C >= 1 making the sandwich hold at every node of every snapshot
    lo_c, hi_c = 1.0, 1e8
    if all(_sandwich_feasible(sm, hi_c) >= 0 for sm in samples_cache):
        for _ in range(80):
            mid = math.sqrt(lo_c * hi_c)
            if all(_sandwich_feasible(sm, mid) >= 0 for sm in samples_cache):
                hi_c = mid
            else:
                lo_c = mid
        c_sandwich = hi_c
    else:
        c_sandwich = math.inf
    margins = [
        (s.t, _sandwich_feasible(sm, c_sandwich))
        for s, sm in zip(traj.snapshots, samples_cache)
    ]
    return InequalityReport(
        name="schwarz",
        constant=c_star,
        margins=margins,
        extra={
            "C2": c2_star,
            "sandwich_C": c_sandwich,
            "scan": {float(c2): float(v) for c2, v in zip(c2_grid, sups)},
        },
    )


def sandwich_holds_everywhere(traj, c: float) -> bool:
    backend = traj.backend
    return all(
        _sandwich_feasible(backend.sandwich_samples(s.u, s.ut, s.t), c) >= -1e-12
        for s in traj.snapshots
    )


# ---------------------------------------------------------------------------
# collapsing-case estimates


def _divergence_verdict(series, newton_tol, ladder=DIVERGENCE_LADDER):
    """Certify -> -infinity: below every -A rung at the end, and monotone
    decreasing across the final decade."""
    last = series[-1][1]
    below = all(last < -a for a in ladder)
    final = [v for _, v in series]
    monotone = all(b <= a + 10 * newton_tol for a, b in zip(final, final[1:]))
    return VERDICT_DIVERGES if below and monotone else VERDICT_BOUNDED_UNSTABLE


def _log_reference(traj, t):
    k = traj.backend.path.k
    T = traj.T
    return k * math.log(T - t) if math.isfinite(T) else -k * t


def collapsing_report(traj) -> dict[str, InequalityReport]:
    """Divergence certificates, the sampled-S bound, the two-sided log bounds,
    and the measured strategy diagnostics (oscillation and mean deviations)."""
    from .cohomology import classify_regime

    backend = traj.backend
    regime = classify_regime(backend.path)
    if regime.k < 1:
        raise DiagnosticError(
            f"collapsing estimates need a collapsing regime, got {regime.describe()}"
        )
    rows = _require_rows(traj)
    ctl = traj.controller
    window = _final_window(traj)
    T = traj.T
    n = backend.path.n
    out: dict[str, InequalityReport] = {}

    series_utu = [(rows[i].t, rows[i].max_utu) for i in window]
    out["ut_plus_u_diverges"] = InequalityReport(
        name="ut_plus_u_diverges",
        constant=series_utu[-1][1],
        margins=series_utu,
        verdict=_divergence_verdict(series_utu, ctl.newton_tol),
        extra={"ladder": list(DIVERGENCE_LADDER)},
    )
    series_comp = [(rows[i].t, rows[i].max_composite + n * rows[i].t) for i in window]
    out["composite_diverges"] = InequalityReport(
        name="composite_diverges",
        constant=series_comp[-1][1],
        margins=series_comp,
        verdict=_divergence_verdict(series_comp, ctl.newton_tol),
        extra={"ladder": list(DIVERGENCE_LADDER)},
    )

    if math.isfinite(T):
        s_grid = [0.0, 0.25 * T, 0.5 * T, 0.75 * T]
        cs = {}
        for s_val in s_grid:
            sup = -math.inf
            for snap in traj.snapshots:
                if snap.t <= s_val:
                    continue
                combo = math.expm1(snap.t - s_val) * snap.ut - snap.u
                sup = max(sup, backend.field_stats(combo).max)
            cs[f"S={s_val:.6f}"] = sup
        out["s_grid_bound"] = InequalityReport(
            name="s_grid_bound",
            constant=max(cs.values()),
            margins=[],
            extra=cs,
            notes="C(S) = sup_{t>S} max_X (e^{t-S}-1) du/dt - u; finite per S",
        )

    ell = [_log_reference(traj, r.t) for r in rows]
    c_max_side = max(l - r.max_utu for l, r in zip(ell, rows))
    c_min_side = max(r.min_utu - l for l, r in zip(ell, rows))
    b_max_side = max(r.max_utu - l for l, r in zip(ell, rows))
    b_min_side = max(l - r.min_utu for l, r in zip(ell, rows))
    out["two_sided_log_bound"] = InequalityReport(
        name="two_sided_log_bound",
        constant=max(c_max_side, c_min_side),
        margins=[
            (r.t, min(r.max_utu - l + c_max_side, l + c_min_side - r.min_utu))
            for l, r in zip(ell, rows)
        ],
        extra={
            "max_side": c_max_side,
            "min_side": c_min_side,
            "max_upper": b_max_side,
            "min_lower": b_min_side,
            "k": backend.path.k,
        },
        notes="max_X(ut+u) >= k log(T-t) - C and min_X(ut+u) <= k log(T-t) + C",
    )

    out["strategy_measured"] = InequalityReport(
        name="strategy_measured",
        constant=max(r.osc_utu for r in rows),
        margins=[(r.t, r.osc_utu) for r in rows],
        verdict=VERDICT_MEASURED,
        extra={
            "osc_vs_minus_log": [
                [r.t, r.osc_utu, -_log_reference(traj, r.t) / max(backend.path.k, 1)]
                for r in rows
            ],
            "mean_dev_ut": [[r.t, r.max_ut - r.mean_ut] for r in rows],
            "green_u": [[r.t, r.max_u - r.mean_u] for r in rows],
        },
        notes="measured strategy diagnostics, never assumed",
    )
    return out


def fit_exponent(traj) -> AsymptoticFit:
    """Finite T: fit max_X(ut+u) ~ c0 + k log(T-t) on the final decade;
    T = inf: fit mean_X u ~ c0 - k t on the second half."""
    from .cohomology import classify_regime

    regime = classify_regime(traj.backend.path)
    if regime.k < 1:
        raise DiagnosticError("exponent fit needs a collapsing regime")
    rows = collect_rows(traj)
    window = _final_window(traj)
    if len(window) < 10:
        raise DiagnosticError(f"fit window has {len(window)} snapshots, need >= 10")
    T = traj.T
    if math.isfinite(T):
        xs = np.array([math.log(T - rows[i].t) for i in window])
        ys = np.array([rows[i].max_utu for i in window])
        target, model = "max_X(du/dt + u)", "c0 + k log(T - t)"
        slope_sign = 1.0
    else:
        xs = np.array([rows[i].t for i in window])
        ys = np.array([rows[i].mean_u for i in window])
        target, model = "mean_X u", "c0 - k t"
        slope_sign = -1.0
    coef = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, xs) - ys) ** 2)))
    return AsymptoticFit(
        target=target,
        model=model,
        k_hat=slope_sign * float(coef[0]),
        window=(float(rows[window[0]].t), float(rows[window[-1]].t)),
        residual=resid,
        k_reference=traj.backend.path.k,
    )


# ---------------------------------------------------------------------------
# limit profile and sublevel sets


@dataclass
class LimitProfile:
    thresholds: tuple
    field: np.ndarray  # dense sampling of ut + u + C e^{-t} at the last snapshot
    coords: np.ndarray | None
    fractions: dict  # threshold -> fraction of nodes in the last sublevel set
    nested_in_threshold: bool
    nested_in_time: bool
    nesting_violations: int
    monotone_constant: float

    def as_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "fractions": {str(k): v for k, v in self.fractions.items()},
            "nested_in_threshold": self.nested_in_threshold,
            "nested_in_time": self.nested_in_time,
            "nesting_violations": self.nesting_violations,
            "monotone_constant": self.monotone_constant,
        }


def limit_profile(traj, thresholds=SUBLEVEL_LADDER) -> LimitProfile:
    """Monotone approximant W = du/dt + u + C e^{-t} of the limit profile and
    its sublevel sets {W <= -A}; the sets must be nested increasing in t."""
    backend = traj.backend
    rows = _require_rows(traj)
    c = volume_form_decreasing_report(traj).constant
    tol = 10 * traj.controller.newton_tol
    dense = [
        backend.dense_field(s.ut + s.u) + c * math.exp(-s.t) for s in traj.snapshots
    ]
    last = dense[-1]
    fractions = {a: float(np.mean(last <= -a)) for a in thresholds}
    nested_thresh = all(
        fractions[a2] <= fractions[a1] + 1e-15
        for a1, a2 in zip(thresholds, thresholds[1:])
    )
    violations = 0
    for a in thresholds:
        for w_prev, w_next in zip(dense, dense[1:]):
            # a node inside {W <= -A} must stay inside (up to solver slack)
            violations += int(np.any(w_next[w_prev <= -a] > -a + tol))
    return LimitProfile(
        thresholds=tuple(thresholds),
        field=last,
        coords=backend.dense_coords(),
        fractions=fractions,
        nested_in_threshold=nested_thresh,
        nested_in_time=violations == 0,
        nesting_violations=violations,
        monotone_constant=c,
    )


# ---------------------------------------------------------------------------
# curvature probes


def curvature_probe_report(traj) -> InequalityReport:
    """Ricci and scalar-curvature series plus the U(t) differential bound
    dU/dt >= k log(T-t) - C; Type-I data R (T-t) for finite T.  Contrapositive
    implications are evaluated at the refinement stage."""
    backend = traj.backend
    rows = _require_rows(traj, minimum=2)
    T = traj.T
    min_ratio = math.inf
    r_max_scaled = -math.inf
    series = []
    for s in traj.snapshots:
        probe = backend.ricci_probe(s.u, s.t)
        min_ratio = min(min_ratio, probe.min_ratio)
        scaled = probe.r_max * (T - s.t) if math.isfinite(T) else probe.r_max
        r_max_scaled = max(r_max_scaled, scaled)
        series.append((s.t, probe.min_ratio, scaled))
    k = backend.path.k
    du = [r.dU_dt for r in rows]
    ell = [_log_reference(traj, r.t) for r in rows]
    c_u_diff = max(k * l - d for l, d in zip(ell, du))
    inf_u = min(r.min_u for r in rows)
    return InequalityReport(
        name="curvature_probe",
        constant=c_u_diff,
        margins=[(r.t, d - (k * l - c_u_diff)) for r, d, l in zip(rows, du, ell)],
        extra={
            "min_ricci_ratio": min_ratio,
            "max_R_times_gap": r_max_scaled,
            "inf_u": inf_u,
            "series": [[t, a, b] for t, a, b in series],
        },
        notes="dU/dt >= k log(T-t) - C fitted on the measured U(t); implications only",
    )


# ---------------------------------------------------------------------------
# property checks shared by tests and the runner


def monotone_quantity_check(traj) -> tuple[bool, float]:
    """max_X u + C e^{-t} non-increasing with C = sup e^t du/dt (the paper's
    'u - C e^{-t} is decreasing', our C carrying the opposite sign)."""
    rows = _require_rows(traj, minimum=2)
    c = max(math.exp(r.t) * r.max_ut for r in rows)
    vals = [r.max_u + c * math.exp(-r.t) for r in rows]
    tol = 10 * traj.controller.newton_tol
    worst = max((b - a) for a, b in zip(vals, vals[1:]))
    return worst <= tol, worst


def am_gm_scan(traj) -> tuple[int, float]:
    """Count AM-GM trace violations beyond fp slack across all snapshots."""
    violations = 0
    worst = math.inf
    for s in traj.snapshots:
        gap = traj.backend.am_gm_min_gap(s.u, s.t)
        worst = min(worst, gap)
        if gap < -1e-12:
            violations += 1
    return violations, worst


def volume_identity_max_error(traj) -> float:
    """max relative deviation of int e^{ut+u} Omega from the cohomological V(t)."""
    rows = _require_rows(traj, minimum=2)
    return max(abs(r.omega_exp_utu / r.V_cohom - 1.0) for r in rows)


def cached_derivative_identity_error(traj) -> float:
    """sup over snapshots of || ut - (ma_log(u,t) - u) ||_inf."""
    backend = traj.backend
    worst = 0.0
    for s in traj.snapshots:
        worst = max(
            worst, float(np.abs(s.ut - (backend.ma_log(s.u, s.t) - s.u)).max())
        )
    return worst


def attach_refinement(
    report: InequalityReport,
    variants: dict[str, InequalityReport],
    threshold: float = STABILITY_THRESHOLD,
    floor: float = 1e-6,
) -> InequalityReport:
    """Fill refinement deltas and finalize the verdict."""
    deltas = {}
    for axis, rep in variants.items():
        deltas[axis] = abs(rep.constant - report.constant) / max(abs(report.constant), floor)
    report.refinement_deltas = deltas
    if report.verdict == VERDICT_DIVERGES:
        return report
    if report.verdict == VERDICT_MEASURED:
        return report
    if deltas and all(d < threshold for d in deltas.values()):
        report.verdict = VERDICT_BOUNDED_STABLE
    else:
        report.verdict = VERDICT_BOUNDED_UNSTABLE
    return report
