"""Scenario execution: evolve, report, refine, verdict, emit files.

Outputs per run: `trajectory.csv` (pinned column order), `report.json`
(schema-versioned, deterministic field order; the wall-clock field is the
only non-reproducible entry) and `plot.gp-data` (column-oriented plot data).
Exit-code contract: 0 all selected verdicts pass, 2 a verdict failed,
3 solver breakdown before the stop marker without a singularity trend,
64 malformed configuration.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimates as E
from .cohomology import classify_regime, path_report
from .errors import ConfigError, DiagnosticError, KrflabError
from .flow import evolve
from .geometry import HomogeneousOracle
from .scenarios import ScenarioConfig, refined

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VERDICT_FAILED = 2
EXIT_SOLVER_BREAKDOWN = 3
EXIT_CONFIG = 64


@dataclass
class RunArtifacts:
    config: ScenarioConfig
    trajectory: object
    reports: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    limit_profile: object = None
    checks: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def backend(self):
        return self.trajectory.backend


def _run_suites(traj, suites) -> tuple[dict, dict, object]:
    reports, fits, profile = {}, {}, None
    for suite in suites:
        if suite == "essential":
            rep = E.essential_decreasing_report(traj)
            reports[rep.name] = rep
        elif suite == "volume_form":
            rep = E.volume_form_decreasing_report(traj)
            reports[rep.name] = rep
        elif suite == "inf_u":
            rep = E.inf_u_report(traj)
            reports[rep.name] = rep
        elif suite.startswith("lower_bound:"):
            mode = suite.split(":", 1)[1]
            rep = E.lower_bound_report(traj, mode)
            reports[rep.name] = rep
        elif suite == "schwarz":
            rep = E.schwarz_report(traj)
            reports[rep.name] = rep
        elif suite == "collapsing":
            for name, rep in E.collapsing_report(traj).items():
                reports[name] = rep
        elif suite == "fit":
            fit = E.fit_exponent(traj)
            fits["exponent"] = fit
        elif suite == "limit_profile":
            profile = E.limit_profile(traj)
        elif suite == "curvature":
            rep = E.curvature_probe_report(traj)
            reports[rep.name] = rep
        else:
            raise ConfigError(f"unknown report suite {suite!r}")
    return reports, fits, profile


def _oracle_error(cfg: ScenarioConfig, traj) -> float:
    backend = traj.backend
    if cfg.oracle == "homogeneous":
        oracle = HomogeneousOracle(backend.path)
        return max(abs(float(s.u[0]) - oracle.u(s.t)) for s in traj.snapshots)
    if cfg.oracle == "torus_flat":
        n = backend.path.n
        worst = 0.0
        for s in traj.snapshots:
            want = -n * (s.t - 1.0 + math.exp(-s.t))
            stats = backend.field_stats(s.u)
            worst = max(worst, abs(stats.mean - want), stats.max - stats.min)
        return worst
    raise ConfigError(f"no oracle defined for {cfg.scenario_id}")


def run_scenario(cfg: ScenarioConfig, refine: bool | None = None) -> RunArtifacts:
    """Base run plus (optionally) the refinement variants feeding verdicts."""
    t0 = time.perf_counter()
    backend = cfg.build_backend()
    traj = evolve(
        backend,
        cfg.controller,
        extra_snapshots=cfg.extra_snapshots,
        row_collector=E.diagnostics_row,
    )
    reports, fits, profile = _run_suites(traj, cfg.suites)

    do_refine = cfg.require_stability if refine is None else refine
    variants = {}
    if do_refine:
        for axis in cfg.refine_axes:
            try:
                vcfg = refined(cfg, axis)
            except ConfigError:
                continue  # structurally meaningless axis (eps at T = infinity)
            vbackend = vcfg.build_backend()
            vtraj = evolve(
                vbackend, vcfg.controller, row_collector=E.diagnostics_row
            )
            vreports, _, _ = _run_suites(vtraj, cfg.suites)
            variants[axis] = vreports
        for name, rep in reports.items():
            per_axis = {
                axis: vreports[name]
                for axis, vreports in variants.items()
                if name in vreports
            }
            E.attach_refinement(rep, per_axis)

    checks = {
        "monotone_quantity": E.monotone_quantity_check(traj)[0],
        "monotone_worst_increase": E.monotone_quantity_check(traj)[1],
        "am_gm_violations": E.am_gm_scan(traj)[0],
        "am_gm_min_gap": E.am_gm_scan(traj)[1],
        "volume_identity_max_rel_err": E.volume_identity_max_error(traj),
        "cached_derivative_identity_err": E.cached_derivative_identity_error(traj),
    }
    if cfg.oracle is not None:
        checks["oracle_max_err"] = _oracle_error(cfg, traj)

    art = RunArtifacts(
        config=cfg,
        trajectory=traj,
        reports=reports,
        fits=fits,
        limit_profile=profile,
        checks=checks,
    )
    art.verdicts = evaluate_expectations(art)
    art.wall_clock = time.perf_counter() - t0
    return art


def evaluate_expectations(art: RunArtifacts) -> list[dict]:
    cfg = art.config
    traj = art.trajectory
    out = []

    def record(name, expected, actual, passed):
        out.append(
            {"name": name, "expected": expected, "actual": actual, "passed": bool(passed)}
        )

    for kind, payload in cfg.expectations:
        if kind == "regime":
            actual = classify_regime(traj.backend.path).describe()
            record("regime", payload, actual, actual == payload)
        elif kind == "oracle_max_err":
            err = art.checks.get("oracle_max_err", math.inf)
            record("oracle_max_err", f"<= {payload}", err, err <= payload)
        elif kind == "finite_constant":
            rep = art.reports.get(payload)
            ok = rep is not None and math.isfinite(rep.constant)
            record(f"finite_constant:{payload}", "finite",
                   None if rep is None else rep.constant, ok)
        elif kind == "verdict":
            rep_name, expected = payload
            rep = art.reports.get(rep_name)
            actual = rep.verdict if rep is not None else "missing"
            ok = actual == expected
            if expected == "BoundedStable" and not cfg.require_stability:
                ok = actual in ("BoundedStable", "BoundedUnstable")
            record(f"verdict:{rep_name}", expected, actual, ok)
        elif kind == "fit_within":
            fit = art.fits.get("exponent")
            if fit is None:
                record("fit_within", payload, None, False)
            else:
                rel = abs(fit.k_hat - fit.k_reference) / max(abs(fit.k_reference), 1)
                record("fit_within", f"<= {payload}", rel, rel <= payload)
        elif kind == "stationary":
            worst = max(
                float(np.abs(s.u).max()) for s in traj.snapshots
            )
            record("stationary", f"<= {payload}", worst, worst <= payload)
        elif kind == "constant_abs_le":
            rep_name, bound = payload
            rep = art.reports.get(rep_name)
            val = abs(rep.constant) if rep is not None else math.inf
            record(f"constant_abs_le:{rep_name}", f"<= {bound}", val, val <= bound)
        elif kind == "type_one_bounded":
            rep = art.reports.get("curvature_probe")
            val = rep.extra.get("max_R_times_gap", math.inf) if rep else math.inf
            record("type_one_bounded", f"<= {payload}", val, val <= payload)
        else:
            raise ConfigError(f"unknown expectation kind {kind!r}")
    return out


# ---------------------------------------------------------------------------
# file emission


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_trajectory_csv(art: RunArtifacts, path) -> None:
    rows = E.collect_rows(art.trajectory)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(E.CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row.csv_values()) + "\n")


def write_plot_data(art: RunArtifacts, path) -> None:
    rows = E.collect_rows(art.trajectory)
    T = art.trajectory.T
    cols = [
        "t", "log_gap", "max_u", "min_u", "mean_u", "max_ut", "min_ut",
        "max_utu", "min_utu", "osc_utu", "pos_margin", "V_cohom",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(cols) + "\n")
        for r in rows:
            gap = math.log(T - r.t) if (math.isfinite(T) and T > r.t) else math.nan
            vals = [r.t, gap, r.max_u, r.min_u, r.mean_u, r.max_ut, r.min_ut,
                    r.max_utu, r.min_utu, r.osc_utu, r.pos_margin, r.V_cohom]
            fh.write(" ".join(_fmt(v) for v in vals) + "\n")


def report_dict(art: RunArtifacts) -> dict:
    traj = art.trajectory
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": art.config.echo(),
        "class_path": path_report(traj.backend.path),
        "calibration": "Omega = ansatz volume form of the t=0 reference",
        "termination": traj.termination,
        "singularity_detected": traj.singularity_detected(),
        "solver": {
            "accepted_steps": traj.accepted_steps,
            "rejected_steps": traj.rejected_steps,
            "newton_iterations": traj.newton_iterations,
            "min_positivity_margin": traj.min_positivity_margin,
            "positivity_violations": traj.positivity_violations,
            "snapshots": len(traj.snapshots),
        },
        "reports": [rep.as_dict() for _, rep in sorted(art.reports.items())],
        "fits": [fit.as_dict() for _, fit in sorted(art.fits.items())],
        "limit_profile": art.limit_profile.as_dict() if art.limit_profile else None,
        "checks": dict(art.checks),
        "verdicts": list(art.verdicts),
        "wall_clock_s": art.wall_clock,
    }


def write_report_json(art: RunArtifacts, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_dict(art), fh, indent=1, default=float)
        fh.write("\n")


def emit(art: RunArtifacts, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_csv(art, os.path.join(out_dir, "trajectory.csv"))
    write_report_json(art, os.path.join(out_dir, "report.json"))
    write_plot_data(art, os.path.join(out_dir, "plot.gp-data"))


def exit_code_for(art: RunArtifacts) -> int:
    traj = art.trajectory
    if not traj.reached_stop() and not traj.singularity_detected():
        return EXIT_SOLVER_BREAKDOWN
    if any(not v["passed"] for v in art.verdicts):
        return EXIT_VERDICT_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# parameter sweeps


def sweep_grid(model, spans, flow: bool = False, threads: int = 1) -> list[dict]:
    """Regime map over a grid of omega0 values; non-Kahler points are flagged.

    spans: list of (start, stop, count) per class coordinate.  With flow=True
    every cone point is also integrated (coarsely) and the fitted inf u is
    recorded, an empirical map of the bounded-potential conjecture.
    """
    from .cohomology import class_path, is_kahler, kahler_class
    from .flow import StepController

    axes = [np.linspace(a, b, int(n)) for a, b, n in spans]
    mesh = [arr.ravel() for arr in np.meshgrid(*axes, indexing="ij")]
    points = list(zip(*mesh))

    def one(point):
        coords = tuple(float(c) for c in point)
        row = {"omega0": coords}
        cls = kahler_class(model, coords)
        if not is_kahler(cls):
            row.update(skipped=True, reason="outside-cone")
            return row
        path = class_path(model, cls)
        regime = classify_regime(path)
        row.update(
            skipped=False,
            T=None if math.isinf(path.T) else path.T,
            k=path.k,
            regime=regime.describe(),
            walls=",".join(path.walls_hit),
        )
        if flow:
            cfg = ScenarioConfig(
                scenario_id="sweep",
                model=model,
                omega0=coords,
                grid={"nodes": 128, "radius": 12.0},
                controller=StepController(eps_stop=1e-2, step_tol=1e-5, t_max=8.0),
                suites=("inf_u",),
                require_stability=False,
            )
            try:
                backend = cfg.build_backend()
                traj = evolve(backend, cfg.controller)
                row["inf_u"] = min(
                    backend.field_stats(s.u).min for s in traj.snapshots
                )
                row["termination"] = traj.termination
            except KrflabError as exc:
                row["flow_error"] = str(exc)
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(p) for p in points]
    return rows


def write_sweep_csv(rows, path) -> None:
    import csv

    cols = ["omega0", "skipped", "T", "k", "regime", "walls", "inf_u", "termination"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            vals = []
            for c in cols:
                v = row.get(c)
                if c == "omega0":
                    v = ";".join(_fmt(x) for x in row["omega0"])
                vals.append("" if v is None else _fmt(v))
            writer.writerow(vals)
