"""Command-line interface: run / sweep / presets.

Environment overrides: KRFLAB_OUT (default output directory root) and
KRFLAB_THREADS (sweep worker count).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, KrflabError
from .runner import (
    EXIT_CONFIG,
    emit,
    exit_code_for,
    run_scenario,
    sweep_grid,
    write_sweep_csv,
)
from .scenarios import load_config, preset, preset_catalog, parse_config_text, build_scenario


def _parse_model_spec(spec: str):
    """Model spec like 'hirzebruch:a=1', 'cpn:n=2', 'torus:n=2',
    'product_ke:factors=-1:1,0:1'."""
    kind, _, rest = spec.partition(":")
    entries = {"model.kind": kind}
    if rest:
        for item in rest.split(";"):
            if not item:
                continue
            key, _, value = item.partition("=")
            entries[f"model.{key.strip()}"] = value.strip()
    from .scenarios import _build_model

    return _build_model(entries)


def _parse_grid_spec(spec: str):
    """Grid spec 'start:stop:count[,start:stop:count...]', one span per coordinate."""
    spans = []
    for item in spec.split(","):
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid span must be start:stop:count, got {item!r}")
        spans.append((float(parts[0]), float(parts[1]), int(parts[2])))
    return spans


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="krflab",
        description="Numerical laboratory for the normalized Kahler-Ricci flow "
        "reduced by symmetry to one-dimensional problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario from a config file or preset")
    p_run.add_argument("--config", help="path to a key=value config file")
    p_run.add_argument("--preset", help="preset name (alternative to --config)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument(
        "--no-refine", action="store_true",
        help="skip refinement variants (verdicts requiring stability stay unsettled)",
    )

    p_sweep = sub.add_parser("sweep", help="regime map over a grid of classes")
    p_sweep.add_argument("--model", required=True, help="model spec, e.g. hirzebruch:a=1")
    p_sweep.add_argument("--grid", required=True, help="omega0 spans, e.g. 1:3:5,2:6:5")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--flow", action="store_true", help="also integrate each point")

    sub.add_parser("presets", help="list shipped presets")

    args = parser.parse_args(argv)

    try:
        if args.command == "presets":
            print(json.dumps(preset_catalog(), indent=1))
            return 0

        if args.command == "run":
            if bool(args.config) == bool(args.preset):
                raise ConfigError("exactly one of --config / --preset is required")
            cfg = load_config(args.config) if args.config else preset(args.preset)
            out_dir = (
                args.out
                or cfg.out_dir
                or os.path.join(os.environ.get("KRFLAB_OUT", "out"), cfg.scenario_id)
            )
            art = run_scenario(cfg, refine=(not args.no_refine) and cfg.require_stability)
            emit(art, out_dir)
            code = exit_code_for(art)
            for v in art.verdicts:
                status = "pass" if v["passed"] else "FAIL"
                print(f"[{status}] {v['name']}: expected {v['expected']}, got {v['actual']}")
            print(
                f"{cfg.scenario_id}: {art.trajectory.termination} "
                f"({art.trajectory.accepted_steps} steps, {art.wall_clock:.1f}s) -> {out_dir}"
            )
            return code

        if args.command == "sweep":
            model = _parse_model_spec(args.model)
            spans = _parse_grid_spec(args.grid)
            threads = int(os.environ.get("KRFLAB_THREADS", "1"))
            rows = sweep_grid(model, spans, flow=args.flow, threads=threads)
            out_dir = args.out or os.environ.get("KRFLAB_OUT", "out")
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, "sweep.csv")
            write_sweep_csv(rows, path)
            kept = sum(1 for r in rows if not r["skipped"])
            print(f"sweep: {len(rows)} points, {kept} in the cone -> {path}")
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KrflabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
