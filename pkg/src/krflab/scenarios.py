"""Scenario configuration: the line-oriented config grammar and the presets.

Config files are `key = value` lines with dotted sections; `#` starts a
comment.  Values are parsed as booleans, numbers, or comma-separated lists;
runs are fully determined by the config (no stochastic state anywhere).
The grammar is documented in the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .cohomology import (
    Hirzebruch,
    ModelGeometry,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
    class_path,
    classify_regime,
    is_kahler,
    kahler_class,
)
from .errors import ConfigError
from .flow import StepController
from .geometry import make_backend


@dataclass
class ScenarioConfig:
    scenario_id: str
    model: ModelGeometry
    omega0: tuple
    grid: dict = field(default_factory=dict)  # nodes/radius/stretch/length
    controller: StepController = field(default_factory=StepController)
    eps_pos: float = 1e-12
    suites: tuple = ()
    expectations: tuple = ()  # (kind, payload) pairs evaluated by the runner
    refine_axes: tuple = ("dt", "grid", "eps")
    require_stability: bool = True
    oracle: str | None = None  # homogeneous | torus_flat
    out_dir: str | None = None
    preset: str | None = None
    extra_snapshots: tuple = ()

    def build_path(self):
        cls = kahler_class(self.model, self.omega0)
        if not is_kahler(cls):
            raise ConfigError(
                f"omega0 = {self.omega0} is not Kahler on {self.model.describe()}"
            )
        return class_path(self.model, cls)

    def build_backend(self):
        path = self.build_path()
        opts = {"eps_pos": self.eps_pos}
        if isinstance(self.model, Hirzebruch):
            opts.update(
                nodes=int(self.grid.get("nodes", 512)),
                radius=float(self.grid.get("radius", 20.0)),
                stretch=float(self.grid.get("stretch", 0.0)),
            )
        elif isinstance(self.model, TorusSeparable):
            opts.update(nodes_per_factor=int(self.grid.get("nodes", 256)))
            if "length" in self.grid:
                opts.update(lengths=[float(self.grid["length"])] * self.model.n)
        return make_backend(path, **opts)

    def echo(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "preset": self.preset,
            "model": self.model.describe(),
            "omega0": [float(c) for c in self.omega0],
            "grid": dict(self.grid),
            "controller": {
                "dt_init": self.controller.dt_init,
                "dt_min": self.controller.dt_min,
                "dt_max": self.controller.dt_max,
                "newton_tol": self.controller.newton_tol,
                "max_newton_iters": self.controller.max_newton_iters,
                "step_tol": self.controller.step_tol,
                "eps_stop": self.controller.eps_stop,
                "t_max": self.controller.t_max,
            },
            "eps_pos": self.eps_pos,
            "suites": list(self.suites),
            "refine_axes": list(self.refine_axes),
            "require_stability": self.require_stability,
            "oracle": self.oracle,
        }


# ---------------------------------------------------------------------------
# raw key=value parsing


def parse_config_text(text: str) -> dict:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def _as_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}")


def _as_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")


def _as_bool(key, value):
    v = value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _as_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def _build_model(entries: dict) -> ModelGeometry:
    kind = entries.get("model.kind")
    if kind is None:
        raise ConfigError("missing model.kind")
    kind = kind.lower()
    if kind == "hirzebruch":
        return Hirzebruch(_as_int("model.a", entries.get("model.a", "1")))
    if kind in ("projective_space", "projective", "cpn"):
        return ProjectiveSpace(_as_int("model.n", entries.get("model.n", "2")))
    if kind in ("product_ke", "product"):
        raw = entries.get("model.factors")
        if raw is None:
            raise ConfigError("product_ke model needs model.factors (sign:dim pairs)")
        factors = []
        for item in _as_list(raw):
            if ":" not in item:
                raise ConfigError(f"model.factors: expected sign:dim, got {item!r}")
            s, d = item.split(":", 1)
            factors.append((_as_int("model.factors", s), _as_int("model.factors", d)))
        return ProductOfKEFactors(tuple(factors))
    if kind == "torus":
        return TorusSeparable(_as_int("model.n", entries.get("model.n", "2")))
    raise ConfigError(f"unknown model.kind {kind!r}")


_CONTROLLER_KEYS = {
    "dt_init": float, "dt_min": float, "dt_max": float, "newton_tol": float,
    "max_newton_iters": int, "step_tol": float, "eps_stop": float,
    "t_max": float, "dt_t_fraction": float,
    "snapshots_per_octave": int, "uniform_early_snapshots": int,
    "infinite_snapshots": int,
}

_KNOWN_KEYS = {
    "preset", "scenario.id", "model.kind", "model.a", "model.n", "model.factors",
    "omega0", "grid.nodes", "grid.radius", "grid.stretch", "grid.length",
    "positivity.floor", "reports.suites", "verdicts.require_stability",
    "refine.axes", "output.dir",
}


def build_scenario(entries: dict) -> ScenarioConfig:
    """Assemble a scenario from parsed entries, preset defaults first."""
    unknown = [
        k for k in entries
        if k not in _KNOWN_KEYS and not (
            k.startswith("controller.") and k.split(".", 1)[1] in _CONTROLLER_KEYS
        )
    ]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    preset_name = entries.get("preset")
    if preset_name is not None:
        base = preset(preset_name)
    else:
        base = None

    model = _build_model(entries) if "model.kind" in entries else (
        base.model if base else None
    )
    if model is None:
        raise ConfigError("missing model.kind (and no preset given)")
    if "omega0" in entries:
        omega0 = tuple(_as_float("omega0", v) for v in _as_list(entries["omega0"]))
    elif base is not None:
        omega0 = base.omega0
    else:
        raise ConfigError("missing omega0")

    grid = dict(base.grid) if base else {}
    for src, dst in (("grid.nodes", "nodes"), ("grid.radius", "radius"),
                     ("grid.stretch", "stretch"), ("grid.length", "length")):
        if src in entries:
            grid[dst] = _as_float(src, entries[src]) if dst != "nodes" else _as_int(src, entries[src])

    ctl_kwargs = {}
    if base is not None:
        c = base.controller
        ctl_kwargs = {k: getattr(c, k) for k in _CONTROLLER_KEYS}
    for key, value in entries.items():
        if key.startswith("controller."):
            name = key.split(".", 1)[1]
            conv = _CONTROLLER_KEYS[name]
            if name == "step_tol" and value.lower() in ("none", "off"):
                ctl_kwargs[name] = None
            else:
                ctl_kwargs[name] = conv(_as_float(key, value)) if conv is int else _as_float(key, value)
    controller = StepController(**ctl_kwargs)

    cfg = ScenarioConfig(
        scenario_id=entries.get("scenario.id", base.scenario_id if base else "run"),
        model=model,
        omega0=omega0,
        grid=grid,
        controller=controller,
        eps_pos=_as_float("positivity.floor", entries["positivity.floor"])
        if "positivity.floor" in entries else (base.eps_pos if base else 1e-12),
        suites=tuple(_as_list(entries["reports.suites"]))
        if "reports.suites" in entries else (base.suites if base else ("essential", "volume_form", "inf_u")),
        expectations=base.expectations if base else (),
        refine_axes=tuple(_as_list(entries["refine.axes"]))
        if "refine.axes" in entries else (base.refine_axes if base else ("dt", "grid", "eps")),
        require_stability=_as_bool(
            "verdicts.require_stability", entries["verdicts.require_stability"]
        ) if "verdicts.require_stability" in entries else (base.require_stability if base else True),
        oracle=base.oracle if base else None,
        out_dir=entries.get("output.dir", base.out_dir if base else None),
        preset=preset_name,
        extra_snapshots=base.extra_snapshots if base else (),
    )
    cfg.build_path()  # validates omega0 against the cone
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return build_scenario(parse_config_text(fh.read()))


# ---------------------------------------------------------------------------
# presets: each maps to a documented regime and the suites it must pass


def _preset_defs() -> dict:
    tight = dict(newton_tol=1e-12)
    return {
        "homog-cp2-fano": dict(
            model=ProjectiveSpace(2),
            omega0=(3.0,),
            controller=StepController(eps_stop=1e-3, **tight),
            suites=("essential", "volume_form", "inf_u", "lower_bound:semi_ample",
                    "schwarz", "collapsing", "fit", "limit_profile", "curvature"),
            oracle="homogeneous",
            expectations=(
                ("regime", "FiniteCollapsing(2), total-collapse"),
                ("oracle_max_err", 1e-8),
                ("finite_constant", "essential_decreasing"),
                ("finite_constant", "volume_form_decreasing"),
                ("verdict", ("ut_plus_u_diverges", "Diverges")),
                ("verdict", ("composite_diverges", "Diverges")),
            ),
            refine_axes=("dt", "eps"),
            doc="Fano ray on CP^2 (lambda = 1): total collapse at T = ln 2; "
                "closed-form oracle for u, du/dt, d2u/dt2.",
        ),
        "fano-total-collapse": dict(
            model=ProjectiveSpace(2),
            omega0=(1.5,),
            controller=StepController(eps_stop=1e-3, **tight),
            suites=("essential", "volume_form", "inf_u", "lower_bound:semi_ample",
                    "collapsing", "fit", "curvature"),
            oracle="homogeneous",
            expectations=(
                ("regime", "FiniteCollapsing(2), total-collapse"),
                ("oracle_max_err", 1e-8),
                ("type_one_bounded", 10.0),
                ("constant_abs_le", ("inf_u", 3.0)),
            ),
            refine_axes=("dt", "eps"),
            doc="Fano ray at lambda = 1/2 (T = ln 1.5): Type-I scalar curvature "
                "with bounded potential, the Case-2 consistency probe.",
        ),
        "f1-contraction": dict(
            model=Hirzebruch(1),
            omega0=(1.0, 1.2),
            # R = 40: the contraction's left tail has a 1/b0(t) correlation
            # length, and R = 20 still carries ~15% truncation error in inf u
            grid={"nodes": 512, "radius": 40.0},
            controller=StepController(eps_stop=1e-3),
            suites=("essential", "volume_form", "inf_u", "lower_bound:semi_ample",
                    "lower_bound:divisor", "lower_bound:noncollapsing",
                    "schwarz", "limit_profile", "curvature"),
            expectations=(
                ("regime", "FiniteNonCollapsing, section-wall-semiample-contraction"),
                ("verdict", ("lower_bound_semi_ample", "BoundedStable")),
                ("verdict", ("schwarz", "BoundedStable")),
                ("finite_constant", "inf_u"),
            ),
            refine_axes=("dt", "grid", "eps", "radius"),
            doc="(-1)-section contraction on the first Hirzebruch surface: "
                "finite-time non-collapsing, bounded potential (conjecture probe).",
        ),
        "f1-fiber-collapse": dict(
            model=Hirzebruch(1),
            omega0=(2.0, 5.0),
            grid={"nodes": 512, "radius": 20.0},
            controller=StepController(eps_stop=1e-3, step_tol=1e-6),
            suites=("essential", "volume_form", "inf_u", "lower_bound:semi_ample",
                    "lower_bound:divisor", "schwarz", "collapsing", "fit",
                    "limit_profile", "curvature"),
            expectations=(
                ("regime", "FiniteCollapsing(1), fiber-wall-semiample-fibration"),
                ("verdict", ("ut_plus_u_diverges", "Diverges")),
                ("verdict", ("composite_diverges", "Diverges")),
                ("verdict", ("schwarz", "BoundedStable")),
                ("fit_within", 0.15),
            ),
            refine_axes=("dt", "grid", "eps"),
            doc="Fiber collapse on the first Hirzebruch surface: finite-time "
                "collapsing with k = 1; the section-3.1 divergences must certify.",
        ),
        "torus-infinite-collapse": dict(
            model=TorusSeparable(2),
            omega0=(1.0, 1.0),
            grid={"nodes": 256},
            controller=StepController(eps_stop=1e-3, t_max=20.0, **tight),
            suites=("essential", "volume_form", "inf_u", "collapsing", "fit"),
            oracle="torus_flat",
            expectations=(
                ("regime", "InfiniteCollapsing(2)"),
                ("oracle_max_err", 1e-8),
                ("fit_within", 0.05),
                ("verdict", ("ut_plus_u_diverges", "Diverges")),
            ),
            refine_axes=("dt", "grid"),
            doc="Flat torus, pure scaling ray: infinite-time total collapse with "
                "u = -2(t - 1 + e^{-t}) exactly.",
        ),
        "product-ke-fixed": dict(
            model=ProductOfKEFactors(((-1, 1), (-1, 1))),
            omega0=(1.0, 1.0),
            controller=StepController(eps_stop=1e-3, t_max=20.0, **tight),
            suites=("essential", "volume_form", "inf_u",
                    "lower_bound:noncollapsing", "schwarz", "curvature"),
            oracle="homogeneous",
            expectations=(
                ("regime", "InfiniteNonCollapsing"),
                ("stationary", 1e-10),
                ("constant_abs_le", ("essential_decreasing", 1e-9)),
                ("constant_abs_le", ("volume_form_decreasing", 1e-9)),
            ),
            refine_axes=("dt",),
            doc="Product of hyperbolic curves at the KE class: the flow fixed "
                "point; every fitted constant must vanish.",
        ),
        "product-hyp-x-elliptic": dict(
            model=ProductOfKEFactors(((-1, 1), (0, 1))),
            omega0=(2.0, 1.0),
            controller=StepController(eps_stop=1e-3, t_max=20.0, **tight),
            suites=("essential", "volume_form", "inf_u", "collapsing", "fit"),
            oracle="homogeneous",
            expectations=(
                ("regime", "InfiniteCollapsing(1)"),
                ("oracle_max_err", 1e-8),
                ("fit_within", 0.05),
            ),
            refine_axes=("dt",),
            doc="Hyperbolic curve x elliptic curve: infinite-time fiber collapse "
                "with k = 1 and mean-u slope -1 (the k-fibration example).",
        ),
    }


def preset(name: str) -> ScenarioConfig:
    defs = _preset_defs()
    if name not in defs:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(defs))}"
        )
    d = defs[name]
    return ScenarioConfig(
        scenario_id=name,
        model=d["model"],
        omega0=tuple(d["omega0"]),
        grid=dict(d.get("grid", {})),
        controller=d.get("controller", StepController()),
        suites=tuple(d.get("suites", ())),
        expectations=tuple(d.get("expectations", ())),
        refine_axes=tuple(d.get("refine_axes", ("dt",))),
        oracle=d.get("oracle"),
        preset=name,
    )


def preset_names() -> list[str]:
    return sorted(_preset_defs())


def preset_catalog() -> list[dict]:
    out = []
    for name in preset_names():
        cfg = preset(name)
        regime = classify_regime(cfg.build_path())
        out.append(
            {
                "name": name,
                "model": cfg.model.describe(),
                "omega0": [float(c) for c in cfg.omega0],
                "regime": regime.describe(),
                "suites": list(cfg.suites),
                "doc": _preset_defs()[name]["doc"],
            }
        )
    return out


def refined(cfg: ScenarioConfig, axis: str) -> ScenarioConfig:
    """One refinement variant: dt halving, grid doubling, eps halving, 2R."""
    ctl = cfg.controller
    if axis == "dt":
        new_ctl = replace(
            ctl,
            dt_init=ctl.dt_init / 2,
            dt_max=ctl.dt_max / 2,
            step_tol=None if ctl.step_tol is None else ctl.step_tol / 4,
        )
        return replace(cfg, controller=new_ctl, scenario_id=f"{cfg.scenario_id}+dt")
    if axis == "grid":
        grid = dict(cfg.grid)
        grid["nodes"] = 2 * int(grid.get("nodes", 512 if isinstance(cfg.model, Hirzebruch) else 256))
        return replace(cfg, grid=grid, scenario_id=f"{cfg.scenario_id}+grid")
    if axis == "eps":
        T = cfg.build_path().T
        if not math.isfinite(T):
            raise ConfigError("eps refinement has no meaning for T = infinity")
        new_ctl = replace(ctl, eps_stop=ctl.eps_stop / 2)
        return replace(cfg, controller=new_ctl, scenario_id=f"{cfg.scenario_id}+eps")
    if axis == "radius":
        grid = dict(cfg.grid)
        grid["radius"] = 2.0 * float(grid.get("radius", 20.0))
        grid["nodes"] = 2 * int(grid.get("nodes", 512))  # keep h fixed
        return replace(cfg, grid=grid, scenario_id=f"{cfg.scenario_id}+radius")
    raise ConfigError(f"unknown refinement axis {axis!r}")
