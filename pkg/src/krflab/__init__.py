"""krflab: a desk-scale numerical laboratory for the normalized Kahler-Ricci
flow under symmetry reduction.

The package integrates the scalar potential flow du/dt = ma_log(u, t) - u on
one-dimensional reduced geometries (Calabi ansatz on Hirzebruch surfaces,
separable flat tori, homogeneous models), tracks the cohomology class path
and its singular time exactly, and measures every a-priori estimate and
asymptotic exponent the theory predicts, with refinement-stability checks.
"""

from .cohomology import (
    ClassPath,
    Hirzebruch,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
    canonical_class,
    class_path,
    classify_regime,
    collapse_exponent,
    is_kahler,
    kahler_class,
    singular_time,
    volume_polynomial,
)
from .errors import (
    ConfigError,
    DiagnosticError,
    DomainError,
    KrflabError,
    PositivityError,
    UnsupportedOperationError,
)
from .flow import FlowState, StepController, Trajectory, evolve, step
from .geometry import (
    CalabiBackend,
    HomogeneousBackend,
    HomogeneousOracle,
    SeparableTorusBackend,
    closed_form_homogeneous,
    make_backend,
)
from .scenarios import ScenarioConfig, load_config, preset, preset_names

__version__ = "0.1.0"
