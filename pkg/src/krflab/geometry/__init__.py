"""Reduced-geometry backends evaluating the flow's spatial operators on grids."""

from __future__ import annotations

from ..cohomology import (
    ClassPath,
    Hirzebruch,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
)
from ..errors import ConfigError
from .base import (
    DEFAULT_POSITIVITY_FLOOR,
    FieldStats,
    PositivityCheck,
    PotentialField,
    ReducedBackend,
    RicciProbe,
)
from .calabi import CalabiBackend
from .homogeneous import HomogeneousBackend, HomogeneousOracle, closed_form_homogeneous
from .torus import SeparableTorusBackend

__all__ = [
    "DEFAULT_POSITIVITY_FLOOR",
    "FieldStats",
    "PositivityCheck",
    "PotentialField",
    "ReducedBackend",
    "RicciProbe",
    "CalabiBackend",
    "HomogeneousBackend",
    "HomogeneousOracle",
    "SeparableTorusBackend",
    "closed_form_homogeneous",
    "make_backend",
]


def make_backend(path: ClassPath, **kwargs) -> ReducedBackend:
    """Pick the natural backend for the model geometry of a class path."""
    m = path.model
    if isinstance(m, Hirzebruch):
        allowed = {"radius", "nodes", "stretch", "eps_pos", "grid"}
        return CalabiBackend(path, **{k: v for k, v in kwargs.items() if k in allowed})
    if isinstance(m, TorusSeparable):
        allowed = {"nodes_per_factor", "lengths", "eps_pos"}
        return SeparableTorusBackend(
            path, **{k: v for k, v in kwargs.items() if k in allowed}
        )
    if isinstance(m, (ProjectiveSpace, ProductOfKEFactors)):
        allowed = {"eps_pos"}
        return HomogeneousBackend(
            path, **{k: v for k, v in kwargs.items() if k in allowed}
        )
    raise ConfigError(f"no backend available for {m.describe()}")
