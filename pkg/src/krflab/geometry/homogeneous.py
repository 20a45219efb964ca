"""Homogeneous backend: models whose reduced potential is spatially constant.

On projective space with a Fubini-Study ray, and on products of
Kahler-Einstein factors moved along their own KE classes, the symmetry group
acts transitively, so the potential never develops spatial structure:
``i ddbar u = 0`` and the Monge-Ampere logarithm depends on time alone,

    ma_log(u, t) = sum_i n_i log(c_i(t) / c_i(0)),

with ``c_i(t)`` the class-path coefficient of factor i.  The scalar flow
reduces to ``du/dt = g(t) - u``, which also furnishes the independent
quadrature oracle ``u(t) = e^{-t} int_0^t e^s g(s) ds`` used by the tests.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.integrate import quad

from ..cohomology import (
    ClassPath,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
    class_path,
)
from ..errors import DomainError, UnsupportedOperationError
from .base import (
    DEFAULT_POSITIVITY_FLOOR,
    FieldStats,
    PositivityCheck,
    PotentialField,
    ReducedBackend,
    RicciProbe,
)


def _factor_table(path: ClassPath):
    """Per-factor (dim, c0, c_inf) triples of the class path."""
    m = path.model
    if isinstance(m, ProjectiveSpace):
        dims = (m.n,)
    elif isinstance(m, (ProductOfKEFactors, TorusSeparable)):
        dims = tuple(d for _, d in m.factors) if isinstance(m, ProductOfKEFactors) else (1,) * m.n
    else:
        raise UnsupportedOperationError(
            f"{m.describe()} has no homogeneous reduction"
        )
    return tuple(
        (d, float(o0), float(oi))
        for d, o0, oi in zip(dims, path.omega0, path.omega_inf)
    )


class HomogeneousBackend(ReducedBackend):
    """Constant-field backend; the single unknown is the value of u."""

    def __init__(self, path: ClassPath, eps_pos: float = DEFAULT_POSITIVITY_FLOOR):
        if isinstance(path.model, TorusSeparable):
            raise UnsupportedOperationError(
                "use the separable torus backend for TorusSeparable models"
            )
        self.path = path
        self.eps_pos = eps_pos
        self.factors = _factor_table(path)
        self._c0 = np.array([c0 for _, c0, _ in self.factors])
        self._cinf = np.array([ci for _, _, ci in self.factors])
        self._dims = np.array([d for d, _, _ in self.factors], dtype=float)
        # n! / prod(n_i!) times prod c_i^{n_i}, matching the volume polynomial
        self._multinomial = math.factorial(path.n) / math.prod(
            math.factorial(int(d)) for d in self._dims
        )

    @property
    def num_unknowns(self) -> int:
        return 1

    def coefficients(self, t: float) -> np.ndarray:
        return self._cinf + math.exp(-t) * (self._c0 - self._cinf)

    def g_of_t(self, t: float) -> float:
        c = self.coefficients(t)
        if np.any(c <= 0):
            raise DomainError(f"class path leaves the cone at t={t:.6g}")
        return float(self._dims @ (np.log(c) - np.log(self._c0)))

    def g_prime(self, t: float) -> float:
        c = self.coefficients(t)
        cdot = -math.exp(-t) * (self._c0 - self._cinf)
        return float(self._dims @ (cdot / c))

    def reference_potential(self, t: float) -> PotentialField:
        if t >= self.path.T:
            raise DomainError(f"t={t} is past the singular time T={self.path.T:.6g}")
        return PotentialField(values=self.coefficients(t), t=t)

    def ma_log(self, u: np.ndarray, t: float) -> np.ndarray:
        return np.full(1, self.g_of_t(t))

    def laplacian(self, u, t, v) -> np.ndarray:
        return np.zeros_like(v)

    def trace_class(self, coords, u, t) -> np.ndarray:
        b = np.array([float(c) for c in coords])
        return np.full(1, float(self._dims @ (b / self.coefficients(t))))

    def positivity(self, u, t) -> PositivityCheck:
        ratios = self.coefficients(t) / self._c0
        margin = float(ratios.min())
        return PositivityCheck(ok=margin > self.eps_pos, margin=margin)

    def quadrature_volume(self, u, t) -> float:
        c = self.coefficients(t)
        return float(self._multinomial * np.prod(c**self._dims))

    def ricci_probe(self, u, t) -> RicciProbe:
        # the reduced metric is sum c_i(t) omega_{KE,i}; Ricci stays sum (-K_i) omega_i
        c = self.coefficients(t)
        ratios = -self._cinf / c
        r = float(self._dims @ ratios)
        return RicciProbe(min_ratio=float(ratios.min()), r_min=r, r_max=r)

    def field_stats(self, vec) -> FieldStats:
        v = float(vec[0])
        return FieldStats(min=v, max=v, mean=v, argmin_coord=0.0)

    def eigen_ratio_range(self, u, t):
        ratios = self.coefficients(t) / self._c0
        return float(ratios.min()), float(ratios.max())

    def am_gm_min_gap(self, u, t) -> float:
        c = self.coefficients(t)
        phi = float(self._dims @ (self._c0 / c))
        ratio = float(np.prod((self._c0 / c) ** self._dims))
        return phi - self.path.n * ratio ** (1.0 / self.path.n)

    def omega_integral_exp(self, vec) -> float:
        return float(self._multinomial * np.prod(self._c0**self._dims)) * math.exp(
            float(vec[0])
        )

    def dense_field(self, vec) -> np.ndarray:
        return np.asarray(vec)

    def value_at_argmin(self, u, v) -> float:
        return float(v[0])

    def schwarz_composite_max(self, u, ut, t, c2_values) -> np.ndarray:
        phi = float(self._dims @ (self._c0 / self.coefficients(t)))
        x_comp = math.expm1(t) * float(ut[0]) - float(u[0]) - self.path.n * t
        return np.array([math.log(phi) + c2 * x_comp for c2 in c2_values])

    def sandwich_samples(self, u, ut, t):
        ratios = self.coefficients(t) / self._c0
        m = math.exp(t) * float(ut[0]) - t
        return [(np.array([r]), np.array([m])) for r in ratios]

    def linear_step_solver(self, u, t, gamma) -> Callable[[np.ndarray], np.ndarray]:
        return lambda rhs: rhs.copy()

    def describe(self) -> dict:
        out = super().describe()
        out["factors"] = [list(f) for f in self.factors]
        return out


class HomogeneousOracle:
    """Independent solution of du/dt = g(t) - u, u(0) = 0.

    Closed forms where available (flat scaling: u = -n (t - 1 + e^{-t});
    stationary paths: u = 0), otherwise adaptive quadrature of
    e^{-t} int_0^t e^s g(s) ds at ~1e-12 tolerance.
    """

    def __init__(self, path: ClassPath):
        self.path = path
        self.factors = _factor_table(path)
        self._dims = np.array([d for d, _, _ in self.factors], dtype=float)
        self._c0 = np.array([c0 for _, c0, _ in self.factors])
        self._cinf = np.array([ci for _, _, ci in self.factors])
        self._stationary = bool(np.all(self._c0 == self._cinf))
        self._pure_scaling = bool(np.all(self._cinf == 0.0))

    def g(self, t: float) -> float:
        c = self._cinf + math.exp(-t) * (self._c0 - self._cinf)
        if np.any(c <= 0):
            raise DomainError(f"class path leaves the cone at t={t:.6g}")
        return float(self._dims @ (np.log(c) - np.log(self._c0)))

    def g_prime(self, t: float) -> float:
        c = self._cinf + math.exp(-t) * (self._c0 - self._cinf)
        cdot = -math.exp(-t) * (self._c0 - self._cinf)
        return float(self._dims @ (cdot / c))

    def u(self, t: float) -> float:
        if t == 0.0:
            return 0.0
        if self._stationary:
            return 0.0
        n = float(self._dims.sum())
        if self._pure_scaling:
            return -n * (t - 1.0 + math.exp(-t))
        val, _ = quad(
            lambda s: math.exp(s - t) * self.g(s), 0.0, t,
            epsabs=1e-13, epsrel=1e-13, limit=400,
        )
        return val

    def u_t(self, t: float) -> float:
        return self.g(t) - self.u(t)

    def u_tt(self, t: float) -> float:
        return self.g_prime(t) - self.u_t(t)


def closed_form_homogeneous(model, omega0, t: float) -> float:
    """Spatially constant solution of the reduced flow at time t.

    Supports homogeneous models and the flat separable torus; other models
    raise UnsupportedOperationError.
    """
    if not isinstance(
        model, (ProjectiveSpace, ProductOfKEFactors, TorusSeparable)
    ):
        raise UnsupportedOperationError(
            f"{model.describe()} has no spatially constant solution"
        )
    path = class_path(model, omega0)
    if t >= path.T:
        raise DomainError(f"t={t} is past the singular time T={path.T:.6g}")
    return HomogeneousOracle(path).u(t)
