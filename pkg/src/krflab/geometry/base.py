"""Backend contract for the symmetry-reduced geometries.

A backend evaluates everything the flow and the estimate harness need on a
grid: the reduced Monge-Ampere logarithm ``log((omega_t + i ddbar u)^n /
Omega)``, the flow Laplacian, traces against fixed classes, discrete Kahler
positivity, Ricci data and volume quadrature.  The reference volume form
``Omega`` is calibrated to the t = 0 ansatz metric, so ``ma_log(0, 0) == 0``
exactly; the calibration choice is recorded in run reports.

State layout: a backend works on a flat ``float64`` vector of
``num_unknowns`` values.  For the Calabi backend this is the potential
perturbation on the rho-grid; for the separable torus it is the
concatenation of the per-factor periodic fields (the represented function on
X is the sum of the factor parts); for homogeneous backends it is a single
scalar.  Reductions over X (min/max/mean, AM-GM gaps, eigen-coefficient
ranges) are provided by each backend so that separable layouts are reduced
correctly.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ..cohomology import ClassPath
from ..errors import PositivityError, UnsupportedOperationError

DEFAULT_POSITIVITY_FLOOR = 1e-12


class PositivityCheck(NamedTuple):
    ok: bool
    margin: float  # min eigen-coefficient relative to the t=0 calibration value


class RicciProbe(NamedTuple):
    min_ratio: float  # min over nodes/channels of Ricci eigen-coefficient vs metric
    r_min: float  # scalar curvature extremes
    r_max: float


class FieldStats(NamedTuple):
    min: float
    max: float
    mean: float  # weighted by the calibration volume form Omega
    argmin_coord: float


@dataclass
class PotentialField:
    """A reduced potential sampled on the backend's unknown layout."""

    values: np.ndarray
    t: float


class ReducedBackend(ABC):
    """Evaluation backend over one class path; immutable after construction."""

    path: ClassPath
    eps_pos: float

    @property
    def n(self) -> int:
        return self.path.n

    @property
    @abstractmethod
    def num_unknowns(self) -> int: ...

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.num_unknowns)

    # -- spec operations ----------------------------------------------------

    @abstractmethod
    def reference_potential(self, t: float) -> PotentialField:
        """Reference data realizing the class [omega_t]; backend-documented layout."""

    @abstractmethod
    def ma_log(self, u: np.ndarray, t: float) -> np.ndarray:
        """Pointwise reduced Monge-Ampere logarithm against the calibration volume."""

    def step_nonlinearity(self, v: np.ndarray, s_times, weights) -> np.ndarray:
        """sum_k weights_k * ma_log(v, s_k); backends override with fused kernels."""
        acc = np.zeros_like(v)
        for s_k, w_k in zip(s_times, weights):
            acc += w_k * self.ma_log(v, s_k)
        return acc

    @abstractmethod
    def laplacian(self, u: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
        """Laplacian of v with respect to the flow metric at state (u, t)."""

    @abstractmethod
    def trace_class(self, coords, u: np.ndarray, t: float) -> np.ndarray:
        """Trace of the ansatz representative of a class against the flow metric."""

    def trace_w0(self, u: np.ndarray, t: float) -> np.ndarray:
        """phi = <omega_tilde, omega_0>, pointwise and positive on valid states."""
        return self.trace_class(self.path.omega0, u, t)

    @abstractmethod
    def positivity(self, u: np.ndarray, t: float) -> PositivityCheck:
        """All discrete eigen-coefficients above eps_pos relative to calibration."""

    def require_positivity(self, u: np.ndarray, t: float) -> None:
        check = self.positivity(u, t)
        if not check.ok:
            raise PositivityError(
                f"positivity breakdown at t={t:.6g} (margin {check.margin:.3e})",
                margin=check.margin,
            )

    def divisor_log_sigma(self) -> np.ndarray:
        raise UnsupportedOperationError(
            f"{type(self).__name__} has no contracted-divisor weight"
        )

    @abstractmethod
    def quadrature_volume(self, u: np.ndarray, t: float) -> float:
        """Grid quadrature of the reduced volume form (ties ansatz to intersection form)."""

    @abstractmethod
    def ricci_probe(self, u: np.ndarray, t: float) -> RicciProbe: ...

    def second_derivative_mask(self, u, ut, t):
        """Nodes where Laplacian-of-derivative diagnostics are resolvable.

        None means every node.  Backends whose eigen-coefficients decay
        exponentially across the domain (the Calabi tails) override this:
        where the fiber coefficient drops below the fp-noise amplification
        floor, discrete second time derivatives carry no information.
        """
        return None

    # -- reductions over X ---------------------------------------------------

    @abstractmethod
    def field_stats(self, vec: np.ndarray) -> FieldStats:
        """min/max/Omega-mean/argmin of the represented function on X."""

    @abstractmethod
    def eigen_ratio_range(self, u: np.ndarray, t: float) -> tuple[float, float]:
        """Extremes over nodes and channels of eigen-coefficients of omega_tilde vs omega_0."""

    @abstractmethod
    def am_gm_min_gap(self, u: np.ndarray, t: float) -> float:
        """min over X of phi - n (omega_0^n / omega_tilde^n)^{1/n} (>= 0 exactly)."""

    @abstractmethod
    def omega_integral_exp(self, vec: np.ndarray) -> float:
        """int_X e^F Omega for the represented function F (quadrature)."""

    @abstractmethod
    def dense_field(self, vec: np.ndarray) -> np.ndarray:
        """The represented function sampled over the full reduced domain."""

    def dense_coords(self) -> np.ndarray | None:
        """Coordinates matching dense_field entries, when one-dimensional."""
        return None

    @abstractmethod
    def value_at_argmin(self, u: np.ndarray, v: np.ndarray) -> float:
        """v evaluated at a point where the function represented by u is minimal."""

    @abstractmethod
    def schwarz_composite_max(self, u, ut, t, c2_values) -> np.ndarray:
        """sup over X of log(phi) + c2 ((e^t - 1) du/dt - u - n t), per c2."""

    @abstractmethod
    def sandwich_samples(self, u, ut, t):
        """Per metric channel: (eigen-ratio array vs omega_0, worst-case exponent
        array m = e^t du/dt - t maximized over the remaining coordinates)."""

    # -- flow hooks -----------------------------------------------------------

    @abstractmethod
    def linear_step_solver(
        self, u: np.ndarray, t: float, gamma: float
    ) -> Callable[[np.ndarray], np.ndarray]:
        """Solver for the Newton system (I - gamma * Laplacian + constraints)."""

    def constraint_residual(self, v: np.ndarray, t: float):
        """Boundary-condition rows (index array, residual values) or None."""
        return None

    def describe(self) -> dict:
        return {"backend": type(self).__name__, "model": self.path.model.describe()}
