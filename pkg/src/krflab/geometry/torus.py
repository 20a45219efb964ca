"""Separable flat-torus backend.

The model is a product of n elliptic-curve factors with flat reference
metrics; the potential is kept separable, u = sum_i u_i(x_i, t), so the
Monge-Ampere determinant splits into one-dimensional factors

    ma_log = sum_i [ log(e^{-t} g_i + u_i'') - log(g_i) ],

with g_i = A_i / L_i the calibration density of factor i.  The state vector
concatenates the per-factor periodic fields; every reduction over X of a
separable-sum quantity is the sum of per-factor reductions.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from ..cohomology import ClassPath, TorusSeparable
from ..errors import ConfigError, UnsupportedOperationError
from .base import (
    DEFAULT_POSITIVITY_FLOOR,
    FieldStats,
    PositivityCheck,
    PotentialField,
    ReducedBackend,
    RicciProbe,
)
from ..grids import Grid1D, periodic_grid


def _solve_periodic_tridiag(diag, lo, up, corner_lr, corner_ll, rhs):
    """Solve the cyclic tridiagonal system via a rank-2 Woodbury correction.

    Row i couples (i-1, i, i+1 mod n); corner_lr is entry (0, n-1) and
    corner_ll is entry (n-1, 0).  Constant right-hand sides short-circuit:
    the stencil annihilates constants, so the solution is the rhs itself
    whenever the diagonal contributions cancel exactly (this keeps bitwise
    flatness of flat fields through the Newton solve).
    """
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lo[1:]

    def base_solve(b):
        return solve_banded((1, 1), ab, b, check_finite=False)

    z = base_solve(rhs)
    u_mat = np.zeros((n, 2))
    u_mat[0, 0] = 1.0
    u_mat[-1, 1] = 1.0
    w = base_solve(u_mat)
    # V^T x picks (x[n-1], x[0]); C = diag(corner_lr, corner_ll)
    cap = np.array(
        [
            [1.0 / corner_lr if corner_lr != 0 else np.inf, 0.0],
            [0.0, 1.0 / corner_ll if corner_ll != 0 else np.inf],
        ]
    )
    if not np.isfinite(cap).all():
        return z
    m = cap + np.array([[w[-1, 0], w[-1, 1]], [w[0, 0], w[0, 1]]])
    coef = np.linalg.solve(m, np.array([z[-1], z[0]]))
    return z - w @ coef


class SeparableTorusBackend(ReducedBackend):
    """PDE backend for TorusSeparable models on uniform periodic factor grids."""

    def __init__(
        self,
        path: ClassPath,
        nodes_per_factor: int = 256,
        lengths=None,
        eps_pos: float = DEFAULT_POSITIVITY_FLOOR,
    ):
        if not isinstance(path.model, TorusSeparable):
            raise ConfigError("SeparableTorusBackend requires a TorusSeparable model")
        self.path = path
        self.eps_pos = eps_pos
        nf = path.model.n
        if lengths is None:
            lengths = [1.0] * nf
        if len(lengths) != nf:
            raise ConfigError("one period length per torus factor required")
        self.grids: list[Grid1D] = [periodic_grid(L, nodes_per_factor) for L in lengths]
        self.lengths = [float(L) for L in lengths]
        self.areas = [float(c) for c in path.omega0]
        self.densities = np.array([a / L for a, L in zip(self.areas, self.lengths)])
        self._sizes = [g.n for g in self.grids]
        self._offsets = np.concatenate([[0], np.cumsum(self._sizes)])

    @property
    def num_unknowns(self) -> int:
        return int(self._offsets[-1])

    def split(self, vec: np.ndarray) -> list[np.ndarray]:
        return [vec[self._offsets[i]: self._offsets[i + 1]] for i in range(len(self.grids))]

    def factor_coefficients(self, u: np.ndarray, t: float) -> list[np.ndarray]:
        """Metric densities a_i = e^{-t} g_i + u_i'' per factor."""
        q = math.exp(-t)
        return [
            q * g + grid.d2(ui)
            for g, grid, ui in zip(self.densities, self.grids, self.split(u))
        ]

    def reference_potential(self, t: float) -> PotentialField:
        return PotentialField(values=math.exp(-t) * self.densities, t=t)

    def ma_log(self, u, t) -> np.ndarray:
        self._guard(u, t)
        parts = []
        for g, a in zip(self.densities, self.factor_coefficients(u, t)):
            parts.append(np.log(a) - np.log(g))
        return np.concatenate(parts)

    def step_nonlinearity(self, v, s_times, weights) -> np.ndarray:
        q = np.exp(-np.asarray(s_times))[:, None]  # (K, 1)
        w = np.asarray(weights)
        out = np.empty_like(v)
        for k, (g, grid) in enumerate(zip(self.densities, self.grids)):
            sl = slice(self._offsets[k], self._offsets[k + 1])
            a = q * g + grid.d2(v[sl])[None, :]  # (K, N)
            if (a <= self.eps_pos * g).any():
                from ..errors import PositivityError

                raise PositivityError("positivity breakdown inside the step quadrature")
            out[sl] = w @ np.log(a) - float(w.sum()) * math.log(g)
        return out

    def laplacian(self, u, t, v) -> np.ndarray:
        self._guard(u, t)
        coeffs = self.factor_coefficients(u, t)
        return np.concatenate(
            [grid.d2(vi) / a for grid, vi, a in zip(self.grids, self.split(v), coeffs)]
        )

    def trace_class(self, coords, u, t) -> np.ndarray:
        self._guard(u, t)
        dens = np.array([float(c) / L for c, L in zip(coords, self.lengths)])
        coeffs = self.factor_coefficients(u, t)
        return np.concatenate([np.full_like(a, d) / a for d, a in zip(dens, coeffs)])

    def positivity(self, u, t) -> PositivityCheck:
        margin = math.inf
        for g, a in zip(self.densities, self.factor_coefficients(u, t)):
            margin = min(margin, float(a.min()) / g)
        return PositivityCheck(ok=margin > self.eps_pos, margin=margin)

    def quadrature_volume(self, u, t) -> float:
        vol = float(math.factorial(self.path.n))
        for grid, a in zip(self.grids, self.factor_coefficients(u, t)):
            vol *= grid.quad(a)
        return vol

    def ricci_probe(self, u, t) -> RicciProbe:
        self._guard(u, t)
        min_ratio = math.inf
        r_min = 0.0
        r_max = 0.0
        for grid, a in zip(self.grids, self.factor_coefficients(u, t)):
            ric = -grid.d2(np.log(a)) / a
            min_ratio = min(min_ratio, float(ric.min()))
            r_min += float(ric.min())
            r_max += float(ric.max())
        return RicciProbe(min_ratio=min_ratio, r_min=r_min, r_max=r_max)

    def field_stats(self, vec) -> FieldStats:
        lo = hi = mean = 0.0
        for grid, part in zip(self.grids, self.split(vec)):
            lo += float(part.min())
            hi += float(part.max())
            mean += float(part.mean())
        x0 = float(self.grids[0].nodes[int(np.argmin(self.split(vec)[0]))])
        return FieldStats(min=lo, max=hi, mean=mean, argmin_coord=x0)

    def eigen_ratio_range(self, u, t):
        lo, hi = math.inf, -math.inf
        for g, a in zip(self.densities, self.factor_coefficients(u, t)):
            ratios = a / g
            lo = min(lo, float(ratios.min()))
            hi = max(hi, float(ratios.max()))
        return lo, hi

    def am_gm_min_gap(self, u, t) -> float:
        # phi - n (prod p_i)^{1/n} over the full product grid; p_i = g_i / a_i
        self._guard(u, t)
        parts = [
            g / a for g, a in zip(self.densities, self.factor_coefficients(u, t))
        ]
        n = self.path.n
        if n == 2:
            p, q = parts
            gap = p[:, None] + q[None, :] - 2.0 * np.sqrt(p[:, None] * q[None, :])
            return float(gap.min())
        if n == 3:
            p, q, r = parts
            s = p[:, None, None] + q[None, :, None] + r[None, None, :]
            prod = p[:, None, None] * q[None, :, None] * r[None, None, :]
            return float((s - 3.0 * prod ** (1.0 / 3.0)).min())
        raise UnsupportedOperationError(
            "pointwise AM-GM scan implemented for <= 3 torus factors"
        )

    def omega_integral_exp(self, vec) -> float:
        out = float(math.factorial(self.path.n))
        for g, grid, part in zip(self.densities, self.grids, self.split(vec)):
            out *= grid.quad(np.exp(part) * g)
        return out

    def dense_field(self, vec) -> np.ndarray:
        parts = self.split(vec)
        if len(parts) == 2:
            return (parts[0][:, None] + parts[1][None, :]).ravel()
        if len(parts) == 3:
            p, q, r = parts
            return (p[:, None, None] + q[None, :, None] + r[None, None, :]).ravel()
        raise UnsupportedOperationError("dense sampling implemented for <= 3 factors")

    def value_at_argmin(self, u, v) -> float:
        return float(
            sum(vp[int(np.argmin(up))] for up, vp in zip(self.split(u), self.split(v)))
        )

    def schwarz_composite_max(self, u, ut, t, c2_values) -> np.ndarray:
        coeffs = self.factor_coefficients(u, t)
        phi_parts = [g / a for g, a in zip(self.densities, coeffs)]
        emt = math.expm1(t)
        x_parts = [
            emt * utp - up - t
            for utp, up in zip(self.split(ut), self.split(u))
        ]
        if len(phi_parts) == 2:
            phi = phi_parts[0][:, None] + phi_parts[1][None, :]
            xc = x_parts[0][:, None] + x_parts[1][None, :]
            lp = np.log(phi)
            return np.array([float((lp + c2 * xc).max()) for c2 in c2_values])
        raise UnsupportedOperationError("schwarz scan implemented for 2 torus factors")

    def sandwich_samples(self, u, ut, t):
        coeffs = self.factor_coefficients(u, t)
        ut_parts = self.split(ut)
        maxima = [float(p.max()) for p in ut_parts]
        out = []
        for i, (g, a) in enumerate(zip(self.densities, coeffs)):
            rest = sum(m for j, m in enumerate(maxima) if j != i)
            m_up = math.exp(t) * (ut_parts[i] + rest) - t
            out.append((a / g, m_up))
        return out

    def linear_step_solver(self, u, t, gamma) -> Callable[[np.ndarray], np.ndarray]:
        coeffs = self.factor_coefficients(u, t)

        def solve(rhs):
            out = np.empty_like(rhs)
            for grid, a, idx in zip(
                self.grids, coeffs, range(len(self.grids))
            ):
                sl = slice(self._offsets[idx], self._offsets[idx + 1])
                r = rhs[sl]
                # bitwise-flat shortcut: the Jacobian fixes constants exactly
                if float(np.max(r)) == float(np.min(r)):
                    out[sl] = r
                    continue
                h2 = (grid.nodes[1] - grid.nodes[0]) ** 2
                w = gamma / (a * h2)
                diag = 1.0 + 2.0 * w
                lo = -w  # coefficient of x_{i-1} in row i
                up = -w  # coefficient of x_{i+1} in row i
                out[sl] = _solve_periodic_tridiag(
                    diag, lo, up, corner_lr=-w[0], corner_ll=-w[-1], rhs=r
                )
            return out

        return solve

    def _guard(self, u, t):
        check = self.positivity(u, t)
        if not check.ok:
            from ..errors import PositivityError

            raise PositivityError(
                f"positivity breakdown at t={t:.6g} (margin {check.margin:.3e})",
                margin=check.margin,
            )

    def describe(self) -> dict:
        out = super().describe()
        out["grids"] = [g.describe() for g in self.grids]
        return out
