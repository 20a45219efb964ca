"""One-dimensional spatial grids and finite-difference stencils.

Two grid families are supported: a truncated line [-R, R] (uniform or
tanh-stretched nodes) with second-order one-sided stencils at the ends, and a
uniform periodic interval that excludes the duplicate endpoint.  Interior
stencils are the centered 3-point formulas on (possibly) nonuniform nodes;
edge weights come from Fornberg's algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MIN_NODES = 16


def fd_weights(x: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 (Fornberg 1988)."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass
class Grid1D:
    """Node set plus precomputed derivative stencils and quadrature weights."""

    nodes: np.ndarray
    periodic: bool
    length: float | None = None  # period, for periodic grids
    spacing_rule: str = "uniform"
    # interior 3-point stencils (rows 1..N-2 for line grids, all rows periodic)
    _d1: tuple = field(default=None, repr=False)
    _d2: tuple = field(default=None, repr=False)
    edge_d1_first: np.ndarray = field(default=None, repr=False)  # 3-point at node 0
    edge_d1_last: np.ndarray = field(default=None, repr=False)
    edge_d2_first: np.ndarray = field(default=None, repr=False)  # 4-point at node 0
    edge_d2_last: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)  # quadrature weights

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or len(x) < MIN_NODES:
            raise ConfigError(f"grid needs at least {MIN_NODES} nodes, got {x.shape}")
        if not np.all(np.diff(x) > 0):
            raise ConfigError("grid nodes must be strictly increasing")
        self.nodes = x
        n = len(x)
        if self.periodic:
            if self.length is None or self.length <= x[-1] - x[0]:
                raise ConfigError("periodic grid needs a period exceeding the node span")
            h = np.diff(x)
            if not np.allclose(h, h[0], rtol=1e-12, atol=0.0):
                raise ConfigError("periodic grids must be uniform")
            self._h = h[0]
            self.weights = np.full(n, self._h)
        else:
            h1 = x[1:-1] - x[:-2]
            h2 = x[2:] - x[1:-1]
            denom = h1 * h2 * (h1 + h2)
            # neighbor weights only; rows are applied in difference form
            # lo*(u_{i-1} - u_i) + up*(u_{i+1} - u_i), exact zero on constants
            self._d1 = (-(h2**2) / denom, h1**2 / denom)
            self._d2 = (2 * h2 / denom, 2 * h1 / denom)
            self.edge_d1_first = fd_weights(x[:3], x[0], 1)
            self.edge_d1_last = fd_weights(x[-3:], x[-1], 1)
            self.edge_d2_first = fd_weights(x[:4], x[0], 2)
            self.edge_d2_last = fd_weights(x[-4:], x[-1], 2)
            w = np.zeros(n)
            w[0] = (x[1] - x[0]) / 2
            w[-1] = (x[-1] - x[-2]) / 2
            w[1:-1] = (x[2:] - x[:-2]) / 2
            self.weights = w

    @property
    def n(self) -> int:
        return len(self.nodes)

    def d1(self, u: np.ndarray) -> np.ndarray:
        """First derivative, second order (one-sided at line-grid ends).

        Applied in difference form, so constant fields map to exact zero.
        """
        out = np.empty_like(u)
        if self.periodic:
            out[:] = (np.roll(u, -1) - np.roll(u, 1)) / (2 * self._h)
            return out
        lo, up = self._d1
        out[1:-1] = lo * (u[:-2] - u[1:-1]) + up * (u[2:] - u[1:-1])
        out[0] = self.edge_d1_first[1:] @ (u[1:3] - u[0])
        out[-1] = self.edge_d1_last[:-1] @ (u[-3:-1] - u[-1])
        return out

    def d2(self, u: np.ndarray) -> np.ndarray:
        """Second derivative; exact zero (bitwise) on constant fields."""
        out = np.empty_like(u)
        if self.periodic:
            out[:] = (np.roll(u, -1) - 2 * u + np.roll(u, 1)) / (self._h * self._h)
            return out
        lo, up = self._d2
        out[1:-1] = lo * (u[:-2] - u[1:-1]) + up * (u[2:] - u[1:-1])
        out[0] = self.edge_d2_first[1:] @ (u[1:4] - u[0])
        out[-1] = self.edge_d2_last[:-1] @ (u[-4:-1] - u[-1])
        return out

    def interior_d1_stencils(self):
        lo, up = self._d1
        return lo, -(lo + up), up

    def interior_d2_stencils(self):
        lo, up = self._d2
        return lo, -(lo + up), up

    def quad(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def describe(self) -> dict:
        return {
            "n": self.n,
            "periodic": self.periodic,
            "span": [float(self.nodes[0]), float(self.nodes[-1])],
            "length": self.length,
            "spacing_rule": self.spacing_rule,
        }


def line_grid(radius: float, n: int, stretch: float = 0.0) -> Grid1D:
    """Truncated line [-R, R]; stretch > 0 applies a tanh map clustering near the ends."""
    if radius <= 0:
        raise ConfigError(f"grid radius must be positive, got {radius}")
    xi = np.linspace(-1.0, 1.0, n)
    if stretch > 0:
        nodes = radius * np.tanh(stretch * xi) / np.tanh(stretch)
        rule = f"tanh({stretch})"
    else:
        nodes = radius * xi
        rule = "uniform"
    return Grid1D(nodes=nodes, periodic=False, length=None, spacing_rule=rule)


def periodic_grid(length: float, n: int) -> Grid1D:
    """Uniform periodic interval [0, L), duplicate endpoint excluded."""
    if length <= 0:
        raise ConfigError(f"grid length must be positive, got {length}")
    h = length / n
    nodes = np.arange(n) * h
    return Grid1D(nodes=nodes, periodic=True, length=length, spacing_rule="uniform")
