"""Exact cohomology-class arithmetic for the supported model geometries.

Everything in this module is class-level: Kahler cone membership, the moving
class ``omega_inf + e^{-t} (omega_0 - omega_inf)``, the first time the path
hits the cone boundary, the volume polynomial ``V(q) = [omega_t]^n`` in the
variable ``q = e^{-t}``, and the vanishing order of ``V`` at the singular
time.  Class coordinates are carried as :class:`fractions.Fraction`, so wall
times and root multiplicities are computed exactly; floating point enters
only when converting ``q_T`` to ``T = -log(q_T)``.

Conventions (fixed once, scale-invariant for every downstream test):
intersection numbers are used un-normalized, and on products of
Kahler-Einstein factors the per-factor top self-intersection is set to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .errors import ConfigError, DomainError

Coords = tuple[Fraction, ...]


def _fr(value) -> Fraction:
    """Exact conversion; binary floats are rationals, so nothing is lost."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"class coordinate must be finite, got {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise ConfigError(f"cannot interpret {value!r} as a rational coordinate")


# ---------------------------------------------------------------------------
# model geometries


@dataclass(frozen=True)
class Hirzebruch:
    """P(O + O(-a)) over P^1; class basis {C, f} with C^2 = -a, C.f = 1, f^2 = 0."""

    a: int

    def __post_init__(self):
        if self.a < 1:
            raise ConfigError(f"Hirzebruch twist must be >= 1, got {self.a}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def num_coords(self) -> int:
        return 2

    def is_kahler(self, c: Coords) -> bool:
        x, y = c
        return x > 0 and y - self.a * x > 0

    def canonical_coords(self) -> Coords:
        return (Fraction(-2), Fraction(-(self.a + 2)))

    def walls(self):
        # functional value = coefficient vector . coords
        return (
            ("fiber", (Fraction(1), Fraction(0))),
            ("section", (Fraction(-self.a), Fraction(1))),
        )

    def intersection(self, c: Coords, d: Coords) -> Fraction:
        cx, cy = c
        dx, dy = d
        return -self.a * cx * dx + cx * dy + cy * dx

    def volume_poly(self, lines) -> tuple[Fraction, ...]:
        x, y = lines
        return _poly_mul(x, _poly_sub(_poly_scale(y, 2), _poly_scale(x, self.a)))

    def describe(self) -> str:
        return f"Hirzebruch({self.a})"


@dataclass(frozen=True)
class ProjectiveSpace:
    """P^n with classes recorded as multiples of the hyperplane class."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"projective space dimension must be >= 2, got {self.n}")

    @property
    def dim(self) -> int:
        return self.n

    @property
    def num_coords(self) -> int:
        return 1

    def is_kahler(self, c: Coords) -> bool:
        return c[0] > 0

    def canonical_coords(self) -> Coords:
        return (Fraction(-(self.n + 1)),)

    def walls(self):
        return (("point", (Fraction(1),)),)

    def volume_poly(self, lines) -> tuple[Fraction, ...]:
        return _poly_pow(lines[0], self.n)

    def describe(self) -> str:
        return f"ProjectiveSpace({self.n})"


@dataclass(frozen=True)
class ProductOfKEFactors:
    """Product of Kahler-Einstein factors, one class coordinate per factor.

    Each factor is an ``(einstein_sign, dim)`` pair with sign in {-1, 0, +1};
    the factor class h_i is the KE class, normalized so h_i^{dim_i} = 1, and
    the factor canonical class is ``-sign * h_i``.
    """

    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        factors = tuple((int(s), int(d)) for s, d in self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ConfigError("product model needs at least one factor")
        for s, d in factors:
            if s not in (-1, 0, 1):
                raise ConfigError(f"Einstein sign must be -1, 0 or +1, got {s}")
            if d < 1:
                raise ConfigError(f"factor dimension must be >= 1, got {d}")
        if self.dim < 2:
            raise ConfigError("total complex dimension must be >= 2")

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.factors)

    @property
    def num_coords(self) -> int:
        return len(self.factors)

    def is_kahler(self, c: Coords) -> bool:
        return all(ci > 0 for ci in c)

    def canonical_coords(self) -> Coords:
        return tuple(Fraction(-s) for s, _ in self.factors)

    def walls(self):
        out = []
        for i in range(len(self.factors)):
            vec = tuple(Fraction(1 if j == i else 0) for j in range(len(self.factors)))
            out.append((f"factor{i}", vec))
        return tuple(out)

    def volume_poly(self, lines) -> tuple[Fraction, ...]:
        n = self.dim
        coeff = Fraction(math.factorial(n))
        poly = (coeff,)
        for line, (_, d) in zip(lines, self.factors):
            coeff_poly = _poly_pow(line, d)
            poly = _poly_mul(poly, coeff_poly)
            poly = _poly_scale(poly, Fraction(1, math.factorial(d)))
        return poly

    def describe(self) -> str:
        inner = ",".join(f"({s},{d})" for s, d in self.factors)
        return f"ProductOfKEFactors({inner})"


@dataclass(frozen=True)
class TorusSeparable:
    """Flat torus split into n elliptic-curve factors, one area coordinate each."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"torus dimension must be >= 2, got {self.n}")

    @property
    def dim(self) -> int:
        return self.n

    @property
    def num_coords(self) -> int:
        return self.n

    def is_kahler(self, c: Coords) -> bool:
        return all(ci > 0 for ci in c)

    def canonical_coords(self) -> Coords:
        return tuple(Fraction(0) for _ in range(self.n))

    def walls(self):
        out = []
        for i in range(self.n):
            vec = tuple(Fraction(1 if j == i else 0) for j in range(self.n))
            out.append((f"factor{i}", vec))
        return tuple(out)

    def volume_poly(self, lines) -> tuple[Fraction, ...]:
        poly = (Fraction(math.factorial(self.n)),)
        for line in lines:
            poly = _poly_mul(poly, line)
        return poly

    def describe(self) -> str:
        return f"TorusSeparable({self.n})"


ModelGeometry = Union[Hirzebruch, ProjectiveSpace, ProductOfKEFactors, TorusSeparable]


# ---------------------------------------------------------------------------
# polynomial helpers (coefficient tuples, ascending powers of q, exact)


def _poly_trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p)


def _poly_add(p, r):
    m = max(len(p), len(r))
    return _poly_trim(
        tuple((p[i] if i < len(p) else 0) + (r[i] if i < len(r) else 0) for i in range(m))
    )


def _poly_sub(p, r):
    return _poly_add(p, tuple(-c for c in r))


def _poly_scale(p, s):
    return _poly_trim(tuple(c * s for c in p))


def _poly_mul(p, r):
    out = [Fraction(0)] * (len(p) + len(r) - 1)
    for i, ci in enumerate(p):
        for j, cj in enumerate(r):
            out[i + j] += ci * cj
    return _poly_trim(tuple(out))


def _poly_pow(p, k):
    out = (Fraction(1),)
    for _ in range(k):
        out = _poly_mul(out, p)
    return out


def _poly_eval(p, q):
    acc = Fraction(0) if isinstance(q, Fraction) else 0.0
    for c in reversed(p):
        acc = acc * q + (c if isinstance(q, Fraction) else float(c))
    return acc


def _poly_deriv(p):
    if len(p) <= 1:
        return (Fraction(0),)
    return tuple(c * i for i, c in enumerate(p))[1:]


def _poly_deflate(p, root):
    """Divide by (q - root); returns (quotient, remainder)."""
    rev = list(reversed(p))
    out = [rev[0]]
    for c in rev[1:]:
        out.append(c + root * out[-1])
    rem = out.pop()
    return tuple(reversed(out)), rem


# ---------------------------------------------------------------------------
# classes and paths


@dataclass(frozen=True)
class KahlerClass:
    model: ModelGeometry
    coords: Coords

    def __post_init__(self):
        coords = tuple(_fr(c) for c in self.coords)
        if len(coords) != self.model.num_coords:
            raise ConfigError(
                f"{self.model.describe()} expects {self.model.num_coords} coordinates, "
                f"got {len(coords)}"
            )
        object.__setattr__(self, "coords", coords)


def kahler_class(model: ModelGeometry, coords: Sequence) -> KahlerClass:
    return KahlerClass(model, tuple(coords))


def is_kahler(c: KahlerClass) -> bool:
    """Strict interior of the Kahler cone, decided from coordinates alone."""
    return c.model.is_kahler(c.coords)


def canonical_class(m: ModelGeometry) -> Coords:
    """Coordinates of K_X in the model basis."""
    return m.canonical_coords()


REGIME_FINITE_NONCOLLAPSING = "FiniteNonCollapsing"
REGIME_FINITE_COLLAPSING = "FiniteCollapsing"
REGIME_INFINITE_NONCOLLAPSING = "InfiniteNonCollapsing"
REGIME_INFINITE_COLLAPSING = "InfiniteCollapsing"


@dataclass(frozen=True)
class Regime:
    kind: str
    k: int
    walls: tuple[str, ...]
    limit_flag: str | None

    def describe(self) -> str:
        tag = self.kind
        if self.kind in (REGIME_FINITE_COLLAPSING, REGIME_INFINITE_COLLAPSING):
            tag += f"({self.k})"
        if self.limit_flag:
            tag += f", {self.limit_flag}"
        return tag


@dataclass(frozen=True)
class ClassPath:
    """The class ray [omega_t] = [omega_inf] + q ([omega_0] - [omega_inf]), q = e^{-t}."""

    model: ModelGeometry
    omega0: Coords
    omega_inf: Coords
    q_T: Fraction | None  # None <=> T = +infinity
    T: float
    volume_poly: tuple[Fraction, ...]
    k: int
    walls_hit: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.model.dim

    def coords_at(self, t: float) -> tuple[float, ...]:
        q = math.exp(-t)
        return tuple(
            float(inf) + q * (float(o0) - float(inf))
            for o0, inf in zip(self.omega0, self.omega_inf)
        )

    def coords_poly(self) -> tuple[tuple[Fraction, Fraction], ...]:
        """Affine coordinate functions of q: pairs (constant, slope)."""
        return tuple(
            (inf, o0 - inf) for o0, inf in zip(self.omega0, self.omega_inf)
        )

    def volume_at(self, t: float) -> float:
        return _poly_eval(tuple(float(c) for c in self.volume_poly), math.exp(-t))

    def volume_at_q(self, q: Fraction) -> Fraction:
        return _poly_eval(self.volume_poly, q)


def class_path(m: ModelGeometry, omega0: KahlerClass | Sequence) -> ClassPath:
    """Build the full path record: walls, singular time, volume polynomial, exponent."""
    if not isinstance(omega0, KahlerClass):
        omega0 = kahler_class(m, omega0)
    elif omega0.model != m:
        raise ConfigError("omega0 belongs to a different model geometry")
    if not is_kahler(omega0):
        raise DomainError(
            f"omega0 = {tuple(map(float, omega0.coords))} is not in the Kahler cone "
            f"of {m.describe()}"
        )
    kx = m.canonical_coords()
    o0 = omega0.coords

    # wall crossing: each wall functional is affine in q and positive at q = 1
    q_T = None
    walls_hit: list[str] = []
    for name, vec in m.walls():
        ell_inf = sum(v * c for v, c in zip(vec, kx))
        ell_0 = sum(v * c for v, c in zip(vec, o0))
        slope = ell_0 - ell_inf
        if slope == 0:
            continue  # constant positive along the ray
        q_star = -ell_inf / slope
        if 0 < q_star < 1:
            if q_T is None or q_star > q_T:
                q_T = q_star
                walls_hit = [name]
            elif q_star == q_T:
                walls_hit.append(name)

    lines = tuple(
        (inf, o0_i - inf) for o0_i, inf in zip(o0, kx)
    )
    vol = m.volume_poly(lines)

    if q_T is None:
        T = math.inf
        # T = infinity: V ~ C e^{-kt} with k the lowest non-vanishing power of q
        k = next(i for i, c in enumerate(vol) if c != 0)
    else:
        T = -math.log(q_T)
        # vanishing order of V at q_T, exact synthetic division
        k = 0
        work = vol
        while True:
            quot, rem = _poly_deflate(work, q_T)
            if rem != 0:
                break
            k += 1
            work = quot
            if len(work) == 1 and work[0] == 0:
                break

    return ClassPath(
        model=m,
        omega0=o0,
        omega_inf=kx,
        q_T=q_T,
        T=T,
        volume_poly=vol,
        k=k,
        walls_hit=tuple(walls_hit),
    )


def singular_time(p: ClassPath) -> float:
    """Smallest t > 0 where a cone inequality degenerates; +inf if none."""
    return p.T


def volume_polynomial(p: ClassPath) -> tuple[Fraction, ...]:
    """Exact coefficients of V(q) = [omega_t]^n, ascending powers of q = e^{-t}."""
    return p.volume_poly


def collapse_exponent(p: ClassPath) -> int:
    """Vanishing order of V at T (finite T), or the exponential decay rate (T = inf)."""
    return p.k


def leading_volume_coefficient(p: ClassPath) -> float:
    """The constant C in V(t) ~ C (T-t)^k resp. C e^{-kt}.

    Reported as the leading Taylor coefficient only; no geometric meaning is
    attached to it.
    """
    if p.q_T is None:
        return float(next(c for c in p.volume_poly if c != 0))
    work = p.volume_poly
    for _ in range(p.k):
        work, _ = _poly_deflate(work, p.q_T)
    return float(_poly_eval(work, p.q_T)) * float(p.q_T) ** p.k


def classify_regime(p: ClassPath) -> Regime:
    """Finite/infinite x collapsing/non-collapsing, plus the limit-class wall flag."""
    finite = p.q_T is not None
    collapsing = p.k >= 1
    limit_flag = None
    if finite:
        m = p.model
        if isinstance(m, Hirzebruch):
            if set(p.walls_hit) == {"fiber", "section"}:
                limit_flag = "total-collapse"
            elif "fiber" in p.walls_hit:
                limit_flag = "fiber-wall-semiample-fibration"
            elif m.a == 1:
                limit_flag = "section-wall-semiample-contraction"
            else:
                limit_flag = "section-wall-non-semiample"
        elif isinstance(m, ProjectiveSpace):
            limit_flag = "total-collapse"
        else:
            limit_flag = "walls:" + ",".join(p.walls_hit)
    if finite and collapsing:
        kind = REGIME_FINITE_COLLAPSING
    elif finite:
        kind = REGIME_FINITE_NONCOLLAPSING
    elif collapsing:
        kind = REGIME_INFINITE_COLLAPSING
    else:
        kind = REGIME_INFINITE_NONCOLLAPSING
    return Regime(kind=kind, k=p.k, walls=p.walls_hit, limit_flag=limit_flag)


def intersection_pairing(m: ModelGeometry, c: Coords, d: Coords) -> Fraction:
    """Surface pairing c.d (Hirzebruch only;used by tests to validate K^2 = 8)."""
    if not isinstance(m, Hirzebruch):
        raise ConfigError("intersection_pairing is only defined for surfaces")
    return m.intersection(tuple(_fr(x) for x in c), tuple(_fr(x) for x in d))


def path_report(p: ClassPath) -> dict:
    """JSON-ready summary (model, omega0, T, k, regime, volume_poly_coeffs)."""
    regime = classify_regime(p)
    return {
        "model": p.model.describe(),
        "omega0": [float(c) for c in p.omega0],
        "omega_inf": [float(c) for c in p.omega_inf],
        "T": None if math.isinf(p.T) else p.T,
        "q_T": None if p.q_T is None else float(p.q_T),
        "k": p.k,
        "regime": regime.describe(),
        "walls_hit": list(p.walls_hit),
        "volume_poly_coeffs": [float(c) for c in p.volume_poly],
        "leading_volume_coefficient": leading_volume_coefficient(p),
    }
