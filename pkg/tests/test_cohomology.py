"""Class-level arithmetic: cone tests, paths, singular times, volume polynomials."""

from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from krflab.cohomology import (
    ClassPath,
    Hirzebruch,
    ProductOfKEFactors,
    ProjectiveSpace,
    TorusSeparable,
    canonical_class,
    class_path,
    classify_regime,
    collapse_exponent,
    intersection_pairing,
    is_kahler,
    kahler_class,
    leading_volume_coefficient,
    path_report,
    singular_time,
    volume_polynomial,
)
from krflab.errors import ConfigError, DomainError


def test_is_kahler_hirzebruch():
    m = Hirzebruch(1)
    assert is_kahler(kahler_class(m, (2, 5)))
    assert not is_kahler(kahler_class(m, (1, 1)))  # boundary, not interior
    assert not is_kahler(kahler_class(m, (-1, 5)))


def test_is_kahler_projective_zero_class():
    assert not is_kahler(kahler_class(ProjectiveSpace(2), (0,)))


def test_is_kahler_rejects_nonfinite():
    with pytest.raises(DomainError):
        kahler_class(Hirzebruch(1), (float("nan"), 1))
    with pytest.raises(DomainError):
        kahler_class(Hirzebruch(1), (float("inf"), 1))


def test_canonical_class_torus_flat():
    assert canonical_class(TorusSeparable(2)) == (0, 0)


@pytest.mark.parametrize("a", [1, 2, 3])
def test_canonical_class_hirzebruch_adjunction(a):
    # K = -2C - (a+2)f, validated through the intersection form: K^2 = 8.
    m = Hirzebruch(a)
    k = canonical_class(m)
    assert k == (-2, -(a + 2))
    assert intersection_pairing(m, k, k) == 8


@pytest.mark.parametrize("n", [2, 3, 4])
def test_canonical_class_projective(n):
    # K = -(n+1) H, so K^n = (-1)^n (n+1)^n under H^n = 1.
    k = canonical_class(ProjectiveSpace(n))
    assert k == (-(n + 1),)
    assert k[0] ** n == (-1) ** n * (n + 1) ** n


def test_class_path_hirzebruch_coefficients():
    # x(t) = -2 + 4 e^{-t}, y(t) = -3 + 8 e^{-t}
    p = class_path(Hirzebruch(1), (2, 5))
    assert p.coords_poly() == (
        (Fraction(-2), Fraction(4)),
        (Fraction(-3), Fraction(8)),
    )
    assert p.coords_at(0.0) == pytest.approx((2.0, 5.0), abs=1e-15)


def test_class_path_torus_pure_scaling():
    p = class_path(TorusSeparable(2), (3, 7))
    assert p.coords_poly() == ((Fraction(0), Fraction(3)), (Fraction(0), Fraction(7)))


def test_class_path_projective_fano_ray():
    # omega_0 = lambda (-K): coefficient path (lambda+1) e^{-t} - 1 times (-K).
    lam = 1
    p = class_path(ProjectiveSpace(2), (3 * lam,))
    const, slope = p.coords_poly()[0]
    # coordinates are multiples of H: c(q) = -3 + 6q = 3 ((lambda+1) q - 1)
    assert (const, slope) == (Fraction(-3), Fraction(6))
    assert p.coords_at(0.0)[0] == pytest.approx(3.0)


def test_class_path_rejects_non_kahler():
    with pytest.raises(DomainError):
        class_path(Hirzebruch(1), (1, 1))


def test_singular_time_fiber_wall():
    p = class_path(Hirzebruch(1), (2, 5))
    # walls: -2 + 4q = 0 -> q = 1/2;  -1 + 4q = 0 -> q = 1/4; first hit is q = 1/2
    assert p.q_T == Fraction(1, 2)
    assert abs(singular_time(p) - math.log(2)) < 1e-15
    assert p.walls_hit == ("fiber",)


def test_singular_time_section_wall():
    p = class_path(Hirzebruch(1), (1, 1.2))
    assert abs(singular_time(p) - math.log(1.2)) < 1e-12
    assert p.walls_hit == ("section",)


def test_singular_time_nef_canonical_is_infinite():
    p = class_path(ProductOfKEFactors(((-1, 1), (0, 1))), (2, 1))
    assert singular_time(p) == math.inf


def test_volume_polynomial_torus():
    p = class_path(TorusSeparable(2), (1, 1))
    assert volume_polynomial(p) == (0, 0, 2)  # V = 2 q^2


def test_volume_polynomial_hirzebruch():
    # V = x (2y - x) = (4q - 2)(12q - 4) = 8 - 40 q + 48 q^2
    p = class_path(Hirzebruch(1), (2, 5))
    assert volume_polynomial(p) == (8, -40, 48)


def test_volume_polynomial_projective():
    # V = c(q)^2 with c = 6q - 3: 9 - 36 q + 36 q^2; and (-K)^2 = 9 at q s.t. c = 3.
    p = class_path(ProjectiveSpace(2), (3,))
    assert volume_polynomial(p) == (9, -36, 36)
    assert p.volume_at(0.0) == pytest.approx(9.0)


def test_collapse_exponent_examples():
    assert collapse_exponent(class_path(Hirzebruch(1), (2, 5))) == 1
    assert collapse_exponent(class_path(ProjectiveSpace(2), (3,))) == 2
    p = class_path(TorusSeparable(2), (1, 1))
    assert collapse_exponent(p) == 2 and p.T == math.inf


def test_classify_regime_examples():
    r = classify_regime(class_path(Hirzebruch(1), (2, 5)))
    assert r.kind == "FiniteCollapsing" and r.k == 1
    assert r.limit_flag == "fiber-wall-semiample-fibration"

    p = class_path(Hirzebruch(1), (1, 1.2))
    r = classify_regime(p)
    assert r.kind == "FiniteNonCollapsing"
    assert r.limit_flag == "section-wall-semiample-contraction"
    assert abs(p.volume_at(p.T) - 0.25) < 1e-12

    r = classify_regime(class_path(ProductOfKEFactors(((-1, 1), (0, 1))), (2, 1)))
    assert r.kind == "InfiniteCollapsing" and r.k == 1


def test_classify_regime_wall_tie_is_total_collapse():
    # both walls at the same q: x and y - x vanish together
    # x(q) = -2 + 4q, y(q) = -3 + 6q: x = 0 at 1/2, y - x = -1 + 2q = 0 at 1/2.
    p = class_path(Hirzebruch(1), (2, 3))
    r = classify_regime(p)
    assert set(p.walls_hit) == {"fiber", "section"}
    assert r.kind == "FiniteCollapsing" and r.k == 2
    assert r.limit_flag == "total-collapse"


def test_ke_fixed_point_regime():
    p = class_path(ProductOfKEFactors(((-1, 1), (-1, 1))), (1, 1))
    assert p.T == math.inf and p.k == 0
    assert classify_regime(p).kind == "InfiniteNonCollapsing"
    # constant path
    assert p.coords_at(5.0) == pytest.approx((1.0, 1.0))


def test_leading_volume_coefficient():
    # V = 8 - 40q + 48q^2 = 48 (q - 1/2)(q - 1/3); near q_T = 1/2:
    # V ~ 48 (1/2 - 1/3) (q - 1/2) and q - q_T ~ q_T (T - t), so C = 8 * 1/2 = 4.
    p = class_path(Hirzebruch(1), (2, 5))
    assert leading_volume_coefficient(p) == pytest.approx(4.0)
    # torus: V = 2 q^2 = 2 e^{-2t}
    assert leading_volume_coefficient(class_path(TorusSeparable(2), (1, 1))) == 2.0


def test_path_report_fields():
    rep = path_report(class_path(Hirzebruch(1), (2, 5)))
    for key in ("model", "omega0", "T", "k", "regime", "volume_poly_coeffs"):
        assert key in rep
    assert rep["k"] == 1 and rep["T"] == pytest.approx(math.log(2))


def test_hirzebruch_invalid_twist():
    with pytest.raises(ConfigError):
        Hirzebruch(0)


# ---------------------------------------------------------------------------
# property tests

cone_points = st.tuples(
    st.fractions(min_value=Fraction(1, 8), max_value=Fraction(8)),
    st.fractions(min_value=Fraction(1, 8), max_value=Fraction(8)),
)


@given(cone_points, st.integers(min_value=1, max_value=3))
def test_path_invariants_hirzebruch(point, a):
    x, margin = point
    y = a * x + margin  # strictly inside the cone by construction
    m = Hirzebruch(a)
    p = class_path(m, (x, y))
    # t = 0 reproduces omega0 exactly
    assert p.coords_poly()[0][0] + p.coords_poly()[0][1] == x
    assert p.coords_poly()[1][0] + p.coords_poly()[1][1] == y
    # V > 0 strictly before T, and V(q_T) = 0 iff collapsing
    if p.q_T is not None:
        for lam in (Fraction(1, 7), Fraction(1, 2), Fraction(6, 7)):
            q = p.q_T + lam * (1 - p.q_T)
            assert p.volume_at_q(q) > 0
        vT = p.volume_at_q(p.q_T)
        assert vT >= 0
        assert (vT == 0) == (p.k >= 1)
    else:
        for q in (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10)):
            assert p.volume_at_q(q) > 0


@settings(deadline=None, max_examples=25)
@given(cone_points, st.integers(min_value=1, max_value=3))
def test_exponent_is_root_multiplicity(point, a):
    """k equals the multiplicity of q_T in the volume polynomial, checked by sympy."""
    sympy = pytest.importorskip("sympy")
    x, margin = point
    y = a * x + margin
    p = class_path(Hirzebruch(a), (x, y))
    if p.q_T is None:
        return
    q = sympy.Symbol("q")
    poly = sum(sympy.Rational(c.numerator, c.denominator) * q**i for i, c in enumerate(p.volume_poly))
    roots = sympy.roots(sympy.Poly(poly, q))
    qt = sympy.Rational(p.q_T.numerator, p.q_T.denominator)
    assert roots.get(qt, 0) == p.k
