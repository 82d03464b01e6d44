import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary_cantor.blaschke import (
    BlaschkeProduct, boundary_lift, corollary_oscillation_suite, derivative,
    derivative_modulus_on_circle, evaluate, expansion_suite, find_Q, image_arc_measure,
    iterate, iterate_constants, iterate_turns, monomial, quasi_constant_derivative_suite,
    schwarz_suite, series_on_arc, split_arc_by_image_measure,
)
from lacunary_cantor.circle_core import Arc, turn_to_point

MIXED = BlaschkeProduct(0.0, 1, (0.5,))
MAPS = [monomial(2), monomial(3), MIXED]
zeros = st.builds(lambda r, t: r * complex(turn_to_point(t)), st.floats(0, 0.9), st.floats(0, 1))


@given(st.lists(zeros, max_size=3), st.integers(1, 3), st.floats(0, 1))
def test_unimodular_on_circle(zs, m, t):
    f = BlaschkeProduct(0.1, m, tuple(zs))
    assert abs(abs(evaluate(f, complex(turn_to_point(t)))) - 1) < 1e-12


@given(st.lists(zeros, max_size=3), st.integers(1, 3), st.floats(0, 1), st.floats(0.1, 0.9))
def test_derivative_matches_difference_quotient(zs, m, t, r):
    f = BlaschkeProduct(0.0, m, tuple(zs))
    z = r * complex(turn_to_point(t))
    h = 1e-6
    fd = (evaluate(f, z + h) - evaluate(f, z - h)) / (2 * h)
    assert abs(derivative(f, z) - fd) < 1e-5 * max(1.0, abs(fd))


@given(st.lists(zeros, max_size=3), st.integers(1, 3), st.floats(0, 1))
def test_boundary_derivative_formula(zs, m, t):
    f = BlaschkeProduct(0.0, m, tuple(zs))
    xi = complex(turn_to_point(t))
    assert derivative_modulus_on_circle(f, t) == pytest.approx(abs(derivative(f, xi)), rel=1e-9)


def test_iterate_constants_closed_forms():
    c = iterate_constants(monomial(3))
    assert c.K_min == pytest.approx(3) and c.K_max == pytest.approx(3)
    # one zero at a in (0,1) with z: |f'| = 1 + (1-a^2)/|xi-a|^2, extremes at xi = -1, 1
    c = iterate_constants(MIXED)
    assert c.K_min == pytest.approx(1 + 0.75 / 1.5 ** 2, rel=1e-9)
    assert c.K_max == pytest.approx(1 + 0.75 / 0.5 ** 2, rel=1e-9)
    with pytest.raises(ValueError):
        iterate_constants(BlaschkeProduct(0.2, 1, ()))


@given(st.integers(0, 2 ** 20 - 1), st.integers(1, 20))
def test_monomial_turns_exact(num, n):
    t = Fraction(num, 2 ** 20)
    assert iterate_turns(monomial(2), n, t) == (t * 2 ** n) % 1


@given(st.floats(0, 1), st.floats(0.001, 0.2))
def test_lift_increment_matches_image_measure(start, length):
    arc = Arc(start, length)
    lift = boundary_lift(MIXED, arc)
    pts = iterate(MIXED, 1, turn_to_point(np.linspace(start, start + length, 4001)))
    steps = np.angle(pts[1:] * np.conj(pts[:-1])) / (2 * math.pi)
    assert lift.increment == pytest.approx(float(np.sum(steps)), abs=1e-9)


@given(st.integers(1, 8), st.floats(0.05, 0.9), st.floats(0, 1))
def test_split_hits_target(n, target, start):
    for f in (monomial(2), MIXED):
        consts = iterate_constants(f)
        arc = Arc(start, min(1.0, 1.05 * target / consts.K_min ** n))
        sub = split_arc_by_image_measure(f, n, arc, target, tol=1e-12)
        assert image_arc_measure(f, n, sub) == pytest.approx(target, abs=1e-9)
        assert arc.contains(sub)


def test_split_exact_for_monomials():
    arc = Arc(Fraction(1, 7), Fraction(1, 8))
    sub = split_arc_by_image_measure(monomial(2), 5, arc, Fraction(1, 2))
    assert sub.length == Fraction(1, 64)


@pytest.mark.parametrize("f", MAPS, ids=["z2", "z3", "mixed"])
def test_find_Q_is_minimal(f):
    eps, gamma1 = 0.2, 0.99
    Q = find_Q(f, eps, gamma1)
    z = gamma1 * turn_to_point(np.arange(8192) / 8192)
    assert np.max(np.abs(iterate(f, Q, z))) < eps
    assert np.max(np.abs(iterate(f, Q - 1, z))) >= eps


def test_find_Q_closed_form_for_monomial():
    # |z^(2^Q)| = gamma1^(2^Q) < eps
    eps, gamma1 = 0.2, 0.9
    expected = math.ceil(math.log2(math.log(eps) / math.log(gamma1)) + 1e-12)
    assert find_Q(monomial(2), eps, gamma1) == expected


@given(st.integers(0, 2 ** 30), st.integers(5, 40), st.lists(
    st.tuples(st.integers(1, 12), st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=5,
    unique_by=lambda x: x[0]))
def test_series_exact_phase_route_matches_float_route(num, depth, terms):
    # wide arcs: both routes have full float accuracy
    arc = Arc(Fraction(num, 2 ** 30), Fraction(1, 2 ** 12))
    terms = sorted(terms)
    idx = [n for n, _, _ in terms]
    coef = np.array([complex(a, b) for _, a, b in terms])
    u = np.linspace(0, 1, 9)
    exact = series_on_arc(monomial(2), idx, coef, arc, u)
    pts = turn_to_point(float(arc.start) + u * float(arc.length))
    direct = sum(c * pts ** (2 ** n) for n, c in zip(idx, coef))
    assert np.allclose(exact, direct, atol=1e-8)


@pytest.mark.parametrize("f", MAPS, ids=["z2", "z3", "mixed"])
def test_invariant_suites_small(f):
    for suite in (expansion_suite, corollary_oscillation_suite, quasi_constant_derivative_suite,
                  schwarz_suite):
        assert suite(f, 60, seed=3)["failures"] == 0


def test_config_round_trip_rejects_unknown():
    f = BlaschkeProduct(0.25, 2, (0.3 + 0.1j,))
    assert BlaschkeProduct.from_config(f.to_config()) == f
    with pytest.raises(ValueError):
        BlaschkeProduct.from_config({"zeros": [], "colour": 1})
    with pytest.raises(ValueError):
        BlaschkeProduct(0, 1, (1.2,))
