import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary_cantor import cantor as C
from lacunary_cantor.blaschke import monomial, iterate
from lacunary_cantor.circle_core import (
    Arc, harmonic_measure, power_gauge, pseudohyperbolic_distance, turn_to_point,
)

Z2 = monomial(2)
ARTUR = C.ArturConstants(0.2, 0.03240966796875, 4, "calibrated", 0.129638671875)


def step_config():
    return C.StepConfig(ARTUR, C.calibrate_delta1(Z2, ARTUR), 1.0, 2.0)


def exact_real_part(indices, coeffs, xi: Fraction) -> float:
    """Re sum b_n xi^(2^n) with the phase reduced in rationals."""
    return float(sum((b * complex(turn_to_point((xi * 2 ** n) % 1))).real
                     for n, b in zip(indices, coeffs)))


# ---------------------------------------------------------------- geometry

@given(st.floats(0.05, 0.98), st.integers(1, 6))
def test_poisson_tail_matches_quadrature(r, d):
    if d * (1 - r) >= 1:
        assert C.poisson_tail(r, d) == 0.0
        return
    arc = C.PolarPoint.from_complex(r).dilated_arc(d)
    rest = Arc(float(arc.start) + float(arc.length), 1 - float(arc.length))
    assert C.poisson_tail(r, d) == pytest.approx(harmonic_measure(r, [rest]), abs=1e-8)


@given(st.integers(1, 2 ** 40), st.integers(0, 2 ** 20), st.integers(2, 8))
def test_anchor_point_dilates_back_to_arc(den, num, d):
    length = Fraction(1, den + 1)
    arc = Arc(Fraction(num, 2 ** 20), length)
    z = C.anchor_point(arc, d)
    back = z.dilated_arc(d)
    assert back.start == arc.start and back.length == arc.length
    rho = C.radial_pseudohyperbolic(z, C.arc_point(arc))
    assert rho <= Fraction(d - 1, d)


@given(st.floats(0.01, 0.9), st.floats(0.01, 0.9))
def test_radial_distance_matches_float_formula(g1, g2):
    z, w = C.PolarPoint(Fraction(0), Fraction(g1)), C.PolarPoint(Fraction(0), Fraction(g2))
    assert float(C.radial_pseudohyperbolic(z, w)) == pytest.approx(
        pseudohyperbolic_distance(z.complex, w.complex), abs=1e-12)


@given(st.floats(1e-3, 0.5), st.integers(1, 12))
def test_iterate_modulus_matches_direct(gap, n):
    z = C.PolarPoint(Fraction(1, 3), Fraction(gap))
    assert C.iterate_modulus(Z2, n, z) == pytest.approx(abs(iterate(Z2, n, z.complex)), abs=1e-12)


def test_deep_iterate_modulus_stays_finite():
    z = C.PolarPoint(Fraction(0), Fraction(1, 2 ** 300))
    assert 0 < C.iterate_modulus(Z2, 250, z) < 1


# ---------------------------------------------------------------- arc classes

classes = st.builds(
    lambda lo, span, period, shift, r_lo, w: C.ArcClass(
        Fraction(1, 7), Fraction(1, 997), lo, lo + span, period, shift % period,
        min(r_lo, period - 1), min(r_lo + w, period - 1), Fraction(1, 5), Fraction(1, 2)),
    st.integers(0, 50), st.integers(0, 300), st.integers(1, 40), st.integers(0, 100),
    st.integers(0, 39), st.integers(0, 10))


@given(classes)
def test_class_counts_and_members_match_enumeration(cls):
    brute = [i for i in range(cls.lo, cls.hi + 1) if cls.is_member(i)]
    assert cls.count == len(brute)
    assert [cls.member(j) for j in range(cls.count)] == brute


@given(classes, st.fractions(0, 1), st.fractions(0, 1))
def test_class_measure_matches_enumeration(cls, a, w):
    b = a + w
    brute = sum(C._arc_overlap(cls.arc(i), a, b) for i in range(cls.lo, cls.hi + 1)
                if cls.is_member(i))
    assert cls.measure_in(a, b) == brute


# ---------------------------------------------------------------- E and the step

@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.0, 0.9))
def test_single_coefficient_superlevel_closed_form(re, im, frac):
    b = complex(re, im)
    if abs(b) < 1e-3:
        return
    thr = frac * abs(b)
    ivs = C.superlevel_intervals(2, [5], [b], thr)
    total = sum(e - s for s, e in ivs)
    assert total == pytest.approx(math.acos(frac) / math.pi, abs=1e-9)


def test_superlevel_measure_matches_grid():
    rng = np.random.default_rng(0)
    b = rng.normal(size=4) + 1j * rng.normal(size=4)
    idx = [3, 4, 5, 6]
    thr = 0.4 * np.linalg.norm(b)
    ivs = C.superlevel_intervals(2, idx, b, thr)
    u = (np.arange(1 << 20) + 0.5) / (1 << 20)
    vals = sum((bb * np.exp(2j * np.pi * 2 ** (n - 3) * u)).real for n, bb in zip(idx, b))
    assert sum(e - s for s, e in ivs) == pytest.approx(np.mean(vals >= thr), abs=1e-4)


@pytest.fixture(scope="module")
def six_step():
    cfg = step_config()
    z = C.PolarPoint(Fraction(0), Fraction(1))
    fam, diag = C.inductive_step(Z2, z, 1, 6, range(1, 7), np.ones(6), cfg)
    return cfg, fam, diag


def test_step_image_size_exact(six_step):
    cfg, fam, _ = six_step
    for _, arc in fam.arcs(limit=10 ** 6)[::13]:
        img = 2 ** 6 * arc.length
        assert cfg.eta <= img <= 4 * cfg.eta


def test_step_growth_bound_exact(six_step):
    _, fam, _ = six_step
    for c in fam.classes:
        assert c.arc_length <= Fraction(1, 2 ** 5)


def test_step_arcs_disjoint_and_covering(six_step):
    cfg, fam, diag = six_step
    arcs = sorted((a for _, a in fam.arcs(limit=10 ** 6)), key=lambda a: a.start)
    assert len(arcs) == fam.count
    for x, y in zip(arcs, arcs[1:]):
        assert x.start + x.length <= y.start
    assert fam.total_length() >= Fraction(cfg.covering)
    assert all(v["status"] == "pass" for v in diag["checks"].values())


def test_step_real_part_by_exact_phases(six_step):
    cfg, fam, _ = six_step
    bound = cfg.c_step * math.sqrt(6)
    for _, arc in fam.arcs(limit=10 ** 6)[::997]:
        for frac in (Fraction(0), Fraction(1, 2), Fraction(1)):
            xi = arc.start + frac * arc.length
            assert exact_real_part(range(1, 7), np.ones(6), xi) >= bound


def test_zero_block_keeps_everything_needed():
    cfg = step_config()
    z = C.PolarPoint(Fraction(1, 3), Fraction(1, 10 ** 6))
    fam, diag = C.inductive_step(Z2, z, 30, 40, [], [], cfg)
    J = z.dilated_arc(ARTUR.d)
    assert fam.total_length() >= Fraction(cfg.covering) * J.length


def test_step_rejects_point_with_large_iterate():
    cfg = step_config()
    with pytest.raises(C.ConstructionError):
        C.inductive_step(Z2, C.PolarPoint(Fraction(0), Fraction(1, 10 ** 6)), 1, 6,
                         range(1, 7), np.ones(6), cfg)


def test_steer_block_examples():
    assert C.steer_block(2.5) == 1
    assert C.steer_block(3j) == pytest.approx(1j)
    assert C.steer_block(0) == 1
    w = 0.3 - 0.7j
    assert abs(C.steer_block(w) * abs(w) - w) < 1e-15


def test_artur_config_rejects_unknown_and_bad_values():
    assert C.ArturConstants.from_config(ARTUR.to_config()).d == 4
    with pytest.raises(ValueError):
        C.ArturConstants.from_config({"epsilon": 0.2, "c": 0.1, "d": 2, "k": 1})
    with pytest.raises(ValueError):
        C.ArturConstants(1.5, 0.1, 2)


def test_calibration_chain_and_determinism():
    a = C.calibrate_artur_constants(Z2, trials=40, rng_seed=3)
    b = C.calibrate_artur_constants(Z2, trials=40, rng_seed=3)
    assert a == b
    assert a.d >= 1 and a.c <= a.c0 / 4 + 1e-15
    assert C.poisson_tail(1 - 1e-3, a.d) <= a.c0 / 2 + 1e-12


def test_delta1_calibration_margin():
    d1 = C.calibrate_delta1(Z2, ARTUR)
    osc = 2 * math.pi * 2 / (2 - 1)
    assert osc * float(d1) <= 0.375 * ARTUR.c < osc * float(2 * d1)


def test_schwarz_gamma1_is_pseudohyperbolic_ball_edge():
    g, d = 0.9, 4
    g1 = C.schwarz_gamma1(g, d)
    assert pseudohyperbolic_distance(g1, g) == pytest.approx((d - 1) / d)


# ---------------------------------------------------------------- driver

@pytest.fixture(scope="module")
def construction():
    g = power_gauge(0.5)
    a, cfg = C.prepare_construction(Z2, g, "paper_example", 2, 0.5, 2000, artur=ARTUR,
                                    gate="report", seed=0)
    state = C.build_cantor_set(Z2, a, g, 0.3 + 0.1j, 4, cfg)
    return a, cfg, state


def test_branch_bookkeeping(construction):
    a, cfg, state = construction
    Q = cfg.outer.Q
    for level in state.branches[1:]:
        for b in level:
            if b.case in (1, 2):
                assert b.L - b.U == Q
                assert cfg.inner.m(b.level + 1) == b.L
                assert b.U == cfg.inner.n(b.level)


def test_case_dichotomy(construction):
    a, cfg, state = construction
    for gen in state.generations[:-1]:
        assert gen["case1"] + gen["case2"] == gen["branches"]
    for level in state.branches[1:]:
        for b in level:
            if b.case == 2:
                assert b.block_max > state.r * b.d / 2
            elif b.case == 1:
                assert b.block_max <= state.r * b.d / 2


def test_step_inequalities_in_driver(construction):
    _, _, state = construction
    for name in ("IndStepSizeControl", "IndStepCoveringRequirement", "IndStepGrowthCondition",
                 "LongBlocksSizeControl", "AnchorDistance", "BranchBookkeeping"):
        assert state.checks[name]["status"] == "pass", name


def test_children_nested_in_parents(construction):
    _, _, state = construction
    for lvl, fam in enumerate(state.families):
        parents = state.branches[lvl]
        for c in fam.classes:
            parent_arc = parents[c.parent].arc
            for j in (0, c.count - 1):
                assert parent_arc.contains(c.arc(c.member(j)))


def test_frostman_recursion(construction):
    _, _, state = construction
    fm = C.frostman_measure(state)
    assert fm.checks["MassConservation"]["status"] == "pass"
    assert all(m == 1 for m in fm.level_mass)
    assert fm.mass(Fraction(0), Fraction(1)) == 1
    # half-open split adds up
    cut = Fraction(3, 10)
    assert fm.mass(0, cut) + fm.mass(cut, 1) == 1
    assert fm.checks["LimitGrowthCondition"]["status"] == "pass"


# ---------------------------------------------------------------- box counting

def test_box_full_circle():
    res = C.box_dimension_estimate([Arc.full()], [10.0 ** -j for j in range(1, 5)])
    assert res["slope"] == pytest.approx(1.0, abs=1e-9)


def test_box_middle_thirds():
    res = C.box_dimension_estimate(C.middle_thirds_arcs(10), [3.0 ** -j for j in range(1, 8)])
    assert res["slope"] == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_box_single_point():
    res = C.box_dimension_estimate(np.array([0.123]), [10.0 ** -j for j in range(1, 5)])
    assert res["slope"] == pytest.approx(0.0, abs=1e-12)


def test_box_rejects_degenerate_scales():
    with pytest.raises(ValueError):
        C.box_dimension_estimate(np.array([0.1]), [0.1, 0.05])
    with pytest.raises(ValueError):
        C.box_dimension_estimate(np.array([0.1]), [0.1, 0.05, 0.02])
