from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pentalab.algebra import RATIONAL, float_backend
from pentalab.errors import ContractViolation
from pentalab.lax import inverse_form
from pentalab.polygon import random_polygon
from pentalab.scaling import (
    ScalingRule,
    apply_scaling,
    monodromy_crosscheck,
    scaled_frame_matrix,
    scaling_invariance_check,
    scaling_survey,
    survey_csv,
)

SPECTRAL_N = {2: 5, 3: 5, 4: 7, 5: 7, 6: 9, 7: 9, 8: 10}
ratios = st.builds(Fraction, st.integers(-7, 7).filter(bool), st.integers(1, 7))


def test_rules():
    assert ScalingRule.for_dimension(3).exponents == (1, 0, 1)
    assert ScalingRule.for_dimension(2).exponents == (1, -1)
    assert ScalingRule.for_dimension(4).exponents == (2, -1, 1, -2)
    assert ScalingRule.for_dimension(2, stated=True).exponents == (-1, 1)
    assert ScalingRule.for_dimension(4, stated=True).exponents == (-1, -2, 2, 1)
    assert ScalingRule.for_dimension(3).lam_weight() == -2
    for d in (2, 4, 6):
        assert ScalingRule.for_dimension(d).lam_weight() == d + 1
        assert ScalingRule.for_dimension(d, stated=True).lam_weight() == -(d + 1)


@settings(max_examples=25, deadline=None)
@given(ratios, ratios, st.sampled_from([2, 3, 4, 5]))
def test_group_action(s, t, d):
    c = random_polygon(d, SPECTRAL_N[d], seed=1)
    assert apply_scaling(apply_scaling(c, s), t) == apply_scaling(c, s * t)
    assert apply_scaling(c, 1) == c


def test_zero_scaling_rejected():
    with pytest.raises(ContractViolation):
        apply_scaling(random_polygon(3, 5), 0)
    with pytest.raises(ContractViolation):
        apply_scaling(random_polygon(3, 5), 2, ScalingRule.for_dimension(2))


@settings(max_examples=12, deadline=None)
@given(ratios, st.integers(0, 1000), st.sampled_from([2, 3, 4, 5, 6]))
def test_exact_invariance(s, seed, d):
    c = random_polygon(d, SPECTRAL_N[d], seed=seed)
    assert scaling_invariance_check(c, s) == 0


def test_float_invariance_d3():
    be = float_backend(53)
    c = random_polygon(3, 7, seed=2).to_backend(be)
    assert scaling_invariance_check(c, be(1.7)) <= 1e3 * be.eps


@pytest.mark.parametrize("d", [4, 6])
def test_single_block_rule_fails_for_step2_map(d):
    c = random_polygon(d, SPECTRAL_N[d], seed=3)
    dev = scaling_invariance_check(c, Fraction(3, 2), ScalingRule.for_dimension(d, stated=True))
    assert dev > Fraction(1, 10)


def test_single_block_rule_is_inverse_for_d2():
    c = random_polygon(2, 5, seed=4)
    stated = ScalingRule.for_dimension(2, stated=True)
    assert apply_scaling(c, Fraction(2), stated) == apply_scaling(c, Fraction(1, 2))
    assert scaling_invariance_check(c, Fraction(5, 3), stated) == 0


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_conjugation_identity_exact(d):
    # B_j(lam) = s^{-e_d} g^{-1} N_j(s) g with g = diag(s^e_0, ..., s^e_d), lam = s^w
    c = random_polygon(d, SPECTRAL_N[d], seed=5)
    rule = ScalingRule.for_dimension(d)
    s = RATIONAL(Fraction(3, 2))
    e = (0,) + rule.exponents
    lam = s ** rule.lam_weight()
    for j in range(c.n):
        N = scaled_frame_matrix(c, j, s, rule)
        B = inverse_form(c, j).evaluate(lam)
        for r in range(d + 1):
            for q in range(d + 1):
                assert B[r][q] == s ** (-e[-1]) * s ** (-e[r]) * N[r][q] * s ** e[q]


@pytest.mark.parametrize("d,n", [(3, 5), (3, 7), (4, 7), (5, 7), (6, 9)])
def test_monodromy_crosscheck(d, n):
    c = random_polygon(d, n, seed=6)
    for s in (Fraction(1, 2), Fraction(2)):
        assert monodromy_crosscheck(c, s) <= 1e-60


def test_survey_and_reporting_beyond_six():
    rows = scaling_survey(3, 5, samples=3, seed=1)
    assert all(r.deviation == 0 and r.asserted for r in rows)
    assert survey_csv(rows).splitlines()[0] == "d,n,seed,s,deviation"
    high = scaling_survey(7, 9, samples=1, seed=1)
    assert not high[0].asserted
