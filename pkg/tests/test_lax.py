from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import sympy
from scipy.spatial import ConvexHull

from pentalab.algebra import RATIONAL, char_poly, float_backend
from pentalab.errors import ContractViolation, StructuralMismatch
from pentalab.lax import (
    closed_polygon_conditions,
    compound_traces,
    conservation_report,
    d_diagonal,
    floquet_bloch,
    integrals_rank,
    interior_lattice_points,
    inverse_form,
    jacobian_rank,
    labeled_integrals,
    lax_matrix,
    lax_monodromy,
    newton_genus_bound,
    random_closed_polygon,
    spectral,
    spectral_bound,
    spectral_to_json,
)
from pentalab.pentagram import pentagram_map
from pentalab.polygon import random_polygon

LAM = sympy.Symbol("lam")


def _sympy_lax(c, j, pattern):
    """Bordered form built and inverted in sympy."""
    d = c.d
    B = sympy.zeros(d + 1, d + 1)
    B[0, d] = (-1) ** d
    for i, e in enumerate(pattern):
        B[i + 1, i] = LAM ** e
        B[i + 1, d] = sympy.Rational(str(c.a(j, i + 1)))
    return B.inv()


def _sympy_R(c, lam0, pattern):
    M = sympy.eye(c.d + 1)
    for j in range(c.n):
        M = _sympy_lax(c, j, pattern).subs(LAM, lam0) * M
    k = sympy.Symbol("k")
    return sympy.Poly((k * sympy.eye(c.d + 1) - M).det(), k).all_coeffs()[::-1]


@pytest.mark.parametrize("d,n", [(2, 5), (3, 5), (4, 7)])
def test_lax_matrix_matches_sympy_inverse(d, n):
    c = random_polygon(d, n, seed=1)
    lam0 = Fraction(5, 3)
    for j in range(n):
        ref = _sympy_lax(c, j, d_diagonal(d)).subs(LAM, sympy.Rational(5, 3))
        got = lax_matrix(c, j).evaluate(RATIONAL(lam0))
        assert [[sympy.Rational(str(x)) for x in r] for r in got] == ref.tolist()


@pytest.mark.parametrize("d,n,stated", [(2, 5, False), (3, 5, False), (3, 7, False), (4, 7, False), (4, 7, True)])
def test_closed_form_equals_adjugate_route(d, n, stated):
    c = random_polygon(d, n, seed=2)
    for j in range(n):
        assert lax_matrix(c, j, stated) == inverse_form(c, j, stated).inverse()
        assert lax_matrix(c, j, stated).det().is_monomial()


@pytest.mark.parametrize("d,n", [(2, 5), (3, 5), (3, 7)])
def test_conservation_by_independent_sympy_route(d, n):
    c = random_polygon(d, n, seed=3)
    Tc = pentagram_map(c)
    lam0 = sympy.Rational(7, 4)
    assert _sympy_R(c, lam0, d_diagonal(d)) == _sympy_R(Tc, lam0, d_diagonal(d))
    R = spectral(c)
    assert [sympy.Rational(str(v.evaluate(RATIONAL(Fraction(7, 4))))) for v in R.k_coeffs] == _sympy_R(
        c, lam0, d_diagonal(d))


@pytest.mark.parametrize("d,n", [(2, 5), (2, 7), (3, 5), (3, 7), (4, 7), (5, 7), (6, 9)])
def test_exact_conservation(d, n):
    c = random_polygon(d, n, seed=10 + d)
    assert spectral(c) == spectral(pentagram_map(c))


@pytest.mark.parametrize("d,n", [(3, 5), (4, 7)])
def test_spectrum_independent_of_base_point(d, n):
    c = random_polygon(d, n, seed=4)
    R0 = spectral(c)
    for i in range(1, n):
        assert spectral(c, monodromy_index=i) == R0


@pytest.mark.parametrize("d,n", [(4, 7), (6, 9)])
def test_single_lambda_diagonal_is_not_conserved(d, n):
    # Characterization: the variant with lam only at position d/2 + 1 is not an
    # invariant of the step-2 map once d >= 4.
    c = random_polygon(d, n, seed=5)
    assert spectral(c, stated=True) != spectral(pentagram_map(c), stated=True)


def test_single_lambda_diagonal_agrees_for_d2():
    assert d_diagonal(2, stated=True) == d_diagonal(2)


def test_float_conservation_high_precision():
    c = random_polygon(3, 7, seed=0).to_backend(float_backend(256))
    assert conservation_report(c, 3).max_drift() <= 1e-60


def test_exact_conservation_report_is_all_zero():
    table = conservation_report(random_polygon(3, 5, seed=1), 4)
    assert table.max_drift() == 0
    assert table.to_csv().startswith("step,coeff_id,rel_drift")


def test_corrupted_lax_sign_is_detected(monkeypatch):
    import pentalab.lax as lax_mod

    good = lax_mod.lax_matrix

    def flipped(c, j, stated=False):
        L = good(c, j, stated)
        rows = [list(r) for r in L.rows]
        rows[0][1] = -rows[0][1]
        return type(L)(rows, L.backend)

    monkeypatch.setattr(lax_mod, "lax_matrix", flipped)
    with pytest.raises(StructuralMismatch):
        conservation_report(random_polygon(3, 5, seed=1), 2)


@pytest.mark.parametrize("n", [5, 7, 9])
def test_three_dimensional_labels(n):
    R = spectral(random_polygon(3, n, seed=n))
    q = n // 2
    assert len(labeled_integrals(R)) == 3 * (q + 1)
    assert R.table[(0, 0)] == 1 and R.table[(4, 2 * n)] == 1
    js = spectral_to_json(R)
    assert set(js["labels"]) == {"G", "J", "I"}


def test_labels_require_d3_odd_n():
    with pytest.raises(ContractViolation):
        labeled_integrals(spectral(random_polygon(2, 5, seed=0)))


def _brute_interior(points):
    pts = np.array(sorted(set(points)), dtype=float)
    hull = ConvexHull(pts)
    lo, hi = pts.min(axis=0).astype(int), pts.max(axis=0).astype(int)
    count = 0
    for x in range(lo[0], hi[0] + 1):
        for y in range(lo[1], hi[1] + 1):
            if np.all(hull.equations[:, :2] @ [x, y] + hull.equations[:, 2] < -1e-9):
                count += 1
    return count


@pytest.mark.parametrize("n", [5, 7, 9])
def test_genus_against_brute_force(n):
    R = spectral(random_polygon(3, n, seed=20 + n))
    g = newton_genus_bound(R)
    assert g == 3 * (n // 2)
    assert g == _brute_interior([(m, r) for (r, m) in R.table])


def test_interior_lattice_points_simple():
    assert interior_lattice_points([(0, 0), (4, 0), (0, 4)]) == 3
    assert interior_lattice_points([(0, 0), (2, 0), (2, 2), (0, 2)]) == 1


@pytest.mark.parametrize("n", [5, 7])
def test_closed_polygons(n):
    c, sign = random_closed_polygon(3, n, seed=n)
    rep = closed_polygon_conditions(spectral(c), sign)
    assert rep.max_residual() == 0
    assert rep.dependency == 0
    be = float_backend(256)
    c, sign = random_closed_polygon(3, n, seed=n, backend=be)
    assert closed_polygon_conditions(spectral(c), sign).max_residual() <= 1e-25


def test_dependency_holds_for_open_polygons():
    R = spectral(random_polygon(3, 7, seed=3))
    for sign in (1, -1):
        rep = closed_polygon_conditions(R, sign)
        assert rep.dependency == 0
        assert rep.max_residual() != 0


def test_rank_full_and_detects_dependence():
    assert integrals_rank(random_polygon(3, 5, seed=7)) == 9
    be = float_backend(53)
    rank, _ = jacobian_rank(lambda xs: [xs[0] + xs[1], 2 * xs[0] + 2 * xs[1], xs[2] ** 2],
                            [be(1), be(2), be(3)], be)
    assert rank == 2


def test_floquet_bloch_eigenpairs():
    c = random_polygon(3, 5, seed=8)
    be = float_backend(256)
    lam0 = Fraction(13, 10)
    M = lax_monodromy(c.to_backend(be), 0).evaluate(be(lam0))
    R = spectral(c)
    for k, psi in floquet_bloch(c, lam0):
        assert abs(sum(psi) - 1) < 1e-60
        Mpsi = [sum(M[i][j] * psi[j] for j in range(4)) for i in range(4)]
        assert max(abs(a - k * b) for a, b in zip(Mpsi, psi)) < 1e-50
        val = sum(poly.evaluate(RATIONAL(lam0)) * k ** r for r, poly in enumerate(R.k_coeffs))
        assert abs(val) < 1e-50 * max(1, abs(k)) ** 4


@pytest.mark.parametrize("d,n,stated", [(2, 5, False), (3, 7, False), (4, 7, False), (4, 7, True), (5, 7, False)])
def test_compound_traces_equal_berkowitz(d, n, stated):
    c = random_polygon(d, n, seed=4)
    R = char_poly(lax_monodromy(c, 0, stated))
    ref = {(r, m - R.cleared_power): v for (r, m), v in R.table.items() if v != 0}
    got = {key: v for key, v in compound_traces(c, 0, stated).items() if v != 0}
    assert got == ref


@pytest.mark.parametrize("d,n", [(3, 7), (4, 7), (6, 9)])
def test_float_spectral_against_exact(d, n):
    c = random_polygon(d, n, seed=5)
    exact = spectral(c)
    ref = {(r, m - exact.cleared_power): v for (r, m), v in exact.table.items()}
    approx = spectral(c.to_backend(float_backend(256)))
    got = {(r, m - approx.cleared_power): v for (r, m), v in approx.table.items()}
    assert set(got) == {key for key, v in ref.items() if v != 0}
    for key, v in got.items():
        num, den = int(ref[key].numerator), int(ref[key].denominator)
        assert abs(v * den - num) <= 1e-60 * abs(num)
    bound = spectral_bound(c.to_backend(float_backend(256)))
    assert all(abs(v) <= bound[key] * (1 + 1e-60) for key, v in got.items())


def test_spectral_bound_requires_float():
    with pytest.raises(ContractViolation):
        spectral_bound(random_polygon(3, 5, seed=0))


def test_guard_bits_only_change_the_measurement():
    c = random_polygon(3, 7, seed=0).to_backend(float_backend(53))
    guarded = conservation_report(c, 5)
    plain = conservation_report(c, 5, guard_bits=0)
    assert guarded.max_drift() <= 1e-9
    assert plain.max_drift() <= 1e-6
    assert {(s, key) for s, key, _ in guarded.rows} >= {(s, key) for s, key, _ in plain.rows}
