from __future__ import annotations

import math

import numpy as np
import pytest

from pentalab.errors import ContractViolation, DegenerateConfiguration, Diverged, StructuralMismatch
from pentalab.kdvlimit import (
    ALPHA_MEASURED,
    RK4_BUDGET,
    CircleGrid,
    DiffOperator,
    _jcross,
    _jderiv,
    _jmul,
    commutator,
    continuous_limit_check,
    curve_from_potentials,
    envelope,
    kdv_flow,
    kdv_rhs,
    order_drop_residual,
    q2_of,
    spectral_shift_check,
    transport,
    trig_potentials,
)

G64 = CircleGrid(64)


def test_grid_contracts_and_spectral_derivative():
    x = G64.x
    assert np.max(np.abs(G64.diff(np.sin(x)) - np.cos(x))) < 1e-13
    assert np.max(np.abs(G64.diff(np.sin(3 * x), 2) + 9 * np.sin(3 * x))) < 1e-11
    assert G64.interp(np.sin(x), [0.3])[0] == pytest.approx(math.sin(0.3), abs=1e-13)
    for bad in (30, 33):
        with pytest.raises(ContractViolation):
            CircleGrid(bad)


def test_q2_formula():
    x = G64.x
    for d in (2, 3):
        us = [np.cos(x)] * d
        Q = q2_of(DiffOperator.lax(G64, us))
        assert np.allclose(Q.coeffs[0], 2 / (d + 1) * np.cos(x))
        assert not np.any(Q.coeffs[1]) and np.all(Q.coeffs[2] == 1)
    Q = q2_of(DiffOperator.lax(G64, [np.cos(x), np.zeros(64)]))
    assert not np.any(Q.coeffs[0])


def test_commutator_matches_applied_operators():
    x = G64.x
    L = DiffOperator.lax(G64, [np.zeros(64), np.cos(x)])
    Q = q2_of(L)
    C = commutator(Q, L)
    assert C.order <= 1
    for f in (np.sin(2 * x), np.exp(np.cos(x))):
        direct = Q.apply(L.apply(f)) - L.apply(Q.apply(f))
        assert np.max(np.abs(C.apply(f) - direct)) < 1e-9 * max(1, np.max(np.abs(direct)))


def test_commutator_trivial_cases():
    one, zero = np.ones(64), np.zeros(64)
    d2 = DiffOperator(G64, (zero, zero, one))
    d3 = DiffOperator(G64, (zero, zero, zero, one))
    full = d2.compose(d3) - d3.compose(d2)
    assert all(not np.any(a) for a in full.coeffs)
    L = DiffOperator.lax(G64, [0.4 * one, -1.3 * one, 0.7 * one])
    assert all(np.max(np.abs(a)) < 1e-14 for a in kdv_rhs(L))


def test_commutator_detects_broken_bookkeeping():
    x = G64.x
    L = DiffOperator.lax(G64, [np.zeros(64), np.cos(x)])
    Q = DiffOperator(G64, (np.zeros(64), np.sin(x), np.ones(64)))
    with pytest.raises(StructuralMismatch):
        commutator(Q, L)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_order_drop(d):
    L = trig_potentials(G64, d, seed=d)
    assert order_drop_residual(q2_of(L), L) <= 1e-8


def test_boussinesq_right_hand_side():
    # hand expansion of [d^2 + (2/3) u1, d^3 + u1 d + u0]
    x = G64.x
    u0 = 0.3 * np.sin(x) + 0.1 * np.cos(2 * x)
    u1 = 0.5 * np.cos(x) - 0.2 * np.sin(3 * x)
    w0, w1 = kdv_rhs(DiffOperator.lax(G64, [u0, u1]))
    D = G64.diff
    assert np.max(np.abs(w1 - (2 * D(u0) - D(u1, 2)))) < 1e-12
    assert np.max(np.abs(w0 - (D(u0, 2) - 2 / 3 * D(u1, 3) - 2 / 3 * u1 * D(u1)))) < 1e-11


@pytest.mark.parametrize("d", [2, 3])
def test_flow_conserves_mean_of_top_potential(d):
    L = trig_potentials(G64, d, seed=1, amplitude=0.2)
    dt = RK4_BUDGET / 2 / (G64.N / 2) ** (d + 1)
    traj = kdv_flow(L, dt, 60, store_every=20)
    means = [float(np.mean(u[d - 1])) for u in traj.states]
    assert max(means) - min(means) <= 1e-12


def test_constant_data_is_fixed():
    L = DiffOperator.lax(G64, [0.5 * np.ones(64), -0.25 * np.ones(64)])
    traj = kdv_flow(L, 5e-5, 10)
    assert np.max(np.abs(traj.states[-1] - traj.states[0])) < 1e-14


def test_flow_contracts():
    L = trig_potentials(G64, 2, seed=0)
    with pytest.raises(ContractViolation):
        kdv_flow(L, 1.0, 1)
    with pytest.raises(ContractViolation):
        kdv_flow(L, -1e-5, 1)
    with pytest.raises(Diverged):
        kdv_flow(L, 1e-5, 5, blowup=1e-3)


def test_spectral_shift():
    L = trig_potentials(G64, 2, seed=2, amplitude=0.2)
    assert spectral_shift_check(L, 0.0, 1e-5, 20).deviation == 0
    for c in (1.0, 10.0):
        assert spectral_shift_check(L, c, 1e-5, 20).ok


def test_zero_potentials_give_the_monomial_curve():
    L = DiffOperator.lax(G64, [np.zeros(64)] * 3)
    curve = curve_from_potentials(L)
    x = G64.x
    expected = np.stack([x**k / math.factorial(k) for k in range(4)], axis=1)
    assert np.max(np.abs(curve.points - expected)) < 1e-9
    assert np.max(np.abs(curve.wronskian - 1)) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 4])
def test_wronskian_and_monodromy(d):
    curve = curve_from_potentials(trig_potentials(G64, d, seed=3))
    assert np.max(np.abs(curve.wronskian - 1)) <= 1e-10
    assert abs(np.linalg.det(curve.monodromy) - 1) <= 1e-10
    # G(x + 2pi) = M G(x)
    assert np.allclose(curve.frame(2 * np.pi + 0.7), curve.monodromy @ curve.frame(0.7), atol=1e-10)


def test_transport_against_integrator():
    L = trig_potentials(G64, 3, seed=4)
    curve = curve_from_potentials(L)
    xs = G64.x[::8]
    S = transport(L, xs, 0.1)
    for x, s in zip(xs, S):
        ref = np.linalg.solve(curve.frame(x), curve.frame(x + 0.1))
        assert np.max(np.abs(s - ref)) <= 1e-8


@pytest.mark.parametrize("d", [2, 3, 4])
def test_envelope_satisfies_determinant_system(d):
    curve = curve_from_potentials(trig_potentials(G64, d, seed=5))
    eps = 0.05
    env = envelope(curve, eps)
    worst = 0.0
    for i in range(0, G64.N, 8):
        x = curve.xs[i]
        pts = [curve.frame(x + a)[:, 0] for a in env.offsets]
        for j in range(d):
            v = curve.frames[i] @ env.derivs[i, j]
            P = np.column_stack(pts)
            vol = math.sqrt(np.linalg.det(P.T @ P))
            # |det| / (vol |v|) is the sine of the angle between v and the hyperplane
            worst = max(worst, abs(np.linalg.det(np.column_stack(pts + [v]))) / (vol * np.linalg.norm(v)))
    assert worst <= 1e-8


@pytest.mark.parametrize("d", [2, 3])
def test_envelope_tends_to_curve(d):
    curve = curve_from_potentials(trig_potentials(G64, d, seed=6))
    G = curve.points / np.linalg.norm(curve.points, axis=1)[:, None]
    dist = []
    for eps in (0.08, 0.04):
        P = envelope(curve, eps).points
        P = P / np.linalg.norm(P, axis=1)[:, None]
        P = P * np.sign(np.sum(P * G, axis=1))[:, None]
        dist.append(float(np.max(np.linalg.norm(P - G, axis=1))))
    assert dist[1] < dist[0] / 3.5


def test_envelope_rejects_nonpositive_eps():
    curve = curve_from_potentials(trig_potentials(G64, 3, seed=0))
    for eps in (0.0, -0.1):
        with pytest.raises(DegenerateConfiguration):
            envelope(curve, eps)


def test_smooth_rescaling_keeps_the_osculating_point():
    rng = np.random.default_rng(0)
    K, d = 8, 3
    n = rng.normal(size=(d + 1, K))
    g = rng.normal(size=K) * 0.3
    g[0] = 2.0
    m = _jmul(n, g[None, :])

    def point(h):
        derivs = [h]
        for _ in range(d - 1):
            derivs.append(_jderiv(derivs[-1]))
        p = _jcross(derivs)[:, 0]
        return p / np.linalg.norm(p)

    p, q = point(n), point(m)
    assert min(np.linalg.norm(p - q), np.linalg.norm(p + q)) < 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_continuous_limit(d):
    eps = [0.08, 0.04, 0.02]
    reports = [continuous_limit_check(trig_potentials(G64, d, seed=s), eps) for s in (0, 1)]
    for r in reports:
        assert abs(r.slope - 2.0) <= 0.1
        assert r.cosine >= 0.999
        assert abs(r.alpha - ALPHA_MEASURED[d]) <= 1e-4
    assert abs(reports[0].alpha - reports[1].alpha) <= 0.01 * abs(reports[0].alpha)
    assert reports[0].to_csv().splitlines()[0] == "eps,residual,alpha"


def test_continuous_limit_contracts():
    L = trig_potentials(G64, 2, seed=0)
    with pytest.raises(ContractViolation):
        continuous_limit_check(L, [0.1, 0.05])
    with pytest.raises(ContractViolation):
        continuous_limit_check(L, [0.1, 0.05, 0.01])
