"""Continuous limit: differential operators on the circle and the (2, d+1)-KdV flow.

L = d^{d+1} + u_{d-1} d^{d-1} + ... + u_0 acts on functions of x in [0, 2pi);
Q_2 = d^2 + 2/(d+1) u_{d-1}, and the flow is dL/dt = [Q_2, L].

The envelope computation works in a moving frame.  F(x) = [G, G', ..., G^(d)]
obeys F' = F C(x) with C the companion matrix of L, so every object near x
can be written in the fixed basis F(x) as a truncated Taylor series in
h = (point - x).  Points of the curve at x + a come from the Taylor
recurrence of the transport matrix F(x)^-1 F(x + a); all derivatives of the
hyperplanes, of the envelope and of its Wronskian are then exact jet
operations rather than numerical differentiation of sampled data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ContractViolation,
    DegenerateConfiguration,
    Diverged,
    IllConditioned,
    IntegrationFailure,
    StructuralMismatch,
)

RK4_BUDGET = 2.8
"""Largest dt * (N/2)^(d+1) accepted by kdv_flow."""

ALPHA_MEASURED = {2: 0.5, 3: 1.0 / 6.0}
"""alpha in w = alpha [Q_2, L], measured for d = 2, 3.

Values from Richardson extrapolation over eps = 0.08, 0.04, 0.02 on random
trigonometric potentials (agreement to ~1e-7 across potentials).  They depend
on the offset convention of envelope_offsets.
"""


# ---------------------------------------------------------------------------
# grid and operators


@dataclass(frozen=True)
class CircleGrid:
    N: int

    def __post_init__(self):
        if self.N < 32 or self.N % 2:
            raise ContractViolation(f"grid size must be even and >= 32, got {self.N}")

    @property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.N // 2 + 1, dtype=float)

    def diff(self, f, m: int = 1) -> np.ndarray:
        """m-th spectral derivative; the Nyquist mode is dropped for m > 0."""
        if m == 0:
            return np.asarray(f, dtype=float).copy()
        c = np.fft.rfft(f)
        c = c * (1j * self.wavenumbers) ** m
        c[-1] = 0
        return np.fft.irfft(c, self.N)

    def taylor(self, f, pts, order: int) -> np.ndarray:
        """Coefficients f^(k)(p)/k!, k = 0..order, of the trigonometric interpolant.

        Returns shape (len(pts), order + 1).
        """
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        c = np.fft.rfft(f) / self.N
        k = self.wavenumbers
        w = np.full(k.shape, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        E = np.exp(1j * np.outer(pts, k))  # (P, M)
        out = np.empty((len(pts), order + 1))
        for m in range(order + 1):
            cm = c * w * (1j * k) ** m
            if m > 0:
                cm[-1] = 0
            out[:, m] = (E @ cm).real / math.factorial(m)
        return out

    def interp(self, f, pts, m: int = 0) -> np.ndarray:
        return self.taylor(f, pts, m)[:, m] * math.factorial(m)


@dataclass(frozen=True, eq=False)
class DiffOperator:
    """sum_k coeffs[k](x) d^k with sampled coefficient functions."""

    grid: CircleGrid
    coeffs: tuple

    def __post_init__(self):
        arrs = tuple(np.asarray(a, dtype=float) * np.ones(self.grid.N) for a in self.coeffs)
        object.__setattr__(self, "coeffs", arrs)

    @classmethod
    def lax(cls, grid: CircleGrid, potentials) -> "DiffOperator":
        """d^{d+1} + u_{d-1} d^{d-1} + ... + u_0 from (u_0, ..., u_{d-1})."""
        us = list(potentials)
        d = len(us)
        if d < 1:
            raise ContractViolation("need at least one potential")
        return cls(grid, tuple(us) + (np.zeros(grid.N), np.ones(grid.N)))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def d(self) -> int:
        return self.order - 1

    def is_normalized(self, tol: float = 0.0) -> bool:
        top = self.coeffs[-1]
        return bool(np.all(np.abs(top - 1) <= tol) and np.all(np.abs(self.coeffs[-2]) <= tol))

    @property
    def potentials(self) -> list[np.ndarray]:
        if not self.is_normalized():
            raise ContractViolation("operator is not monic with vanishing d^{d} term")
        return list(self.coeffs[: self.d])

    def apply(self, f) -> np.ndarray:
        return sum(a * self.grid.diff(f, k) for k, a in enumerate(self.coeffs))

    def compose(self, other: "DiffOperator") -> "DiffOperator":
        """self o other via a d^i b d^k = a sum_m C(i,m) b^(m) d^(i-m+k)."""
        g = self.grid
        out = [np.zeros(g.N) for _ in range(self.order + other.order + 1)]
        for i, a in enumerate(self.coeffs):
            if not np.any(a):
                continue
            for k, b in enumerate(other.coeffs):
                if not np.any(b):
                    continue
                for m in range(i + 1):
                    out[i - m + k] += math.comb(i, m) * a * g.diff(b, m)
        return DiffOperator(g, tuple(out))

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        m = max(self.order, other.order) + 1
        z = np.zeros(self.grid.N)
        a = list(self.coeffs) + [z] * (m - len(self.coeffs))
        b = list(other.coeffs) + [z] * (m - len(other.coeffs))
        return DiffOperator(self.grid, tuple(x - y for x, y in zip(a, b)))


def q2_of(L: DiffOperator) -> DiffOperator:
    u = L.potentials[-1]
    g = L.grid
    return DiffOperator(g, (2.0 / (L.d + 1) * u, np.zeros(g.N), np.ones(g.N)))


def commutator(Q: DiffOperator, L: DiffOperator, tol: float = 1e-8) -> DiffOperator:
    """[Q, L] truncated to order <= d - 1 after checking that the rest cancels."""
    if Q.order != 2:
        raise ContractViolation("commutator expects the order-2 operator Q_2")
    d = L.d
    full = Q.compose(L) - L.compose(Q)
    scale = max(1.0, max(float(np.max(np.abs(a))) for a in Q.compose(L).coeffs))
    for k in range(d, full.order + 1):
        if float(np.max(np.abs(full.coeffs[k]))) > tol * scale:
            raise StructuralMismatch(f"coefficient of d^{k} in [Q, L] does not cancel")
    return DiffOperator(L.grid, full.coeffs[:d])


def order_drop_residual(Q: DiffOperator, L: DiffOperator) -> float:
    """Largest sampled coefficient of order >= d in QL - LQ, relative to QL."""
    full = Q.compose(L) - L.compose(Q)
    scale = max(1.0, max(float(np.max(np.abs(a))) for a in Q.compose(L).coeffs))
    return max(float(np.max(np.abs(full.coeffs[k]))) for k in range(L.d, full.order + 1)) / scale


def kdv_rhs(L: DiffOperator) -> list[np.ndarray]:
    return list(commutator(q2_of(L), L, tol=1e-6).coeffs)


# ---------------------------------------------------------------------------
# the flow


@dataclass
class Trajectory:
    grid: CircleGrid
    dt: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)  # arrays of shape (d, N)

    def final(self) -> DiffOperator:
        return DiffOperator.lax(self.grid, list(self.states[-1]))


def kdv_flow(L0: DiffOperator, dt: float, steps: int, budget: float = RK4_BUDGET,
             blowup: float = 1e6, store_every: int = 1) -> Trajectory:
    """Classical RK4 for du_j/dt = coefficient of d^j in [Q_2, L]."""
    g, d = L0.grid, L0.d
    if dt <= 0 or steps < 0:
        raise ContractViolation("need dt > 0 and steps >= 0")
    if dt * (g.N / 2) ** (d + 1) > budget:
        raise ContractViolation(
            f"dt = {dt} exceeds the explicit stability budget {budget / (g.N / 2) ** (d + 1):.3e}")
    u = np.array(L0.potentials)
    limit = blowup * max(1.0, float(np.max(np.abs(u))))

    def f(v):
        return np.array(kdv_rhs(DiffOperator.lax(g, list(v))))

    traj = Trajectory(g, dt, [0.0], [u.copy()])
    for s in range(1, steps + 1):
        k1 = f(u)
        k2 = f(u + dt / 2 * k1)
        k3 = f(u + dt / 2 * k2)
        k4 = f(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        size = float(np.max(np.abs(u)))
        if not np.isfinite(size) or size > limit:
            raise Diverged(s, size)
        if s % store_every == 0 or s == steps:
            traj.times.append(s * dt)
            traj.states.append(u.copy())
    return traj


@dataclass
class ShiftReport:
    deviation: float
    integration_tol: float

    @property
    def ok(self) -> bool:
        return self.deviation <= 10 * self.integration_tol


def spectral_shift_check(L0: DiffOperator, c: float, dt: float, steps: int) -> ShiftReport:
    """Compare the flows of u and of u with u_0 -> u_0 + c.

    The integration tolerance is the step-doubling estimate (dt against two
    half steps) with a floor of eps * max|u| * steps for accumulated rounding.
    """
    base = kdv_flow(L0, dt, steps)
    us = L0.potentials
    shifted = DiffOperator.lax(L0.grid, [us[0] + c] + us[1:])
    other = kdv_flow(shifted, dt, steps)
    dev = 0.0
    for a, b in zip(base.states, other.states):
        dev = max(dev, float(np.max(np.abs(b[0] - a[0] - c))))
        if len(a) > 1:
            dev = max(dev, float(np.max(np.abs(b[1:] - a[1:]))))
    fine = kdv_flow(L0, dt / 2, 2 * steps, store_every=2 * steps)
    est = float(np.max(np.abs(fine.states[-1] - base.states[-1])))
    scale = max(1.0, abs(c), float(np.max(np.abs(base.states[-1]))))
    floor = np.finfo(float).eps * scale * max(1, steps)
    return ShiftReport(dev, max(est, floor))


# ---------------------------------------------------------------------------
# curves


def _companion(us_at: np.ndarray) -> np.ndarray:
    """C with F' = F C: ones below the diagonal, last column -u_j."""
    d = us_at.shape[0]
    C = np.zeros((d + 1, d + 1))
    C[np.arange(1, d + 1), np.arange(d)] = 1.0
    C[:d, d] = -us_at
    return C


@dataclass
class SampledCurve:
    op: DiffOperator
    xs: np.ndarray
    frames: np.ndarray  # (N, d+1, d+1), columns G, G', ..., G^(d)
    monodromy: np.ndarray
    wronskian: np.ndarray
    _solution: object = None

    @property
    def points(self) -> np.ndarray:
        return self.frames[:, :, 0]

    def frame(self, x: float) -> np.ndarray:
        q = math.floor(x / (2 * np.pi))
        r = x - 2 * np.pi * q
        F = self._solution.sol(r).reshape(self.op.d + 1, self.op.d + 1)
        return np.linalg.matrix_power(self.monodromy, q) @ F


def curve_from_potentials(L: DiffOperator, grid: CircleGrid | None = None,
                          rtol: float = 1e-13, atol: float = 1e-15) -> SampledCurve:
    """Solve F' = F C(x), F(0) = I on [0, 2pi] with DOP853; M = F(2pi)."""
    grid = grid or L.grid
    d = L.d
    us = L.potentials
    m = d + 1

    def rhs(x, y):
        uvals = np.array([L.grid.interp(u, [x])[0] for u in us])
        return (y.reshape(m, m) @ _companion(uvals)).ravel()

    sol = solve_ivp(rhs, (0.0, 2 * np.pi), np.eye(m).ravel(), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    xs = grid.x
    frames = np.array([sol.sol(x).reshape(m, m) for x in xs])
    M = sol.y[:, -1].reshape(m, m)
    return SampledCurve(L, xs, frames, M, np.linalg.det(frames), sol)


# ---------------------------------------------------------------------------
# truncated Taylor arithmetic (last axis = coefficient index)


def _jmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    K = min(a.shape[-1], b.shape[-1])
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (K,))
    for i in range(K):
        out[..., i:] += a[..., i : i + 1] * b[..., : K - i]
    return out


def _jderiv(a: np.ndarray) -> np.ndarray:
    k = np.arange(1, a.shape[-1])
    return a[..., 1:] * k


def _jdet(rows: list) -> np.ndarray:
    """Determinant of a square matrix of jets (rows[i][j] arrays)."""
    m = len(rows)
    if m == 1:
        return rows[0][0]
    total = None
    for r in range(m):
        minor = [row[1:] for i, row in enumerate(rows) if i != r]
        term = _jmul(rows[r][0], _jdet(minor))
        term = term if r % 2 == 0 else -term
        total = term if total is None else total + term
    return total


def _jcross(vecs: list) -> np.ndarray:
    """Covector h with h . v = 0 for each jet vector v; shape (..., d+1, K)."""
    K = min(v.shape[-1] for v in vecs)
    vecs = [v[..., :K] for v in vecs]
    m = vecs[0].shape[-2]
    comps = []
    for i in range(m):
        rows = [[v[..., r, :] for v in vecs] for r in range(m) if r != i]
        c = _jdet(rows)
        comps.append(c if (i + m - 1) % 2 == 0 else -c)
    return np.stack(comps, axis=-2)


def _jpow(g: np.ndarray, p: float) -> np.ndarray:
    """g^p for a jet with positive constant term (Miller recurrence)."""
    K = g.shape[-1]
    f = np.zeros_like(g)
    f[..., 0] = g[..., 0] ** p
    for k in range(1, K):
        acc = 0
        for j in range(1, k + 1):
            acc = acc + (p * j - (k - j)) * g[..., j] * f[..., k - j]
        f[..., k] = acc / (k * g[..., 0])
    return f


# ---------------------------------------------------------------------------
# transport and envelope


def _transport_taylor(L: DiffOperator, ys: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients P_k of F(y)^-1 F(y + h); shape (len(ys), order+1, m, m)."""
    d = L.d
    m = d + 1
    us = L.potentials
    ut = np.stack([L.grid.taylor(u, ys, order) for u in us], axis=1)  # (P, d, K)
    P = len(ys)
    C = np.zeros((P, order + 1, m, m))
    C[:, 0, np.arange(1, m), np.arange(d)] = 1.0
    C[:, :, :d, d] = -np.transpose(ut, (0, 2, 1))
    T = np.zeros((P, order + 1, m, m))
    T[:, 0] = np.eye(m)
    for k in range(order):
        acc = np.zeros((P, m, m))
        for i in range(k + 1):
            acc += T[:, i] @ C[:, k - i]
        T[:, k + 1] = acc / (k + 1)
    return T


def transport(L: DiffOperator, xs, a: float, order: int = 24, hmax: float = 0.02) -> np.ndarray:
    """F(x)^-1 F(x + a) for every x in xs by Taylor stepping."""
    xs = np.asarray(xs, dtype=float)
    m = L.d + 1
    S = np.broadcast_to(np.eye(m), (len(xs), m, m)).copy()
    if a == 0:
        return S
    steps = max(1, math.ceil(abs(a) / hmax))
    h = a / steps
    powers = h ** np.arange(order + 1)
    for s in range(steps):
        P = _transport_taylor(L, xs + s * h, order)
        S = S @ np.einsum("pkij,k->pij", P, powers)
    return S


def envelope_offsets(d: int, eps: float) -> list[float]:
    """Curve parameters (relative to x) spanning the hyperplane P_eps(x)."""
    if d % 2:
        m = d // 2
        return [i * eps for i in range(-m, m + 1)]
    m = d // 2
    return [(2 * i - 1) * eps for i in range(-m + 1, m + 1)]


@dataclass
class Envelope:
    eps: float
    xs: np.ndarray
    offsets: list
    derivs: np.ndarray  # (N, d+2, d+1): normalized L^(k)(x) in the basis F(x)
    raw_wronskian: np.ndarray
    curve: SampledCurve

    @property
    def points(self) -> np.ndarray:
        """L_eps(x) in absolute coordinates (Wronskian-normalized lift)."""
        return np.einsum("nij,nj->ni", self.curve.frames, self.derivs[:, 0])

    def potentials(self, cond_limit: float = 1e12) -> np.ndarray:
        """u_{j,eps}: L^(d+1) + sum_j u_{j,eps} L^(j) = 0, shape (d, N).

        The system uses all d+1 components and the d^d coefficient as an
        unknown; its vanishing is the Wronskian normalization.
        """
        D = self.derivs
        d = D.shape[-1] - 1
        A = np.transpose(D[:, : d + 1], (0, 2, 1))
        b = -D[:, d + 1]
        cond = np.linalg.cond(A)
        if np.any(cond > cond_limit):
            raise IllConditioned(f"envelope derivative frame has condition {float(np.max(cond)):.2e}")
        p = np.linalg.solve(A, b[..., None])[..., 0]
        return p[:, :d].T


def envelope(curve: SampledCurve, eps: float) -> Envelope:
    """Envelope of the hyperplanes through the curve points at x + offsets.

    The point L(x) is the common zero of n, n', ..., n^(d-1); it is rescaled by
    W^(-1/(d+1)) so that its Wronskian is 1.
    """
    if not eps > 0:
        raise DegenerateConfiguration("eps must be positive: the spanning points coincide")
    L = curve.op
    d = L.d
    xs = curve.xs
    Kn = 3 * d
    offsets = envelope_offsets(d, eps)
    vecs = []
    for a in offsets:
        S = transport(L, xs, a)
        P = _transport_taylor(L, xs + a, Kn)
        # column 0 of P_k: Taylor coefficients of G(x + a + h) in the basis F(x + a)
        g = np.einsum("nij,nkj->nik", S, P[:, :, :, 0])
        vecs.append(g)
    n = _jcross(vecs)
    size = np.linalg.norm(n[..., 0], axis=-1)
    spread = np.prod([np.linalg.norm(v[..., 0], axis=-1) for v in vecs], axis=0)
    bad = np.nonzero(size <= 1e-13 * spread)[0]
    if len(bad):
        raise DegenerateConfiguration("spanning points are dependent", float(xs[bad[0]]))
    n = n / size[:, None, None]
    derivs = [n]
    for _ in range(d - 1):
        derivs.append(_jderiv(derivs[-1]))
    Lj = _jcross(derivs)  # order 2d+1
    lsize = np.linalg.norm(Lj[..., 0], axis=-1)
    bad = np.nonzero(lsize <= 1e-13)[0]
    if len(bad):
        raise DegenerateConfiguration("osculating system has no unique point", float(xs[bad[0]]))
    Lj = Lj / lsize[:, None, None]
    cols = [Lj]
    for _ in range(d):
        cols.append(_jderiv(cols[-1]))
    K = cols[-1].shape[-1]
    W = _jdet([[c[..., r, :K] for c in cols] for r in range(d + 1)])
    sign = np.sign(W[..., 0])
    if d % 2 == 1 and np.any(sign < 0):
        # d + 1 even: flip is invisible in W, so a negative W means degeneracy
        raise DegenerateConfiguration("envelope Wronskian is negative", float(xs[np.argmax(sign < 0)]))
    phi = _jpow(W * sign[:, None], -1.0 / (d + 1)) * sign[:, None]
    Lt = _jmul(Lj, phi[:, None, :])  # order d+1
    fact = np.array([math.factorial(k) for k in range(d + 2)], dtype=float)
    D = np.transpose(Lt[..., : d + 2] * fact, (0, 2, 1))
    return Envelope(eps, xs, offsets, D, W[..., 0], curve)


# ---------------------------------------------------------------------------
# the continuous-limit fit


@dataclass
class LimitReport:
    d: int
    eps: list
    alphas: list
    residuals: list
    slopes: list
    cosine: float

    @property
    def slope(self) -> float:
        """Least-squares slope of log(residual) against log(eps)."""
        return float(np.polyfit(np.log(self.eps), np.log(self.residuals), 1)[0])

    @property
    def alpha(self) -> float:
        """Richardson extrapolation of alpha(eps) = alpha + c eps^2 to eps = 0."""
        (e1, a1), (e2, a2) = sorted(zip(self.eps, self.alphas))[:2]
        return (a1 * e2**2 - a2 * e1**2) / (e2**2 - e1**2)

    def to_csv(self) -> str:
        lines = ["eps,residual,alpha"]
        for e, r, a in zip(self.eps, self.residuals, self.alphas):
            lines.append(f"{e:.6g},{r:.6e},{a:.12g}")
        return "\n".join(lines) + "\n"


def continuous_limit_check(L: DiffOperator, eps_list) -> LimitReport:
    """Fit (u_eps - u)/eps^2 = alpha [Q_2, L] for each eps."""
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_list) < 3:
        raise ContractViolation("need at least three eps values")
    ratios = [a / b for a, b in zip(eps_list, eps_list[1:])]
    if max(ratios) - min(ratios) > 1e-9 * max(ratios):
        raise ContractViolation("eps values must form a geometric progression")
    curve = curve_from_potentials(L)
    rhs = np.array(kdv_rhs(L))
    u = np.array(L.potentials)
    alphas, residuals = [], []
    cosine = 0.0
    for e in eps_list:
        w = (envelope(curve, e).potentials() - u) / e**2
        alpha = float(np.sum(w * rhs) / np.sum(rhs * rhs))
        res = float(np.linalg.norm(w - alpha * rhs) / np.linalg.norm(w))
        cosine = float(np.sum(w * rhs) / (np.linalg.norm(w) * np.linalg.norm(rhs)))
        alphas.append(alpha)
        residuals.append(res)
    slopes = [math.log(r0 / r1) / math.log(e0 / e1)
              for r0, r1, e0, e1 in zip(residuals, residuals[1:], eps_list, eps_list[1:])]
    return LimitReport(L.d, eps_list, alphas, residuals, slopes, cosine)


def trig_potentials(grid: CircleGrid, d: int, seed: int = 0, amplitude: float = 0.3,
                    modes: int = 3) -> DiffOperator:
    """Random smooth potentials: a few low Fourier modes per coefficient."""
    rng = np.random.default_rng(seed)
    x = grid.x
    us = []
    for _ in range(d):
        f = amplitude * rng.normal() * np.ones_like(x) * 0.5
        for k in range(1, modes + 1):
            a, b = rng.normal(size=2) * amplitude / k
            f = f + a * np.cos(k * x) + b * np.sin(k * x)
        us.append(f)
    return DiffOperator.lax(grid, us)
