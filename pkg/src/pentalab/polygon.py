"""Twisted n-gons in P^d: difference-equation coordinates and vertex chains.

A twisted n-gon lifts to vectors ``V_j`` in (d+1)-space with unit sliding
window determinants ``det(V_j, ..., V_{j+d}) = 1`` and ``V_{j+n} = M V_j``.
Such a lift satisfies

    V_{j+d+1} = a_{j,d} V_{j+d} + ... + a_{j,1} V_{j+1} + (-1)^d V_j

with n-periodic coefficients; ``TwistedCoords`` stores ``coeffs[j][k-1] = a_{j,k}``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    RATIONAL,
    ContractViolation,
    condition_number,
    det,
    get_backend,
    identity,
    inverse,
    matmul,
    matvec,
    nullspace_covector,
    solve,
)
from .errors import (
    DegenerateConfiguration,
    GenerationFailed,
    NoLift,
    NotNormalized,
)


@dataclass(frozen=True)
class TwistedCoords:
    d: int
    n: int
    coeffs: tuple
    backend: object = RATIONAL

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ContractViolation(f"need d >= 1 and n >= 1, got d={self.d}, n={self.n}")
        if len(self.coeffs) != self.n or any(len(row) != self.d for row in self.coeffs):
            raise ContractViolation(f"coefficient array must be {self.n} x {self.d}")
        be = self.backend
        object.__setattr__(self, "coeffs", tuple(tuple(be(x) for x in row) for row in self.coeffs))

    def a(self, j: int, k: int):
        """Coefficient a_{j,k} (j taken mod n, 1 <= k <= d)."""
        return self.coeffs[j % self.n][k - 1]

    @property
    def spectral_ready(self) -> bool:
        return math.gcd(self.n, self.d + 1) == 1

    def replace(self, coeffs) -> "TwistedCoords":
        return TwistedCoords(self.d, self.n, tuple(tuple(r) for r in coeffs), self.backend)

    def to_backend(self, backend) -> "TwistedCoords":
        return TwistedCoords(self.d, self.n, self.coeffs, backend)

    def to_json(self) -> dict:
        be = self.backend
        return {
            "d": self.d,
            "n": self.n,
            "coeffs": [[be.format(x) for x in row] for row in self.coeffs],
            "backend": be.name,
            "precision": be.precision,
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "TwistedCoords":
        if isinstance(data, str):
            data = json.loads(data)
        be = get_backend(data.get("backend", "rational"), data.get("precision"))
        coeffs = [[be.parse(x) for x in row] for row in data["coeffs"]]
        return cls(int(data["d"]), int(data["n"]), tuple(tuple(r) for r in coeffs), be)


@dataclass(frozen=True)
class VertexChain:
    """One period of lifted vertices plus the monodromy.

    ``lift_branch`` records how the scale of the lift was fixed: ``"unit"``
    for frame reconstruction, ``"positive"``/``"real"``/``"complex"`` for the
    root taken by ``normalize_lift``, ``"balanced"`` when window determinants
    are only equal to each other.
    """

    d: int
    n: int
    vertices: tuple
    monodromy: tuple
    backend: object = RATIONAL
    lift_branch: str = "unit"

    @functools.cached_property
    def monodromy_inverse(self) -> list[list]:
        return inverse(self.monodromy, self.backend)

    def vertex(self, j: int) -> list:
        q, r = divmod(j, self.n)
        v = list(self.vertices[r])
        M = self.monodromy if q > 0 else self.monodromy_inverse
        for _ in range(abs(q)):
            v = matvec(M, v)
        return v

    def window(self, j: int) -> list[list]:
        """Matrix with columns V_j, ..., V_{j+d}."""
        cols = [self.vertex(j + i) for i in range(self.d + 1)]
        return [[cols[c][r] for c in range(self.d + 1)] for r in range(self.d + 1)]

    def window_det(self, j: int):
        return det(self.window(j), self.backend)

    def projectivize(self) -> "ProjectivePolygon":
        return ProjectivePolygon(self.d, self.n, self.vertices, self.monodromy, self.backend)


@dataclass(frozen=True)
class ProjectivePolygon:
    """Homogeneous representatives p_0..p_{n-1}; p_{j+n} ~ M p_j."""

    d: int
    n: int
    points: tuple
    monodromy: tuple
    backend: object = RATIONAL

    def __post_init__(self):
        be = self.backend
        pts = tuple(tuple(be(x) for x in p) for p in self.points)
        M = tuple(tuple(be(x) for x in r) for r in self.monodromy)
        if len(pts) != self.n or any(len(p) != self.d + 1 for p in pts):
            raise ContractViolation("need n points in (d+1)-space")
        if len(M) != self.d + 1 or any(len(r) != self.d + 1 for r in M):
            raise ContractViolation("monodromy must be (d+1) x (d+1)")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "monodromy", M)

    def chain(self, branch: str = "raw") -> VertexChain:
        return VertexChain(self.d, self.n, self.points, self.monodromy, self.backend, branch)

    def transform(self, g) -> "ProjectivePolygon":
        """Image under p -> g p, M -> g M g^-1."""
        be = self.backend
        g = [[be(x) for x in r] for r in g]
        ginv = inverse(g, be)
        pts = [matvec(g, p) for p in self.points]
        M = matmul(matmul(g, self.monodromy), ginv)
        return ProjectivePolygon(self.d, self.n, tuple(map(tuple, pts)), tuple(map(tuple, M)), be)

    def rescale(self, factors: Sequence) -> "ProjectivePolygon":
        pts = [[f * x for x in p] for f, p in zip(factors, self.points)]
        return ProjectivePolygon(self.d, self.n, tuple(map(tuple, pts)), self.monodromy, self.backend)


# ---------------------------------------------------------------------------


def reconstruct_vertices(c: TwistedCoords) -> VertexChain:
    """Run the difference equation from the standard frame V_0..V_d = e_1..e_{d+1}."""
    d, n, be = c.d, c.n, c.backend
    V = identity(d + 1, be)
    sign = be.one if d % 2 == 0 else -be.one
    for j in range(n):
        nxt = [sign * x for x in V[j]]
        for k in range(1, d + 1):
            a = c.a(j, k)
            if a != 0:
                nxt = [x + a * y for x, y in zip(nxt, V[j + k])]
        V.append(nxt)
    # The frame at 0 is the identity, so M has columns V_n, ..., V_{n+d}.
    M = [[V[n + i][r] for i in range(d + 1)] for r in range(d + 1)]
    return VertexChain(d, n, tuple(tuple(v) for v in V[:n]), tuple(map(tuple, M)), be, "unit")


def extract_coords(ch: VertexChain, require_unit: bool = True) -> TwistedCoords:
    """Recover a_{j,k} from a lifted chain.

    Each window is solved for all d+1 coefficients; the coefficient of V_j is
    forced to be (-1)^d, which is exactly the condition that consecutive
    window determinants agree.  With ``require_unit`` the windows must also be 1.
    """
    d, n, be = ch.d, ch.n, ch.backend
    forced = be.one if d % 2 == 0 else -be.one
    rows = []
    for j in range(n):
        W = ch.window(j)
        target = ch.vertex(j + d + 1)
        try:
            sol = solve(W, target, be)
        except DegenerateConfiguration:
            raise DegenerateConfiguration("singular window", j) from None
        if not be.is_zero(sol[0] - forced, solve_amplification(W, sol, be)):
            raise NotNormalized(f"window {j}: coefficient of V_j is {sol[0]}, expected {forced}")
        if require_unit:
            wd = det(W, be)
            if not be.is_zero(wd - 1, 1):
                raise NotNormalized(f"window {j} has determinant {wd}, expected 1")
        rows.append(tuple(be.clean(x) for x in sol[1:]))
    return TwistedCoords(d, n, tuple(rows), be)


def solve_amplification(W, sol, backend) -> float:
    """Rounding scale of a window solve: condition number times solution size."""
    if backend.exact:
        return 1
    return condition_number(W, backend) * max(1.0, max(float(abs(x)) for x in sol))


def balancing_scales(dets: Sequence, d: int, n: int, backend):
    """Scales t_j (t_0 = 1) making every window determinant equal.

    Requires t_j ... t_{j+d} * D_j to be independent of j, i.e.
    t_{j+d+1} = t_j * D_j / D_{j+1}; stepping by d+1 visits every residue
    because gcd(n, d+1) = 1.  Returns (t, C) with C the common value.
    """
    t = [None] * n
    t[0] = backend.one
    j = 0
    for _ in range(n - 1):
        nxt = (j + d + 1) % n
        t[nxt] = t[j] * dets[j] / dets[(j + 1) % n]
        j = nxt
    C = dets[0]
    for i in range(d + 1):
        C = C * t[i % n]
    return t, C


def _window_dets(p: ProjectivePolygon) -> list:
    ch = p.chain()
    be = p.backend
    dets = []
    for j in range(p.n):
        W = ch.window(j)
        D = det(W, be)
        scale = 1.0
        if not be.exact:
            for col in zip(*W):
                scale *= math.sqrt(sum(float(abs(x)) ** 2 for x in col))
        if be.is_zero(D, scale):
            raise DegenerateConfiguration("d+1 consecutive vertices lie in a hyperplane", j)
        dets.append(D)
    return dets


def balanced_lift(p: ProjectivePolygon) -> VertexChain:
    """Lift with all window determinants equal (to an unspecified common value)."""
    if math.gcd(p.n, p.d + 1) != 1:
        raise NoLift(f"gcd(n={p.n}, d+1={p.d + 1}) != 1")
    dets = _window_dets(p)
    t, _ = balancing_scales(dets, p.d, p.n, p.backend)
    pts = tuple(tuple(ti * x for x in v) for ti, v in zip(t, p.points))
    return VertexChain(p.d, p.n, pts, p.monodromy, p.backend, "balanced")


def normalize_lift(p: ProjectivePolygon) -> VertexChain:
    """The lift with unit window determinants.

    Root branch: positive real root if C > 0, the real root when d+1 is odd,
    otherwise the principal complex root (float) or IrrationalNormalization
    (rational).
    """
    if math.gcd(p.n, p.d + 1) != 1:
        raise NoLift(f"gcd(n={p.n}, d+1={p.d + 1}) != 1")
    be = p.backend
    dets = _window_dets(p)
    t, C = balancing_scales(dets, p.d, p.n, be)
    k = p.d + 1
    t0 = be.root(1 / C, k)
    if be.exact or not hasattr(C, "_mpc_"):
        branch = "positive" if C > 0 else "real"
        if not be.exact and C < 0 and k % 2 == 0:
            branch = "complex"
    else:
        branch = "complex"
    pts = tuple(tuple(be.clean(t0 * ti * x) for x in v) for ti, v in zip(t, p.points))
    return VertexChain(p.d, p.n, pts, p.monodromy, be, branch)


def coords_of(p: ProjectivePolygon) -> TwistedCoords:
    """Coordinates of a projective polygon without taking any root.

    Coordinates are unchanged by a common rescaling of all vertices, so a
    balanced lift suffices; this keeps rational input exact.
    """
    return extract_coords(balanced_lift(p), require_unit=False)


# ---------------------------------------------------------------------------
# general position and random generation


def short_diagonal_indices(d: int, k: int) -> list[int]:
    """Vertex indices spanning the short-diagonal hyperplane P_k."""
    kap = d // 2
    if d % 2:
        return [k - 2 * kap + 2 * i for i in range(d)]
    return [k - 2 * kap + 1 + 2 * i for i in range(d)]


def general_position(ch: VertexChain) -> bool:
    be = ch.backend
    for j in range(ch.n):
        if be.is_zero(ch.window_det(j), 1):
            return False
        try:
            nullspace_covector([ch.vertex(i) for i in short_diagonal_indices(ch.d, j)], be)
        except DegenerateConfiguration:
            return False
    return True


def random_polygon(d: int, n: int, seed: int = 0, spread=3, backend=RATIONAL,
                   max_tries: int = 64, lookahead: int = 1) -> TwistedCoords:
    """Deterministic pseudo-random coordinates in general position.

    Rational backend: a/b with 1 <= |a| <= spread, 1 <= b <= spread.  Float
    backend: uniform on [-spread, spread].  Zero coordinates are avoided
    because they make the image non-generic.  A draw is kept only if the
    first ``lookahead`` iterates of the map exist.
    """
    from .pentagram import pentagram_map

    if n < d + 2:
        raise ContractViolation(f"need n >= d+2, got n={n}, d={d}")
    rng = np.random.default_rng(int(seed))
    for _ in range(max_tries):
        if backend.exact:
            num = rng.integers(1, spread + 1, size=(n, d)) * rng.choice([-1, 1], size=(n, d))
            den = rng.integers(1, spread + 1, size=(n, d))
            rows = [[backend(f"{int(a)}/{int(b)}") for a, b in zip(ra, rb)] for ra, rb in zip(num, den)]
        else:
            vals = rng.uniform(-spread, spread, size=(n, d))
            rows = [[backend(float(x)) for x in r] for r in vals]
        c = TwistedCoords(d, n, tuple(map(tuple, rows)), backend)
        ch = reconstruct_vertices(c)
        if not general_position(ch):
            continue
        try:
            cur = c
            for _ in range(lookahead):
                cur = pentagram_map(cur)
        except DegenerateConfiguration:
            continue
        return c
    raise GenerationFailed(f"no generic polygon found in {max_tries} draws (d={d}, n={n}, seed={seed})")


def random_unimodular(m: int, seed: int, backend=RATIONAL, spread: int = 2) -> list[list]:
    """Integer matrix of determinant 1 (product of random elementary matrices)."""
    rng = np.random.default_rng(int(seed))
    g = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    for _ in range(3 * m):
        i, j = rng.choice(m, size=2, replace=False)
        f = int(rng.integers(-spread, spread + 1))
        g[i] = [x + f * y for x, y in zip(g[i], g[j])]
    return [[backend(x) for x in r] for r in g]
