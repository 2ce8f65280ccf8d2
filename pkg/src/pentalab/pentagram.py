"""The pentagram map in P^d.

P_k is the hyperplane through every other vertex around v_k:

* odd d = 2m+1:  v_{k-2m}, v_{k-2m+2}, ..., v_{k+2m}
* even d = 2m:   v_{k-2m+1}, v_{k-2m+3}, ..., v_{k+2m-1}   (v_k omitted)

and T v_k is the common point of P_{k-m}, ..., P_{k+m} (odd d) or of
P_{k-m+1}, ..., P_{k+m} (even d).  The image vertex keeps the label k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath

from .algebra import LU, det, nullspace_covector
from .errors import DegenerateConfiguration, NoLift, NotNormalized, NumericalFailure, PentalabError
from .polygon import (
    ProjectivePolygon,
    TwistedCoords,
    VertexChain,
    balancing_scales,
    coords_of,
    reconstruct_vertices,
    short_diagonal_indices,
)


@dataclass(frozen=True)
class Hyperplane:
    h: tuple
    k: int

    def __call__(self, p):
        return sum((a * b for a, b in zip(self.h[1:], p[1:])), self.h[0] * p[0])


def plane_indices(d: int, k: int) -> list[int]:
    """Labels of the d consecutive hyperplanes meeting at T v_k."""
    m = d // 2
    if d % 2:
        return list(range(k - m, k + m + 1))
    return list(range(k - m + 1, k + m + 1))


def short_diagonal_hyperplane(ch: VertexChain, k: int) -> Hyperplane:
    pts = [ch.vertex(i) for i in short_diagonal_indices(ch.d, k)]
    h = nullspace_covector(pts, ch.backend, index=k)
    return Hyperplane(tuple(_unitize(h, ch.backend)), k)


def _unitize(v, backend):
    if backend.exact:
        return v
    big = max(abs(x) for x in v)
    return [x / big for x in v]


def _transport(h, M, q: int):
    """Covector of P_{i+qn} from that of P_i: h -> h M^{-q}."""
    for _ in range(abs(q)):
        h = [sum((h[i] * M[i][j] for i in range(1, len(h))), h[0] * M[0][j]) for j in range(len(h))]
    return h


def image_points(ch: VertexChain) -> list[list]:
    """Representatives of T v_0, ..., T v_{n-1} (not normalized).

    Hyperplanes are computed over one period and carried across periods by
    covector transport, so T v_{k+n} = M T v_k holds exactly.
    """
    d, n, be = ch.d, ch.n, ch.backend
    base = [short_diagonal_hyperplane(ch, i).h for i in range(n)]
    Minv = ch.monodromy_inverse
    M = ch.monodromy

    def plane(i):
        q, r = divmod(i, n)
        if q == 0:
            return base[r]
        return _transport(base[r], Minv if q > 0 else M, q)

    out = []
    for k in range(n):
        hs = [plane(i) for i in plane_indices(d, k)]
        try:
            p = nullspace_covector(hs, be, index=k)
        except DegenerateConfiguration as exc:
            raise DegenerateConfiguration("hyperplanes do not meet in a point", k) from exc
        out.append(_unitize(p, be))
    return out


def pentagram_projective(p: ProjectivePolygon) -> ProjectivePolygon:
    """Vertex-level map; the monodromy is unchanged."""
    pts = image_points(p.chain())
    return ProjectivePolygon(p.d, p.n, tuple(map(tuple, pts)), p.monodromy, p.backend)


def image_relation(c: TwistedCoords, k: int) -> tuple[int, dict]:
    """T v_k as a combination of the unit lift: (s, {offset: coefficient}).

    Among the d+2 consecutive vertices V_s, ..., V_{s+d+1} with
    s = k - ceil(d/2), the short-diagonal hyperplanes through T v_k of one
    index parity meet in the span of the vertices of one parity, and those
    of the other parity in the span of the rest.  The recurrence is the only
    linear relation among these vertices; splitting it by parity gives the
    common point

        T v_k = sum over i = d mod 2 of a_{s,i} V_{s+i},   a_{s,0} = (-1)^d.

    This lift of T v_k is the same in every frame.
    """
    d, be = c.d, c.backend
    s = k - (d + 1) // 2
    sign = be.one if d % 2 == 0 else -be.one
    return s, {i: (sign if i == 0 else c.a(s, i)) for i in range(d % 2, d + 1, 2)}


def _window_system(c: TwistedCoords, j: int):
    """Square system for T v_{j+d+1} in terms of T v_j, ..., T v_{j+d}.

    Unknowns are the d+1 coefficients and one multiplier per recurrence
    relation among the 2d+2 vertices involved; equations are the vertex
    components.  Every entry is a coordinate or +-1.  Eliminating the
    multipliers (a unit triangular block) leaves the window matrix in the
    frame of V_L, ..., V_{L+d}, so the determinant is the window determinant
    up to a sign that depends on d only.
    """
    d, be = c.d, c.backend
    L = j - (d + 1) // 2
    size = 2 * d + 2
    sign = be.one if d % 2 == 0 else -be.one

    def image_col(k):
        s, rel = image_relation(c, k)
        v = [be.zero] * size
        for i, a in rel.items():
            v[s + i - L] = a
        return v

    def relation_col(s):
        v = [be.zero] * size
        v[s + d + 1 - L] = be.one
        v[s - L] = -sign
        for i in range(1, d + 1):
            v[s + i - L] = -c.a(s, i)
        return v

    cols = [image_col(j + i) for i in range(d + 1)] + [relation_col(s) for s in range(L, L + d + 1)]
    A = [[cols[q][r] for q in range(size)] for r in range(size)]
    return A, image_col(j + d + 1)


def pentagram_map(c: TwistedCoords) -> TwistedCoords:
    """T in coordinates, without building vertices or hyperplanes.

    Each window is one sparse square system (see _window_system) whose
    entries are the coordinates themselves, so the float error stays close to
    the conditioning of the map.  The window determinants fix one balancing
    of the lift over the period.  pentagram_map_projective is the
    hyperplane-based reference route.
    """
    if math.gcd(c.n, c.d + 1) != 1:
        raise NoLift(f"gcd(n={c.n}, d+1={c.d + 1}) != 1")
    d, n, be = c.d, c.n, c.backend
    dets, sols, conds = [], [], []
    for j in range(n):
        A, b = _window_system(c, j)
        lu = LU(A, be)
        cond = lu.condition()
        if lu.singular or (not be.exact and be.tol * cond >= 1):
            raise DegenerateConfiguration("d+1 consecutive image vertices lie in a hyperplane", j)
        dets.append(lu.det())
        sols.append(lu.solve(b)[: d + 1])
        conds.append(cond)
    t, _ = balancing_scales(dets, d, n, be)
    forced = be.one if d % 2 == 0 else -be.one
    spread = sum(conds) if not be.exact else 1
    rows = []
    for j, x in enumerate(sols):
        top = t[(j + d + 1) % n]
        lead = x[0] * top / t[j]
        scale = spread + conds[j] * max(1.0, max(float(abs(v)) for v in x))
        if not be.is_zero(lead - forced, scale):
            raise NotNormalized(f"window {j}: coefficient of V_j is {lead}, expected {forced}")
        rows.append(tuple(be.clean(x[k] * top / t[(j + k) % n]) for k in range(1, d + 1)))
    return TwistedCoords(d, n, tuple(rows), be)


def pentagram_map_projective(c: TwistedCoords) -> TwistedCoords:
    """T through one global frame and the monodromy (reference route)."""
    ch = reconstruct_vertices(c)
    return coords_of(pentagram_projective(ch.projectivize()))


@dataclass
class Orbit:
    polygons: list
    diagnostics: list = field(default_factory=list)
    failure: PentalabError | None = None

    def __len__(self) -> int:
        return len(self.polygons)

    def __getitem__(self, i):
        return self.polygons[i]


def _diagnostics(step: int, c: TwistedCoords) -> dict:
    """Smallest Hadamard-normalized window determinant and log10 of the largest coordinate.

    Magnitudes go through mpmath so that tall exact rationals do not overflow.
    """
    ch = reconstruct_vertices(c)
    worst = mpmath.inf
    for j in range(c.n):
        W = ch.window(j)
        norm = mpmath.mpf(1)
        for col in zip(*W):
            norm *= mpmath.sqrt(mpmath.fsum(_mag(x) ** 2 for x in col))
        worst = min(worst, _mag(det(W, c.backend)) / norm)
    big = max(_mag(x) for row in c.coeffs for x in row)
    return {"step": step, "min_window_det": float(worst),
            "log10_max_coeff": float(mpmath.log10(big)) if big else -math.inf}


def _mag(x):
    if hasattr(x, "numerator"):
        return mpmath.mpf(int(abs(x.numerator))) / int(x.denominator)
    return mpmath.mpf(abs(x))


def iterate(c: TwistedCoords, steps: int) -> Orbit:
    """Orbit c, T c, ..., T^steps c; stops at the first failure."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    orbit = Orbit([c], [_diagnostics(0, c)])
    cur = c
    for s in range(1, steps + 1):
        try:
            cur = pentagram_map(cur)
        except NumericalFailure as exc:
            orbit.failure = exc
            break
        orbit.polygons.append(cur)
        orbit.diagnostics.append(_diagnostics(s, cur))
    return orbit
