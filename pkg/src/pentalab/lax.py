"""Lax matrices, monodromy, the spectral polynomial and its invariants.

The Lax matrix L_j(lam) is the inverse of the (d+1) x (d+1) matrix

    [ 0 ... 0      | (-1)^d  ]
    [   D(lam)     | a_{j,1} ]
    [              |   ...   ]
    [              | a_{j,d} ]

with D = diag(lam, 1, lam, 1, ..., lam) for odd d and
D = diag(1, lam, 1, lam, ..., lam) for even d.  Its determinant is a monomial, so the inverse
stays inside the Laurent ring.  The monodromy M_i = L_{i+n-1} ... L_{i+1} L_i
and R(lam, k) = det(M_0(lam) - k I) is conserved by the pentagram map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .algebra import (
    RATIONAL,
    LaurentMatrix,
    LaurentPoly,
    SpectralPolynomial,
    char_poly,
    float_backend,
    identity,
)
from .errors import (
    ContractViolation,
    NormalizationPole,
    NumericalFailure,
    RepeatedSpectrum,
    StructuralMismatch,
)
from .pentagram import pentagram_map
from .polygon import ProjectivePolygon, TwistedCoords, coords_of, reconstruct_vertices


def d_diagonal(d: int, stated: bool = False) -> list[int]:
    """Lambda-exponents of D(lam): 1 where the entry is lam, else 0.

    For even d the entries at even positions carry lam; this is the form that
    the step-2 map conserves.  ``stated=True`` gives the single-lam variant
    with lam at position d/2 + 1, which agrees for d = 2 only.
    """
    if d % 2:
        return [1 if i % 2 == 0 else 0 for i in range(d)]
    if stated:
        m = d // 2
        return [1 if i == m else 0 for i in range(d)]
    return [1 if i % 2 == 1 else 0 for i in range(d)]


def inverse_form(c: TwistedCoords, j: int, stated: bool = False) -> LaurentMatrix:
    d, be = c.d, c.backend
    zero = LaurentPoly.zero(be)
    rows = [[zero] * (d + 1) for _ in range(d + 1)]
    rows[0][d] = LaurentPoly.constant(be.one if d % 2 == 0 else -be.one, be)
    for i, e in enumerate(d_diagonal(d, stated)):
        rows[i + 1][i] = LaurentPoly.monomial(be.one, e, be)
        rows[i + 1][d] = LaurentPoly.constant(c.a(j, i + 1), be)
    return LaurentMatrix(rows, be)


def lax_matrix(c: TwistedCoords, j: int, stated: bool = False) -> LaurentMatrix:
    """L_j(lam) in closed form.

    Solving B x = y row by row for the bordered form B gives
    x_d = s y_0 and x_{i-1} = D_i^-1 (y_i - s a_{j,i} y_0) with s = (-1)^d,
    so every entry is a monomial and no cancellation occurs.
    """
    d, be = c.d, c.backend
    s = be.one if d % 2 == 0 else -be.one
    zero = LaurentPoly.zero(be)
    rows = [[zero] * (d + 1) for _ in range(d + 1)]
    rows[d][0] = LaurentPoly.constant(s, be)
    for i, e in enumerate(d_diagonal(d, stated), start=1):
        rows[i - 1][i] = LaurentPoly.monomial(be.one, -e, be)
        a = c.a(j, i)
        if a != 0:
            rows[i - 1][0] = LaurentPoly.monomial(-s * a, -e, be)
    return LaurentMatrix(rows, be)


def lax_monodromy(c: TwistedCoords, i: int = 0, stated: bool = False) -> LaurentMatrix:
    """M_i = L_{i+n-1} ... L_{i+1} L_i (indices mod n)."""
    M = lax_matrix(c, i, stated)
    for j in range(i + 1, i + c.n):
        M = lax_matrix(c, j, stated) @ M
    return M


# ---------------------------------------------------------------------------
# spectral polynomial


def spectral_windows(n: int) -> dict[int, range]:
    """Cleared lambda-support of each k-row for d = 3, odd n."""
    q = n // 2
    return {
        4: range(2 * n, 2 * n + 1),
        3: range(n, n + q + 1),
        2: range(n - q, n + 1),
        1: range(0, q + 1),
        0: range(0, 1),
    }


def spectral(c: TwistedCoords, monodromy_index: int = 0, stated: bool = False) -> SpectralPolynomial:
    """Characteristic polynomial of the Lax monodromy, labeled in 3D for odd n.

    Exact backend: Berkowitz on the monodromy.  Float backend: compound
    traces (see compound_traces), with terms below 1e3*eps times their
    rounding scale dropped.
    """
    if not c.spectral_ready:
        raise ContractViolation(f"gcd(n={c.n}, d+1={c.d + 1}) != 1")
    bound = None
    if c.backend.exact:
        R = char_poly(lax_monodromy(c, monodromy_index, stated))
    else:
        be = c.backend
        terms = compound_traces(c, monodromy_index, stated)
        bound = compound_traces(c, monodromy_index, stated, magnitude=True)
        rows = [dict() for _ in range(c.d + 2)]
        for (r, p), v in terms.items():
            if abs(v) > be.tol * bound.get((r, p), 0):
                rows[r][p] = v
        R = SpectralPolynomial(tuple(LaurentPoly.from_terms(t, be) for t in rows), be)
    labels = None
    if c.d == 3 and c.n % 2 == 1:
        labels = _label_3d(R, c.n, bound)
    return SpectralPolynomial(R.k_coeffs, R.backend, c.d, c.n, labels)


def _pmul(a: dict, b: dict, magnitude: bool) -> dict:
    out = {}
    for p, x in a.items():
        for q, y in b.items():
            v = abs(x * y) if magnitude else x * y
            out[p + q] = out[p + q] + v if p + q in out else v
    return out


def _padd(acc: dict, b: dict) -> None:
    for p, v in b.items():
        acc[p] = acc[p] + v if p in acc else v


def compound_matrix(L: LaurentMatrix, r: int, magnitude: bool = False) -> dict:
    """r-th compound of L as {row subset: {column subset: {power: coeff}}}.

    Entries are r x r minors expanded over the nonzero pattern of L, so a
    sparse L with monomial entries gives minors with few terms.  With
    ``magnitude`` all signs are dropped and absolute values summed.
    """
    be = L.backend
    D = L.size
    support = []
    for i in range(D):
        row = []
        for j in range(D):
            t = L.rows[i][j].terms()
            if t:
                row.append((j, {p: abs(v) for p, v in t.items()} if magnitude else t))
        support.append(row)
    out = {}
    for I in combinations(range(D), r):
        acc: dict = {}

        def expand(t, cols, poly):
            if t == r:
                J = tuple(sorted(cols))
                inversions = sum(1 for x in range(r) for y in range(x + 1, r) if cols[x] > cols[y])
                if not magnitude and inversions % 2:
                    poly = {p: -v for p, v in poly.items()}
                _padd(acc.setdefault(J, {}), poly)
                return
            for j, e in support[I[t]]:
                if j not in cols:
                    expand(t + 1, cols + (j,), _pmul(poly, e, magnitude))

        expand(0, (), {0: be.one})
        row = {J: p for J, p in acc.items() if any(v != 0 for v in p.values())}
        if row:
            out[I] = row
    return out


def compound_traces(c: TwistedCoords, i: int = 0, stated: bool = False, magnitude: bool = False) -> dict:
    """Coefficients of det(kI - M) keyed (k-power, raw lam-power), by compounds.

    The coefficient of k^(D-r) is (-1)^r tr C_r(M), and by Cauchy-Binet
    C_r(M) is the product of the C_r(L_j).  The minors of each sparse L_j have
    almost no cancellation, so the rounding scale (``magnitude=True``, the
    same recursion on absolute values) stays close to the coefficient size.
    Cheap enough for float use up to d = 8; the exact backend gives the same
    polynomial as char_poly.
    """
    be = c.backend
    D = c.d + 1
    out = {(D, 0): be.one}
    mats = [lax_matrix(c, (i + t) % c.n, stated) for t in range(c.n)]
    for r in range(1, D + 1):
        X = None
        for L in mats:
            F = compound_matrix(L, r, magnitude)
            if X is None:
                X = F
                continue
            Y = {}
            for I, frow in F.items():
                acc: dict = {}
                for K, f in frow.items():
                    for J, x in X.get(K, {}).items():
                        _padd(acc.setdefault(J, {}), _pmul(f, x, magnitude))
                if acc:
                    Y[I] = acc
            X = Y
        trace: dict = {}
        for I, row in X.items():
            if I in row:
                _padd(trace, row[I])
        sign = 1 if (r % 2 == 0 or magnitude) else -1
        for p, v in trace.items():
            if v != 0:
                out[(D - r, p)] = sign * v
    return out


def spectral_bound(c: TwistedCoords, stated: bool = False, monodromy_index: int = 0) -> dict:
    """Rounding scale of each float spectral coefficient, keyed (k-power, raw lam-power)."""
    if c.backend.exact:
        raise ContractViolation("rounding scales are defined for float backends only")
    return compound_traces(c, monodromy_index, stated, magnitude=True)


def _label_3d(R: SpectralPolynomial, n: int, bound: dict | None = None) -> dict:
    be = R.backend
    q = n // 2
    if R.cleared_power != 2 * n:
        raise StructuralMismatch(f"cleared power {R.cleared_power}, expected {2 * n}")
    table = R.table
    scale = max((abs(v) for v in table.values()), default=1)
    windows = spectral_windows(n)
    for (r, m), v in table.items():
        if m not in windows[r] and not be.is_zero(v, scale):
            raise StructuralMismatch(f"coefficient k^{r} lam^{m} = {v} outside the expected window")
    for r, p in ((4, 2 * n), (0, 0)):
        unit = 1 if bound is None else max(1, bound.get((r, p - R.cleared_power), 1))
        if not be.is_zero(table.get((r, p), be.zero) - 1, unit):
            raise StructuralMismatch(f"coefficient k^{r} lam^{p} should be 1")
    get = lambda key: table.get(key, be.zero)  # noqa: E731
    return {
        "G": [-get((3, j + n)) for j in range(q + 1)],
        "J": [get((2, j - q + n)) for j in range(q + 1)],
        "I": [-get((1, j)) for j in range(q + 1)],
    }


def labeled_integrals(R: SpectralPolynomial) -> list:
    if not R.labels:
        raise ContractViolation("labeled integrals exist only for d = 3 and odd n")
    return list(R.labels["G"]) + list(R.labels["J"]) + list(R.labels["I"])


def spectral_to_json(R: SpectralPolynomial) -> dict:
    be = R.backend
    out = {
        "cleared_power": R.cleared_power,
        "coeffs": [{"k": r, "lambda": m, "value": be.format(v)} for (r, m), v in sorted(R.table.items())],
    }
    if R.labels:
        out["labels"] = {key: [be.format(v) for v in vals] for key, vals in R.labels.items()}
    return out


# ---------------------------------------------------------------------------
# conservation


@dataclass
class DriftTable:
    rows: list = field(default_factory=list)  # (step, (k, lam), rel_drift)

    def max_drift(self) -> float:
        return max((float(r[2]) for r in self.rows), default=0.0)

    def to_csv(self) -> str:
        lines = ["step,coeff_id,rel_drift"]
        for step, (r, m), v in self.rows:
            lines.append(f"{step},k{r}_lam{m},{float(v):.6e}")
        return "\n".join(lines) + "\n"


def relative_drift(R0: SpectralPolynomial, R1: SpectralPolynomial, bound: dict | None = None) -> dict:
    """Per-coefficient relative change between two spectral polynomials.

    Coefficients are keyed by (k-power, raw lam-power).  In the float backend
    an entry is a structural zero when it is below 1e3*eps times its rounding
    scale: ``bound[key]`` when given (see spectral_bound), else the largest
    coefficient.
    """
    be = R0.backend
    t0 = {(r, m - R0.cleared_power): v for (r, m), v in R0.table.items()}
    t1 = {(r, m - R1.cleared_power): v for (r, m), v in R1.table.items()}
    keys = sorted(set(t0) | set(t1))
    out = {}
    if be.exact:
        for key in keys:
            a, b = t0.get(key, 0), t1.get(key, 0)
            out[key] = 0 if a == b else abs(a - b) / max(abs(a), abs(b))
        return out
    top = max(abs(v) for v in list(t0.values()) + list(t1.values()))
    for key in keys:
        a, b = t0.get(key, be.zero), t1.get(key, be.zero)
        big = max(abs(a), abs(b))
        scale = bound.get(key, be.zero) if bound is not None else top
        out[key] = be.zero if big <= be.tol * scale else abs(a - b) / big
    return out


def conservation_report(c: TwistedCoords, steps: int, guard_bits: int = 64) -> DriftTable:
    """Iterate the map; record each coefficient's drift relative to step 0.

    In the rational backend any nonzero drift raises StructuralMismatch.
    In a float backend the orbit runs at the backend's precision, while each
    state is evaluated with ``guard_bits`` extra bits.  The spectral
    coefficients can cancel far more than their true sensitivity warrants,
    and the guard keeps that evaluation error out of the drift of the orbit.
    guard_bits=0 evaluates at the orbit precision.
    """
    table = DriftTable()
    if steps == 0:
        return table
    be = c.backend
    audit = be if be.exact or guard_bits <= 0 else float_backend(be.precision + guard_bits)

    def measure(p):
        return p if audit is be else p.to_backend(audit)

    R0 = spectral(measure(c))
    B0 = None if be.exact else spectral_bound(measure(c))
    cur = c
    for s in range(1, steps + 1):
        cur = pentagram_map(cur)
        now = measure(cur)
        bound = None
        if B0 is not None:
            B1 = spectral_bound(now)
            bound = {key: max(B0.get(key, 0), B1.get(key, 0)) for key in set(B0) | set(B1)}
        drift = relative_drift(R0, spectral(now), bound)
        for key, v in drift.items():
            table.rows.append((s, key, v))
            if c.backend.exact and v != 0:
                raise StructuralMismatch(f"spectral coefficient k^{key[0]} lam^{key[1]} changed at step {s}")
    return table


# ---------------------------------------------------------------------------
# closed polygons


CLOSED_CONDITIONS = (
    (0, 0),
    (0, 1), (1, 0),
    (0, 2), (2, 0), (1, 1),
    (0, 3), (3, 0), (1, 2), (2, 1),
)
"""(lam-order, k-order) of the ten quadruple-point conditions."""


def closed_polygon(points, backend) -> tuple[TwistedCoords, int]:
    """Coordinates of a closed polygon (monodromy Id) and the sign s with
    (lam, k) = (1, s) the expected quadruple point.

    The frame monodromy of the reconstructed chain is t Id; at lam = 1 the
    Lax monodromy has k = 1/t, and t = +-1 for real data.
    """
    points = [list(p) for p in points]
    n, m = len(points), len(points[0])
    p = ProjectivePolygon(m - 1, n, tuple(map(tuple, points)), identity(m, backend), backend)
    c = coords_of(p)
    M = reconstruct_vertices(c).monodromy
    t = M[0][0]
    for i in range(m):
        for j in range(m):
            target = t if i == j else backend.zero
            if not backend.is_zero(M[i][j] - target, 1):
                raise StructuralMismatch("closed polygon has non-scalar monodromy")
    if not backend.is_zero(abs(t) - 1, 1):
        raise StructuralMismatch(f"scalar monodromy {t} is not +-1")
    sign = 1 if (t.real if hasattr(t, "real") else t) > 0 else -1
    return c, sign


def random_closed_polygon(d: int, n: int, seed: int, backend=None, spread: int = 5):
    """Closed n-gon from random integer vertices in general position."""
    backend = backend or RATIONAL
    rng = np.random.default_rng(int(seed))
    for _ in range(64):
        pts = rng.integers(-spread, spread + 1, size=(n, d + 1))
        try:
            return closed_polygon([[backend(int(x)) for x in p] for p in pts], backend)
        except NumericalFailure:
            continue
    raise NumericalFailure("no closed polygon in general position found")


@dataclass
class ClosedReport:
    sign: int
    residuals: dict  # (a, b) -> d^a_lam d^b_k of the cleared polynomial at (1, sign)
    corrected: dict  # the same derivatives of R, via Leibniz from the cleared one
    dependency: object

    def max_residual(self) -> float:
        return max(float(abs(v)) for v in self.residuals.values())


def closed_polygon_conditions(R: SpectralPolynomial, sign: int) -> ClosedReport:
    """The ten conditions for (1, sign) to be a quadruple point of R = 0.

    R = lam^-N P with P cleared.  Derivatives of R come from those of P by
    Leibniz with (lam^-N)^(i) at lam = 1 equal to the falling factorial
    (-N)(-N-1)...(-N-i+1); once lower-order conditions vanish the correction
    terms vanish too.  The dependency residual
    R - s R_k + R_kk/2 - s R_kkk/6 at (1, s) is identically zero.
    """
    if R.d != 3 or (R.n is not None and R.n % 2 == 0):
        raise ContractViolation("closed-polygon conditions are stated for d = 3, odd n")
    if sign not in (1, -1):
        raise ContractViolation("sign must be +1 or -1")
    be = R.backend
    lam, k = be.one, be.one * sign
    N = R.cleared_power
    residuals = {}
    corrected = {}
    for a, b in CLOSED_CONDITIONS:
        residuals[(a, b)] = R.cleared_partial(a, b, lam, k)
    for a, b in CLOSED_CONDITIONS:
        acc = be.zero
        for i in range(a + 1):
            fall = 1
            for t in range(i):
                fall *= -N - t
            acc = acc + math.comb(a, i) * fall * R.cleared_partial(a - i, b, lam, k)
        corrected[(a, b)] = acc
    s = sign
    dep = (corrected[(0, 0)] - s * corrected[(0, 1)] + corrected[(0, 2)] / 2
           - s * corrected[(0, 3)] / 6)
    return ClosedReport(sign, residuals, corrected, dep)


# ---------------------------------------------------------------------------
# Newton polygon


def _hull(points):
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def interior_lattice_points(points) -> int:
    """Interior lattice points of the convex hull, by Pick's theorem."""
    hull = _hull(points)
    if len(hull) < 3:
        return 0
    twice_area = 0
    boundary = 0
    for (x0, y0), (x1, y1) in zip(hull, hull[1:] + hull[:1]):
        twice_area += x0 * y1 - x1 * y0
        boundary += math.gcd(abs(x1 - x0), abs(y1 - y0))
    twice_area = abs(twice_area)
    if twice_area == 0:
        return 0
    return (twice_area - boundary + 2) // 2


def newton_genus_bound(R: SpectralPolynomial) -> int:
    """Interior lattice points of the Newton polygon of the cleared polynomial.

    An upper bound for the geometric genus, attained for curves that are
    generic with respect to their support.
    """
    be = R.backend
    table = R.table
    scale = max((abs(v) for v in table.values()), default=1)
    support = [(m, r) for (r, m), v in table.items() if not be.is_zero(v, scale)]
    return interior_lattice_points(support)


# ---------------------------------------------------------------------------
# independence of the integrals


def jacobian_rank(fun, x: list, backend, h_scale: float = 1.0) -> tuple[int, np.ndarray]:
    """Numerical rank of the Jacobian of fun at x by central differences.

    Step h = eps^(1/3) * h_scale; singular values below
    sigma_max * max(1e3 * h^2, 1e-9) are treated as zero.
    """
    eps = float(backend.eps)
    h = backend(eps ** (1.0 / 3.0) * h_scale)
    cols = []
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] = xp[i] + h
        xm[i] = xm[i] - h
        fp, fm = fun(xp), fun(xm)
        cols.append([complex((a - b) / (2 * h)) for a, b in zip(fp, fm)])
    J = np.array(cols, dtype=complex).T
    if J.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] == 0:
        return 0, sv
    cut = sv[0] * max(1e3 * float(h) ** 2, 1e-9)
    return int(np.sum(sv > cut)), sv


def integrals_rank(c: TwistedCoords) -> int:
    """Rank of d(G, J, I)/d(coordinates) for d = 3, odd n."""
    if c.d != 3 or c.n % 2 == 0:
        raise ContractViolation("integrals_rank needs d = 3 and odd n")
    be = c.backend if not c.backend.exact else float_backend(53)
    c = c.to_backend(be)
    flat = [x for row in c.coeffs for x in row]
    scale = max(1.0, max(float(abs(x)) for x in flat))

    def fun(xs):
        rows = tuple(tuple(xs[j * 3:(j + 1) * 3]) for j in range(c.n))
        return labeled_integrals(spectral(c.replace(rows)))

    rank, _ = jacobian_rank(fun, flat, be, scale)
    return rank


# ---------------------------------------------------------------------------
# Floquet-Bloch solutions


def floquet_bloch(c: TwistedCoords, lam0) -> list[tuple]:
    """Eigenpairs (k, psi) of M_0(lam0), psi scaled to component sum 1."""
    be = c.backend if not c.backend.exact else float_backend()
    c = c.to_backend(be)
    lam0 = be(lam0)
    if lam0 == 0:
        raise ContractViolation("lam0 must be nonzero")
    ctx = be.ctx
    M = ctx.matrix(lax_monodromy(c, 0).evaluate(lam0))
    evals, evecs = ctx.eig(M)
    m = len(evals)
    scale = max(abs(e) for e in evals)
    tol = ctx.sqrt(be.eps) * scale
    for i in range(m):
        for j in range(i + 1, m):
            if abs(evals[i] - evals[j]) <= tol:
                raise RepeatedSpectrum(f"eigenvalues {i} and {j} coincide at lam = {lam0}")
    out = []
    for i in range(m):
        psi = [evecs[r, i] for r in range(m)]
        total = sum(psi)
        size = max(abs(x) for x in psi)
        if abs(total) <= be.tol * size:
            raise NormalizationPole(f"component sum vanishes for eigenvalue {evals[i]}")
        out.append((be.clean(evals[i]), [be.clean(x / total) for x in psi]))
    return out
