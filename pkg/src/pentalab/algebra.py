"""Scalar backends, dense linear algebra and Laurent-polynomial matrices.

Two scalar backends share one interface:

* ``RationalBackend`` -- exact rationals (``gmpy2.mpq``); every predicate is
  an exact zero test.
* ``FloatBackend`` -- real/complex multiprecision floats from a private
  ``mpmath`` context, so different precisions never share global state.
  Predicates compare against ``tol = 1e3 * eps`` scaled by the natural size
  of the quantity being tested.

Everything else in the package is written against this interface and works
with either backend.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpq
from mpmath.ctx_mp import MPContext

from .errors import ContractViolation, DegenerateConfiguration, IrrationalNormalization

DEFAULT_PRECISION = 256


# ---------------------------------------------------------------------------
# scalar backends


class RationalBackend:
    name = "rational"
    exact = True
    precision = None
    eps = 0
    tol = 0

    def __repr__(self) -> str:
        return "RationalBackend()"

    def __eq__(self, other) -> bool:
        return isinstance(other, RationalBackend)

    def __hash__(self) -> int:
        return hash("rational")

    @property
    def zero(self):
        return mpq(0)

    @property
    def one(self):
        return mpq(1)

    def __call__(self, x):
        if isinstance(x, str):
            return mpq(x.strip())
        if isinstance(x, (int, Fraction)) or type(x) is type(mpq(0)):
            return mpq(x)
        if isinstance(x, float):
            return mpq(x)
        if type(x) is type(gmpy2.mpz(0)):
            return mpq(x)
        raise ContractViolation(f"cannot represent {x!r} exactly")

    def is_zero(self, x, scale=1) -> bool:
        return x == 0

    def clean(self, x):
        return x

    def abs(self, x):
        return abs(x)

    def magnitude(self, x) -> float:
        return abs(float(x))

    def root(self, x, k: int):
        """Exact real k-th root of a rational, or IrrationalNormalization."""
        x = mpq(x)
        if x < 0 and k % 2 == 0:
            raise IrrationalNormalization(f"{k}-th root of negative {x} is not real")
        sign = -1 if x < 0 else 1
        num, num_exact = gmpy2.iroot(abs(x.numerator), k)
        den, den_exact = gmpy2.iroot(x.denominator, k)
        if not (num_exact and den_exact):
            raise IrrationalNormalization(f"{k}-th root of {x} is irrational")
        return sign * mpq(num, den)

    def format(self, x) -> str:
        x = mpq(x)
        if x.denominator == 1:
            return str(x.numerator)
        return f"{x.numerator}/{x.denominator}"

    def parse(self, s):
        return self(s)


class FloatBackend:
    """Multiprecision complex floats at a fixed binary precision."""

    name = "float"
    exact = False

    def __init__(self, precision: int = DEFAULT_PRECISION):
        if precision < 53:
            raise ContractViolation(f"precision must be >= 53 bits, got {precision}")
        self.precision = int(precision)
        self.ctx = MPContext()
        self.ctx.prec = self.precision
        self.eps = self.ctx.eps
        self.tol = 1000 * self.eps

    def __repr__(self) -> str:
        return f"FloatBackend(precision={self.precision})"

    def __eq__(self, other) -> bool:
        return isinstance(other, FloatBackend) and other.precision == self.precision

    def __hash__(self) -> int:
        return hash(("float", self.precision))

    @property
    def zero(self):
        return self.ctx.mpf(0)

    @property
    def one(self):
        return self.ctx.mpf(1)

    def __call__(self, x):
        ctx = self.ctx
        if isinstance(x, str):
            return self.parse(x)
        if isinstance(x, (list, tuple)) and len(x) == 2:
            return self.clean(ctx.mpc(self(x[0]), self(x[1])))
        if hasattr(x, "_mpc_") or isinstance(x, complex):
            return self.clean(ctx.mpc(x))
        if type(x) is type(mpq(0)) or isinstance(x, Fraction):
            return ctx.mpf(int(x.numerator)) / int(x.denominator)
        return ctx.mpf(x)

    def is_zero(self, x, scale=1) -> bool:
        return abs(x) <= self.tol * abs(scale)

    def clean(self, x):
        """Drop an imaginary part that is pure rounding noise."""
        if hasattr(x, "imag") and hasattr(x, "_mpc_"):
            if abs(x.imag) <= self.tol * max(abs(x.real), self.eps):
                return self.ctx.mpf(x.real)
        return x

    def abs(self, x):
        return abs(x)

    def magnitude(self, x) -> float:
        return float(abs(x))

    def root(self, x, k: int):
        """Real positive root if x > 0, real root for odd k, else principal root."""
        ctx = self.ctx
        x = self.clean(x)
        if not hasattr(x, "_mpc_"):
            if x > 0:
                return ctx.root(x, k)
            if k % 2 == 1:
                return -ctx.root(-x, k)
        return ctx.root(ctx.mpc(x), k)

    def format(self, x) -> str | list[str]:
        digits = int(math.ceil(self.precision * math.log10(2))) + 3
        x = self.clean(x)
        if hasattr(x, "_mpc_"):
            return [self.ctx.nstr(x.real, digits), self.ctx.nstr(x.imag, digits)]
        return self.ctx.nstr(x, digits)

    def parse(self, s):
        if isinstance(s, (list, tuple)):
            return self.clean(self.ctx.mpc(self.parse(s[0]), self.parse(s[1])))
        return self.ctx.mpf(s)


RATIONAL = RationalBackend()


@functools.lru_cache(maxsize=None)
def float_backend(precision: int = DEFAULT_PRECISION) -> FloatBackend:
    return FloatBackend(precision)


def get_backend(name: str, precision: int | None = None):
    if name == "rational":
        return RATIONAL
    if name == "float":
        return float_backend(precision or DEFAULT_PRECISION)
    raise ContractViolation(f"unknown backend {name!r}")


def is_complex(x) -> bool:
    return hasattr(x, "_mpc_")


# ---------------------------------------------------------------------------
# dense scalar linear algebra (lists of lists, row-major)


def identity(m: int, backend) -> list[list]:
    return [[backend.one if i == j else backend.zero for j in range(m)] for i in range(m)]


def matmul(A, B) -> list[list]:
    inner = len(B)
    cols = len(B[0])
    return [[sum((row[t] * B[t][j] for t in range(1, inner)), row[0] * B[0][j]) for j in range(cols)]
            for row in A]


def matvec(A, v) -> list:
    return [sum((a * x for a, x in zip(row[1:], v[1:])), row[0] * v[0]) for row in A]


def transpose(A) -> list[list]:
    return [list(col) for col in zip(*A)]


def _pivot(rows, col, start, backend):
    if backend.exact:
        for r in range(start, len(rows)):
            if rows[r][col] != 0:
                return r
        return None
    best, best_val = None, -1
    for r in range(start, len(rows)):
        v = abs(rows[r][col])
        if v > best_val:
            best, best_val = r, v
    if best_val == 0:
        return None
    return best


def det(A, backend):
    """Determinant by Gaussian elimination (partial pivoting in float mode)."""
    m = len(A)
    if m == 0:
        return backend.one
    rows = [list(r) for r in A]
    result = backend.one
    for c in range(m):
        p = _pivot(rows, c, c, backend)
        if p is None:
            return backend.zero
        if p != c:
            rows[c], rows[p] = rows[p], rows[c]
            result = -result
        piv = rows[c][c]
        result = result * piv
        for r in range(c + 1, m):
            f = rows[r][c]
            if f == 0:
                continue
            f = f / piv
            rows[r] = [x - f * y if j > c else x for j, (x, y) in enumerate(zip(rows[r], rows[c]))]
    return result


class LU:
    """Gaussian elimination of a square matrix, reusable for several solves.

    In float mode the columns are scaled to unit norm first and partial
    pivoting is used, so the pivot test measures the conditioning of A rather
    than its column scales.  ``singular`` is set instead of raising.
    """

    def __init__(self, A, backend):
        m = len(A)
        self.m, self.backend = m, backend
        self.norms = [backend.one] * m
        self.sign = 1
        self.singular = False
        if not backend.exact:
            self.norms = [backend(_norm([A[i][c] for i in range(m)])) for c in range(m)]
            if any(v == 0 for v in self.norms):
                self.singular = True
                return
            A = [[A[i][c] / self.norms[c] for c in range(m)] for i in range(m)]
        rows = [list(r) for r in A]
        perm = list(range(m))
        for c in range(m):
            p = _pivot(rows, c, c, backend)
            if p is None or backend.is_zero(rows[p][c]):
                self.singular = True
                return
            if p != c:
                rows[c], rows[p] = rows[p], rows[c]
                perm[c], perm[p] = perm[p], perm[c]
                self.sign = -self.sign
            piv = rows[c][c]
            for r in range(c + 1, m):
                f = rows[r][c]
                if f == 0:
                    continue
                f = f / piv
                rows[r][c] = f
                for j in range(c + 1, m):
                    rows[r][j] = rows[r][j] - f * rows[c][j]
        self.rows, self.perm = rows, perm

    def solve(self, b) -> list:
        if self.singular:
            raise DegenerateConfiguration("singular linear system")
        m, rows = self.m, self.rows
        y = [b[self.perm[i]] for i in range(m)]
        for i in range(m):
            for j in range(i):
                if rows[i][j] != 0:
                    y[i] = y[i] - rows[i][j] * y[j]
        x = [self.backend.zero] * m
        for i in range(m - 1, -1, -1):
            acc = y[i]
            for j in range(i + 1, m):
                acc = acc - rows[i][j] * x[j]
            x[i] = acc / rows[i][i]
        return [xi / v for xi, v in zip(x, self.norms)]

    def det(self):
        """det A (the column scaling is undone)."""
        be = self.backend
        if self.singular:
            return be.zero
        out = be.one if self.sign > 0 else -be.one
        for i in range(self.m):
            out = out * self.rows[i][i] * self.norms[i]
        return out

    def condition(self) -> float:
        """Frobenius condition number of the column-scaled matrix (inf if singular)."""
        if self.singular:
            return math.inf
        be, m = self.backend, self.m
        if be.exact:
            return 1
        total = 0.0
        for j in range(m):
            col = self.solve([be.one if i == j else be.zero for i in range(m)])
            total += sum((float(abs(x)) * float(v)) ** 2 for x, v in zip(col, self.norms))
        return math.sqrt(m) * math.sqrt(total)


def solve(A, b, backend):
    """Solve the square system A x = b; raises DegenerateConfiguration if singular."""
    return LU(A, backend).solve(b)


def condition_number(A, backend) -> float:
    """Frobenius condition number of A after scaling its columns to unit norm.

    Exact backend: 1 for a nonsingular matrix.  Returns inf when singular.
    """
    return LU(A, backend).condition()


def inverse(A, backend) -> list[list]:
    lu = LU(A, backend)
    m = len(A)
    cols = [lu.solve([backend.one if i == j else backend.zero for i in range(m)]) for j in range(m)]
    return transpose(cols)


def _norm(v) -> float:
    return math.sqrt(sum(float(abs(x)) ** 2 for x in v))


def _content_reduce(h):
    """Scale a rational vector to a primitive integer vector (same direction)."""
    den = 1
    for x in h:
        den = gmpy2.lcm(den, mpq(x).denominator)
    ints = [mpq(x) * den for x in h]
    g = 0
    for x in ints:
        g = gmpy2.gcd(g, x.numerator)
    if g == 0:
        return list(h)
    return [mpq(x.numerator // g) for x in ints]


def nullspace_covector(points: Sequence[Sequence], backend, index=None, raw: bool = False) -> list:
    """Covector annihilating d vectors in (d+1)-space (generalized cross product).

    ``h[i] = (-1)**(i+d) * det(points with coordinate row i removed)``, so that
    ``h . y = det(p_1, ..., p_d, y)``.  The rational backend returns the
    primitive integer multiple unless ``raw`` is set, in which case the
    cofactors themselves are returned (they transform as g^-T h under a
    unimodular g).  Raises DegenerateConfiguration when the vectors are
    dependent (exactly, or up to ``tol`` times the product of their norms).
    """
    d = len(points)
    if d == 0 or any(len(p) != d + 1 for p in points):
        raise ContractViolation("need d vectors of length d+1")
    if not backend.exact:
        return _qr_cofactors(points, backend, index)
    cols = [list(p) for p in points]
    h = []
    for i in range(d + 1):
        minor = [[cols[c][r] for c in range(d)] for r in range(d + 1) if r != i]
        m = det(minor, backend)
        h.append(m if (i + d) % 2 == 0 else -m)
    if backend.exact:
        if all(x == 0 for x in h):
            raise DegenerateConfiguration("dependent vectors", index)
        return list(h) if raw else _content_reduce(h)
    scale = 1.0
    for p in points:
        scale *= _norm(p)
    if max(float(abs(x)) for x in h) <= float(backend.tol) * scale:
        raise DegenerateConfiguration("dependent vectors", index)
    return [backend.clean(x) for x in h]


def _qr_cofactors(points, backend, index=None) -> list:
    """Float cofactor vector through a full Householder QR.

    With ``[p_1 .. p_d] = Q R`` one has ``det(p_1, ..., p_d, y) =
    det(Q) prod(R_ii) conj(q_last) . y``.  All entries come from one backward
    stable factorization, so nearly dependent inputs keep a consistent
    direction (separate minors do not).  The columns are normalized first and
    the vectors count as dependent when the condition number of the
    normalized set reaches 1/tol.
    """
    ctx = backend.ctx
    d = len(points)
    norms = [_norm(p) for p in points]
    if any(v == 0 for v in norms):
        raise DegenerateConfiguration("dependent vectors", index)
    A = ctx.matrix(d + 1, d)
    for c, p in enumerate(points):
        for r in range(d + 1):
            A[r, c] = p[r] / norms[c]
    Q, R = ctx.qr(A, mode="full")
    scale = ctx.det(Q)
    for i in range(d):
        scale *= R[i, i]
    Rsq = [[R[i, k] for k in range(d)] for i in range(d)]
    if scale == 0 or float(backend.tol) * condition_number(Rsq, backend) >= 1:
        raise DegenerateConfiguration("dependent vectors", index)
    for v in norms:
        scale *= backend(v)
    return [backend.clean(scale * ctx.conj(Q[r, d])) for r in range(d + 1)]


# ---------------------------------------------------------------------------
# Laurent polynomials in the spectral parameter


class LaurentPoly:
    """Immutable Laurent polynomial ``sum_i coeffs[i] * lam**(lo + i)``.

    Stored coefficients at both ends are nonzero.  Float coefficients are
    never flushed: each power is a separate sum with its own rounding scale,
    so noise is judged per coefficient by the caller (see lax.spectral).
    """

    __slots__ = ("lo", "coeffs", "backend")

    def __init__(self, coeffs: Iterable, lo: int = 0, backend=RATIONAL):
        cs = list(coeffs)
        start = 0
        while start < len(cs) and cs[start] == 0:
            start += 1
        end = len(cs)
        while end > start and cs[end - 1] == 0:
            end -= 1
        self.coeffs = tuple(cs[start:end])
        self.lo = lo + start if self.coeffs else 0
        self.backend = backend

    @classmethod
    def monomial(cls, c, power: int, backend=RATIONAL) -> "LaurentPoly":
        return cls([backend(c) if not _is_scalar_of(c, backend) else c], power, backend)

    @classmethod
    def constant(cls, c, backend=RATIONAL) -> "LaurentPoly":
        return cls.monomial(c, 0, backend)

    @classmethod
    def zero(cls, backend=RATIONAL) -> "LaurentPoly":
        return cls([], 0, backend)

    @classmethod
    def from_terms(cls, terms: dict, backend=RATIONAL) -> "LaurentPoly":
        if not terms:
            return cls.zero(backend)
        lo, hi = min(terms), max(terms)
        cs = [backend.zero] * (hi - lo + 1)
        for p, c in terms.items():
            cs[p - lo] = cs[p - lo] + c
        return cls(cs, lo, backend)

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_monomial(self) -> bool:
        return len(self.coeffs) == 1

    def terms(self) -> dict:
        return {self.lo + i: c for i, c in enumerate(self.coeffs) if c != 0}

    def abs(self) -> "LaurentPoly":
        """Coefficientwise absolute values (used for rounding bounds)."""
        be = self.backend
        return LaurentPoly([be(abs(c)) for c in self.coeffs], self.lo, be)

    def coeff(self, power: int):
        i = power - self.lo
        if 0 <= i < len(self.coeffs):
            return self.coeffs[i]
        return self.backend.zero

    def __repr__(self) -> str:
        if not self.coeffs:
            return "LaurentPoly(0)"
        parts = [f"{c}*lam^{p}" for p, c in self.terms().items()]
        return "LaurentPoly(" + " + ".join(parts) + ")"

    def __eq__(self, other) -> bool:
        if isinstance(other, LaurentPoly):
            return self.lo == other.lo and self.coeffs == other.coeffs
        if other == 0:
            return not self.coeffs
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.lo, self.coeffs))

    def _coerce(self, other) -> "LaurentPoly":
        if isinstance(other, LaurentPoly):
            return other
        return LaurentPoly([other], 0, self.backend)

    def __add__(self, other) -> "LaurentPoly":
        other = self._coerce(other)
        if not other.coeffs:
            return self
        if not self.coeffs:
            return other
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        cs = [self.backend.zero] * (hi - lo + 1)
        for i, c in enumerate(self.coeffs):
            cs[self.lo - lo + i] = c
        off = other.lo - lo
        for i, c in enumerate(other.coeffs):
            cs[off + i] = cs[off + i] + c
        return LaurentPoly(cs, lo, self.backend)

    __radd__ = __add__

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly([-c for c in self.coeffs], self.lo, self.backend)

    def __sub__(self, other) -> "LaurentPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LaurentPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "LaurentPoly":
        if not isinstance(other, LaurentPoly):
            if other == 0:
                return LaurentPoly.zero(self.backend)
            return LaurentPoly([c * other for c in self.coeffs], self.lo, self.backend)
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return LaurentPoly.zero(self.backend)
        if len(b) == 1:
            b0 = b[0]
            return LaurentPoly([c * b0 for c in a], self.lo + other.lo, self.backend)
        if len(a) == 1:
            a0 = a[0]
            return LaurentPoly([a0 * c for c in b], self.lo + other.lo, self.backend)
        out = [self.backend.zero] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x == 0:
                continue
            for j, y in enumerate(b):
                out[i + j] += x * y
        return LaurentPoly(out, self.lo + other.lo, self.backend)

    __rmul__ = __mul__

    def shift(self, power: int) -> "LaurentPoly":
        """Multiply by lam**power."""
        return LaurentPoly(self.coeffs, self.lo + power, self.backend) if self.coeffs else self

    def divide_monomial(self, other: "LaurentPoly") -> "LaurentPoly":
        if not other.is_monomial():
            raise ContractViolation("division only by a monomial")
        c = other.coeffs[0]
        return LaurentPoly([x / c for x in self.coeffs], self.lo - other.lo, self.backend)

    def evaluate(self, lam):
        if not self.coeffs:
            return self.backend.zero
        # Horner in lam, then the lowest power.
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * lam + c
        return acc * lam ** self.lo if self.lo else acc

    def derivative(self, order: int = 1) -> "LaurentPoly":
        out = {}
        for p, c in self.terms().items():
            f = 1
            for t in range(order):
                f *= p - t
            if f:
                out[p - order] = c * f
        return LaurentPoly.from_terms(out, self.backend)


def _is_scalar_of(c, backend) -> bool:
    if backend.exact:
        return type(c) is type(mpq(0))
    return hasattr(c, "_mpf_") or hasattr(c, "_mpc_")


# ---------------------------------------------------------------------------
# matrices over the Laurent ring


class LaurentMatrix:
    """Square matrix with LaurentPoly entries (immutable)."""

    __slots__ = ("rows", "backend")

    def __init__(self, rows, backend=RATIONAL):
        rows = tuple(tuple(e if isinstance(e, LaurentPoly) else LaurentPoly.constant(e, backend) for e in r)
                     for r in rows)
        m = len(rows)
        if any(len(r) != m for r in rows):
            raise ContractViolation("LaurentMatrix must be square")
        self.rows = rows
        self.backend = backend

    @classmethod
    def identity(cls, m: int, backend=RATIONAL) -> "LaurentMatrix":
        one = LaurentPoly.constant(backend.one, backend)
        zero = LaurentPoly.zero(backend)
        return cls([[one if i == j else zero for j in range(m)] for i in range(m)], backend)

    @classmethod
    def diagonal(cls, entries: Sequence[LaurentPoly], backend=RATIONAL) -> "LaurentMatrix":
        zero = LaurentPoly.zero(backend)
        m = len(entries)
        return cls([[entries[i] if i == j else zero for j in range(m)] for i in range(m)], backend)

    @property
    def size(self) -> int:
        return len(self.rows)

    def __getitem__(self, ij) -> LaurentPoly:
        i, j = ij
        return self.rows[i][j]

    def __eq__(self, other) -> bool:
        return isinstance(other, LaurentMatrix) and self.rows == other.rows

    def __hash__(self) -> int:
        return hash(self.rows)

    def __repr__(self) -> str:
        return f"LaurentMatrix(size={self.size})"

    def __matmul__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        return mat_mul(self, other)

    def scale(self, c) -> "LaurentMatrix":
        return LaurentMatrix([[e * c for e in r] for r in self.rows], self.backend)

    def map(self, fn) -> "LaurentMatrix":
        return LaurentMatrix([[fn(e) for e in r] for r in self.rows], self.backend)

    def evaluate(self, lam) -> list[list]:
        return [[e.evaluate(lam) for e in r] for r in self.rows]

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> "LaurentMatrix":
        return LaurentMatrix([[self.rows[i][j] for j in cols] for i in rows], self.backend)

    def det(self) -> LaurentPoly:
        return laurent_det(self.rows, self.backend)

    def adjugate(self) -> "LaurentMatrix":
        m = self.size
        if m == 1:
            return LaurentMatrix.identity(1, self.backend)
        out = []
        for i in range(m):
            row = []
            for j in range(m):
                # adj[i][j] = (-1)^(i+j) * minor(j, i)
                minor = [[self.rows[r][c] for c in range(m) if c != i] for r in range(m) if r != j]
                cof = laurent_det(minor, self.backend)
                row.append(cof if (i + j) % 2 == 0 else -cof)
            out.append(row)
        return LaurentMatrix(out, self.backend)

    def inverse(self) -> "LaurentMatrix":
        """Inverse over the Laurent ring; only defined when det is a monomial."""
        dt = self.det()
        if not dt.is_monomial():
            raise ContractViolation("Laurent matrix inverse requires a monomial determinant")
        return self.adjugate().map(lambda e: e.divide_monomial(dt))

    def char_poly(self) -> "SpectralPolynomial":
        return char_poly(self)


def mat_mul(A: LaurentMatrix, B: LaurentMatrix) -> LaurentMatrix:
    if A.size != B.size:
        raise ContractViolation(f"size mismatch {A.size} vs {B.size}")
    zero = LaurentPoly.zero(A.backend)
    cols = list(zip(*B.rows))
    out = []
    for r in A.rows:
        row = []
        for c in cols:
            acc = zero
            for x, y in zip(r, c):
                if x.coeffs and y.coeffs:
                    acc = acc + x * y
            row.append(acc)
        out.append(row)
    return LaurentMatrix(out, A.backend)


def laurent_det(rows, backend) -> LaurentPoly:
    """Determinant by Laplace expansion over column subsets (O(m 2^m) products)."""
    m = len(rows)
    if m == 0:
        return LaurentPoly.constant(backend.one, backend)
    dp = {0: LaurentPoly.constant(backend.one, backend)}
    for r in range(m):
        nxt: dict[int, LaurentPoly] = {}
        for mask, val in dp.items():
            if not val.coeffs:
                continue
            for c in range(m):
                bit = 1 << c
                if mask & bit:
                    continue
                e = rows[r][c]
                if not e.coeffs:
                    continue
                inversions = bin(mask >> (c + 1)).count("1")
                term = val * e
                if inversions % 2:
                    term = -term
                key = mask | bit
                nxt[key] = nxt[key] + term if key in nxt else term
        dp = nxt
    return dp.get((1 << m) - 1, LaurentPoly.zero(backend))


# ---------------------------------------------------------------------------
# characteristic polynomials


@dataclass(frozen=True, eq=False)
class SpectralPolynomial:
    """Bivariate polynomial ``R(lam, k) = sum_r k**r * k_coeffs[r](lam)``.

    Monic in ``k``.  ``table`` is the coefficient map of the cleared
    polynomial ``lam**cleared_power * R`` keyed by ``(k_power, lam_power)``.
    ``d``, ``n`` and ``labels`` are filled in by ``lax.spectral``.
    """

    k_coeffs: tuple
    backend: object
    d: int | None = None
    n: int | None = None
    labels: dict | None = field(default=None)

    @property
    def k_degree(self) -> int:
        return len(self.k_coeffs) - 1

    @property
    def cleared_power(self) -> int:
        los = [c.lo for c in self.k_coeffs if c.coeffs]
        return -min(los) if los else 0

    @functools.cached_property
    def table(self) -> dict:
        N = self.cleared_power
        out = {}
        for r, c in enumerate(self.k_coeffs):
            for p, v in c.terms().items():
                out[(r, p + N)] = v
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectralPolynomial):
            return NotImplemented
        return self.cleared_power == other.cleared_power and self.table == other.table

    def support(self) -> set:
        return set(self.table)

    def evaluate(self, lam, k):
        acc = self.backend.zero
        for r in range(self.k_degree, -1, -1):
            acc = acc * k + self.k_coeffs[r].evaluate(lam)
        return acc

    def cleared_partial(self, a: int, b: int, lam, k):
        """d^a/dlam^a d^b/dk^b of the cleared polynomial at (lam, k)."""
        N = self.cleared_power
        acc = self.backend.zero
        for r, c in enumerate(self.k_coeffs):
            if r < b or not c.coeffs:
                continue
            kf = 1
            for t in range(b):
                kf *= r - t
            lam_part = c.shift(N).derivative(a).evaluate(lam)
            acc = acc + kf * lam_part * k ** (r - b)
        return acc

    def partial(self, a: int, b: int, lam, k):
        """d^a/dlam^a d^b/dk^b of R itself (Laurent differentiation)."""
        acc = self.backend.zero
        for r, c in enumerate(self.k_coeffs):
            if r < b or not c.coeffs:
                continue
            kf = 1
            for t in range(b):
                kf *= r - t
            acc = acc + kf * c.derivative(a).evaluate(lam) * k ** (r - b)
        return acc


def char_poly(M: LaurentMatrix, magnitude: bool = False) -> SpectralPolynomial:
    """det(k I - M) by the division-free Berkowitz recursion.

    Returned monic in k: the coefficient of ``k**(m-r)`` is ``(-1)**r`` times
    the sum of the r x r principal minors of M.

    With ``magnitude=True`` every subtraction becomes an addition.  Applied to
    a matrix of absolute values this bounds the sum of magnitudes of all terms
    the recursion adds up, i.e. the scale of its rounding error.
    """
    m = M.size
    if m == 0:
        raise ContractViolation("char_poly of an empty matrix")
    be = M.backend
    one = LaurentPoly.constant(be.one, be)
    A = M.rows
    # p[t] is the coefficient of k^(size - t) for the leading principal block.
    sub = (lambda x, y: x + y) if magnitude else (lambda x, y: x - y)  # noqa: E731
    p = [one, sub(LaurentPoly.zero(be), A[0][0])]
    for r in range(1, m):
        col = [A[i][r] for i in range(r)]
        row = A[r][:r]
        a = A[r][r]
        q = []
        v = col
        for _ in range(r):
            q.append(_dot(row, v, be))
            v = [_dot(A[i][:r], v, be) for i in range(r)]
        new = []
        for t in range(r + 2):
            acc = p[t] if t <= r else LaurentPoly.zero(be)
            if t >= 1:
                acc = sub(acc, a * p[t - 1])
            for i in range(t - 1):
                acc = sub(acc, p[i] * q[t - 2 - i])
            new.append(acc)
        p = new
    k_coeffs = tuple(p[m - r] for r in range(m + 1))
    return SpectralPolynomial(k_coeffs, be)


def char_poly_by_minors(M: LaurentMatrix) -> SpectralPolynomial:
    """det(k I - M) as signed sums of principal minors (reference route)."""
    from itertools import combinations

    m = M.size
    be = M.backend
    coeffs = []
    for r in range(m + 1):
        acc = LaurentPoly.zero(be)
        for S in combinations(range(m), r):
            acc = acc + laurent_det([[M.rows[i][j] for j in S] for i in S], be)
        coeffs.append(acc if r % 2 == 0 else -acc)
    return SpectralPolynomial(tuple(coeffs[m - r] for r in range(m + 1)), be)


def _dot(xs, ys, backend) -> LaurentPoly:
    acc = LaurentPoly.zero(backend)
    for x, y in zip(xs, ys):
        if x.coeffs and y.coeffs:
            acc = acc + x * y
    return acc
