"""Scaling symmetries of the coordinates and the Lax/frame conjugation.

A scaling rule multiplies a_{j,k} by s^{e_k}.  The rules used here:

* odd d:  e = (1, 0, 1, 0, ..., 1)
* even d = 2m:  e_{2i-1} = m - i + 1, e_{2i} = -i, e.g. (2, -1, 1, -2) for d = 4

For d = 2 the even rule reads (1, -1).  Its inverse s -> 1/s is the
familiar (s^-1 a_{j,1}, s a_{j,2}).  The single-block even rule
e = (-1, ..., -m, m, ..., 1) is available as ``stated=True``.  It agrees
with the rule above for d = 2 and is not a symmetry of the step-2 map for
d >= 4.

With e_0 = 0 and g = diag(s^{e_0}, ..., s^{e_d}), the scaled frame matrix
N_j(s) and the inverse Lax form B_j(lam) satisfy

    B_j(lam) = s^{-e_d} g^{-1} N_j(s) g,    lam = s^w,

where w = e_{i-1} - e_i - e_d at every position i that carries lam.  For odd
d this gives g = diag(1, s, 1, s, ...) and lam = s^-2.
"""

from __future__ import annotations

from dataclasses import dataclass

from .algebra import float_backend
from .errors import ContractViolation, RepeatedSpectrum
from .lax import d_diagonal, lax_monodromy
from .pentagram import pentagram_map
from .polygon import TwistedCoords, random_polygon


@dataclass(frozen=True)
class ScalingRule:
    d: int
    exponents: tuple
    stated: bool = False

    @classmethod
    def for_dimension(cls, d: int, stated: bool = False) -> "ScalingRule":
        if d < 1:
            raise ContractViolation("d must be >= 1")
        if d % 2:
            return cls(d, tuple(1 if k % 2 else 0 for k in range(1, d + 1)))
        m = d // 2
        if stated:
            return cls(d, tuple(-k for k in range(1, m + 1)) + tuple(m - i + 1 for i in range(1, m + 1)), True)
        e = []
        for i in range(1, m + 1):
            e += [m - i + 1, -i]
        return cls(d, tuple(e))

    def lam_weight(self) -> int:
        """w with lam = s^w in the conjugation identity.

        Each rule is paired with the Lax diagonal of the same convention; a
        ContractViolation means the exponents do not conjugate onto it.
        """
        e = (0,) + self.exponents
        ed = e[-1]
        pattern = d_diagonal(self.d, self.stated)
        w = None
        for i in range(1, self.d + 1):
            v = e[i - 1] - e[i] - ed
            if pattern[i - 1]:
                if w is None:
                    w = v
                elif v != w:
                    raise ContractViolation("rule is incompatible with the Lax diagonal")
            elif v != 0:
                raise ContractViolation("rule is incompatible with the Lax diagonal")
        return w


def apply_scaling(c: TwistedCoords, s, rule: ScalingRule | None = None) -> TwistedCoords:
    rule = rule or ScalingRule.for_dimension(c.d)
    if rule.d != c.d:
        raise ContractViolation(f"rule is for d={rule.d}, polygon has d={c.d}")
    be = c.backend
    s = be(s)
    if s == 0:
        raise ContractViolation("scaling parameter must be nonzero")
    powers = [s ** e if e >= 0 else be.one / s ** (-e) for e in rule.exponents]
    return c.replace([[x * p for x, p in zip(row, powers)] for row in c.coeffs])


def _max_rel_dev(a: TwistedCoords, b: TwistedCoords):
    be = a.backend
    worst = be.zero
    for ra, rb in zip(a.coeffs, b.coeffs):
        for x, y in zip(ra, rb):
            big = max(abs(x), abs(y))
            if big != 0:
                worst = max(worst, abs(x - y) / big)
    return worst


def scaling_invariance_check(c: TwistedCoords, s, rule: ScalingRule | None = None):
    """Max relative coefficient deviation between T(scale_s c) and scale_s(T c)."""
    lhs = pentagram_map(apply_scaling(c, s, rule))
    rhs = apply_scaling(pentagram_map(c), s, rule)
    return _max_rel_dev(lhs, rhs)


@dataclass
class ScalingSample:
    d: int
    n: int
    seed: int
    s: object
    deviation: object
    asserted: bool


def scaling_survey(d: int, n: int, samples: int = 10, seed: int = 0,
                   stated: bool = False, backend=None) -> list[ScalingSample]:
    """Deviations on random (c, s) pairs drawn as rationals.

    Exactness is asserted for d <= 6 only; larger d are reported.  With a
    float backend the rational draws are converted before mapping.
    """
    import numpy as np
    from fractions import Fraction

    rng = np.random.default_rng(seed)
    rule = ScalingRule.for_dimension(d, stated)
    out = []
    for i in range(samples):
        c = random_polygon(d, n, seed=seed * 1000 + i)
        if backend is not None:
            c = c.to_backend(backend)
        p, q = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        s = Fraction(p if rng.random() < 0.5 else -p, q)
        out.append(ScalingSample(d, n, seed * 1000 + i, s, scaling_invariance_check(c, s, rule), d <= 6))
    return out


def survey_csv(rows: list[ScalingSample]) -> str:
    lines = ["d,n,seed,s,deviation"]
    for r in rows:
        lines.append(f"{r.d},{r.n},{r.seed},{r.s},{float(r.deviation):.6e}")
    return "\n".join(lines) + "\n"


def scaled_frame_matrix(c: TwistedCoords, j: int, s, rule: ScalingRule | None = None) -> list[list]:
    """Companion matrix N_j of the scaled coordinates: F_{j+1} = F_j N_j."""
    d, be = c.d, c.backend
    sc = apply_scaling(c, s, rule)
    N = [[be.zero] * (d + 1) for _ in range(d + 1)]
    for i in range(d):
        N[i + 1][i] = be.one
    N[0][d] = be.one if d % 2 == 0 else -be.one
    for k in range(1, d + 1):
        N[k][d] = sc.a(j, k)
    return N


def _match(a: list, b: list) -> float:
    """Greedy magnitude matching; max relative distance of matched pairs."""
    scale = max(max(abs(x) for x in a), max(abs(x) for x in b))
    pool = list(b)
    worst = 0
    for x in sorted(a, key=lambda z: -abs(z)):
        i = min(range(len(pool)), key=lambda t: abs(pool[t] - x))
        worst = max(worst, abs(pool.pop(i) - x) / scale)
    return worst


def monodromy_crosscheck(c: TwistedCoords, s, rule: ScalingRule | None = None):
    """Match eigenvalues of M_0(lam), lam = s^w, against s^{n e_d} / mu for mu in the
    spectrum of N_0(s)...N_{n-1}(s); returns the max relative mismatch.
    """
    be = c.backend if not c.backend.exact else float_backend()
    c = c.to_backend(be)
    rule = rule or ScalingRule.for_dimension(c.d)
    s = be(s)
    if s == 0:
        raise ContractViolation("scaling parameter must be nonzero")
    ctx = be.ctx
    w = rule.lam_weight()
    lam = s ** w
    Pi = ctx.eye(c.d + 1)
    for j in range(c.n):
        Pi = Pi * ctx.matrix(scaled_frame_matrix(c, j, s, rule))
    mus = ctx.eig(Pi, left=False, right=False)
    ks = ctx.eig(ctx.matrix(lax_monodromy(c, 0, rule.stated).evaluate(lam)), left=False, right=False)
    spread = max(abs(k) for k in ks)
    for i in range(len(ks)):
        for j in range(i + 1, len(ks)):
            if abs(ks[i] - ks[j]) <= ctx.sqrt(be.eps) * spread:
                raise RepeatedSpectrum(f"eigenvalues {i} and {j} of M_0 coincide")
    factor = s ** (c.n * rule.exponents[-1])
    predicted = [factor / mu for mu in mus]
    return _match(list(ks), predicted)
