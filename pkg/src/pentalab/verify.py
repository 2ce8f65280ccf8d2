"""The acceptance battery.

Each criterion returns a CriterionResult; ``verify_suite`` runs the quick or
full selection.  Quick caps d <= 3 and n <= 7 and skips the KdV suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .algebra import float_backend
from .errors import PentalabError
from .kdvlimit import (
    CircleGrid,
    continuous_limit_check,
    order_drop_residual,
    q2_of,
    spectral_shift_check,
    trig_potentials,
)
from .lax import (
    closed_polygon,
    closed_polygon_conditions,
    conservation_report,
    integrals_rank,
    labeled_integrals,
    newton_genus_bound,
    random_closed_polygon,
    spectral,
    spectral_windows,
)
from .pentagram import pentagram_map
from .polygon import random_polygon
from .scaling import ScalingRule, monodromy_crosscheck, scaling_invariance_check

SPECTRAL_N = {2: 5, 3: 5, 4: 7, 5: 7, 6: 9, 7: 9, 8: 10}
"""Smallest convenient n with gcd(n, d+1) = 1 and n >= d+2."""


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float = 0.0
    details: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:>2}: {self.name} ({self.seconds:.1f} s)"


def _timed(number: int, name: str, budget: float, fn) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        ok, details = fn()
    except PentalabError as exc:
        ok, details = False, [f"{type(exc).__name__}: {exc}"]
    dt = time.perf_counter() - t0
    if dt > budget:
        details.append(f"runtime {dt:.1f} s exceeds budget {budget:.0f} s")
        ok = False
    return CriterionResult(number, name, ok, dt, details)


def criterion_1(quick: bool = False) -> CriterionResult:
    cases = [(3, 5), (3, 7), (2, 5), (2, 7)] + ([] if quick else [(3, 9)])

    def run():
        ok, details = True, []
        for d, n in cases:
            for seed in range(5):
                c = random_polygon(d, n, seed=seed)
                same = spectral(c).table == spectral(pentagram_map(c)).table
                ok &= same
                if not same:
                    details.append(f"d={d} n={n} seed={seed}: spectral table changed")
        details.append(f"{5 * len(cases)} polygons checked")
        return ok, details

    return _timed(1, "exact conservation (d=2,3)", 120, run)


def criterion_2(steps: int = 20) -> CriterionResult:
    limits = {256: 1e-30, 53: 1e-9}

    def run():
        ok, details = True, []
        for d in (4, 5, 6):
            n = SPECTRAL_N[d]
            c = random_polygon(d, n, seed=0)
            for prec, lim in limits.items():
                try:
                    drift = float(conservation_report(c.to_backend(float_backend(prec)), steps).max_drift())
                    good = drift <= lim
                    msg = f"d={d} n={n} {prec}-bit: max drift {drift:.2e} (limit {lim:.0e})"
                except Exception as exc:  # noqa: BLE001 - reported, not swallowed
                    good = False
                    msg = f"d={d} n={n} {prec}-bit: {type(exc).__name__}: {exc}"
                ok &= good
                details.append(msg)
        return ok, details

    return _timed(2, "float conservation (d=4,5,6)", 300, run)


def criterion_3(quick: bool = False, samples: int = 10) -> CriterionResult:
    dims = (2, 3) if quick else (2, 3, 4, 5, 6)

    def run():
        ok, details = True, []
        for d in dims:
            worst = 0
            for i in range(samples):
                c = random_polygon(d, SPECTRAL_N[d], seed=100 + i)
                s = Fraction(i % 5 + 2, 3) * (-1) ** i
                worst = max(worst, scaling_invariance_check(c, s))
            ok &= worst == 0
            details.append(f"d={d}: max deviation {float(worst):.3e} over {samples} pairs")
        if not quick:
            for d in (7, 8):
                c = random_polygon(d, SPECTRAL_N[d], seed=7)
                dev = scaling_invariance_check(c, Fraction(3, 2))
                details.append(f"d={d} (reported only): deviation {float(dev):.3e}")
            for d in (4, 6):
                c = random_polygon(d, SPECTRAL_N[d], seed=7)
                dev = scaling_invariance_check(c, Fraction(3, 2), ScalingRule.for_dimension(d, stated=True))
                details.append(f"d={d} single-block rule (reported only): deviation {float(dev):.3e}")
        return ok, details

    return _timed(3, "scaling invariance", 600, run)


def criterion_4(quick: bool = False) -> CriterionResult:
    ns = (5, 7) if quick else (5, 7, 9)

    def run():
        ok, details = True, []
        for n in ns:
            q = n // 2
            R = spectral(random_polygon(3, n, seed=n))
            count = len(labeled_integrals(R))
            k0 = R.table.get((0, 0))
            windows = spectral_windows(n)
            inside = all(m in windows[r] for (r, m) in R.table)
            good = count == 3 * (q + 1) and k0 == 1 and inside and R.cleared_power == 2 * n
            ok &= good
            details.append(f"n={n}: {count} labeled integrals, k^0 coefficient {k0}, supports inside windows: {inside}")
        return ok, details

    return _timed(4, "3D spectral structure", 30, run)


def criterion_5(quick: bool = False) -> CriterionResult:
    ns = (5, 7) if quick else (5, 7, 9)

    def run():
        ok, details = True, []
        for n in ns:
            g = newton_genus_bound(spectral(random_polygon(3, n, seed=2 * n)))
            ok &= g == 3 * (n // 2)
            details.append(f"n={n}: interior points {g}, expected {3 * (n // 2)}")
        return ok, details

    return _timed(5, "Newton polygon genus", 10, run)


def criterion_6(quick: bool = False) -> CriterionResult:
    be = float_backend(256)

    def run():
        ok, details = True, []
        worst = 0.0
        for i, n in enumerate((5, 7, 5, 7, 5)[: 3 if quick else 5]):
            c, sign = random_closed_polygon(3, n, seed=40 + i, backend=be)
            res = closed_polygon_conditions(spectral(c), sign).max_residual()
            worst = max(worst, res)
        ok &= worst <= 1e-25
        details.append(f"closed polygons: max quadruple-point residual {worst:.2e}")
        for n in (5, 7):
            R = spectral(random_polygon(3, n, seed=50 + n))
            for sign in (1, -1):
                dep = closed_polygon_conditions(R, sign).dependency
                ok &= dep == 0
                details.append(f"n={n} sign={sign:+d}: dependency residual {dep}")
        return ok, details

    return _timed(6, "closed polygons", 60, run)


def criterion_7(quick: bool = False) -> CriterionResult:
    dims = (3,) if quick else (3, 5)

    def run():
        ok, details = True, []
        for d in dims:
            for n in (5, 7):
                if math.gcd(n, d + 1) != 1 or n < d + 2:
                    continue
                c = random_polygon(d, n, seed=n + d)
                for s in (Fraction(1, 2), Fraction(2)):
                    dev = float(monodromy_crosscheck(c, s))
                    ok &= dev <= 1e-25
                    details.append(f"d={d} n={n} s={s}: deviation {dev:.2e}")
        return ok, details

    return _timed(7, "monodromy cross-check", 60, run)


def criterion_8(quick: bool = False) -> CriterionResult:
    ns = (5,) if quick else (5, 7)

    def run():
        ok, details = True, []
        for n in ns:
            for seed in range(5):
                r = integrals_rank(random_polygon(3, n, seed=60 + seed))
                ok &= r == 3 * (n // 2 + 1)
                details.append(f"n={n} seed={60 + seed}: rank {r}, expected {3 * (n // 2 + 1)}")
        return ok, details

    return _timed(8, "integral independence", 60, run)


def criterion_9() -> CriterionResult:
    def run():
        ok, details = True, []
        g = CircleGrid(128)
        for d in (2, 3, 4):
            L = trig_potentials(g, d, seed=d)
            r = order_drop_residual(q2_of(L), L)
            ok &= r <= 1e-8
            details.append(f"d={d}: order-drop residual {r:.2e}")
        g = CircleGrid(32)
        L = trig_potentials(g, 2, seed=11, amplitude=0.2)
        dt = 2.0 / (g.N / 2) ** 3
        for c in (1.0, 10.0):
            rep = spectral_shift_check(L, c, dt, 60)
            ok &= rep.ok
            details.append(f"shift c={c:g}: deviation {rep.deviation:.2e}, integration tol {rep.integration_tol:.2e}")
        return ok, details

    return _timed(9, "KdV commutator and spectral shift", 60, run)


def criterion_10() -> CriterionResult:
    eps = (0.08, 0.04, 0.02)

    def run():
        ok, details = True, []
        g = CircleGrid(64)
        for d in (2, 3):
            alphas = []
            for seed in (0, 1):
                rep = continuous_limit_check(trig_potentials(g, d, seed=seed), eps)
                good = abs(rep.slope - 2) <= 0.1 and all(abs(s - 2) <= 0.1 for s in rep.slopes)
                good &= rep.cosine >= 0.999
                ok &= good
                alphas.append(rep.alpha)
                details.append(
                    f"d={d} seed={seed}: slope {rep.slope:.3f}, cosine {rep.cosine:.7f}, alpha {rep.alpha:.7f}")
            agree = abs(alphas[0] - alphas[1]) <= 0.01 * abs(alphas[0])
            ok &= agree
            details.append(f"d={d}: alpha agreement {abs(alphas[0] - alphas[1]) / abs(alphas[0]):.1e}")
        return ok, details

    return _timed(10, "continuous limit", 300, run)


def criterion_11() -> CriterionResult:
    be = float_backend(256)

    def run():
        ctx = be.ctx
        pts = [[ctx.cos(2 * ctx.pi * k / 5), ctx.sin(2 * ctx.pi * k / 5), ctx.one] for k in range(5)]
        c, _ = closed_polygon(pts, be)
        Tc = pentagram_map(c)
        dev = max(abs(x - y) for r1, r2 in zip(c.coeffs, Tc.coeffs) for x, y in zip(r1, r2))
        scale = max(abs(x) for r in c.coeffs for x in r)
        ok = dev <= be.tol * scale
        return ok, [f"regular pentagon: max coordinate change {mpmath.nstr(dev, 3)}"]

    return _timed(11, "regular pentagon fixed point", 1, run)


def verify_suite(level: str = "quick") -> list[CriterionResult]:
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    quick = level == "quick"
    out = [criterion_1(quick)]
    if not quick:
        out.append(criterion_2())
    out += [criterion_3(quick), criterion_4(quick), criterion_5(quick), criterion_6(quick),
            criterion_7(quick), criterion_8(quick)]
    if not quick:
        out += [criterion_9(), criterion_10()]
    out.append(criterion_11())
    return out


ALL_CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}
