"""Command-line driver: every pipeline as a subcommand with JSON/CSV artifacts.

Exit codes: 0 success, 1 usage error, 2 contract violation, 3 numerical
failure, 4 structural mismatch.  Every artifact carries the run config and
a ``producer`` tag naming the library operation that made it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kdvlimit, lax, pentagram, polygon, scaling
from .algebra import DEFAULT_PRECISION, RATIONAL, float_backend
from .errors import ContractViolation, NumericalFailure, PentalabError, StructuralMismatch
from .polygon import TwistedCoords

EXIT_OK, EXIT_USAGE, EXIT_CONTRACT, EXIT_NUMERICAL, EXIT_STRUCTURAL = 0, 1, 2, 3, 4

DEFAULT_TOLERANCES = {
    "drift": 1e-30,       # float conservation, relative
    "closed": 1e-25,      # quadruple-point residuals
    "xcheck": 1e-25,      # monodromy eigenvalue matching
    "scaling": None,      # float scaling deviation; None means 1e3 * eps
    "order_drop": 1e-8,   # KdV commutator order drop
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunConfig:
    backend: str = "rational"
    precision: int = DEFAULT_PRECISION
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    out: str = "."

    def __post_init__(self):
        if self.backend not in ("rational", "float"):
            raise ContractViolation(f"unknown backend {self.backend!r}")
        if self.precision < 53:
            raise ContractViolation(f"precision must be >= 53 bits, got {self.precision}")
        if not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")

    def make_backend(self):
        return RATIONAL if self.backend == "rational" else float_backend(self.precision)

    def tol(self, key: str):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def echo(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# artifacts


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(cfg: RunConfig, name: str, producer: str, command: str, params: dict, body: dict) -> Path:
    doc = {"config": cfg.echo(), "producer": producer, "command": command, "params": params}
    doc.update(body)
    path = Path(cfg.out) / f"{name}.json"
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _write_csv(cfg: RunConfig, name: str, producer: str, text: str) -> Path:
    header = f"# producer={producer} config={json.dumps(cfg.echo(), sort_keys=True)}\n"
    path = Path(cfg.out) / f"{name}.csv"
    _atomic_write(path, header + text)
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


# ---------------------------------------------------------------------------
# inputs


def _polygon(args, cfg: RunConfig) -> TwistedCoords:
    if args.input:
        data = json.loads(Path(args.input).read_text())
        c = TwistedCoords.from_json(data.get("polygon", data))
        if args.backend is not None:
            c = c.to_backend(cfg.make_backend())
        return c
    if args.d is None or args.n is None:
        raise ContractViolation("give --input or both --d and --n")
    ahead = max(1, getattr(args, "steps", 1))
    c = polygon.random_polygon(args.d, args.n, seed=cfg.seed, spread=args.spread, lookahead=ahead)
    return c.to_backend(cfg.make_backend())


def _resolved_config(args) -> RunConfig:
    env = os.environ.get("PENTALAB_PRECISION")
    precision = args.precision
    if precision is None:
        try:
            precision = int(env) if env else DEFAULT_PRECISION
        except ValueError as exc:
            raise ContractViolation(f"PENTALAB_PRECISION={env!r} is not an integer") from exc
    backend = args.backend
    if backend is None and getattr(args, "input", None):
        backend = json.loads(Path(args.input).read_text()).get("polygon", {}).get("backend")
    return RunConfig(backend or "rational", precision, args.seed, dict(args.tol), args.out)


def _polygon_params(c: TwistedCoords) -> dict:
    return {"d": c.d, "n": c.n}


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, cfg):
    c = _polygon(args, cfg)
    _write_json(cfg, "polygon", "polygon.random_polygon", "gen", _polygon_params(c), {"polygon": c.to_json()})


def cmd_map(args, cfg):
    c = _polygon(args, cfg)
    Tc = pentagram.pentagram_map(c)
    _write_json(cfg, "map", "pentagram.pentagram_map", "map", _polygon_params(c),
                {"polygon": Tc.to_json(), "source": c.to_json()})


def cmd_orbit(args, cfg):
    c = _polygon(args, cfg)
    orb = pentagram.iterate(c, args.steps)
    rows = ["step,min_window_det,log10_max_coeff"]
    rows += [f"{r['step']},{r['min_window_det']:.6e},{r['log10_max_coeff']:.4f}" for r in orb.diagnostics]
    _write_csv(cfg, "orbit", "pentagram.iterate", "\n".join(rows) + "\n")
    failure = None if orb.failure is None else f"{type(orb.failure).__name__}: {orb.failure}"
    _write_json(cfg, "orbit", "pentagram.iterate", "orbit", {**_polygon_params(c), "steps": args.steps},
                {"polygons": [p.to_json() for p in orb.polygons], "diagnostics": orb.diagnostics,
                 "failure": failure})
    if orb.failure is not None:
        raise orb.failure


def cmd_spectral(args, cfg):
    c = _polygon(args, cfg)
    R = lax.spectral(c, stated=args.stated)
    _write_json(cfg, "spectral", "lax.spectral", "spectral", {**_polygon_params(c), "stated": args.stated},
                {"spectral": lax.spectral_to_json(R)})


def cmd_conserve(args, cfg):
    c = _polygon(args, cfg)
    table = lax.conservation_report(c, args.steps)
    _write_csv(cfg, "conserve", "lax.conservation_report", table.to_csv())
    drift = table.max_drift()
    limit = 0.0 if c.backend.exact else cfg.tol("drift")
    _write_json(cfg, "conserve", "lax.conservation_report", "conserve", {**_polygon_params(c), "steps": args.steps},
                {"max_drift": drift, "limit": limit, "ok": drift <= limit})
    if drift > limit:
        raise StructuralMismatch(f"spectral drift {drift:.3e} exceeds {limit:.1e}")


def cmd_scaling_check(args, cfg):
    be = cfg.make_backend()
    rows = scaling.scaling_survey(args.d, args.n, args.samples, cfg.seed, args.stated,
                                  None if be.exact else be)
    _write_csv(cfg, "scaling", "scaling.scaling_survey", scaling.survey_csv(rows))
    limit = 0 if be.exact else (cfg.tol("scaling") or float(be.tol))
    worst = max((r.deviation for r in rows if r.asserted), default=0)
    _write_json(cfg, "scaling", "scaling.scaling_survey", "scaling-check",
                {"d": args.d, "n": args.n, "samples": args.samples, "stated": args.stated},
                {"samples": [{"seed": r.seed, "s": str(r.s), "deviation": float(r.deviation),
                              "asserted": r.asserted} for r in rows],
                 "max_asserted_deviation": float(worst)})
    if worst > limit:
        raise StructuralMismatch(f"scaling deviation {float(worst):.3e} on an asserted dimension")


def cmd_closed_check(args, cfg):
    be = cfg.make_backend()
    c, sign = lax.random_closed_polygon(args.d, args.n, cfg.seed, backend=be)
    rep = lax.closed_polygon_conditions(lax.spectral(c), sign)
    res = rep.max_residual()
    limit = 0.0 if be.exact else cfg.tol("closed")
    _write_json(cfg, "closed", "lax.closed_polygon_conditions", "closed-check", {"d": args.d, "n": args.n},
                {"polygon": c.to_json(), "sign": sign,
                 "residuals": {f"lam{a}_k{b}": be.format(v) for (a, b), v in sorted(rep.residuals.items())},
                 "dependency": be.format(rep.dependency), "max_residual": res})
    if res > limit:
        raise StructuralMismatch(f"closed-polygon residual {res:.3e} exceeds {limit:.1e}")


def cmd_xcheck(args, cfg):
    c = _polygon(args, cfg)
    try:
        s = Fraction(args.s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ContractViolation(f"bad scaling parameter {args.s!r}") from exc
    dev = float(scaling.monodromy_crosscheck(c, s))
    limit = cfg.tol("xcheck")
    _write_json(cfg, "xcheck", "scaling.monodromy_crosscheck", "xcheck-monodromy",
                {**_polygon_params(c), "s": str(s)}, {"deviation": dev, "limit": limit})
    if dev > limit:
        raise StructuralMismatch(f"monodromy mismatch {dev:.3e} exceeds {limit:.1e}")


def cmd_genus(args, cfg):
    c = _polygon(args, cfg)
    g = lax.newton_genus_bound(lax.spectral(c))
    expected = 3 * (c.n // 2) if c.d == 3 and c.n % 2 else None
    _write_json(cfg, "genus", "lax.newton_genus_bound", "genus", _polygon_params(c),
                {"interior_points": g, "expected": expected})
    if expected is not None and g != expected:
        raise StructuralMismatch(f"interior count {g}, expected {expected}")


def cmd_rank(args, cfg):
    c = _polygon(args, cfg)
    r = lax.integrals_rank(c)
    expected = 3 * (c.n // 2 + 1)
    _write_json(cfg, "rank", "lax.integrals_rank", "rank", _polygon_params(c), {"rank": r, "expected": expected})
    if r != expected:
        raise StructuralMismatch(f"rank {r}, expected {expected}")


def _kdv_operator(args, cfg):
    grid = kdvlimit.CircleGrid(args.N)
    return kdvlimit.trig_potentials(grid, args.d, seed=cfg.seed, amplitude=args.amplitude)


def _kdv_dt(args) -> float:
    if args.dt is not None:
        return args.dt
    return 0.5 * kdvlimit.RK4_BUDGET / (args.N / 2) ** (args.d + 1)


def cmd_kdv_evolve(args, cfg):
    L = _kdv_operator(args, cfg)
    dt = _kdv_dt(args)
    traj = kdvlimit.kdv_flow(L, dt, args.steps, store_every=args.store_every)
    x = L.grid.x
    cols = ",".join(f"u{j}" for j in range(args.d))
    lines = [f"t,x,{cols}"]
    for t, u in zip(traj.times, traj.states):
        for i in range(len(x)):
            lines.append(f"{t:.10g},{x[i]:.10g}," + ",".join(f"{u[j][i]:.12e}" for j in range(args.d)))
    _write_csv(cfg, "kdv", "kdvlimit.kdv_flow", "\n".join(lines) + "\n")
    means = [[float(np.mean(u[j])) for j in range(args.d)] for u in traj.states]
    _write_json(cfg, "kdv", "kdvlimit.kdv_flow", "kdv-evolve",
                {"d": args.d, "N": args.N, "dt": dt, "steps": args.steps, "amplitude": args.amplitude},
                {"times": traj.times, "means": means})


def cmd_kdv_shift(args, cfg):
    L = _kdv_operator(args, cfg)
    dt = _kdv_dt(args)
    rep = kdvlimit.spectral_shift_check(L, args.c, dt, args.steps)
    _write_json(cfg, "shift", "kdvlimit.spectral_shift_check", "kdv-shift-check",
                {"d": args.d, "N": args.N, "dt": dt, "steps": args.steps, "c": args.c},
                {"deviation": rep.deviation, "integration_tol": rep.integration_tol, "ok": rep.ok})
    if not rep.ok:
        raise StructuralMismatch(f"shift deviation {rep.deviation:.3e} above 10 x {rep.integration_tol:.3e}")


def cmd_climit(args, cfg):
    L = _kdv_operator(args, cfg)
    try:
        eps = [float(e) for e in args.eps.split(",")]
    except ValueError as exc:
        raise ContractViolation(f"bad --eps list {args.eps!r}") from exc
    rep = kdvlimit.continuous_limit_check(L, eps)
    _write_csv(cfg, "climit", "kdvlimit.continuous_limit_check", rep.to_csv())
    _write_json(cfg, "climit", "kdvlimit.continuous_limit_check", "climit",
                {"d": args.d, "N": args.N, "eps": eps, "amplitude": args.amplitude},
                {"slope": rep.slope, "step_slopes": rep.slopes, "alpha": rep.alpha, "cosine": rep.cosine,
                 "residuals": rep.residuals, "alphas": rep.alphas})


def cmd_verify(args, cfg):
    from .verify import verify_suite

    print(f"config: {json.dumps(cfg.echo(), sort_keys=True)}")
    results = verify_suite(args.level)
    for r in results:
        print(r.line())
        for d in r.details:
            print(f"    {d}")
    _write_json(cfg, "verify", "verify.verify_suite", "verify", {"level": args.level},
                {"results": [{"criterion": r.number, "name": r.name, "passed": r.passed,
                              "details": r.details} for r in results]})
    failed = [r for r in results if not r.passed]
    if failed:
        names = ", ".join(f"{r.number} ({r.name})" for r in failed)
        raise StructuralMismatch(f"failing criteria: {names}")


# ---------------------------------------------------------------------------
# parser


def _tol_pair(text: str):
    key, sep, value = text.partition("=")
    if not sep or key not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE with KEY in {sorted(DEFAULT_TOLERANCES)}")
    try:
        return key, float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tolerance value {value!r}") from exc


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--backend", choices=["rational", "float"], default=None,
                        help="number system (default: rational, or the backend of --input)")
    common.add_argument("--precision", type=int, default=None,
                        help=f"float precision in bits (default: $PENTALAB_PRECISION or {DEFAULT_PRECISION})")
    common.add_argument("--seed", type=_seed, default=0, help="64-bit unsigned seed")
    common.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="KEY=VALUE",
                        help="tolerance override; keys: " + ", ".join(sorted(DEFAULT_TOLERANCES)))
    common.add_argument("--out", default=".", help="output directory")

    poly = _Parser(add_help=False)
    poly.add_argument("--d", type=int, help="dimension of the projective space")
    poly.add_argument("--n", type=int, help="number of vertices per period")
    poly.add_argument("--input", help="polygon JSON written by `gen` or `map`")
    poly.add_argument("--spread", type=int, default=3, help="numerator/denominator range for random draws")

    kdv = _Parser(add_help=False)
    kdv.add_argument("--d", type=int, default=2, help="operator order minus one")
    kdv.add_argument("--N", type=int, default=32, help="grid size (even, >= 32)")
    kdv.add_argument("--amplitude", type=float, default=0.3, help="size of the random potentials")

    p = _Parser(prog="pentalab", description="Higher pentagram maps and their continuous limit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, parents, help_):
        sp = sub.add_parser(name, parents=[common] + parents, help=help_, description=help_)
        sp.set_defaults(fn=fn)
        return sp

    add("gen", cmd_gen, [poly], "generate a random twisted polygon")
    add("map", cmd_map, [poly], "apply the pentagram map once")
    add("orbit", cmd_orbit, [poly], "iterate the map with diagnostics").add_argument("--steps", type=int, default=10)
    add("spectral", cmd_spectral, [poly], "spectral polynomial of the Lax monodromy").add_argument(
        "--stated", action="store_true", help="use the single-block even-d Lax diagonal")
    add("conserve", cmd_conserve, [poly], "spectral drift along an orbit").add_argument(
        "--steps", type=int, default=10)
    sp = add("scaling-check", cmd_scaling_check, [], "scaling symmetry survey on random polygons")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--samples", type=int, default=10)
    sp.add_argument("--stated", action="store_true", help="use the single-block even-d rule")
    sp = add("closed-check", cmd_closed_check, [], "quadruple-point conditions for a random closed polygon")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--n", type=int, default=5)
    add("xcheck-monodromy", cmd_xcheck, [poly], "match Lax and scaled frame monodromy spectra").add_argument(
        "--s", default="1/2", help="scaling parameter (rational)")
    add("genus", cmd_genus, [poly], "interior lattice points of the Newton polygon")
    add("rank", cmd_rank, [poly], "Jacobian rank of the labeled integrals (d = 3)")
    sp = add("kdv-evolve", cmd_kdv_evolve, [kdv], "RK4 evolution of the (2, d+1)-KdV flow")
    sp.add_argument("--dt", type=float, default=None, help="time step (default: half the stability budget)")
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--store-every", type=int, default=10)
    sp = add("kdv-shift-check", cmd_kdv_shift, [kdv], "flow commutes with u_0 -> u_0 + c")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--steps", type=int, default=60)
    sp = add("climit", cmd_climit, [kdv], "continuous limit fit of the envelope map")
    sp.add_argument("--eps", default="0.08,0.04,0.02", help="comma-separated geometric progression")
    sp.set_defaults(N=64)
    add("verify", cmd_verify, [], "run the acceptance battery").add_argument(
        "--level", choices=["quick", "full"], default="quick")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = _resolved_config(args)
        args.fn(args, cfg)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StructuralMismatch as exc:
        print(f"structural mismatch: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except PentalabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
