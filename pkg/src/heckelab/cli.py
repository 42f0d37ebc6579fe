"""Batch front end: ``heckelab {verify,lvalue,scan,density,gamma}``.

Configuration is a flat ``key = value`` text file; command-line flags
override it.  Every JSON document carries ``"schema": "1"`` and is written
with sorted keys so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .arith import HeckeLabError, PrimeContext, QuadElem, split_prime_root, working_precision
from .cm_curve import CMCurveCtx, ConfigError

SCHEMA = "1"
SUPPORTED_DISCS = (-4, -8, -3, -7, -11, -19, -43, -67, -163)
ROUTES = {"direct": ("direct",), "gamma": ("gamma",), "both": ("direct", "gamma")}


@dataclass(frozen=True)
class RunConfig:
    disc: int = -4
    g2: Fraction = Fraction(4)
    g3: Fraction = Fraction(0)
    omega_hint: float | None = None
    conductor: tuple[int, int] = (2, 2)
    q: int = 5
    p: int = 13
    k: int = 5
    j: int = 0
    levels: tuple[tuple[int, int], ...] = ((0, 0),)
    prec: int = 768
    route: str = "both"
    out: str = "out"
    threads: int = 1
    delta_twist: tuple[int, int] = (1, 1)
    kappa: tuple[int, int] = (0, 0)
    den_bound: int = 10**8
    cross_check_bound: int = 20000
    density_n: int = 10
    density_P: int = 0
    density_ell: int = 0
    density_trials: int = 100
    seed: int = 0
    measure: str = "x^-2"

    @property
    def level(self) -> tuple[int, int]:
        return self.levels[0]

    @property
    def routes(self) -> tuple[str, ...]:
        return ROUTES[self.route]

    def validate(self) -> "RunConfig":
        """Reject configurations outside the hypotheses, before any computation."""
        if self.disc not in SUPPORTED_DISCS:
            raise ConfigError(f"disc {self.disc}: only class number one fields {SUPPORTED_DISCS} are supported")
        if self.q < 5:
            raise ConfigError(f"q = {self.q}: need q >= 5")
        if self.p == self.q:
            raise ConfigError(f"p = q = {self.p}: the two primes must differ")
        for name, ell in (("q", self.q), ("p", self.p)):
            if ell < 2 or any(ell % d == 0 for d in range(2, math.isqrt(ell) + 1)):
                raise ConfigError(f"{name} = {ell} is not prime")
            try:
                split_prime_root(ell, self.disc)
            except HeckeLabError:
                raise ConfigError(f"{name} = {ell} does not split in K (disc {self.disc})") from None
        nf = QuadElem(*self.conductor, self.disc).norm()
        if nf == 0:
            raise ConfigError("conductor must be nonzero")
        if math.gcd(self.p, 6 * nf * self.q) != 1:
            raise ConfigError(f"gcd(p, 6 N(f) q) = gcd({self.p}, {6 * nf * self.q}) != 1")
        if not (0 <= -self.j < self.k):
            raise ConfigError(f"(k, j) = ({self.k}, {self.j}): need 0 <= -j < k")
        if self.k + self.j < 3:
            raise ConfigError(f"(k, j) = ({self.k}, {self.j}): need k + j >= 3")
        if not self.levels or any(m < 0 or n < 0 for m, n in self.levels):
            raise ConfigError("levels must be pairs of nonnegative integers")
        if self.route not in ROUTES:
            raise ConfigError(f"route {self.route!r}: choose direct, gamma or both")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.prec < 2:
            raise ConfigError("prec must be at least 2 bits")
        return self

    def curve(self) -> CMCurveCtx:
        return CMCurveCtx(
            disc=self.disc,
            g2=self.g2,
            g3=self.g3,
            conductor=QuadElem(*self.conductor, self.disc),
            q=self.q,
            p=self.p,
            omega_hint=self.omega_hint,
            delta_twist=self.delta_twist,
        )

    def to_json(self) -> dict:
        # out and threads do not change any result, so they stay out of reports
        d = {k: v for k, v in asdict(self).items() if k not in ("out", "threads")}
        d["g2"], d["g3"] = str(self.g2), str(self.g3)
        d["levels"] = [list(x) for x in self.levels]
        return d


def _pair(s: str) -> tuple[int, int]:
    a, b = (int(t) for t in s.replace("(", "").replace(")", "").split(","))
    return a, b


_PARSERS = {
    "disc": int,
    "g2": Fraction,
    "g3": Fraction,
    "omega_hint": float,
    "conductor": _pair,
    "q": int,
    "p": int,
    "k": int,
    "j": int,
    "level": lambda s: tuple(_pair(t) for t in s.split(";") if t.strip()),
    "levels": lambda s: tuple(_pair(t) for t in s.split(";") if t.strip()),
    "prec": int,
    "route": str,
    "out": str,
    "threads": int,
    "delta_twist": _pair,
    "kappa": _pair,
    "den_bound": lambda s: int(float(s)) if "e" in s.lower() else int(s),
    "cross_check_bound": lambda s: int(float(s)),
    "density_n": int,
    "density_P": int,
    "density_ell": int,
    "density_trials": int,
    "seed": int,
    "measure": str,
}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            parsed = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        out["levels" if key == "level" else key] = parsed
    return out


def load_config(path: str | None, overrides: dict) -> RunConfig:
    fields = {}
    if path:
        fields.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**fields).validate()


# ---------------------------------------------------------------------------
# output


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_out(cfg: RunConfig, name: str, text: str) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    path = d / name
    path.write_text(text, encoding="utf-8")
    return path


def _frac(x) -> list[int] | None:
    if x is None:
        return None
    x = Fraction(x)
    return [x.numerator, x.denominator]


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(cfg: RunConfig, suites: list[str] | None = None) -> int:
    from .suites import run_suites

    cases = run_suites(cfg.curve(), cfg.prec, suites, cfg.seed)
    for c in cases:
        print(c.line())
    failed = [c for c in cases if not c.ok]
    report = {
        "schema": SCHEMA,
        "prec": cfg.prec,
        "cases": [c.to_json() for c in cases],
        "failed": len(failed),
        "passed": len(cases) - len(failed),
    }
    write_out(cfg, "verify.json", dump_json(report))
    print(f"{len(cases) - len(failed)}/{len(cases)} cases passed")
    return 1 if failed else 0


def lvalue_record(cfg: RunConfig, kappa: tuple[int, int]) -> dict:
    from .efm import choose_V, choose_auxiliary
    from .lvalues import (
        HeckeCharSpec,
        alg_l_value,
        alg_l_value_gamma,
        integral_class_values,
        theta_class_values,
    )
    from .measures import CharPair

    cctx = cfg.curve()
    base = HeckeCharSpec(cctx, cfg.k, cfg.j, cfg.level)
    orders = CharPair(cctx.q, base.char_level, (0, 0)).group_orders
    if not all(0 <= e < o for e, o in zip(kappa, orders)):
        raise ConfigError(f"kappa index {kappa} out of range for character group orders {orders}")
    spec = base.with_kappa(kappa)
    pctx = PrimeContext(cctx.p, cctx.disc)
    routes = {}
    with working_precision(cfg.prec):
        if "direct" in cfg.routes:
            try:
                av = alg_l_value(spec, integral_class_values(base), pctx, cfg.den_bound)
                routes["direct"] = {"status": "ok", **av.to_json()}
            except HeckeLabError as exc:
                routes["direct"] = {"status": f"error:{type(exc).__name__}", "message": str(exc)}
        if "gamma" in cfg.routes:
            if cfg.j != 0:
                routes["gamma"] = {"status": "unavailable", "reason": "the theta route needs j = 0"}
            else:
                try:
                    a = choose_auxiliary(cctx, cctx.conductor)
                    V = choose_V(cctx, cctx.conductor)
                    th = theta_class_values(base, a, V, cfg.prec, cfg.threads)
                    av = alg_l_value_gamma(spec, th, a, V, pctx, cfg.den_bound)
                    routes["gamma"] = {"status": "ok", **av.to_json()}
                except HeckeLabError as exc:
                    routes["gamma"] = {"status": f"error:{type(exc).__name__}", "message": str(exc)}
    return {
        "schema": SCHEMA,
        "level": list(cfg.level),
        "kappa": list(spec.kappa.exps),
        "k": cfg.k,
        "j": cfg.j,
        "routes": routes,
    }


def cmd_lvalue(cfg: RunConfig, kappa: tuple[int, int]) -> int:
    rec = lvalue_record(cfg, kappa)
    write_out(cfg, "lvalue.json", dump_json(rec))
    for name, r in sorted(rec["routes"].items()):
        print(f"{name:<7} {r['status']:<12} val_p={r.get('val_p')}")
    return 0 if all(r["status"] in ("ok", "unavailable") for r in rec["routes"].values()) else 1


def scan_csv(rows) -> str:
    from .lvalues import CSV_HEADER

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def cmd_scan(cfg: RunConfig) -> int:
    from .lvalues import theorem_scan

    res = theorem_scan(
        cfg.curve(),
        cfg.k,
        cfg.j,
        list(cfg.levels),
        routes=cfg.routes,
        prec=cfg.prec,
        threads=cfg.threads,
        cross_check_bound=cfg.cross_check_bound,
        den_bound=cfg.den_bound,
    )
    write_out(cfg, "scan.csv", scan_csv(res.rows))
    summary = {
        "schema": SCHEMA,
        "C_observed": _frac(res.C_observed),
        "exceptions": res.exceptions,
        "hypothesis_report": res.hypothesis_report,
        "route_agreement": res.route_agreement,
        "cross_validation": res.cross_validation,
        "rows": len(res.rows),
        "levels": [list(x) for x in cfg.levels],
        "config": cfg.to_json(),
    }
    write_out(cfg, "scan.json", dump_json(summary))
    errors = sum(1 for r in res.rows if r.status.startswith("error"))
    print(f"rows={len(res.rows)} errors={errors} C_observed={res.C_observed} exceptions={len(res.exceptions)} routes_agree={res.route_agreement}")
    return 0 if errors == 0 else 1


def density_report(cfg: RunConfig) -> dict:
    from .density import EtaTuple, ReducedRatFn, dioph_approx, independence_test, verify_approx, xi_set

    cctx = cfg.curve()
    q = cfg.q
    P = cfg.density_P or q + 1
    xi = []
    for n in range(1, 4):
        try:
            X = xi_set(q, P, n)
            xi.append({"n": n, "size": len(X.elements), "expected": X.expected_size(), "v": X.v})
        except HeckeLabError as exc:
            xi.append({"n": n, "error": f"{type(exc).__name__}: {exc}"})
    rng = random.Random(cfg.seed)
    n = cfg.density_n
    ok = 0
    for _ in range(cfg.density_trials):
        betas = [EtaTuple(q, n, (rng.randrange(q**n), rng.randrange(q**n))) for _ in range(3)]
        ok += verify_approx(cctx, betas, Fraction(1), dioph_approx(cctx, betas, 1, seed=cfg.seed))
    ell = cfg.density_ell or cfg.p
    cur = cctx.reduce_curve(ell, 1)
    e1 = EtaTuple(q, 1, (1, 1))
    e2 = EtaTuple(q, 1, (2, 3))
    ei = EtaTuple.from_quad(cctx, QuadElem(0, 1, cctx.disc), 1)
    examples = {
        "x": independence_test(cur, [e1], [ReducedRatFn.x()]),
        "constants 3, -3": independence_test(cur, [e1, e2], [ReducedRatFn.constant(3), ReducedRatFn.constant(-3)]),
        "x, x along a unit": independence_test(cur, [e1, ei], [ReducedRatFn.x(), ReducedRatFn.x()]),
    }
    return {
        "schema": SCHEMA,
        "xi_sets": xi,
        "dioph": {"n": n, "trials": cfg.density_trials, "verified": ok},
        "independence": {name: v.to_json() for name, v in examples.items()},
    }


def cmd_density(cfg: RunConfig) -> int:
    rep = density_report(cfg)
    write_out(cfg, "density.json", dump_json(rep))
    print(f"dioph verified {rep['dioph']['verified']}/{rep['dioph']['trials']}")
    for name, v in rep["independence"].items():
        print(f"{name:<20} {v['verdict']} witness={v['witness']}")
    return 0 if rep["dioph"]["verified"] == rep["dioph"]["trials"] else 1


def gamma_report(cfg: RunConfig) -> dict:
    """Gamma transforms of the measure attached to a rational function, by both oracles."""
    from .efm import Factor, RatFnProduct, ThetaPsiSpec, choose_V, choose_auxiliary, measure_of_ratfn, theta_psi_build
    from .measures import CharPair, gamma_direct, gamma_gauss

    cctx = cfg.curve()
    level = cfg.level
    pctx = PrimeContext(cctx.p, cctx.disc)
    with working_precision(cfg.prec):
        if cfg.measure == "x^-2":
            R = RatFnProduct(cctx, factors=(Factor(Fraction(0), -2),), label="1/x^2")
        elif cfg.measure == "theta":
            a = choose_auxiliary(cctx, cctx.conductor)
            R = theta_psi_build(cctx, ThetaPsiSpec(a, choose_V(cctx, cctx.conductor), 0, cfg.k, cctx.conductor))
        else:
            raise ConfigError(f"measure {cfg.measure!r}: choose x^-2 or theta")
        alpha = measure_of_ratfn(cctx, R, level)
    rows = []
    for chi in CharPair.all(cctx.q, level):
        g1 = gamma_direct(alpha, chi)
        g2 = gamma_gauss(alpha, chi)
        v = pctx.val_cyc(g1)
        rows.append(
            {
                "kappa": list(chi.exps),
                "gamma": g1.to_json(),
                "oracles_agree": g1 == g2,
                "ord_p": None if v == math.inf else _frac(v),
            }
        )
    return {"schema": SCHEMA, "measure": cfg.measure, "level": list(level), "characters": rows}


def cmd_gamma(cfg: RunConfig) -> int:
    rep = gamma_report(cfg)
    write_out(cfg, "gamma.json", dump_json(rep))
    bad = sum(1 for r in rep["characters"] if not r["oracles_agree"])
    print(f"characters={len(rep['characters'])} oracle mismatches={bad}")
    return 0 if bad == 0 else 1


# ---------------------------------------------------------------------------


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int)
    common.add_argument("--prec", type=int, help="working precision in bits")
    common.add_argument("--route", choices=sorted(ROUTES))
    parser = argparse.ArgumentParser(prog="heckelab", description="p-adic valuations of Hecke L-values, desk scale")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    v.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    lv = sub.add_parser("lvalue", parents=[common], help="one algebraic L-value by each route")
    lv.add_argument("--kappa", type=_pair, help="character exponents i1,i2")
    sub.add_parser("scan", parents=[common], help="ord_p over all characters at the configured levels")
    sub.add_parser("density", parents=[common], help="Xi sets, approximation and independence verdicts")
    sub.add_parser("gamma", parents=[common], help="Gamma transforms of a rational-function measure")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    overrides = {"out": args.out, "threads": args.threads, "prec": args.prec, "route": args.route}
    if args.command == "verify" and args.prec is None:
        overrides["prec"] = 256
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.command == "verify":
            code = cmd_verify(cfg, args.suite)
        elif args.command == "lvalue":
            code = cmd_lvalue(cfg, args.kappa or cfg.kappa)
        elif args.command == "scan":
            code = cmd_scan(cfg)
        elif args.command == "density":
            code = cmd_density(cfg)
        else:
            code = cmd_gamma(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HeckeLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"[{args.command}] {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
