"""Invariant suites run by ``heckelab verify``.

Each suite is a list of named cases.  A case returns (residual, ok); any
exception raised while computing it is recorded as a failed case, so a run
at too low a precision reports failures instead of crashing.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

from flint import acb, arb, ctx

from .arith import (
    CycElem,
    IdealK,
    PrimeContext,
    QuadElem,
    coprime,
    k_automorphisms,
    normalize_generator,
    recognize_cyclotomic,
    working_precision,
)
from .cm_curve import CMCurveCtx, wp_eval
from .eisenstein import cross_check_djk, eis
from .measures import (
    CharPair,
    FiniteMeasure,
    build_beta,
    fourier_all,
    gamma_direct,
    gamma_gauss,
    measure_from_fourier,
    trace_identity_refined_rhs,
    trace_identity_sides,
)

CaseFn = Callable[[], tuple[float | str, bool]]


@dataclass
class Case:
    suite: str
    case: str
    residual: str
    ok: bool
    seconds: float

    def line(self) -> str:
        flag = "PASS" if self.ok else "FAIL"
        return f"{flag}  {self.suite:<12} {self.case:<44} residual={self.residual}"

    def to_json(self) -> dict:
        return {"suite": self.suite, "case": self.case, "residual": self.residual, "ok": self.ok}


def _fmt(r) -> str:
    if isinstance(r, float):
        return f"{r:.3e}"
    return str(r)


def run_case(suite: str, name: str, fn: CaseFn, prec: int) -> Case:
    t0 = time.perf_counter()
    try:
        with working_precision(prec):
            res, ok = fn()
        return Case(suite, name, _fmt(res), bool(ok), time.perf_counter() - t0)
    except Exception as exc:  # reported, never raised
        return Case(suite, name, f"error:{type(exc).__name__}:{exc}", False, time.perf_counter() - t0)


def _rel(a: acb, b: acb) -> float:
    d = abs(a - b).mid()
    s = abs(b).mid()
    return float(d / s) if s > 0 else float(d)


def random_cyc(rng: random.Random, order: int, height: int = 5, den: int = 4) -> CycElem:
    return CycElem.from_dense(order, [rng.randint(-height, height) for _ in range(order)], rng.randint(1, den))


def _dyadic(x: arb) -> Fraction:
    man, exp = x.man_exp()
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def ball_holds(b: arb, exact: Fraction) -> bool:
    """Exact test of |exact - mid(b)| <= rad(b)."""
    return abs(exact - _dyadic(b.mid())) <= _dyadic(b.rad())


def random_measure(rng: random.Random, q: int, level: tuple[int, int], order: int = 4, density: float = 0.5) -> FiniteMeasure:
    A, B = q ** level[0], q ** level[1]
    vals = {}
    for a in range(A):
        for b in range(B):
            if rng.random() < density:
                vals[(a, b)] = random_cyc(rng, order, 3, 2)
    return FiniteMeasure(q, level, vals)


# ---------------------------------------------------------------------------


def arith_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    def inclusion():
        bad = 0
        for _ in range(2000):
            a = Fraction(rng.randint(-10**6, 10**6), rng.randint(1, 10**4))
            b = Fraction(rng.randint(-10**6, 10**6) or 1, rng.randint(1, 10**4))
            ba, bb = arb(a.numerator) / a.denominator, arb(b.numerator) / b.denominator
            for exact, approx in ((a + b, ba + bb), (a - b, ba - bb), (a * b, ba * bb), (a / b, ba / bb)):
                bad += not ball_holds(approx, exact)
        return bad, bad == 0

    def phi_mult():
        f = cctx.f
        bad = 0
        done = 0
        while done < 100:
            b1 = QuadElem(rng.randint(-30, 30), rng.randint(-30, 30), cctx.disc)
            b2 = QuadElem(rng.randint(-30, 30), rng.randint(-30, 30), cctx.disc)
            if b1.is_zero() or b2.is_zero():
                continue
            I1, I2 = IdealK(b1), IdealK(b2)
            if not (coprime(I1, f) and coprime(I2, f)):
                continue
            done += 1
            bad += normalize_generator(I1 * I2, f) != normalize_generator(I1, f) * normalize_generator(I2, f)
        return bad, bad == 0

    def val_additive():
        pctx = PrimeContext(cctx.p, cctx.disc)
        bad = 0
        for _ in range(200):
            order = rng.choice([4, 20, 12])
            x, y = random_cyc(rng, order, 40), random_cyc(rng, order, 40)
            if x.is_zero() or y.is_zero():
                continue
            vx, vy = pctx.val_cyc(x), pctx.val_cyc(y)
            bad += pctx.val_cyc(x * y) != vx + vy
            if not (x + y).is_zero():
                bad += pctx.val_cyc(x + y) < min(vx, vy)
        return bad, bad == 0

    def recognize_roundtrip():
        bad = 0
        for _ in range(100):
            order = rng.choice([5, 8, 12, 20])
            x = random_cyc(rng, order, 50, 30)
            conj = {t: x.galois(t).embed() for t in range(1, order + 1) if math.gcd(t, order) == 1}
            y = recognize_cyclotomic(x.embed(), order, 1000, conjugates=conj)
            bad += y != x
        return bad, bad == 0

    yield "ball inclusion (8000 ops)", inclusion
    yield "phi multiplicative (100 pairs)", phi_mult
    yield "valuation additive/ultrametric", val_additive
    yield "recognize after embed (100)", recognize_roundtrip


def measures_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    q = cctx.q

    def gamma_oracles():
        bad = 0
        for level in ((1, 1), (1, 2), (2, 1)):
            for _ in range(3):
                alpha = random_measure(rng, q, level)
                for chi in CharPair.all(q, level):
                    bad += gamma_direct(alpha, chi) != gamma_gauss(alpha, chi)
        return bad, bad == 0

    def roundtrip():
        bad = 0
        for _ in range(5):
            alpha = random_measure(rng, q, (2, 1))
            bad += measure_from_fourier(q, (2, 1), fourier_all(alpha)) != alpha
            F = {(u, v): random_cyc(rng, 5, 3) for u in range(25) for v in range(5)}
            back = fourier_all(measure_from_fourier(q, (2, 1), F))
            bad += sum(back[key] != F[key] for key in F)
        return bad, bad == 0

    def trace():
        # beta on (1+qZ_q)^2 at level (2,2); kappa primitive wild at (2,2)
        bad = 0
        cells = [(a, b) for a in range(1, 25, 5) for b in range(1, 25, 5)]
        beta = FiniteMeasure(q, (2, 2), {c: random_cyc(rng, 4, 3) for c in cells})
        wild = [chi for chi in CharPair.all_wild(q, (2, 2)) if chi.is_primitive()]
        for chi in wild[:8]:
            for y in ((1, 1), (6, 11)):
                lhs, rhs = trace_identity_sides(beta, chi, y)
                bad += lhs != rhs
                bad += lhs != trace_identity_refined_rhs(beta, chi, y)
        return bad, bad == 0

    def beta_fold():
        # a mu_K^2-invariant unit-supported measure folds without error
        from .measures import symmetrize, restrict, units_predicate

        alpha = symmetrize(restrict(random_measure(rng, q, (1, 1)), units_predicate(q, (1, 1))), cctx.w_K)
        beta = build_beta(alpha, cctx.w_K)
        ok = all(a % q == 1 and b % q == 1 for a, b in beta.values)
        return 0 if ok else 1, ok

    def equivariance():
        from .efm import Factor, RatFnProduct, measure_of_ratfn

        R = RatFnProduct(cctx, factors=(Factor(Fraction(0), -2),), label="1/x^2")
        alpha = measure_of_ratfn(cctx, R, (1, 1))
        bad = 0
        for chi in CharPair.all(q, (1, 1)):
            G = gamma_direct(alpha, chi)
            for t in k_automorphisms(cctx.disc, math.lcm(G.order, 4 * q)):
                ct = chi.power(t)
                bad += G.galois(t) != ct(1, pow(t, -1, q)) * gamma_direct(alpha, ct)
        F = fourier_all(alpha)
        for (u, v), val in F.items():
            for t in k_automorphisms(cctx.disc, 4 * q):
                bad += val.galois(t) != F[((u * t) % q, v)]
        return bad, bad == 0

    yield "gamma_direct = gamma_gauss", gamma_oracles
    yield "fourier round trips", roundtrip
    yield "trace identity, primitive wild kappa", trace
    yield "beta supported on (1+qZ)^2", beta_fold
    yield "Galois equivariance of Gamma", equivariance


def cm_curve_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    def homogeneity():
        L = cctx.lattice()
        worst = 0.0
        ok = True
        for lam in (acb(0, 1), acb(1, 1)):
            for _ in range(3):
                z = acb(rng.random(), rng.random()) * cctx.omega()
                lhs = wp_eval(lam * z, L.scale(lam))[0]
                rhs = wp_eval(z, L)[0] / lam**2
                ok &= lhs.overlaps(rhs) and _rel(lhs, rhs) < 1e-30
                worst = max(worst, _rel(lhs, rhs))
        return worst, ok

    def delta_diagonal():
        bad = 0
        for n in (1, 2):
            P1, P2 = cctx.eigen_generators(n)
            for _ in range(5):
                mu = QuadElem(rng.randint(-50, 50), rng.randint(-50, 50), cctx.disc)
                if math.gcd(mu.norm(), cctx.q) != 1:
                    continue
                r = cctx.residue_pair(mu, n)
                bad += cctx.endo_act(mu, P1) != P1 * r[0]
                bad += cctx.endo_act(mu, P2) != P2 * r[1]
        return bad, bad == 0

    def weierstrass():
        bad = 0
        worst = 0.0
        for P in cctx.torsion_points(cctx.q):
            if P.is_zero():
                continue
            x, y = cctx.xy(P)
            res = cctx.weierstrass_residual(x, y)
            bad += not res.contains(0)
            worst = max(worst, float(abs(res).mid()))
        return worst, bad == 0

    yield "wp homogeneity lambda in {i, 1+i}", homogeneity
    yield "endomorphisms diagonal on eigenbasis", delta_diagonal
    yield "Weierstrass residual on E[q]", weierstrass


def eisenstein_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    L = cctx.lattice()
    om = cctx.omega()

    def point():
        return acb(0.05 + 0.9 * rng.random(), 0.05 + 0.9 * rng.random()) * om

    def unit_symmetry():
        ok = True
        worst = 0.0
        for j, k in ((0, 3), (-1, 4), (0, 5), (-2, 5)):
            z = point()
            base = eis(j, k, z, L)
            for u in (acb(0, 1), acb(-1), acb(0, -1)):
                lhs = eis(j, k, u * z, L)
                rhs = (u.conjugate() ** (-j)) * u ** (-k) * base
                ok &= lhs.overlaps(rhs)
                worst = max(worst, _rel(lhs, rhs))
        return worst, ok

    def conjugation():
        ok = True
        worst = 0.0
        for j, k in ((0, 3), (-1, 4), (-1, 5)):
            z = point()
            lhs = eis(j, k, z, L).conjugate()
            rhs = eis(j, k, z.conjugate(), L)
            ok &= lhs.overlaps(rhs)
            worst = max(worst, _rel(lhs, rhs))
        return worst, ok

    def coset_sum():
        a = IdealK(QuadElem(2, 1, cctx.disc))
        alpha = a.gen.to_acb()
        La = L.scale(1 / alpha)
        ok = True
        worst = 0.0
        for j, k in ((0, 4), (-1, 4)):
            z = point()
            lhs = eis(j, k, z, La)
            total = acb(0)
            for r in a.residues():
                total += eis(j, k, z + om * r.to_acb() / alpha, L)
            rhs = total * arb(a.norm()) ** (-j)
            ok &= lhs.overlaps(rhs)
            worst = max(worst, _rel(lhs, rhs))
        return worst, ok

    def djk():
        a = IdealK(QuadElem(2, 1, cctx.disc))
        b = IdealK(QuadElem(1, 0, cctx.disc))
        worst = 0.0
        ok = True
        for k in (3, 4, 5):
            for _ in range(3):
                r = cross_check_djk(cctx, b, a, point(), 0, k)
                ok &= r.contains(0) and float(abs(r).rad()) < 1e-20
                worst = max(worst, float(abs(r).mid() + abs(r).rad()))
        return worst, ok

    yield "unit symmetry of E_{j,k}", unit_symmetry
    yield "conjugation of E_{j,k}", conjugation
    yield "coset sum over a^-1 L / L", coset_sum
    yield "D_{j,k} gamma + smoothed E = 0", djk


def efm_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    from .efm import ThetaPsiSpec, choose_V, choose_auxiliary, distribution_residual, gamma_fn, ord_pi_ratfn, theta_psi_build

    def distribution():
        a = IdealK(QuadElem(2, 1, cctx.disc))
        G = gamma_fn(cctx, IdealK(QuadElem(1, 0, cctx.disc)), a)
        worst = 0.0
        for beta in (QuadElem(1, 1, cctx.disc), QuadElem(2, 0, cctx.disc)):
            z = acb(0.1 + 0.8 * rng.random(), 0.1 + 0.8 * rng.random()) * cctx.omega()
            r = distribution_residual(G, beta, z)
            # distance to the nearest 24th root of unity
            d = min((abs(r - acb(arb(2 * e) / 24).exp_pi_i()) for e in range(24)), key=lambda b: float(b.mid()))
            worst = max(worst, float(d.mid() + d.rad()))
        return worst, worst < 1e-20

    def theta_level1():
        a = choose_auxiliary(cctx, cctx.conductor)
        V = choose_V(cctx, cctx.conductor)
        T = theta_psi_build(cctx, ThetaPsiSpec(a, V, 0, 5, cctx.conductor))
        rep = ord_pi_ratfn(T, cctx, levels=(1,), prec=max(768, ctx.prec))
        return str(rep.value), rep.value == 0 and rep.attained_fraction >= 0.9

    yield "gamma distribution relation", distribution
    yield "ord of theta at level 1", theta_level1


def lvalues_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    from .lvalues import HeckeCharSpec, class_table, l_via_eisenstein, partial_l_direct, reinstated_euler_factors

    def dual_route():
        worst = 0.0
        ok = True
        for k, j in ((4, 0), (5, 0), (4, -1), (5, -1)):
            spec = HeckeCharSpec(cctx, k, j)
            xs = list(class_table(spec))
            for x in rng.sample(xs, 2):
                d = partial_l_direct(spec, x, 20000)
                e = l_via_eisenstein(spec, x)
                ok &= d.overlaps(e)
                worst = max(worst, _rel(d, e))
        return worst, ok

    def euler_units():
        pctx = PrimeContext(cctx.p, cctx.disc)
        bad = 0
        spec = HeckeCharSpec(cctx, 5, 0, (1, 1))
        chars = CharPair.all(cctx.q, spec.char_level)
        for chi in rng.sample(chars, 20):
            for ef in reinstated_euler_factors(spec.with_kappa(chi)):
                bad += pctx.val_cyc(ef.factor()) != 0
        return bad, bad == 0

    def class_action():
        # sigma_t Y(kappa)^o = Y(kappa^t)^o is what recognition relies on;
        # a successful recognition with re-embedding at every t certifies it
        from .lvalues import integral_class_values, ord_p_orbit_norm, resolvent

        pctx = PrimeContext(cctx.p, cctx.disc)
        spec = HeckeCharSpec(cctx, 5, 0)
        vals = integral_class_values(spec)
        chars = CharPair.all(cctx.q, spec.char_level)
        done = 0
        for chi in rng.sample(chars, 3):
            ord_p_orbit_norm(lambda c: resolvent(c, vals), chi, pctx)
            done += 1
        return done, done == 3

    yield "direct sum vs Eisenstein", dual_route
    yield "reinstated Euler factors are units", euler_units
    yield "Galois permutation of class values", class_action


def density_cases(cctx: CMCurveCtx, rng: random.Random) -> Iterator[tuple[str, CaseFn]]:
    from .density import EtaTuple, ReducedRatFn, dioph_approx, independence_test, verify_approx, xi_set

    def xi_sizes():
        bad = 0
        for q in (3, 5, 7):
            for P in (1 + q, 1 + 2 * q, 1 + q * q):
                for n in (2, 3):
                    try:
                        X = xi_set(q, P, n)
                    except Exception:
                        continue
                    bad += len(X.elements) != q ** (2 * (n - X.v))
        return bad, bad == 0

    def dioph():
        bad = 0
        for _ in range(20):
            betas = [EtaTuple(cctx.q, 10, (rng.randrange(cctx.q**10), rng.randrange(cctx.q**10))) for _ in range(3)]
            bad += not verify_approx(cctx, betas, Fraction(1), dioph_approx(cctx, betas, 1))
        return bad, bad == 0

    def independence():
        cur = cctx.reduce_curve(13, 1)
        e1 = EtaTuple(cctx.q, 1, (1, 1))
        e2 = EtaTuple(cctx.q, 1, (2, 3))
        v1 = independence_test(cur, [e1, e2], [ReducedRatFn.x(), ReducedRatFn.y()])
        v2 = independence_test(cur, [e2, e1], [ReducedRatFn.y(), ReducedRatFn.x()])
        same = v1.verdict == v2.verdict
        return v1.verdict, same

    yield "xi_set cardinality", xi_sizes
    yield "dioph_approx postconditions", dioph
    yield "independence order-independent", independence


SUITES: dict[str, Callable] = {
    "arith": arith_cases,
    "measures": measures_cases,
    "cm_curve": cm_curve_cases,
    "eisenstein": eisenstein_cases,
    "efm": efm_cases,
    "lvalues": lvalues_cases,
    "density": density_cases,
}


def run_suites(cctx: CMCurveCtx, prec: int, names: list[str] | None = None, seed: int = 0) -> list[Case]:
    out = []
    for name in names or list(SUITES):
        rng = random.Random(f"{name}:{seed}")
        try:
            # setup may build lattices, which must exist at the run precision
            with working_precision(prec):
                cases = list(SUITES[name](cctx, rng))
        except Exception as exc:
            out.append(Case(name, "setup", f"error:{type(exc).__name__}:{exc}", False, 0.0))
            continue
        for case, fn in cases:
            out.append(run_case(name, case, fn, prec))
    return out
