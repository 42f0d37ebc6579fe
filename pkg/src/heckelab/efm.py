"""Structured rational functions on the CM curve and the measures they induce.

A RatFnProduct is either a product
    constant * prod_i (x(lambda_i (P + T_i)) - x(Q_i))^e_i
or a formal sum of D_{j,k}-images sum_t c_t * D_{j,k}(base_t)(lambda_t (T_t + P)).
Evaluation is numeric (balls); exact values come from cyclotomic recognition
with a conjugate family produced by the CM Galois action on torsion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from flint import acb, acb_series, arb, ctx

from .arith import (
    CycElem,
    HeckeLabError,
    IdealK,
    PrimeContext,
    QuadElem,
    RecognitionFailed,
    gcd_norm,
    k_automorphisms,
    prime_above,
    recognize_over_k,
    vp_fraction,
    working_precision,
)
from .cm_curve import INFINITY, CMCurveCtx, PoleAtLatticePoint, TorsionPoint, wp_eval, wp_taylor
from .eisenstein import EisParams, djk_via_log_derivative, eis_jk_smoothed
from .measures import FiniteMeasure, measure_from_fourier


class PoleOnTorsion(HeckeLabError):
    pass


class BadAuxiliaryIdeal(HeckeLabError):
    pass


class NormalizationInconsistent(HeckeLabError):
    pass


class NotStabilized(HeckeLabError):
    pass


class HypothesisViolation(HeckeLabError):
    pass


ONE = QuadElem(1, 0, -4)


@dataclass(frozen=True)
class Factor:
    """(x(mult * (P + shift)) - x(root))^exp; a Fraction root is a constant x-value."""

    root: TorsionPoint | Fraction
    exp: int
    shift: TorsionPoint = INFINITY
    mult: QuadElem | None = None


@dataclass(frozen=True, eq=False)
class DjkTerm:
    coeff: acb
    j: int
    k: int
    base: "RatFnProduct"
    shift: TorsionPoint = INFINITY
    mult: QuadElem | None = None


@dataclass(frozen=True, eq=False)
class RatFnProduct:
    cctx: CMCurveCtx
    factors: tuple[Factor, ...] = ()
    constant: acb | None = None
    djk_terms: tuple[DjkTerm, ...] = ()
    aux: IdealK | None = None
    label: str = ""

    @property
    def is_formal_sum(self) -> bool:
        return bool(self.djk_terms)

    def degree(self) -> int:
        """Degree as a map to P^1 of the product form (x has degree 2)."""
        pos = sum(2 * f.exp * _mult_norm(f.mult) for f in self.factors if f.exp > 0)
        neg = sum(-2 * f.exp * _mult_norm(f.mult) for f in self.factors if f.exp < 0)
        return max(pos, neg)

    def divisor_check(self) -> bool:
        """Zeros and poles balance: each factor contributes as many zeros as poles."""
        return all(isinstance(f.root, (TorsionPoint, Fraction)) for f in self.factors)

    # -- evaluation ----------------------------------------------------------
    def _arg(self, shift: TorsionPoint, mult: QuadElem | None, P) -> TorsionPoint | acb:
        cc = self.cctx
        if isinstance(P, TorsionPoint):
            Q = P + shift
            return cc.endo_act(mult, Q) if mult is not None else Q
        z = P + (cc.z_of(shift) if not shift.is_zero() else acb(0))
        return mult.to_acb() * z if mult is not None else z

    def _root_x(self, root) -> acb:
        if isinstance(root, Fraction):
            return acb(root.numerator) / root.denominator
        return self.cctx.xy(root)[0]

    def evaluate(self, P: TorsionPoint | acb) -> acb:
        if self.is_formal_sum:
            return sum((t.coeff * t.base.djk(self._arg(t.shift, t.mult, P), t.j, t.k) for t in self.djk_terms), acb(0))
        order_here = 0
        val = acb(1) if self.constant is None else self.constant
        L = self.cctx.lattice()
        for f in self.factors:
            A = self._arg(f.shift, f.mult, P)
            if isinstance(A, TorsionPoint):
                if A.is_zero():
                    order_here -= 2 * f.exp
                    continue
                if isinstance(f.root, TorsionPoint) and (A == f.root or A == -f.root):
                    mult = 2 if (A == f.root and A == -f.root) else 1
                    order_here += mult * f.exp
                    continue
                x = self.cctx.xy(A)[0]
            else:
                x = wp_eval(A, L)[0]
            diff = x - self._root_x(f.root)
            if diff.contains(0):
                raise PoleOnTorsion("factor vanishes (or is unresolved) at this point")
            val *= diff ** f.exp
        if order_here > 0:
            return acb(0)
        if order_here < 0:
            raise PoleOnTorsion("pole at this point")
        return val

    __call__ = evaluate

    def log_taylor(self, z: acb, order: int) -> list[acb]:
        """Taylor coefficients of log R(z + h) in h, up to h^order (constant term dropped)."""
        if self.is_formal_sum:
            raise TypeError("log_taylor needs the product form")
        L = self.cctx.lattice()
        g2, _ = self.cctx.invariants()
        total = [acb(0)] * (order + 1)
        for f in self.factors:
            lam = f.mult.to_acb() if f.mult is not None else acb(1)
            w = lam * (z + (self.cctx.z_of(f.shift) if not f.shift.is_zero() else acb(0)))
            coeffs = wp_taylor(w, L, order, g2)
            coeffs = [c * lam**n for n, c in enumerate(coeffs)]
            coeffs[0] = coeffs[0] - self._root_x(f.root)
            if coeffs[0].contains(0):
                raise PoleOnTorsion("log-derivative taken at a zero or pole")
            lg = acb_series(coeffs, order + 1).log().coeffs()
            lg += [acb(0)] * (order + 1 - len(lg))
            for n in range(1, order + 1):
                total[n] += f.exp * lg[n]
        return total

    def djk(self, z: acb | TorsionPoint, j: int, k: int) -> acb:
        """D_{j,k} of this function at z: (-d/dz)^k log R for j = 0; Eisenstein side for j < 0."""
        if isinstance(z, TorsionPoint):
            z = self.cctx.z_of(z)
        if j == 0:
            return djk_via_log_derivative(self, z, k)
        if self.aux is None:
            raise TypeError("D_{j,k} with j < 0 is available for the zeta/gamma functions only")
        return -eis_jk_smoothed(EisParams(j, k, z, self.cctx.lattice()), self.aux)


def _mult_norm(m: QuadElem | None) -> int:
    return 1 if m is None else m.norm()


# ---------------------------------------------------------------------------
# zeta_{b,a} and gamma_{b,a}


def torsion_of(cctx: CMCurveCtx, alpha: QuadElem) -> list[TorsionPoint]:
    """The points Omega * rho / alpha, rho running over O / (alpha)."""
    N = alpha.norm()
    ac = alpha.conj()
    return [cctx.point_from_quad(rho * ac, N) for rho in IdealK(alpha).residues()]


def _plus_minus_reps(points: list[TorsionPoint]) -> list[TorsionPoint]:
    seen: set[TorsionPoint] = set()
    reps = []
    for P in sorted(points, key=lambda P: (P.r1, P.r2)):
        if P.is_zero() or P in seen:
            continue
        seen.add(P)
        seen.add(-P)
        reps.append(P)
    return reps


def zeta_fn(cctx: CMCurveCtx, b: IdealK, a: IdealK) -> RatFnProduct:
    """prod over Q in (E_a minus 0) / +-1 of (x(P) - x(Q))^-1."""
    if gcd_norm(a.gen, QuadElem(6, 0, cctx.disc)) != 1 or gcd_norm(a.gen, cctx.conductor) != 1:
        raise BadAuxiliaryIdeal("a must be coprime to 6f")
    if gcd_norm(b.gen, cctx.conductor) != 1:
        raise BadAuxiliaryIdeal("b must be coprime to f")
    alpha = a.gen
    reps = _plus_minus_reps(torsion_of(cctx, alpha))
    assert len(reps) == (a.norm() - 1) // 2
    return RatFnProduct(cctx, tuple(Factor(Q, -1) for Q in reps), aux=a, label=f"zeta[{a}]")


def _distribution_ratio(R: RatFnProduct, beta: QuadElem, z: acb) -> acb:
    cc = R.cctx
    kernel = torsion_of(cc, beta)
    num = R.evaluate(beta.to_acb() * z)
    den = acb(1)
    for P in kernel:
        den *= R.evaluate(z + cc.z_of(P))
    return num / den


def _sample_points(cctx: CMCurveCtx, n: int) -> list[acb]:
    L = cctx.lattice()
    pts = []
    for s in range(1, n + 1):
        u = Fraction(s * 37 % 101, 101) + Fraction(1, 997)
        v = Fraction(s * 61 % 103, 103) + Fraction(1, 991)
        pts.append(acb(u.numerator) / u.denominator * L.w1 + acb(v.numerator) / v.denominator * L.w2)
    return pts


def gamma_fn(cctx: CMCurveCtx, b: IdealK, a: IdealK, beta: QuadElem | None = None, samples: int = 3) -> RatFnProduct:
    """c * zeta_{b,a}, with c fixed by gamma(beta P) = prod_{R in ker beta} gamma(P + R).

    With Z the zeta function the relation reads c^(N(beta) - 1) = Z(beta P) / prod Z(P + R),
    whose right side must not depend on P.  The root is taken on the principal branch.
    """
    Z = zeta_fn(cctx, b, a)
    if beta is None:
        beta = QuadElem(1, 1, cctx.disc)
    if gcd_norm(beta, a.gen) != 1:
        raise BadAuxiliaryIdeal("beta must be coprime to a")
    ratios = [_distribution_ratio(Z, beta, z) for z in _sample_points(cctx, samples)]
    r0 = ratios[0]
    for r in ratios[1:]:
        if not (r - r0).contains(0) and abs(r - r0) > abs(r0) * arb(2) ** (-ctx.prec // 2):
            raise NormalizationInconsistent("distribution ratio depends on the point")
    e = beta.norm() - 1
    c = r0 if e == 1 else (r0.log() / e).exp()
    G = RatFnProduct(cctx, Z.factors, constant=c, aux=a, label=f"gamma[{a}]")
    # a second endomorphism must agree in absolute value
    other = QuadElem(2, 0, cctx.disc) if beta != QuadElem(2, 0, cctx.disc) else QuadElem(1, 1, cctx.disc)
    if gcd_norm(other, a.gen) == 1:
        r2 = _distribution_ratio(G, other, _sample_points(cctx, 1)[0])
        if abs(abs(r2) - 1) > arb(10) ** -10:
            raise NormalizationInconsistent("|c| differs between endomorphisms")
    return G


def distribution_residual(G: RatFnProduct, beta: QuadElem, z: acb) -> acb:
    """gamma(beta P) / prod_{R in ker beta} gamma(P + R)."""
    return _distribution_ratio(G, beta, z)


# ---------------------------------------------------------------------------
# the function theta^Psi_{a,V}


@dataclass(frozen=True)
class ThetaPsiSpec:
    a: IdealK
    V: TorsionPoint
    j: int
    k: int
    g: QuadElem
    chi0: Callable[[QuadElem], acb] | None = None


def primitive_division_points(cctx: CMCurveCtx, g: QuadElem) -> list[TorsionPoint]:
    N = g.norm()
    gc = g.conj()
    out = []
    for rho in IdealK(g).residues():
        if not rho.is_zero() and gcd_norm(rho, g) == 1:
            out.append(cctx.point_from_quad(rho * gc, N))
    return sorted(out, key=lambda P: (P.r1, P.r2))


def choose_V(cctx: CMCurveCtx, g: QuadElem) -> TorsionPoint:
    """Primitive g-division point with the smallest lattice coordinates."""
    return primitive_division_points(cctx, g)[0]


def choose_auxiliary(cctx: CMCurveCtx, g: QuadElem, bound: int = 200) -> IdealK:
    """Smallest-norm split prime ideal a with N(a) prime to 6 p q N(g)."""
    bad = 6 * cctx.p * cctx.q * g.norm()
    for ell in range(5, bound):
        if all(ell % d for d in range(2, int(ell**0.5) + 1)) and math.gcd(ell, bad) == 1:
            try:
                return IdealK(prime_above(ell, cctx.disc))
            except HeckeLabError:
                continue
    raise BadAuxiliaryIdeal("no auxiliary ideal below bound")


def ray_class_degree(cctx: CMCurveCtx) -> int:
    """[R(f):K] for class number one: |(O/f)^x| / w_K."""
    return len(cctx.f.unit_residues()) // cctx.w_K


def check_theta_hypotheses(cctx: CMCurveCtx, spec: ThetaPsiSpec) -> None:
    if ray_class_degree(cctx) % cctx.q == 0:
        raise HypothesisViolation("q divides [R(f):K]")
    if (spec.g.a - cctx.conductor.a, spec.g.b - cctx.conductor.b) != (0, 0) and not cctx.conductor.divides(spec.g):
        raise HypothesisViolation("f must divide g")
    p_gen = prime_above(cctx.p, cctx.disc)
    for other, what in ((QuadElem(6 * cctx.q, 0, cctx.disc), "6q"), (p_gen, "the prime above p"), (spec.g, "g")):
        if gcd_norm(spec.a.gen, other) != 1:
            raise HypothesisViolation(f"a is not coprime to {what}")
    if not (0 <= -spec.j < spec.k) or spec.k + spec.j < 3:
        raise HypothesisViolation("need 0 <= -j < k and k + j >= 3")


def theta_psi_build(cctx: CMCurveCtx, spec: ThetaPsiSpec) -> RatFnProduct:
    """Formal sum over delta in Gal(R(g)/R(f)) of D_{j,k}(gamma_{1,a})(V^delta + P).

    Class number one: the only b_i is (1), Lambda = phi, and the translates of V are
    phi(d) V for the residues d mod g congruent to 1 mod f.
    """
    check_theta_hypotheses(cctx, spec)
    G = gamma_fn(cctx, IdealK(ONE), spec.a)
    chi = spec.chi0(ONE) if spec.chi0 else acb(1)
    translates = []
    f = cctx.conductor
    for d in IdealK(spec.g).unit_residues():
        if f.divides(d - ONE):
            translates.append(cctx.endo_act(d, spec.V))
    translates = sorted(set(translates), key=lambda P: (P.r1, P.r2))
    terms = tuple(DjkTerm(chi, spec.j, spec.k, G, shift=T) for T in translates)
    return RatFnProduct(cctx, djk_terms=terms, aux=spec.a, label="theta")


def theta_via_eisenstein(cctx: CMCurveCtx, spec: ThetaPsiSpec, P: TorsionPoint | acb) -> acb:
    """The same function through D_{j,k}(gamma) = -E_{j,k}(z; L, a)."""
    z = cctx.z_of(P) if isinstance(P, TorsionPoint) else P
    return -eis_jk_smoothed(EisParams(spec.j, spec.k, z + cctx.z_of(spec.V), cctx.lattice()), spec.a)


# ---------------------------------------------------------------------------
# conjugates and recognition of torsion values


def galois_conjugates(
    value_at: Callable[[tuple[int, int]], acb],
    x: tuple[int, int],
    order: int,
    q: int,
    level: tuple[int, int],
    disc: int = -4,
) -> dict[int, acb]:
    """Images of value_at(x) under the automorphisms zeta -> zeta^t of Q(zeta_order) over K.

    Such an automorphism extends to the torsion field through the residue pair
    (t, 1), whose norm t is its cyclotomic character.  Only meaningful for a
    function defined over K whose value lies in K(mu_order).
    """
    A, B = q ** level[0], q ** level[1]
    return {t: value_at(((x[0] * t) % A, x[1] % B)) for t in k_automorphisms(disc, order)}


def recognize_torsion_value(
    value_at: Callable[[tuple[int, int]], acb],
    x: tuple[int, int],
    order: int,
    q: int,
    level: tuple[int, int],
    den_bound: int,
    disc: int = -4,
) -> CycElem:
    conj = galois_conjugates(value_at, x, order, q, level, disc)
    return recognize_over_k(conj, order, disc, den_bound)


def _value_at_origin(R: RatFnProduct, order: int, disc: int, den_bound: int) -> CycElem:
    """R(O) when finite (a value in K); a pole at the origin contributes 0.

    Changing the transform at the trivial frequency only adds a multiple of the
    uniform measure, which no nontrivial character sees.
    """
    try:
        val = R.evaluate(INFINITY)
    except (PoleOnTorsion, PoleAtLatticePoint):
        return CycElem.zero(order)
    return recognize_over_k({t: val for t in k_automorphisms(disc, order)}, order, disc, den_bound)


def measure_of_ratfn(
    cctx: CMCurveCtx,
    R: RatFnProduct,
    level: tuple[int, int],
    order: int | None = None,
    den_bound: int = 10**12,
) -> FiniteMeasure:
    """The measure whose transform at (zeta_{q^m}^u, zeta_{q^n}^v) is R(delta(u, v)).

    Values are recognized exactly in Q(zeta_order) (default lcm(4, q^max level)).
    """
    q = cctx.q
    if order is None:
        order = math.lcm(4, q ** max(level))
    cache: dict[tuple[int, int], acb] = {}

    def value_at(y):
        if y not in cache:
            P = cctx.delta(y[0], y[1], level)
            cache[y] = R.evaluate(P)
        return cache[y]

    table = {}
    A, B = q ** level[0], q ** level[1]
    for u in range(A):
        for v in range(B):
            P = cctx.delta(u, v, level)
            if P.is_zero():
                table[(u, v)] = _value_at_origin(R, order, cctx.disc, den_bound)
                continue
            table[(u, v)] = recognize_torsion_value(value_at, (u, v), order, q, level, den_bound, cctx.disc)
    return measure_from_fourier(q, level, table)


# ---------------------------------------------------------------------------
# ord_pi of a rational function


@dataclass
class OrdReport:
    value: Fraction
    minima: dict[int, Fraction]
    attained_fraction: float
    stabilized: bool
    samples: dict[int, list[Fraction]] = field(default_factory=dict)


def _orbit_norm_valuation(
    value_at: Callable[[tuple[int, int]], acb],
    x: tuple[int, int],
    q: int,
    level: tuple[int, int],
    pctx: PrimeContext,
    den_bound: int,
) -> Fraction:
    """ord at the chosen prime, averaged over the primes of the torsion field above it.

    The norm to K(mu_{q^n}) is the product over residue pairs (s, s^-1) acting on x;
    it lies in Q(zeta_N) with N = lcm(4, q^n) and is recognized from its conjugates.
    """
    n = max(level)
    mod = q**n
    order = math.lcm(4, mod)
    kernel = [s for s in range(1, mod) if s % q]

    def norm_at(y):
        prod = acb(1)
        for s in kernel:
            yy = ((y[0] * s) % q ** level[0], (y[1] * pow(s, -1, mod)) % q ** level[1])
            prod *= value_at(yy)
        return prod

    cache: dict = {}

    def cached(y):
        if y not in cache:
            cache[y] = norm_at(y)
        return cache[y]

    elem = recognize_torsion_value(cached, x, order, q, level, den_bound, pctx.disc)
    return Fraction(pctx.val_cyc(elem), len(kernel))


def ord_pi_ratfn(
    R: RatFnProduct | Fraction | int,
    cctx: CMCurveCtx,
    pctx: PrimeContext | None = None,
    levels: tuple[int, ...] = (1, 2),
    den_bound: int = 10**6,
    prec: int = 1024,
) -> OrdReport:
    """Minimum over sampled q-power torsion of ord_pi(R(Q)), with a stabilization report."""
    if not isinstance(R, RatFnProduct):
        v = Fraction(vp_fraction(Fraction(R), cctx.p))
        return OrdReport(v, {lv: v for lv in levels}, 1.0, True)
    if pctx is None:
        pctx = PrimeContext(cctx.p, cctx.disc)
    q = cctx.q
    minima: dict[int, Fraction] = {}
    samples: dict[int, list[Fraction]] = {}
    with working_precision(prec):
        for lv in levels:
            level = (lv, lv)
            vals: dict[tuple[int, int], acb] = {}

            def value_at(y, level=level, vals=vals):
                if y not in vals:
                    vals[y] = R.evaluate(cctx.delta(y[0], y[1], level))
                return vals[y]

            seen: set = set()
            out = []
            mod = q**lv
            for u in range(mod):
                for v in range(mod):
                    if (u, v) == (0, 0) or (u, v) in seen:
                        continue
                    # the norm is constant along the residue pairs (s, s^-1)
                    orbit = {((u * s) % mod, (v * pow(s, -1, mod)) % mod) for s in range(1, mod) if s % q}
                    seen |= orbit
                    val = _orbit_norm_valuation(value_at, (u, v), q, level, pctx, den_bound)
                    out.extend([val] * len(orbit))
            samples[lv] = out
            minima[lv] = min(out)
    top = levels[-1]
    value = minima[top]
    frac = sum(1 for v in samples[top] if v == value) / len(samples[top])
    stabilized = len(set(minima.values())) == 1 and frac >= 0.5
    rep = OrdReport(value, minima, frac, stabilized, samples)
    if not stabilized:
        raise NotStabilized(f"minima by level {minima}, attainment {frac:.2f}")
    return rep
