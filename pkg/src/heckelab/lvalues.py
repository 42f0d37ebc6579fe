"""Hecke L-values of phi-bar^(k-j) twisted by a q-power character.

Two independent routes give the partial L-values L_h(phi-bar^(k-j), k, class):
an ideal sum with a certified tail, and the Eisenstein-Kronecker series at
the division value c rho.  Valuations come from character resolvents,
whose o-th powers lie in K(mu_o) with Galois conjugates given by powers of
the character.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable

from flint import acb, arb

from .arith import (
    CycElem,
    HeckeLabError,
    IdealK,
    PrimeContext,
    QuadElem,
    RecognitionFailed,
    acb_from_state,
    acb_state,
    add_error,
    k_automorphisms,
    quad_to_cyc,
    recognize_over_k,
    units,
    vp_fraction,
    working_precision,
)
from .cm_curve import CMCurveCtx, TorsionPoint
from .eisenstein import EisParams, eis_jk
from .measures import CharPair


class TailTooLarge(HeckeLabError):
    pass


class OrbitIncomplete(HeckeLabError):
    pass


class RouteUnavailable(HeckeLabError):
    pass


class NormNotRecognized(HeckeLabError):
    pass


# ---------------------------------------------------------------------------
# characters


@dataclass(frozen=True)
class HeckeCharSpec:
    """phi^(k-j) kappa on ideals prime to h = g Q^(m+1) Q*^(n+1).

    ``level`` is (m, n); kappa lives on (Z/q^(m+1))^x x (Z/q^(n+1))^x and is
    evaluated on an ideal b through the residues of phi(b).  chi_0 is trivial
    because R(f) = K when f kills the units.
    """

    cctx: CMCurveCtx
    k: int
    j: int
    level: tuple[int, int] = (0, 0)
    kappa_exps: tuple[int, int] = (0, 0)
    g: QuadElem | None = None

    def __post_init__(self):
        if not (0 <= -self.j < self.k) or self.k + self.j < 3:
            raise ValueError("need 0 <= -j < k and k + j >= 3")
        if self.g is None:
            object.__setattr__(self, "g", self.cctx.conductor)
        object.__setattr__(self, "level", tuple(self.level))
        object.__setattr__(self, "kappa_exps", tuple(self.kappa_exps) if self.kappa_exps else (0, 0))

    @property
    def w(self) -> int:
        return self.k - self.j

    @property
    def char_level(self) -> tuple[int, int]:
        return (self.level[0] + 1, self.level[1] + 1)

    @property
    def kappa(self) -> CharPair:
        return CharPair(self.cctx.q, self.char_level, self.kappa_exps)

    @property
    def modulus(self) -> QuadElem:
        nu = self.cctx.q_prime()
        return self.g * nu ** self.char_level[0] * nu.conj() ** self.char_level[1]

    def with_kappa(self, kappa: CharPair | tuple[int, int]) -> "HeckeCharSpec":
        exps = kappa.exps if isinstance(kappa, CharPair) else tuple(kappa)
        return replace(self, kappa_exps=exps)

    def upsilon(self, b: QuadElem | IdealK) -> CycElem:
        """kappa at the Artin symbol of b, read from the residues of phi(b)."""
        gen = self.cctx.phi(b)
        return self.kappa(*self.cctx.residue_pair(gen, self.char_level))

    def value(self, b: QuadElem | IdealK) -> acb:
        """phi^(k-j)(b) kappa(b) as a complex number."""
        gen = self.cctx.phi(b)
        return gen.to_acb() ** self.w * self.upsilon(b).embed()


def class_table(spec: HeckeCharSpec) -> dict[tuple[int, int], QuadElem]:
    return _class_table(spec.cctx, spec.char_level, spec.g)


@lru_cache(maxsize=32)
def _class_table(cctx: CMCurveCtx, char_level: tuple[int, int], g: QuadElem) -> dict[tuple[int, int], QuadElem]:
    """Residue pair -> representative c = 1 mod g of the ray class mod h.

    The ray classes mod h prime to h correspond to the residue pairs of their
    normalized generators.
    """
    nu = cctx.q_prime()
    h = g * nu ** char_level[0] * nu.conj() ** char_level[1]
    gi = IdealK(g)
    out: dict[tuple[int, int], QuadElem] = {}
    for c in IdealK(h).unit_residues():
        if gi.congruent(c, QuadElem(1, 0, c.disc)):
            x = cctx.residue_pair(c, char_level)
            if x not in out or (c.norm(), c.a, c.b) < (out[x].norm(), out[x].a, out[x].b):
                out[x] = c
    q = cctx.q
    expected = (q ** char_level[0] - q ** (char_level[0] - 1)) * (q ** char_level[1] - q ** (char_level[1] - 1))
    if len(out) != expected:
        raise HeckeLabError(f"found {len(out)} ray classes, expected {expected}")
    return dict(sorted(out.items()))


def kappa_index(kappa: CharPair) -> tuple[int, int]:
    return kappa.exps


def scan_characters(q: int, char_level: tuple[int, int]) -> list[CharPair]:
    """Every character of conductor dividing q^char_level, in canonical order."""
    return CharPair.all(q, char_level)


# ---------------------------------------------------------------------------
# direct summation


def _tail_bound(R: float, sigma: int, vol: float, d: float) -> float:
    """sum of |beta|^-sigma over a translated lattice of covolume vol and cell radius d, |beta| > R."""
    r = R - 2 * d
    return (2 * math.pi / vol) * (r ** (2 - sigma) / (sigma - 2) + d * r ** (1 - sigma) / (sigma - 1))


def _lattice_points(c: QuadElem, h: QuadElem, radius: float):
    """beta = c + h lam (lam in O_K) with |beta| <= radius, as exact elements."""
    hc = h.complex()
    cc = c.complex()
    centre = -cc / hc
    rr = radius / abs(hc)
    disc = c.disc
    tau = QuadElem(0, 1, disc).complex()
    # lam = u + v tau: bound v by the imaginary part, then u
    vmax = rr / tau.imag
    for v in range(math.floor(centre.imag / tau.imag - vmax) - 1, math.ceil(centre.imag / tau.imag + vmax) + 2):
        base = centre - v * tau
        for u in range(math.floor(base.real - rr) - 1, math.ceil(base.real + rr) + 2):
            beta = c + h * QuadElem(u, v, disc)
            yield beta


def partial_l_direct(
    spec: HeckeCharSpec,
    x: tuple[int, int],
    B: int,
    s: int | None = None,
    w: int | None = None,
    tol: float | None = None,
) -> acb:
    """Sum of conj(phi(b))^w / N(b)^s over ideals b in the class x with N(b) <= B.

    Defaults w = k - j, s = k.  The tail over N(b) > B is bounded and added
    to the radius; TailTooLarge if it exceeds ``tol``.
    """
    s = spec.k if s is None else s
    w = spec.w if w is None else w
    sigma = 2 * s - w
    if sigma < 3:
        raise ValueError("the tail bound needs 2s - w >= 3")
    h = spec.modulus
    c = class_table(spec)[tuple(x)]
    R = math.sqrt(B)
    tau_abs = abs(QuadElem(0, 1, h.disc).complex())
    d = abs(h.complex()) * (1 + tau_abs) / 2
    vol = h.norm() * QuadElem(0, 1, h.disc).complex().imag
    # beyond R2 the analytic bound applies; terms in (R, R2] are bounded one by one
    R2 = max(R, 3 * d)
    total = acb(0)
    extra = arb(0)
    for beta in _lattice_points(c, h, R2):
        n = beta.norm()
        if n <= B:
            num = beta.conj() ** w
            total += num.to_acb() / n**s
        elif n <= R2 * R2:
            extra += arb(n) ** (arb(-sigma) / 2)
    tail = _tail_bound(R2, sigma, vol, d) * (1 + 1e-12)
    rad = extra + arb(tail)
    if tol is not None and float(rad.upper()) > tol:
        raise TailTooLarge(f"tail bound {float(rad.upper()):.3g} exceeds {tol:.3g} at B = {B}")
    return add_error(total, rad)


def imprimitive_l(spec: HeckeCharSpec, B: int, s: int | None = None, w: int | None = None) -> acb:
    """L_h of conj(phi^w kappa) at s, assembled from the partial sums."""
    total = acb(0)
    kap = spec.kappa
    for x in class_table(spec):
        e = kap.exponent(*x)
        total += CycElem.root_of_unity(kap.value_order, -e).embed() * partial_l_direct(spec, x, B, s, w)
    return total


# ---------------------------------------------------------------------------
# Eisenstein route


def rho(spec: HeckeCharSpec) -> acb:
    return spec.cctx.omega() / spec.modulus.to_acb()


def sqrt_abs_disc(disc: int) -> arb:
    return arb(abs(disc)).sqrt()


def eisenstein_class_value(spec: HeckeCharSpec, x: tuple[int, int]) -> acb:
    """E_{j,k}(c rho, L) for the class representative c."""
    c = class_table(spec)[tuple(x)]
    return eis_jk(EisParams(spec.j, spec.k, c.to_acb() * rho(spec), spec.cctx.lattice()))


def l_via_eisenstein(spec: HeckeCharSpec, x: tuple[int, int]) -> acb:
    """Partial L-value from rho^(k-j) (2 pi / (N h sqrt|d|))^j E_{j,k}(c rho, L) / (k-1)!."""
    r = rho(spec)
    Nh = spec.modulus.norm()
    fac = (2 * arb.pi() / (Nh * sqrt_abs_disc(spec.cctx.disc))) ** spec.j
    return r**spec.w * fac * eisenstein_class_value(spec, x) / math.factorial(spec.k - 1)


def integral_class_values(spec: HeckeCharSpec, values: dict | None = None) -> dict[tuple[int, int], acb]:
    """(N h sqrt|d|)^-j E_{j,k}(c rho, L) per class: (k-1)! L_h(class) / ((2 pi)^j rho^(k-j)).

    These are the values permuted by the Artin symbols; they have small
    denominators, which keeps the recognition of resolvent powers cheap.
    """
    Nh = spec.modulus.norm()
    scale = (Nh * sqrt_abs_disc(spec.cctx.disc)) ** (-spec.j)
    if values is None:
        values = {x: eisenstein_class_value(spec, x) for x in class_table(spec)}
    return {x: scale * v for x, v in values.items()}


def algebraic_class_values(spec: HeckeCharSpec, values: dict | None = None) -> dict[tuple[int, int], acb]:
    """(k-1)! L_h(class) / ((2 pi)^j Omega^(k-j)) for every class: h^-(k-j) times the integral values."""
    h = spec.modulus.to_acb()
    return {x: h ** (-spec.w) * v for x, v in integral_class_values(spec, values).items()}


def resolvent(kappa: CharPair, values: dict[tuple[int, int], acb]) -> acb:
    """sum over classes of kappa^-1(x) values[x]."""
    order = kappa.value_order
    total = acb(0)
    for x, v in values.items():
        e = kappa.exponent(*x, order=order)
        if e is None:
            continue
        total += acb.exp_pi_i(acb(-2 * e) / order) * v
    return total


# ---------------------------------------------------------------------------
# valuations


@dataclass
class AlgValue:
    ball: acb
    exact: CycElem | None = None
    val_p: Fraction | None = None
    method: str = ""
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "mid": [self.ball.real.mid().str(30, radius=False), self.ball.imag.mid().str(30, radius=False)],
            "rad": float(max(self.ball.real.rad(), self.ball.imag.rad())),
            "val_p": None if self.val_p is None else [self.val_p.numerator, self.val_p.denominator],
            "method": self.method,
        }
        if self.exact is not None:
            out["exact"] = self.exact.to_json()
        return out


def char_order(kappa: CharPair) -> int:
    return kappa.order


def ord_p_orbit_norm(
    family: Callable[[CharPair], acb],
    kappa: CharPair,
    pctx: PrimeContext,
    den_bound: int = 10**8,
) -> tuple[Fraction, CycElem]:
    """ord_p of a resolvent-type value X(kappa) with sigma_t X(kappa)^o = X(kappa^t)^o.

    X(kappa)^o, o = ord(kappa), lies in K(mu_N), N = lcm(4, o); it is
    recognized from the family of o-th powers and its valuation divided by o.
    """
    o = kappa.order
    N = math.lcm(4, o)
    conj = {}
    for t in k_automorphisms(pctx.disc, N):
        val = family(kappa.power(t))
        conj[t] = val**o
    try:
        elem = recognize_over_k(conj, N, pctx.disc, den_bound)
    except RecognitionFailed as exc:
        raise NormNotRecognized(str(exc)) from exc
    v = pctx.val_cyc(elem)
    if v == math.inf:
        return v, elem
    return Fraction(v) / o, elem


def orbit_valuation(values: Iterable, pctx: PrimeContext) -> Fraction:
    """ord_p of the norm of a complete conjugate family of exact values, divided by its size."""
    vals = list(values)
    if not vals:
        raise OrbitIncomplete("empty family")
    prod = vals[0]
    for v in vals[1:]:
        prod = prod * v
    if isinstance(prod, CycElem):
        return Fraction(pctx.val_cyc(prod)) / len(vals)
    return Fraction(vp_fraction(Fraction(prod), pctx.p)) / len(vals)


def _kappa_on_prime_part(kappa: CharPair, x: tuple[int, int], skip: int | None, order: int) -> int:
    """Exponent of kappa at x, ignoring the component ``skip`` (a trivial component)."""
    e = 0
    for i in range(2):
        if i == skip:
            continue
        ei = kappa.component_exponent(i, x[i], order)
        if ei is None:
            raise ValueError("kappa evaluated off the units")
        e += ei
    return e % order


def _unit_obstruction(spec: HeckeCharSpec, u: QuadElem, order: int) -> CycElem:
    """u^(k-j) kappa(u): the finite part of phi^(k-j) kappa on a unit."""
    kap = spec.kappa
    e = kap.exponent(*spec.cctx.residue_pair(u, spec.char_level), order=order)
    return quad_to_cyc(u, order) ** spec.w * CycElem.root_of_unity(order, e)


def conductor_exponent_above_g(spec: HeckeCharSpec) -> int:
    """Exponent of the conductor of phi^(k-j) kappa at the primes dividing f (K = Q(i): (1+i))."""
    if spec.cctx.disc != -4 or spec.g.norm() != 8:
        raise NotImplementedError("only g = (1+i)^3 in Q(i) is supported")
    order = math.lcm(4, spec.kappa.value_order)
    one = CycElem.one(order)
    eta_i = _unit_obstruction(spec, QuadElem(0, 1, -4), order)
    if eta_i == one:
        return 0
    eta_m = _unit_obstruction(spec, QuadElem(-1, 0, -4), order)
    return 2 if eta_m == one else 3


@dataclass(frozen=True)
class EulerFactor:
    prime: QuadElem
    local: CycElem  # conj(eps(r)) / N(r)^k

    def factor(self) -> CycElem:
        """1 - conj(eps(r)) N(r)^-k; the primitive value is the imprimitive one divided by this."""
        return CycElem.one(self.local.order) - self.local


def reinstated_euler_factors(spec: HeckeCharSpec) -> list[EulerFactor]:
    """Primes dividing h where phi^(k-j) kappa is unramified, with their local data."""
    cctx = spec.cctx
    kap = spec.kappa
    order = math.lcm(4, kap.value_order)
    cond = kap.conductor
    out = []

    def eps_conj(pi: QuadElem, skip: int | None) -> CycElem:
        x = cctx.residue_pair(pi, spec.char_level)
        e = _kappa_on_prime_part(kap, x, skip, order)
        val = quad_to_cyc(pi.conj(), order) ** spec.w * CycElem.root_of_unity(order, -e)
        return val * CycElem.from_rational(Fraction(1, pi.norm() ** spec.k), order)

    if conductor_exponent_above_g(spec) == 0:
        # unramified at (1+i): eps((pi)) = pi^w kappa(pi) is independent of the generator
        pi = QuadElem(1, 1, cctx.disc)
        out.append(EulerFactor(pi, eps_conj(pi, None)))
    nu = cctx.q_prime()
    for i, r in enumerate((nu, nu.conj())):
        if cond[i] == 0:
            gen = cctx.phi(r)
            out.append(EulerFactor(gen, eps_conj(gen, i)))
    return out


def factor_valuation(spec: HeckeCharSpec, a: IdealK, pctx: PrimeContext | None = None) -> Fraction:
    """ord_p of N(a) - phi(a)^(k-j) kappa(tau_a)."""
    pctx = pctx or PrimeContext(spec.cctx.p, spec.cctx.disc)
    return Fraction(pctx.val_cyc(factor_value(spec, a)))


def factor_value(spec: HeckeCharSpec, a: IdealK) -> CycElem:
    order = math.lcm(4, spec.kappa.value_order)
    gen = spec.cctx.phi(a)
    ups = spec.upsilon(a).lift(order)
    return CycElem.from_rational(a.norm(), order) - quad_to_cyc(gen, order) ** spec.w * ups


def condition_rho_valuation(cctx: CMCurveCtx, k: int, pctx: PrimeContext | None = None) -> Fraction:
    """ord_p of sum over the class group of chi_0(b_i) / phi(b_i)^k: one term, b = (1)."""
    pctx = pctx or PrimeContext(cctx.p, cctx.disc)
    reps = [QuadElem(1, 0, cctx.disc)]
    total = CycElem.zero(4)
    for b in reps:
        total = total + quad_to_cyc(cctx.phi(b), 4) ** k
    return Fraction(pctx.val_cyc(CycElem.one(4) / total))


# ---------------------------------------------------------------------------
# algebraic L-values


def alg_l_value(
    spec: HeckeCharSpec,
    values: dict[tuple[int, int], acb] | None = None,
    pctx: PrimeContext | None = None,
    den_bound: int = 10**8,
) -> AlgValue:
    """L^alg = L(conj(phi^(k-j) kappa), k) / ((2 pi)^j Omega^(k-j)) for the primitive L-function.

    ``values`` may carry precomputed integral class values (see
    integral_class_values).  The valuation comes from the resolvent route.
    """
    pctx = pctx or PrimeContext(spec.cctx.p, spec.cctx.disc)
    if values is None:
        values = integral_class_values(spec)
    kap = spec.kappa
    fact = math.factorial(spec.k - 1)
    h = spec.modulus
    euler = reinstated_euler_factors(spec)
    ball = resolvent(kap, values) * h.to_acb() ** (-spec.w) / fact
    for ef in euler:
        ball = ball / ef.factor().embed()
    v_res, elem = ord_p_orbit_norm(lambda chi: resolvent(chi, values), kap, pctx, den_bound)
    exact = None
    if kap.order == 1:
        # elem = (k-1)! h^(k-j) L_h^alg lies in K
        order = math.lcm(4, *(ef.local.order for ef in euler))
        exact = elem.lift(order) / (quad_to_cyc(h, order) ** spec.w * CycElem.from_rational(fact, order))
        for ef in euler:
            exact = exact / ef.factor().lift(order)
    val = (
        v_res
        - spec.w * Fraction(pctx.val_quad(h))
        - vp_fraction(Fraction(fact), pctx.p)
        - sum((Fraction(pctx.val_cyc(ef.factor())) for ef in euler), Fraction(0))
    )
    return AlgValue(
        ball,
        exact,
        val,
        "orbit-norm" if kap.order > 1 else "recognized",
        {"kappa": kap.exps, "level": spec.level, "euler": [str(ef.prime) for ef in euler]},
    )


# ---------------------------------------------------------------------------
# the character sum of theta over torsion


def torsion_to_quad(P: TorsionPoint, h: QuadElem) -> QuadElem:
    """t in O with P = t Omega / h; raises when P is not h-torsion."""
    # z = Omega (r2 + r1 i)
    re = P.r2 * h.a - P.r1 * h.b
    im = P.r2 * h.b + P.r1 * h.a
    if Fraction(re).denominator != 1 or Fraction(im).denominator != 1:
        raise ValueError("point is not killed by h")
    return QuadElem(int(re), int(im), h.disc)


def sigma0_data(spec: HeckeCharSpec, V: TorsionPoint) -> tuple[QuadElem, QuadElem]:
    """(zeta, c0) with V + Q = zeta c0 rho mod L and c0 = 1 mod g, where Q = delta(1, 1)."""
    if spec.cctx.disc != -4:
        raise NotImplementedError("torsion coordinates are read in Z[i]")
    cctx = spec.cctx
    Q = cctx.delta(1, 1, spec.char_level)
    t = torsion_to_quad(V + Q, spec.modulus)
    gi = IdealK(spec.g)
    for u in units(cctx.disc):
        c0 = t * u.conj()  # t / u
        if gi.congruent(c0, QuadElem(1, 0, cctx.disc)):
            return u, c0
    raise ValueError("no unit normalizes the torsion coordinate")


def theta_character_sum(spec: HeckeCharSpec, theta_at: Callable[[TorsionPoint], acb], kappa: CharPair | None = None) -> acb:
    """sum over residue pairs x of kappa^-1(x) theta(delta(x))."""
    kap = kappa or spec.kappa
    vals = {x: theta_at(spec.cctx.delta(x[0], x[1], spec.char_level)) for x in class_table(spec)}
    return resolvent(kap, vals)


def theta_sum_prediction(spec: HeckeCharSpec, a: IdealK, V: TorsionPoint, l_value: acb) -> acb:
    """-(k-1)! (2 N h / 2 pi)^j (N(a) - phi(a)^(k-j) kappa(a)) kappa(c0) L / (zeta rho)^(k-j).

    ``l_value`` is the imprimitive L_h(conj(phi^(k-j) kappa), k).
    """
    zeta, c0 = sigma0_data(spec, V)
    kap = spec.kappa
    Nh = spec.modulus.norm()
    fac = factor_value(spec, a).embed()
    kc0 = kap(*spec.cctx.residue_pair(c0, spec.char_level)).embed()
    pref = -math.factorial(spec.k - 1) * ((Nh * sqrt_abs_disc(spec.cctx.disc)) / (2 * arb.pi())) ** spec.j
    return pref * fac * kc0 * l_value / (zeta.to_acb() * rho(spec)) ** spec.w


def theta_class_values(
    spec: HeckeCharSpec,
    a: IdealK,
    V: TorsionPoint,
    prec: int = 768,
    threads: int = 1,
) -> dict[tuple[int, int], acb]:
    """theta at delta(x) for every residue pair x at the character level of spec."""
    if spec.j != 0:
        raise RouteUnavailable("the theta route needs j = 0")
    cctx = spec.cctx
    classes = list(class_table(spec))
    pts = [cctx.delta(x[0], x[1], spec.char_level) for x in classes]
    vals = [acb_from_state(v) for v in _pmap(_theta_job, [_ThetaJob(cctx, a, V, spec.k, P, prec) for P in pts], threads)]
    return dict(zip(classes, vals))


def alg_l_value_gamma(
    spec: HeckeCharSpec,
    theta_vals: dict[tuple[int, int], acb],
    a: IdealK,
    V: TorsionPoint,
    pctx: PrimeContext | None = None,
    den_bound: int = 10**8,
) -> AlgValue:
    """L^alg read off the character sum of theta, independent of any L-series sum.

    The character sum equals -(k-1)! (N(a) - phi(a)^k kappa(a)) kappa(c0) L_h / (zeta rho)^k
    at j = 0, which is solved for L_h and then for the primitive value.
    """
    if spec.j != 0:
        raise RouteUnavailable("the theta route needs j = 0")
    pctx = pctx or PrimeContext(spec.cctx.p, spec.cctx.disc)
    kap = spec.kappa
    fact = math.factorial(spec.k - 1)
    euler = reinstated_euler_factors(spec)
    fac = factor_value(spec, a)
    zeta, c0 = sigma0_data(spec, V)
    kc0 = kap(*spec.cctx.residue_pair(c0, spec.char_level)).embed()
    S = resolvent(kap, theta_vals)
    ball = -S * zeta.to_acb() ** spec.w / (fact * fac.embed() * kc0)
    ball = ball * spec.modulus.to_acb() ** (-spec.w)
    for ef in euler:
        ball = ball / ef.factor().embed()
    v_sum, _ = ord_p_orbit_norm(lambda chi: resolvent(chi, theta_vals), kap, pctx, den_bound)
    val = (
        v_sum
        - vp_fraction(Fraction(fact), pctx.p)
        - Fraction(pctx.val_cyc(fac))
        - sum((Fraction(pctx.val_cyc(ef.factor())) for ef in euler), Fraction(0))
    )
    return AlgValue(
        ball,
        None,
        val,
        "theta-sum",
        {"kappa": kap.exps, "level": spec.level, "auxiliary": str(a.gen), "factor_val": str(pctx.val_cyc(fac))},
    )


# ---------------------------------------------------------------------------
# scan


@dataclass
class ScanRow:
    m: int
    n: int
    kappa_index_1: int
    kappa_index_2: int
    route: str
    ord_p: Fraction | None
    status: str
    ball: acb | None = None

    def csv_fields(self) -> list[str]:
        num = "" if self.ord_p is None else str(self.ord_p.numerator)
        den = "" if self.ord_p is None else str(self.ord_p.denominator)
        return [str(self.m), str(self.n), str(self.kappa_index_1), str(self.kappa_index_2), self.route, num, den, self.status]


CSV_HEADER = ["m", "n", "kappa_index_1", "kappa_index_2", "route", "ord_p_num", "ord_p_den", "status"]


@dataclass
class ScanResult:
    rows: list[ScanRow]
    C_observed: Fraction | None
    exceptions: list[dict]
    hypothesis_report: dict
    route_agreement: bool | None
    cross_validation: list[dict]


def check_scan_hypotheses(cctx: CMCurveCtx, k: int) -> dict:
    from .arith import split_prime_root
    from .efm import ray_class_degree

    report: dict = {}
    for name, ell in (("p", cctx.p), ("q", cctx.q)):
        try:
            split_prime_root(ell, cctx.disc)
            report[f"{name}_split"] = True
        except HeckeLabError:
            report[f"{name}_split"] = False
    report["q_not_dividing_ray_class_degree"] = ray_class_degree(cctx) % cctx.q != 0
    report["primes_above_q_principal"] = True
    report["condition_rho_ord"] = str(condition_rho_valuation(cctx, k))
    report["condition_rho_holds"] = condition_rho_valuation(cctx, k) == 0
    return report


def _cross_validate(spec: HeckeCharSpec, values: dict, B: int) -> dict:
    """Compare the Eisenstein partial L-value with direct summation on the identity class."""
    x = next(iter(class_table(spec)))
    with working_precision(128):
        direct = partial_l_direct(spec, x, B)
        eis = l_via_eisenstein(spec, x)
    ok = direct.overlaps(eis)
    rel = float(abs((direct - eis) / eis).mid())
    return {"level": list(spec.level), "class": list(x), "overlap": bool(ok), "rel_diff": rel}


def _pmap(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class _ClassJob:
    spec: HeckeCharSpec
    x: tuple[int, int]
    prec: int

    def __call__(self, _=None):
        with working_precision(self.prec):
            return eisenstein_class_value(self.spec, self.x)


def _eis_job(job: _ClassJob) -> tuple:
    return acb_state(job())


@dataclass(frozen=True)
class _ThetaJob:
    cctx: CMCurveCtx
    a: IdealK
    V: TorsionPoint
    k: int
    point: TorsionPoint
    prec: int


def _theta_job(job: _ThetaJob) -> tuple:
    from .efm import ThetaPsiSpec, theta_psi_build

    with working_precision(job.prec):
        T = theta_psi_build(job.cctx, ThetaPsiSpec(job.a, job.V, 0, job.k, job.cctx.conductor))
        return acb_state(T.evaluate(job.point))


def theorem_scan(
    cctx: CMCurveCtx,
    k: int,
    j: int,
    levels: list[tuple[int, int]],
    routes: tuple[str, ...] = ("direct", "gamma"),
    prec: int = 768,
    threads: int = 1,
    a: IdealK | None = None,
    cross_check_bound: int = 20000,
    den_bound: int = 10**8,
) -> ScanResult:
    """ord_p of L^alg for every kappa at the given levels, by the requested routes."""
    from .efm import choose_V, choose_auxiliary

    pctx = PrimeContext(cctx.p, cctx.disc)
    hyp = check_scan_hypotheses(cctx, k)
    fact_val = Fraction(vp_fraction(Fraction(math.factorial(k - 1)), cctx.p))
    V = choose_V(cctx, cctx.conductor)
    a = a or choose_auxiliary(cctx, cctx.conductor)
    hyp["auxiliary_ideal"] = str(a.gen)
    rows: list[ScanRow] = []
    xval = []
    agreement: bool | None = None
    for level in levels:
        base = HeckeCharSpec(cctx, k, j, level)
        classes = list(class_table(base))
        with working_precision(prec):
            direct_vals = None
            if "direct" in routes:
                eis_vals = [acb_from_state(v) for v in _pmap(_eis_job, [_ClassJob(base, x, prec) for x in classes], threads)]
                direct_vals = integral_class_values(base, dict(zip(classes, eis_vals)))
                h_val = base.w * Fraction(pctx.val_quad(base.modulus))
                xval.append(_cross_validate(base, dict(zip(classes, eis_vals)), cross_check_bound))
            theta_vals = None
            if "gamma" in routes and j == 0:
                theta_vals = theta_class_values(base, a, V, prec, threads)
            for kap in scan_characters(cctx.q, base.char_level):
                spec = base.with_kappa(kap)
                euler = reinstated_euler_factors(spec)
                euler_val = sum((Fraction(pctx.val_cyc(ef.factor())) for ef in euler), Fraction(0))
                fac_val = factor_valuation(spec, a, pctx)
                direct_ord = None
                if direct_vals is not None:
                    try:
                        v, _ = ord_p_orbit_norm(lambda chi: resolvent(chi, direct_vals), kap, pctx, den_bound)
                        direct_ord = v - h_val - fact_val - euler_val
                        rows.append(ScanRow(level[0], level[1], *kap.exps, "direct", direct_ord, "ok"))
                    except HeckeLabError as exc:
                        rows.append(ScanRow(level[0], level[1], *kap.exps, "direct", None, f"error:{type(exc).__name__}"))
                if "gamma" in routes:
                    if j != 0:
                        rows.append(ScanRow(level[0], level[1], *kap.exps, "gamma", None, "unavailable"))
                        continue
                    try:
                        v, _ = ord_p_orbit_norm(lambda chi: resolvent(chi, theta_vals), kap, pctx, den_bound)
                        g_ord = v - fact_val - fac_val - euler_val
                        status = "ok"
                        if fac_val != 0:
                            status = "ok:factor_nonunit"
                        rows.append(ScanRow(level[0], level[1], *kap.exps, "gamma", g_ord, status))
                        if direct_ord is not None:
                            same = g_ord == direct_ord
                            agreement = same if agreement is None else (agreement and same)
                    except HeckeLabError as exc:
                        rows.append(ScanRow(level[0], level[1], *kap.exps, "gamma", None, f"error:{type(exc).__name__}"))
    primary = [r for r in rows if r.ord_p is not None and r.route == ("direct" if "direct" in routes else "gamma")]
    C = None
    exceptions = []
    if primary:
        counts = Counter(r.ord_p for r in primary)
        top = max(counts.values())
        C = min(v for v, c in counts.items() if c == top)
        exceptions = [
            {"m": r.m, "n": r.n, "kappa": [r.kappa_index_1, r.kappa_index_2], "ord_p": str(r.ord_p)}
            for r in primary
            if r.ord_p != C
        ]
    return ScanResult(rows, C, exceptions, hyp, agreement, xval)
