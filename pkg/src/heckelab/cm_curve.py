"""CM elliptic curves over class-number-one fields: lattices, Weierstrass
functions, torsion points, the O_K action, isogenies and reduction mod a prime.

Curves are in the form y^2 = 4x^3 - g2 x - g3 with period lattice L = Omega O_K,
basis w1 = tau*Omega, w2 = Omega.  A point of C/L is carried by its lattice
coordinates (r1, r2), z = r1*w1 + r2*w2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from flint import acb, arb, ctx

from .arith import (
    HeckeLabError,
    IdealK,
    PrecisionExhausted,
    QuadElem,
    _hensel_root,
    normalize_generator,
    prime_above,
    split_prime_root,
    tau_acb,
    tau_minpoly,
    units,
    working_precision,
)
from .ffield import FiniteField


class PoleAtLatticePoint(HeckeLabError):
    pass


class BasisOrientation(HeckeLabError):
    pass


class BadReduction(HeckeLabError):
    pass


class TorsionNotRational(HeckeLabError):
    pass


class ConfigError(HeckeLabError):
    pass


# ---------------------------------------------------------------------------
# Lattices


@dataclass(frozen=True)
class LatticeBasis:
    """Lattice Z w1 + Z w2 with w1/w2 in the upper half plane."""

    w1: acb
    w2: acb

    def __post_init__(self):
        t = self.w1 / self.w2
        if not t.imag > 0:
            raise BasisOrientation("w1/w2 must lie in the upper half plane")

    @property
    def tau(self) -> acb:
        return self.w1 / self.w2

    def scale(self, lam: acb) -> "LatticeBasis":
        return LatticeBasis(lam * self.w1, lam * self.w2)

    def coords(self, z: acb) -> tuple[arb, arb]:
        """Real coordinates (x1, x2) with z = x1 w1 + x2 w2."""
        # solve the real 2x2 system
        a, b = self.w1.real, self.w2.real
        c, d = self.w1.imag, self.w2.imag
        det = a * d - b * c
        x1 = (z.real * d - b * z.imag) / det
        x2 = (a * z.imag - c * z.real) / det
        return x1, x2

    def area(self) -> arb:
        return abs((self.w1.conjugate() * self.w2).imag)


def lambert_tail(qabs: arb, start: int, power: int = 0) -> arb:
    """Upper bound for sum_{n >= start} n^power * r^n with r = qabs < 1."""
    r = qabs
    ratio = r * arb(start + 1) ** power / arb(start) ** power if power else r
    if not ratio < 1:
        raise PrecisionExhausted("Lambert series tail does not contract")
    first = arb(start) ** power * r**start
    return first / (1 - ratio)


def _terms_needed(qabs: arb, prec: int) -> int:
    """A term count making |q|^N comfortably below 2^-prec."""
    lq = -float(qabs.log().upper()) / math.log(2)
    if lq <= 0:
        raise PrecisionExhausted("nome is not inside the unit disc")
    return int(prec / lq) + 8


def lattice_invariants(L: LatticeBasis) -> tuple[acb, acb]:
    """(g2, g3) of L from the q-expansions of E4 and E6."""
    prec = ctx.prec
    with working_precision(prec + 30):
        tau = L.tau
        qn = acb.exp_pi_i(2 * tau)
        qabs = abs(qn)
        N = _terms_needed(qabs, prec + 30)
        s3, s5 = acb(0), acb(0)
        qk = acb(1)
        for n in range(1, N):
            qk = qk * qn
            d3 = sum(d**3 for d in range(1, n + 1) if n % d == 0)
            d5 = sum(d**5 for d in range(1, n + 1) if n % d == 0)
            s3 += d3 * qk
            s5 += d5 * qk
        t3 = lambert_tail(qabs, N, 4)
        t5 = lambert_tail(qabs, N, 6)
        s3 = s3 + acb(arb(0, t3.upper()), arb(0, t3.upper()))
        s5 = s5 + acb(arb(0, t5.upper()), arb(0, t5.upper()))
        E4 = 1 + 240 * s3
        E6 = 1 - 504 * s5
        pi = arb.pi()
        g2 = 4 * pi**4 / (3 * L.w2**4) * E4
        g3 = 8 * pi**6 / (27 * L.w2**6) * E6
    return +g2, +g3


# ---------------------------------------------------------------------------
# Weierstrass functions


def _reduce_to_cell(u: acb, tau: acb) -> tuple[acb, int, int]:
    """Translate u by Z + Z tau so that |Im u| <= Im tau / 2 and |Re u| <= 1/2 roughly."""
    n = int(round(float(u.imag.mid()) / float(tau.imag.mid())))
    u = u - n * tau
    m = int(round(float(u.real.mid())))
    return u - m, m, n


def _wp_normalized(u: acb, tau: acb) -> tuple[acb, acb]:
    """(wp, wp') for the lattice Z + Z tau at u, with rigorous series tails."""
    prec = ctx.prec
    with working_precision(prec + 40):
        u, _, _ = _reduce_to_cell(u, tau)
        qn = acb.exp_pi_i(2 * tau)
        qabs = abs(qn)
        X = acb.exp_pi_i(2 * u)
        if (1 - X).contains(0):
            raise PoleAtLatticePoint("point lies on the lattice")
        N = _terms_needed(qabs, prec + 40)
        # bound on |q^n X| and |q^n / X| for n >= N
        xabs = abs(X)
        big = xabs if xabs > 1 / xabs else 1 / xabs
        s_p = X / (1 - X) ** 2
        s_d = X * (1 + X) / (1 - X) ** 3
        s_c = acb(0)
        qk = acb(1)
        for n in range(1, N):
            qk = qk * qn
            w = qk * X
            v = qk / X
            s_p += w / (1 - w) ** 2 + v / (1 - v) ** 2
            s_d += w * (1 + w) / (1 - w) ** 3 - v * (1 + v) / (1 - v) ** 3
            s_c += qk / (1 - qk) ** 2
        # tails: |w/(1-w)^2| <= |w|/(1-|w|)^2 and similar, with |w| <= big*|q|^n
        rN = big * qabs**N
        if not rN < arb(1) / 2:
            raise PrecisionExhausted("point too close to the edge of the cell")
        geo = 1 / (1 - qabs)
        tail_p = 2 * rN * geo * 4
        tail_d = 2 * rN * geo * 12
        tail_c = qabs**N * geo * 4
        s_p = s_p + _disc(tail_p)
        s_d = s_d + _disc(tail_d)
        s_c = s_c + _disc(tail_c)
        two_pi_i = acb(0, 2 * arb.pi())
        wp = two_pi_i**2 * (s_p + acb(1) / 12 - 2 * s_c)
        wpd = two_pi_i**3 * s_d
    return +wp, +wpd


def _disc(r: arb) -> acb:
    e = arb(0, r.upper())
    return acb(e, e)


def wp_eval(z: acb, L: LatticeBasis) -> tuple[acb, acb]:
    """(wp(z, L), wp'(z, L)) as certified balls at the current precision."""
    u = z / L.w2
    wp, wpd = _wp_normalized(u, L.tau)
    return wp / L.w2**2, wpd / L.w2**3


def wp_lattice_sum(z: complex, w1: complex, w2: complex, R: int) -> tuple[complex, complex]:
    """Plain truncated lattice sum for wp and wp' over |m|, |n| <= R (double precision).

    Slow and inaccurate; an independent reference for small tests only.
    """
    wp = 1 / z**2
    wpd = -2 / z**3
    for m in range(-R, R + 1):
        for n in range(-R, R + 1):
            if m == 0 and n == 0:
                continue
            w = m * w1 + n * w2
            wp += 1 / (z - w) ** 2 - 1 / w**2
            wpd += -2 / (z - w) ** 3
    return wp, wpd


def wp_taylor(z: acb, L: LatticeBasis, order: int, g2: acb | None = None) -> list[acb]:
    """Taylor coefficients a_0..a_order of wp(z + h) in h.

    From wp''=6wp^2 - g2/2: (n+2)(n+1) a_{n+2} = 6 sum_{i+j=n} a_i a_j - (g2/2)[n=0].
    """
    if g2 is None:
        g2, _ = lattice_invariants(L)
    wp, wpd = wp_eval(z, L)
    a = [wp, wpd]
    for n in range(0, order - 1):
        s = sum((a[i] * a[n - i] for i in range(n + 1)), acb(0))
        s = 6 * s
        if n == 0:
            s = s - g2 / 2
        a.append(s / ((n + 2) * (n + 1)))
    return a[: order + 1]


# ---------------------------------------------------------------------------
# Curve context


@lru_cache(maxsize=None)
def _lemniscate_period(prec: int) -> acb:
    with working_precision(prec):
        return acb(arb.pi() / arb(2).sqrt().agm(1))


def period_from_invariants(disc: int, g2, g3, hint: float | None = None) -> acb:
    """Omega with g2(Omega O_K) = g2 and g3(Omega O_K) = g3.

    Computed from the invariants of O_K itself by scaling: g2(c L) = c^-4 g2(L).
    A real positive Omega is chosen when available, else the one nearest the hint.
    """
    prec = ctx.prec
    with working_precision(prec + 20):
        tau = tau_acb(disc)
        L0 = LatticeBasis(tau, acb(1))
        G2, G3 = lattice_invariants(L0)
        g2 = acb(g2)
        g3 = acb(g3)
        if disc == -4:
            # g3 = 0; Omega^4 = G2/g2
            cands = _roots_of(G2 / g2, 4)
        elif disc == -3:
            cands = _roots_of(G3 / g3, 6)
        else:
            # Omega^2 = (G3/g3) / (G2/g2)
            cands = _roots_of((G3 / g3) / (G2 / g2), 2)
    real_pos = [c for c in cands if abs(float(c.imag.mid())) < 1e-30 and float(c.real.mid()) > 0]
    if real_pos:
        return +real_pos[0]
    if hint is not None:
        return +min(cands, key=lambda c: abs(complex(c.mid()) - hint))
    return +cands[0]


def _roots_of(x: acb, n: int) -> list[acb]:
    base = x.log() / n
    return [(base + acb(0, 2 * arb.pi() * k / n)).exp() for k in range(n)]


@dataclass(frozen=True)
class TorsionPoint:
    """The point z = r1*w1 + r2*w2 of C/L, coordinates taken mod 1."""

    r1: Fraction
    r2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "r1", Fraction(self.r1) % 1)
        object.__setattr__(self, "r2", Fraction(self.r2) % 1)

    def is_zero(self) -> bool:
        return self.r1 == 0 and self.r2 == 0

    def order(self) -> int:
        return math.lcm(self.r1.denominator, self.r2.denominator)

    def __add__(self, other: "TorsionPoint") -> "TorsionPoint":
        return TorsionPoint(self.r1 + other.r1, self.r2 + other.r2)

    def __neg__(self) -> "TorsionPoint":
        return TorsionPoint(-self.r1, -self.r2)

    def __sub__(self, other: "TorsionPoint") -> "TorsionPoint":
        return self + (-other)

    def __mul__(self, n: int) -> "TorsionPoint":
        return TorsionPoint(self.r1 * n, self.r2 * n)

    __rmul__ = __mul__

    @property
    def coords(self) -> tuple[Fraction, Fraction]:
        return (self.r1, self.r2)


INFINITY = TorsionPoint(Fraction(0), Fraction(0))


@dataclass(frozen=True)
class CMCurveCtx:
    """A CM curve y^2 = 4x^3 - g2 x - g3 over a class-number-one K with L = Omega O_K."""

    disc: int = -4
    g2: Fraction = Fraction(4)
    g3: Fraction = Fraction(0)
    conductor: QuadElem = QuadElem(2, 2, -4)
    q: int = 5
    p: int = 13
    omega_hint: float | None = None
    delta_twist: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.g2**3 - 27 * self.g3**2 == 0:
            raise ConfigError("singular curve: discriminant vanishes")
        if self.omega_hint is not None:
            om = complex(self.omega().mid())
            if abs(om - self.omega_hint) > 1e-10:
                raise ConfigError(f"period {om} does not match hint {self.omega_hint}")

    # field data
    @property
    def f(self) -> IdealK:
        return IdealK(self.conductor)

    @property
    def w_K(self) -> int:
        return len(units(self.disc))

    def phi(self, b: IdealK | QuadElem) -> QuadElem:
        """Normalized generator of b (the Hecke character of the curve)."""
        if isinstance(b, QuadElem):
            b = IdealK(b)
        return normalize_generator(b, self.f)

    def q_prime(self) -> QuadElem:
        """Generator of the prime above q singled out by the smallest root of tau's polynomial."""
        return prime_above(self.q, self.disc)

    def q_prime_conj(self) -> QuadElem:
        return self.q_prime().conj()

    def q_root(self, n: int, conj: bool = False) -> int:
        """The image of tau in O/Q^n = Z/q^n for Q the chosen prime (or its conjugate)."""
        s, nn = tau_minpoly(self.disc)
        r = split_prime_root(self.q, self.disc)
        if conj:
            r = (s - r) % self.q
        return _hensel_root([nn, -s, 1], r, self.q, n)

    def residue_pair(self, x: QuadElem, n: tuple[int, int] | int) -> tuple[int, int]:
        """(x mod Q^n1, x mod Q*^n2) in Z/q^n1 x Z/q^n2."""
        if isinstance(n, int):
            n = (n, n)
        r1 = self.q_root(max(n[0], 1))
        r2 = self.q_root(max(n[1], 1), conj=True)
        return ((x.a + x.b * r1) % self.q ** n[0], (x.a + x.b * r2) % self.q ** n[1])

    # lattice
    def omega(self) -> acb:
        return _omega_cached(self.disc, self.g2, self.g3, ctx.prec)

    def lattice(self) -> LatticeBasis:
        om = self.omega()
        return LatticeBasis(tau_acb(self.disc) * om, om)

    def invariants(self) -> tuple[acb, acb]:
        return acb(self.g2.numerator) / self.g2.denominator, acb(self.g3.numerator) / self.g3.denominator

    def z_of(self, P: TorsionPoint) -> acb:
        L = self.lattice()
        return (acb(P.r1.numerator) / P.r1.denominator) * L.w1 + (acb(P.r2.numerator) / P.r2.denominator) * L.w2

    def xy(self, P: TorsionPoint | acb) -> tuple[acb, acb]:
        z = self.z_of(P) if isinstance(P, TorsionPoint) else P
        if isinstance(P, TorsionPoint) and P.is_zero():
            raise PoleAtLatticePoint("the origin has no affine coordinates")
        return wp_eval(z, self.lattice())

    def weierstrass_residual(self, x: acb, y: acb) -> acb:
        g2, g3 = self.invariants()
        return y * y - (4 * x**3 - g2 * x - g3)

    # torsion and the O_K action
    def endo_matrix(self, mu: QuadElem) -> tuple[tuple[int, int], tuple[int, int]]:
        """Integer matrix of z -> mu z on lattice coordinates (r1, r2)."""
        s, n = tau_minpoly(self.disc)
        a, b = mu.a, mu.b
        # mu*w2 = a w2 + b w1 ; mu*w1 = (a + b s) w1 - b n w2
        return ((a + b * s, b), (-b * n, a))

    def endo_act(self, mu: QuadElem, P: TorsionPoint) -> TorsionPoint:
        (m11, m12), (m21, m22) = self.endo_matrix(mu)
        return TorsionPoint(m11 * P.r1 + m12 * P.r2, m21 * P.r1 + m22 * P.r2)

    def point_from_quad(self, x: QuadElem, den: int) -> TorsionPoint:
        """The point Omega * x / den."""
        return TorsionPoint(Fraction(x.b, den), Fraction(x.a, den))

    def idempotent(self, n: int) -> QuadElem:
        """e in O (coefficients mod q^n) with e = 1 mod Q^n and e = 0 mod Q*^n."""
        mod = self.q**n
        r, rc = self.q_root(n), self.q_root(n, conj=True)
        b = pow(r - rc, -1, mod)
        a = (-b * rc) % mod
        return QuadElem(a, b, self.disc)

    def eigen_generators(self, n: int) -> tuple[TorsionPoint, TorsionPoint]:
        """Generators of E[Q^n] and E[Q*^n], compatible under multiplication by q."""
        if n == 0:
            return INFINITY, INFINITY
        e = self.idempotent(n)
        one_minus = QuadElem(1 - e.a, -e.b, self.disc)
        P1 = self.point_from_quad(e, self.q**n) * self.delta_twist[0]
        P2 = self.point_from_quad(one_minus, self.q**n) * self.delta_twist[1]
        return P1, P2

    def delta(self, u: int, v: int, level: tuple[int, int]) -> TorsionPoint:
        """The torsion point attached to (zeta_{q^m}^u, zeta_{q^n}^v)."""
        P1, _ = self.eigen_generators(level[0])
        _, P2 = self.eigen_generators(level[1])
        return P1 * u + P2 * v

    def delta_inverse(self, P: TorsionPoint, level: tuple[int, int]) -> tuple[int, int]:
        """(u, v) with delta(u, v, level) = P, or ValueError when P is not in the image."""
        m, n = level
        A, B = self.q**m, self.q**n
        P1, _ = self.eigen_generators(m)
        _, P2 = self.eigen_generators(n)
        for u in range(A):
            R = P - P1 * u
            for v in range(B):
                if (P2 * v) == R:
                    return (u, v)
        raise ValueError("point is not in the chosen torsion subgroup")

    def torsion_points(self, N: int) -> list[TorsionPoint]:
        return [TorsionPoint(Fraction(a, N), Fraction(b, N)) for a in range(N) for b in range(N)]

    def torsion_point(self, r1, r2) -> TorsionPoint:
        P = TorsionPoint(Fraction(r1), Fraction(r2))
        for d in (P.r1.denominator, P.r2.denominator):
            while d % self.q == 0:
                d //= self.q
            if d != 1:
                raise ValueError("denominators must be powers of q")
        return P

    def apply_isogeny(self, b: IdealK, z: acb | TorsionPoint) -> tuple[acb, acb] | None:
        """xi_b(Lambda(b) z): in class number one L_b = L and the isogeny is z -> phi(b) z.

        Returns None for the point at infinity.
        """
        lam = self.phi(b)
        if isinstance(z, TorsionPoint):
            P = self.endo_act(lam, z)
            if P.is_zero():
                return None
            return self.xy(P)
        return wp_eval(lam.to_acb() * z, self.lattice())

    def isogeny_kernel(self, b: IdealK, N: int) -> list[TorsionPoint]:
        lam = self.phi(b)
        return [P for P in self.torsion_points(N) if self.endo_act(lam, P).is_zero()]

    # group law on (x, y) balls
    def add_xy(self, P: tuple[acb, acb] | None, Q: tuple[acb, acb] | None) -> tuple[acb, acb] | None:
        if P is None:
            return Q
        if Q is None:
            return P
        x1, y1 = P
        x2, y2 = Q
        if (x1 - x2).contains(0):
            if (y1 + y2).contains(0) and not (y1 - y2).contains(0):
                return None
            g2, _ = self.invariants()
            if (y1 + y2).contains(0):
                return None
            lam = (12 * x1 * x1 - g2) / (2 * y1)
        else:
            lam = (y2 - y1) / (x2 - x1)
        x3 = lam * lam / 4 - x1 - x2
        y3 = -(y1 + lam * (x3 - x1))
        return (x3, y3)

    def mul_xy(self, n: int, P: tuple[acb, acb] | None) -> tuple[acb, acb] | None:
        out = None
        base = P
        while n:
            if n & 1:
                out = self.add_xy(out, base)
            base = self.add_xy(base, base)
            n >>= 1
        return out

    # reduction
    def reduce_curve(self, ell: int, n: int = 1, r_cap: int = 24) -> "ReducedCurve":
        return ReducedCurve.build(self, ell, n, r_cap)


@lru_cache(maxsize=None)
def _omega_cached(disc: int, g2: Fraction, g3: Fraction, prec: int) -> acb:
    with working_precision(prec + 20):
        if disc == -4 and g2 == 4 and g3 == 0:
            om = _lemniscate_period(prec + 20)
        else:
            a2 = acb(g2.numerator) / g2.denominator
            a3 = acb(g3.numerator) / g3.denominator
            om = period_from_invariants(disc, a2, a3)
    return om


def reference_ctx(**kw) -> CMCurveCtx:
    return CMCurveCtx(**kw)


# ---------------------------------------------------------------------------
# Reduction modulo a prime


@dataclass
class ReducedCurve:
    """y^2 = 4x^3 - g2 x - g3 over F_{ell^r} with a basis of E[q^n] and O_K action."""

    ctx: CMCurveCtx
    ell: int
    r: int
    field: FiniteField
    n: int
    basis: tuple  # (P1, P2) points spanning E[q^n], P1 in E[Q^n], P2 in E[Q*^n]
    frobenius: QuadElem
    tau_image: int  # tau modulo the prime of reduction, in F_ell

    @classmethod
    def build(cls, cctx: CMCurveCtx, ell: int, n: int, r_cap: int) -> "ReducedCurve":
        q = cctx.q
        nf = cctx.f.norm()
        if ell % 2 == 0 or ell % 3 == 0 or nf % ell == 0 or ell == q:
            raise BadReduction(f"{ell} is not a prime of good reduction away from q")
        g2, g3 = cctx.g2, cctx.g3
        if (g2.denominator % ell == 0) or (g3.denominator % ell == 0):
            raise BadReduction("invariants not integral at ell")
        if (g2**3 - 27 * g3**2).numerator % ell == 0:
            raise BadReduction("discriminant vanishes mod ell")
        try:
            root = split_prime_root(ell, cctx.disc)
        except Exception as exc:
            raise BadReduction(f"{ell} is not split in K") from exc
        pi = cctx.phi(prime_above(ell, cctx.disc))
        # E[q^n] is rational over F_{ell^r} iff pi^r = 1 mod q^n
        mod = q**n
        r = 1
        x = pi
        while True:
            red = QuadElem(x.a - 1, x.b, cctx.disc)
            if red.a % mod == 0 and red.b % mod == 0:
                break
            r += 1
            if r > r_cap:
                raise TorsionNotRational(f"E[{q}^{n}] needs degree > {r_cap}")
            x = x * pi
        F = FiniteField(ell, r)
        curve = cls(cctx, ell, r, F, n, (None, None), pi, root)
        curve.basis = curve._eigenbasis()
        return curve

    # arithmetic on points (None is the identity)
    def a_coeffs(self):
        F = self.field
        g2 = F(self.ctx.g2.numerator) / F(self.ctx.g2.denominator)
        g3 = F(self.ctx.g3.numerator) / F(self.ctx.g3.denominator)
        return g2, g3

    def on_curve(self, P) -> bool:
        if P is None:
            return True
        g2, g3 = self.a_coeffs()
        x, y = P
        return y * y == 4 * x * x * x - g2 * x - g3

    def add(self, P, Q):
        if P is None:
            return Q
        if Q is None:
            return P
        F = self.field
        g2, _ = self.a_coeffs()
        x1, y1 = P
        x2, y2 = Q
        if x1 == x2:
            if y1 + y2 == F(0):
                return None
            lam = (12 * x1 * x1 - g2) / (2 * y1)
        else:
            lam = (y2 - y1) / (x2 - x1)
        x3 = lam * lam / 4 - x1 - x2
        y3 = -(y1 + lam * (x3 - x1))
        return (x3, y3)

    def neg(self, P):
        return None if P is None else (P[0], -P[1])

    def mul(self, n: int, P):
        if n < 0:
            return self.mul(-n, self.neg(P))
        out, base = None, P
        while n:
            if n & 1:
                out = self.add(out, base)
            base = self.add(base, base)
            n >>= 1
        return out

    def order_count(self) -> int:
        """#E(F_{ell^r}) = N(1 - pi^r)."""
        x = self.frobenius**self.r
        return QuadElem(1 - x.a, -x.b, self.ctx.disc).norm()

    def endo_act(self, mu: QuadElem, P):
        """Action of mu = a + b*tau in O_K."""
        if P is None:
            return None
        a, b = mu.a, mu.b
        return self.add(self.mul(a, P), self.mul(b, self.tau_act(P)))

    def tau_act(self, P):
        """The endomorphism tau on the reduced curve (class-number-one CM by O_K)."""
        if P is None:
            return None
        disc = self.ctx.disc
        F = self.field
        t = F(self.tau_image)
        x, y = P
        if disc == -4:
            # [i](x, y) = (-x, i y) with i -> tau_image modulo the chosen prime
            return (-x, t * y)
        raise BadReduction("the reduced O_K action is implemented for Q(i) only")

    def _eigenbasis(self):
        """Points P1, P2 of exact order q^n with P1 killed by Q^n and P2 by Q*^n."""
        q, n = self.ctx.q, self.n
        total = self.order_count()
        cof = total
        while cof % q == 0:
            cof //= q
        nu = self.ctx.q_prime()
        nu_c = self.ctx.q_prime_conj()
        nu_n = nu**n
        nu_c_n = nu_c**n
        found = [None, None]
        for P in self.field.iter_points(self):
            T = self.mul(cof, P)
            if T is None:
                continue
            # project: nu_c^N kills the Q*-part; repeat to reach exact order q^n
            big = total // cof
            A = self.endo_act(nu_c**(_vq(big, q)), T)
            B = self.endo_act(nu**(_vq(big, q)), T)
            for idx, R, ann in ((0, A, nu_n), (1, B, nu_c_n)):
                if found[idx] is not None or R is None:
                    continue
                # scale R down to order exactly q^n inside E[Q^n] (or E[Q*^n])
                while True:
                    S = self.endo_act(ann, R)
                    if S is None:
                        break
                    R = self.endo_act(nu if idx == 0 else nu_c, R)
                if self._exact_order(R, q**n):
                    found[idx] = R
            if found[0] is not None and found[1] is not None:
                return tuple(found)
        raise TorsionNotRational("could not find a basis of E[q^n]")

    def _exact_order(self, R, N: int) -> bool:
        if R is None or self.mul(N, R) is not None:
            return False
        q = self.ctx.q
        return self.mul(N // q, R) is not None

    def torsion(self) -> dict[tuple[int, int], object]:
        """All points a*P1 + b*P2 of E[q^n], keyed by (a, b)."""
        P1, P2 = self.basis
        N = self.ctx.q**self.n
        rows = {}
        A = None
        for a in range(N):
            B = A
            for b in range(N):
                rows[(a, b)] = B
                B = self.add(B, P2)
            A = self.add(A, P1)
        return rows

    def action_matrices(self, mu: QuadElem) -> tuple[int, int]:
        """mu acts diagonally on (P1, P2) by (mu mod Q^n, mu mod Q*^n)."""
        return self.ctx.residue_pair(mu, self.n)


def _vq(n: int, q: int) -> int:
    v = 0
    while n % q == 0:
        n //= q
        v += 1
    return v
