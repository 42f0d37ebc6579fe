"""Exact arithmetic in class-number-one imaginary quadratic orders, cyclotomic
fields, ball helpers and p-adic valuations.

Complex balls are python-flint ``acb`` values; the helpers here add the few
operations the rest of the package needs (radius bounds, precision contexts,
recognition of balls as cyclotomic numbers).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import mpmath
import numpy as np
from flint import acb, acb_mat, arb, ctx

SUPPORTED_DISCS = (-3, -4, -7, -8, -11, -19, -43, -67, -163)

DEFAULT_PREC = 256
MAX_PREC = 4096


class HeckeLabError(Exception):
    """Base class for errors raised by this package."""


class NoNormalizedGenerator(HeckeLabError):
    pass


class NotCoprime(HeckeLabError):
    pass


class AmbiguousPrime(HeckeLabError):
    pass


class RecognitionFailed(HeckeLabError):
    pass


class PrecisionExhausted(HeckeLabError):
    pass


# ---------------------------------------------------------------------------
# Quadratic orders


def _check_disc(disc: int) -> None:
    if disc not in SUPPORTED_DISCS:
        raise ValueError(f"unsupported discriminant {disc}; class number one fields only")


@dataclass(frozen=True)
class QuadElem:
    """The element a + b*tau of O_K, where tau = sqrt(d/4) or (1+sqrt(d))/2."""

    a: int
    b: int
    disc: int = -4

    def __post_init__(self):
        _check_disc(self.disc)

    @classmethod
    def from_int(cls, n: int, disc: int = -4) -> "QuadElem":
        return cls(int(n), 0, disc)

    def _coerce(self, other) -> "QuadElem":
        if isinstance(other, QuadElem):
            if other.disc != self.disc:
                raise ValueError("elements of different fields")
            return other
        if isinstance(other, int):
            return QuadElem(other, 0, self.disc)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return QuadElem(self.a + other.a, self.b + other.b, self.disc)

    __radd__ = __add__

    def __neg__(self):
        return QuadElem(-self.a, -self.b, self.disc)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return QuadElem(self.a - other.a, self.b - other.b, self.disc)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b, c, d = self.a, self.b, other.a, other.b
        if self.disc % 4 == 0:
            t2 = self.disc // 4
            return QuadElem(a * c + b * d * t2, a * d + b * c, self.disc)
        # tau^2 = tau + (d-1)/4
        t0 = (self.disc - 1) // 4
        return QuadElem(a * c + b * d * t0, a * d + b * c + b * d, self.disc)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "QuadElem":
        if n < 0:
            raise ValueError("negative powers are not integral")
        result = QuadElem(1, 0, self.disc)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def conj(self) -> "QuadElem":
        if self.disc % 4 == 0:
            return QuadElem(self.a, -self.b, self.disc)
        return QuadElem(self.a + self.b, -self.b, self.disc)

    def norm(self) -> int:
        n = self * self.conj()
        assert n.b == 0
        return n.a

    def trace(self) -> int:
        return (self + self.conj()).a

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def divides(self, other: "QuadElem") -> bool:
        if self.is_zero():
            return other.is_zero()
        num = other * self.conj()
        n = self.norm()
        return num.a % n == 0 and num.b % n == 0

    def exact_div(self, other: "QuadElem") -> "QuadElem":
        """self / other, which must lie in O_K."""
        num = self * other.conj()
        n = other.norm()
        if num.a % n or num.b % n:
            raise ArithmeticError(f"{other} does not divide {self}")
        return QuadElem(num.a // n, num.b // n, self.disc)

    def is_unit(self) -> bool:
        return abs(self.norm()) == 1

    def complex(self) -> complex:
        return complex(self.to_acb().mid())

    def to_acb(self) -> acb:
        return self.a + self.b * tau_acb(self.disc)

    def coords(self) -> tuple[int, int]:
        return (self.a, self.b)

    def __repr__(self) -> str:
        sym = "i" if self.disc == -4 else "t"
        return f"({self.a}{self.b:+d}{sym})"


def tau_acb(disc: int) -> acb:
    if disc % 4 == 0:
        return acb(0, arb(-disc // 4).sqrt())
    return (1 + acb(0, arb(-disc).sqrt())) / 2


def tau_minpoly(disc: int) -> tuple[int, int]:
    """Coefficients (s, n) with tau^2 - s*tau + n = 0."""
    if disc % 4 == 0:
        return (0, -disc // 4)
    return (1, (1 - disc) // 4)


def units(disc: int) -> list[QuadElem]:
    _check_disc(disc)
    if disc == -4:
        return [QuadElem(1, 0, -4), QuadElem(0, 1, -4), QuadElem(-1, 0, -4), QuadElem(0, -1, -4)]
    if disc == -3:
        # tau = (1+sqrt(-3))/2 is a primitive 6th root of unity
        t = QuadElem(0, 1, -3)
        return [t**k for k in range(6)]
    return [QuadElem(1, 0, disc), QuadElem(-1, 0, disc)]


def num_units(disc: int) -> int:
    return len(units(disc))


def _hnf2(vectors: Iterable[tuple[int, int]]) -> tuple[int, int, int]:
    """Hermite form (d1, c, d2) of the Z-lattice spanned by 2-vectors.

    The lattice is {x*(d1, c) + y*(0, d2)}; returns (0, 0, 0) pieces for
    degenerate input.
    """
    vecs = [v for v in vectors if v != (0, 0)]
    # gcd on the first coordinate
    d1, c = 0, 0
    rest = []
    for (x, y) in vecs:
        if x == 0:
            rest.append(y)
            continue
        if d1 == 0:
            d1, c = x, y
            continue
        g, s, t = _xgcd(d1, x)
        # new pivot row s*(d1,c) + t*(x,y); the eliminated row goes to rest
        newc = s * c + t * y
        rest.append((x // g) * c - (d1 // g) * y)
        d1, c = g, newc
    if d1 < 0:
        d1, c = -d1, -c
    d2 = 0
    for y in rest:
        d2 = math.gcd(d2, y)
    if d2:
        c %= d2
    return d1, c, d2


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        qt, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - qt * x1
        y0, y1 = y1, y0 - qt * y1
    return a, x0, y0


@dataclass(frozen=True)
class IdealK:
    """A (principal) ideal of O_K given by a generator."""

    gen: QuadElem
    normalized: bool = False

    def __post_init__(self):
        if self.gen.is_zero():
            raise ValueError("the zero ideal is not supported")

    @property
    def disc(self) -> int:
        return self.gen.disc

    def norm(self) -> int:
        return abs(self.gen.norm())

    def __mul__(self, other: "IdealK") -> "IdealK":
        return IdealK(self.gen * other.gen)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IdealK):
            return NotImplemented
        return self.gen.divides(other.gen) and other.gen.divides(self.gen)

    def __hash__(self) -> int:
        return hash((self.norm(), self.residues_hnf()))

    def contains(self, x: QuadElem) -> bool:
        return self.gen.divides(x)

    def divides(self, other: "IdealK") -> bool:
        return self.gen.divides(other.gen)

    def residues_hnf(self) -> tuple[int, int, int]:
        g = self.gen
        gt = g * QuadElem(0, 1, g.disc)
        return _hnf2([g.coords(), gt.coords()])

    def reduce(self, x: QuadElem) -> QuadElem:
        """Canonical representative of x modulo this ideal."""
        d1, c, d2 = self.residues_hnf()
        a, b = x.a, x.b
        k = a // d1
        a -= k * d1
        b -= k * c
        b %= d2
        return QuadElem(a, b, x.disc)

    def congruent(self, x: QuadElem, y: QuadElem) -> bool:
        return self.gen.divides(x - y)

    def residues(self) -> list[QuadElem]:
        d1, _, d2 = self.residues_hnf()
        return [QuadElem(a, b, self.disc) for a in range(d1) for b in range(d2)]

    def unit_residues(self) -> list[QuadElem]:
        return [r for r in self.residues() if gcd_norm(r, self.gen) == 1]

    def __repr__(self) -> str:
        return f"IdealK{self.gen!r}"


def gcd_norm(x: QuadElem, y: QuadElem) -> int:
    """Norm of the ideal (x) + (y)."""
    t = QuadElem(0, 1, x.disc)
    d1, _, d2 = _hnf2([x.coords(), (x * t).coords(), y.coords(), (y * t).coords()])
    if d1 == 0 or d2 == 0:
        return 0
    return d1 * d2


def coprime(a: IdealK | None, b: IdealK) -> bool:
    if a is None:
        return b.norm() == 1
    return gcd_norm(a.gen, b.gen) == 1


def normalize_generator(b: IdealK, f: IdealK) -> QuadElem:
    """The generator of b congruent to 1 modulo f."""
    if not coprime(b, f):
        raise NotCoprime(f"{b} is not coprime to {f}")
    one = QuadElem(1, 0, b.disc)
    hits = [u * b.gen for u in units(b.disc) if f.congruent(u * b.gen, one)]
    if not hits:
        raise NoNormalizedGenerator(f"no unit multiple of {b.gen} is 1 mod {f.gen}")
    if len(hits) > 1:
        raise NoNormalizedGenerator(f"modulus {f.gen} does not separate the units")
    return hits[0]


def split_prime_root(p: int, disc: int) -> int:
    """Smallest r in [0, p) with tau = r mod a prime above p (p split in K)."""
    s, n = tau_minpoly(disc)
    roots = [r for r in range(p) if (r * r - s * r + n) % p == 0]
    if len(roots) != 2:
        raise AmbiguousPrime(f"{p} is not split in Q(sqrt({disc}))")
    return roots[0]


def prime_above(p: int, disc: int) -> QuadElem:
    """Generator of the prime (p, tau - r) for the smallest root r."""
    r = split_prime_root(p, disc)
    target = QuadElem(-r, 1, disc)
    pe = QuadElem(p, 0, disc)
    # search a generator of norm p dividing both p and tau - r
    bound = int(math.isqrt(4 * p)) + 2
    for a in range(-bound, bound + 1):
        for b in range(-bound, bound + 1):
            x = QuadElem(a, b, disc)
            if x.norm() == p and x.divides(pe) and gcd_norm(x, target) == p:
                return x
    raise AmbiguousPrime(f"no generator found for a prime above {p}")


# ---------------------------------------------------------------------------
# Cyclotomic fields


@lru_cache(maxsize=None)
def euler_phi(n: int) -> int:
    result = n
    m = n
    d = 2
    while d * d <= m:
        if m % d == 0:
            while m % d == 0:
                m //= d
            result -= result // d
        d += 1
    if m > 1:
        result -= result // m
    return result


def _poly_divexact(num: list[int], den: list[int]) -> list[int]:
    """Exact division of integer polynomials (coefficients low degree first)."""
    num = list(num)
    out = [0] * (len(num) - len(den) + 1)
    lead = den[-1]
    for i in range(len(out) - 1, -1, -1):
        c = num[i + len(den) - 1] // lead
        out[i] = c
        for j, d in enumerate(den):
            num[i + j] -= c * d
    assert all(v == 0 for v in num[: len(den) - 1])
    return out


@lru_cache(maxsize=None)
def cyclotomic_poly(n: int) -> tuple[int, ...]:
    """Coefficients of the n-th cyclotomic polynomial, low degree first."""
    poly = [-1] + [0] * (n - 1) + [1]
    for d in range(1, n):
        if n % d == 0:
            poly = _poly_divexact(poly, list(cyclotomic_poly(d)))
    return tuple(poly)


@lru_cache(maxsize=None)
def _power_table(n: int) -> np.ndarray:
    """Row k holds the power-basis coordinates of zeta_n^k, 0 <= k < n."""
    phi = euler_phi(n)
    cp = cyclotomic_poly(n)
    rows = []
    cur = [0] * phi
    cur[0] = 1
    for _ in range(n):
        rows.append(list(cur))
        # multiply by x and reduce by the monic cyclotomic polynomial
        top = cur[-1] if phi else 0
        nxt = [0] + cur[:-1]
        if phi:
            for j in range(phi):
                nxt[j] -= top * cp[j]
        cur = nxt
    table = np.array(rows, dtype=object)
    if phi and max(abs(int(v)) for v in table.flat) < 2**31:
        table = table.astype(np.int64)
    return table


def _as_object(v) -> np.ndarray:
    return np.asarray(v, dtype=object)


def reduce_dense(n: int, vec: Sequence[int]) -> tuple[int, ...]:
    """Power-basis coordinates of sum_k vec[k] zeta_n^k (indices taken mod n)."""
    vec = list(vec)
    folded = [0] * n
    for k, c in enumerate(vec):
        if c:
            folded[k % n] += c
    table = _power_table(n)
    out = _as_object(folded).dot(table.astype(object))
    return tuple(int(v) for v in out)


def dense_from_coeffs(n: int, coeffs: Sequence[int]) -> list[int]:
    out = [0] * n
    for k, c in enumerate(coeffs):
        out[k] = c
    return out


def _normalize_fraction_vector(num: Sequence[int], den: int) -> tuple[tuple[int, ...], int]:
    if den == 0:
        raise ZeroDivisionError("zero denominator")
    if den < 0:
        num = [-v for v in num]
        den = -den
    g = den
    for v in num:
        g = math.gcd(g, v)
        if g == 1:
            break
    if g > 1:
        num = [v // g for v in num]
        den //= g
    return tuple(int(v) for v in num), int(den)


class CycElem:
    """Element of Q(zeta_N) in the power basis 1, zeta, ..., zeta^(phi(N)-1).

    Stored as integer numerators over one positive common denominator.  The
    chosen embedding is zeta_N -> exp(2 pi i / N).
    """

    __slots__ = ("order", "num", "den")

    def __init__(self, order: int, num: Sequence[int], den: int = 1):
        if order < 1:
            raise ValueError("order must be positive")
        if len(num) != euler_phi(order):
            raise ValueError("coefficient vector has the wrong length")
        self.order = int(order)
        self.num, self.den = _normalize_fraction_vector([int(v) for v in num], int(den))

    # constructors
    @classmethod
    def from_rational(cls, x, order: int = 1) -> "CycElem":
        x = Fraction(x)
        num = [0] * euler_phi(order)
        num[0] = x.numerator
        return cls(order, num, x.denominator)

    @classmethod
    def zero(cls, order: int = 1) -> "CycElem":
        return cls(order, [0] * euler_phi(order), 1)

    @classmethod
    def one(cls, order: int = 1) -> "CycElem":
        return cls.from_rational(1, order)

    @classmethod
    def root_of_unity(cls, order: int, k: int = 1) -> "CycElem":
        return cls(order, list(_power_table(order)[k % order]), 1)

    @classmethod
    def from_dense(cls, order: int, vec: Sequence[int], den: int = 1) -> "CycElem":
        return cls(order, reduce_dense(order, vec), den)

    @classmethod
    def from_fractions(cls, order: int, coeffs: Sequence) -> "CycElem":
        fr = [Fraction(c) for c in coeffs]
        den = 1
        for f in fr:
            den = den * f.denominator // math.gcd(den, f.denominator)
        return cls(order, [int(f * den) for f in fr], den)

    # structure
    @property
    def coeffs(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(v, self.den) for v in self.num)

    def dense(self) -> list[int]:
        return dense_from_coeffs(self.order, self.num)

    def lift(self, order: int) -> "CycElem":
        if order % self.order:
            raise ValueError(f"cannot lift Q(zeta_{self.order}) into Q(zeta_{order})")
        if order == self.order:
            return self
        step = order // self.order
        vec = [0] * order
        for k, c in enumerate(self.num):
            vec[k * step] += c
        return CycElem.from_dense(order, vec, self.den)

    def _common(self, other) -> tuple["CycElem", "CycElem"]:
        if not isinstance(other, CycElem):
            other = CycElem.from_rational(Fraction(other), self.order)
        if other.order == self.order:
            return self, other
        m = self.order * other.order // math.gcd(self.order, other.order)
        return self.lift(m), other.lift(m)

    def is_zero(self) -> bool:
        return all(v == 0 for v in self.num)

    def __eq__(self, other) -> bool:
        if not isinstance(other, (CycElem, int, Fraction)):
            return NotImplemented
        a, b = self._common(other)
        return a.den == b.den and a.num == b.num

    __hash__ = None

    def __add__(self, other):
        if not isinstance(other, (CycElem, int, Fraction)):
            return NotImplemented
        a, b = self._common(other)
        den = a.den * b.den // math.gcd(a.den, b.den)
        fa, fb = den // a.den, den // b.den
        return CycElem(a.order, [x * fa + y * fb for x, y in zip(a.num, b.num)], den)

    __radd__ = __add__

    def __neg__(self):
        return CycElem(self.order, [-v for v in self.num], self.den)

    def __sub__(self, other):
        return self + (-other if isinstance(other, CycElem) else -Fraction(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            fr = Fraction(other)
            return CycElem(self.order, [v * fr.numerator for v in self.num], self.den * fr.denominator)
        if not isinstance(other, CycElem):
            return NotImplemented
        a, b = self._common(other)
        prod = np.convolve(_as_object(a.num), _as_object(b.num))
        return CycElem.from_dense(a.order, [int(v) for v in prod], a.den * b.den)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "CycElem":
        if n < 0:
            return self.inverse() ** (-n)
        result = CycElem.one(self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def conjugates_product_excluding_self(self) -> "CycElem":
        prod = CycElem.one(self.order)
        for t in range(2, self.order):
            if math.gcd(t, self.order) == 1:
                prod = prod * self.galois(t)
        return prod

    def inverse(self) -> "CycElem":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero")
        others = self.conjugates_product_excluding_self()
        return others / self.norm_to_q()

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            fr = Fraction(other)
            return CycElem(self.order, [v * fr.denominator for v in self.num], self.den * fr.numerator)
        return self * other.inverse()

    def rational_value(self) -> Fraction | None:
        if all(v == 0 for v in self.num[1:]):
            return Fraction(self.num[0], self.den)
        return None

    def galois(self, t: int) -> "CycElem":
        """Image under zeta_N -> zeta_N^t (t coprime to N)."""
        if math.gcd(t, self.order) != 1:
            raise ValueError("t must be coprime to the order")
        vec = [0] * self.order
        for k, c in enumerate(self.num):
            vec[(k * t) % self.order] += c
        return CycElem.from_dense(self.order, vec, self.den)

    def complex_conj(self) -> "CycElem":
        return self.galois(-1 % self.order) if self.order > 2 else self

    def norm_to_q(self) -> Fraction:
        n = self * self.conjugates_product_excluding_self()
        r = n.rational_value()
        assert r is not None
        return r

    def embed(self, prec: int | None = None) -> acb:
        """Complex ball under zeta_N -> exp(2 pi i/N)."""
        with working_precision(prec or ctx.prec):
            z = acb(0)
            for k, c in enumerate(self.num):
                if c:
                    z += c * acb.exp_pi_i(acb(2 * k) / self.order)
            return z / self.den

    def to_json(self) -> dict:
        fr = self.coeffs
        return {
            "order": self.order,
            "num": [f.numerator for f in fr],
            "den": [f.denominator for f in fr],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CycElem":
        return cls.from_fractions(
            int(obj["order"]), [Fraction(int(n), int(d)) for n, d in zip(obj["num"], obj["den"])]
        )

    def __repr__(self) -> str:
        terms = []
        for k, c in enumerate(self.coeffs):
            if c:
                terms.append(f"{c}" if k == 0 else f"{c}*z{self.order}^{k}")
        return "CycElem(" + (" + ".join(terms) or "0") + ")"


# ---------------------------------------------------------------------------
# Ball helpers


@contextmanager
def working_precision(bits: int):
    old = ctx.prec
    ctx.prec = int(bits)
    try:
        yield
    finally:
        ctx.prec = old


def ball(re, im=0, rad: float = 0.0) -> acb:
    z = acb(re, im)
    if rad:
        z = z + acb(arb(0, rad), arb(0, rad))
    return z


def radius(z: acb) -> float:
    """Upper bound for the distance from the midpoint of z to any point of z."""
    return float(abs(z.real.rad()) + abs(z.imag.rad()))


def contains_zero(z: acb) -> bool:
    return z.contains(acb(0))


def add_error(z: acb, err) -> acb:
    """Inflate z by a complex disc of radius err (err an arb upper bound)."""
    r = arb(err).abs_upper()
    e = arb(0, r)
    return z + acb(e, e)


def _arb_state(x: arb) -> tuple[int, int, int, int]:
    m, e = x.mid().man_exp()
    r, f = x.rad().man_exp()
    return int(m), int(e), int(r), int(f)


def _arb_from_state(s: tuple[int, int, int, int]) -> arb:
    m, e, r, f = s
    return arb(arb(m) * arb(2) ** e, arb(r) * arb(2) ** f)


def acb_state(z: acb) -> tuple:
    """Exact integer encoding of a ball, for passing between processes."""
    return _arb_state(z.real), _arb_state(z.imag)


def acb_from_state(s: tuple) -> acb:
    return acb(_arb_from_state(s[0]), _arb_from_state(s[1]))


def certify_overlap(a: acb, b: acb) -> bool:
    return a.overlaps(b)


def mag(z: acb) -> float:
    return float(abs(z).upper())


def escalate(compute, accept, start: int = DEFAULT_PREC, cap: int = MAX_PREC):
    """Run compute(prec) with doubling precision until accept(result) holds."""
    prec = start
    last = None
    while prec <= cap:
        with working_precision(prec):
            last = compute(prec)
        if accept(last):
            return last
        prec *= 2
    raise PrecisionExhausted(f"no acceptable result up to {cap} bits")


# ---------------------------------------------------------------------------
# Valuations


def vp_int(n: int, p: int) -> float | int:
    if n == 0:
        return math.inf
    v = 0
    n = abs(n)
    while n % p == 0:
        n //= p
        v += 1
    return v


def vp_fraction(x: Fraction, p: int):
    x = Fraction(x)
    if x == 0:
        return math.inf
    return vp_int(x.numerator, p) - vp_int(x.denominator, p)


def _hensel_root(poly: Sequence[int], r: int, p: int, k: int) -> int:
    """Lift a simple root r of poly mod p to a root mod p^k (low-degree-first coeffs)."""
    mod = p
    root = r % p
    deriv = [i * c for i, c in enumerate(poly)][1:]
    while mod < p**k:
        mod = min(mod * mod, p**k)
        fval = sum(c * pow(root, i, mod) for i, c in enumerate(poly)) % mod
        dval = sum(c * pow(root, i, mod) for i, c in enumerate(deriv)) % mod
        root = (root - fval * pow(dval, -1, mod)) % mod
    return root


def tau_in_cyclotomic(disc: int, order: int) -> CycElem | None:
    """tau_K as an element of Q(zeta_order) under the standard embeddings, if K lies inside."""
    if disc == -4 and order % 4 == 0:
        return CycElem.root_of_unity(order, order // 4)
    if disc == -3 and order % 3 == 0:
        # (1 + sqrt(-3))/2 = 1 + zeta_3
        return CycElem.one(order) + CycElem.root_of_unity(order, order // 3)
    if disc == -8 and order % 8 == 0:
        z = CycElem.root_of_unity(order, order // 8)
        return z + z**3
    return None


@dataclass(frozen=True)
class PrimeContext:
    """A split prime p of K, the prime P = (p, tau - r) above it, and for each
    cyclotomic order N a compatible prime of Q(zeta_N) above P."""

    p: int
    disc: int = -4

    @property
    def tau_root(self) -> int:
        return split_prime_root(self.p, self.disc)

    def prime_gen(self) -> QuadElem:
        return prime_above(self.p, self.disc)

    def val_quad(self, x: QuadElem, k: int = 8) -> float | int:
        """Valuation of x in O_K at the chosen prime above p."""
        if x.is_zero():
            return math.inf
        s, n = tau_minpoly(self.disc)
        while True:
            r = _hensel_root([n, -s, 1], self.tau_root, self.p, k)
            val = (x.a + x.b * r) % self.p**k
            if val:
                return vp_int(val, self.p)
            k *= 2

    @lru_cache(maxsize=None)
    def cyclotomic_factor(self, order: int) -> tuple[int, ...]:
        """Monic factor of Phi_order mod p defining the chosen prime of Q(zeta_order)."""
        from sympy.polys.domains import ZZ
        from sympy.polys.galoistools import gf_factor_sqf

        if order % self.p == 0:
            raise AmbiguousPrime("p divides the cyclotomic order; ramified case unsupported")
        cp = list(reversed(cyclotomic_poly(order)))  # high degree first
        _, factors = gf_factor_sqf([ZZ(c) for c in cp], self.p, ZZ)
        factors = [tuple(int(c) for c in f) for f in factors]
        tau_c = tau_in_cyclotomic(self.disc, order)
        if tau_c is not None:
            r = self.tau_root
            ok = []
            for f in factors:
                low = list(reversed(f))
                res = _reduce_mod_poly([v * pow(tau_c.den, -1, self.p) for v in tau_c.num], low, self.p)
                if all((v - (r if i == 0 else 0)) % self.p == 0 for i, v in enumerate(res + [0])):
                    ok.append(f)
            factors = ok
        if not factors:
            raise AmbiguousPrime("no prime of the cyclotomic field lies above the chosen prime")
        return min(factors)

    def lifted_factor(self, order: int, k: int) -> list[int]:
        from sympy.polys.domains import ZZ
        from sympy.polys.factortools import dup_zz_hensel_lift
        from sympy.polys.galoistools import gf_factor_sqf

        cp = [ZZ(c) for c in reversed(cyclotomic_poly(order))]
        _, factors = gf_factor_sqf(cp, self.p, ZZ)
        chosen = list(self.cyclotomic_factor(order))
        idx = [tuple(int(c) for c in f) for f in factors].index(tuple(chosen))
        if len(factors) == 1:
            return [int(c) for c in reversed(cyclotomic_poly(order))]
        lifted = dup_zz_hensel_lift(ZZ(self.p), cp, factors, k, ZZ)
        return [int(c) for c in lifted[idx]]

    def residue_degree(self, order: int) -> int:
        return len(self.cyclotomic_factor(order)) - 1

    def val_cyc(self, x: CycElem, k: int = 6) -> float | int:
        """Valuation of x at the chosen prime of Q(zeta_N) (ord(p) = 1)."""
        if x.is_zero():
            return math.inf
        dval = vp_int(x.den, self.p)
        while True:
            f = list(reversed(self.lifted_factor(x.order, k)))
            mod = self.p**k
            red = _reduce_mod_poly(list(x.num), f, mod)
            vals = [vp_int(v % mod, self.p) for v in red if v % mod]
            if vals:
                return min(vals) - dval
            k *= 2

    def reduce_cyc(self, x: CycElem) -> tuple[int, ...]:
        """Image of an integral element in the residue field (coefficients mod p)."""
        if vp_int(x.den, self.p) > 0:
            raise ValueError("element is not integral at p")
        f = list(reversed(self.cyclotomic_factor(x.order)))
        inv = pow(x.den, -1, self.p)
        return tuple(v % self.p for v in _reduce_mod_poly([v * inv for v in x.num], f, self.p))


def _reduce_mod_poly(num: list[int], monic_low: list[int], mod: int) -> list[int]:
    """Remainder of num modulo a monic polynomial (both low degree first), coefficients mod `mod`."""
    num = [v % mod for v in num]
    deg = len(monic_low) - 1
    for i in range(len(num) - 1, deg - 1, -1):
        c = num[i]
        if c:
            for j in range(deg + 1):
                num[i - deg + j] = (num[i - deg + j] - c * monic_low[j]) % mod
    out = num[:deg] + [0] * max(0, deg - len(num))
    return out


def cyc_valuation(x: CycElem, pctx: PrimeContext):
    return pctx.val_cyc(x)


# ---------------------------------------------------------------------------
# Recognition


def _rationalize(b: arb, den_bound: int) -> Fraction | None:
    # two fractions with denominators <= D differ by at least 1/D^2, so a
    # ball narrower than that holds at most one of them
    if b.rad() * 2 * den_bound**2 >= 1:
        return None
    # high precision decimal midpoint for the continued fraction
    s = b.mid().str(max(30, int(ctx.prec * 0.3)), radius=False)
    try:
        mid = Fraction(s)
    except ValueError:
        mid = Fraction(mpmath.mpf(s))
    cand = mid.limit_denominator(den_bound)
    if b.contains(arb(cand.numerator) / cand.denominator) or abs(float(mid - cand)) <= float(b.rad()):
        return cand
    return None


def recognize_cyclotomic(
    z: acb,
    order: int,
    den_bound: int,
    conjugates: dict[int, acb] | None = None,
) -> CycElem:
    """Find x in Q(zeta_order) with denominators <= den_bound whose embedding meets z.

    With ``conjugates`` (images under every zeta -> zeta^t, t coprime to the
    order) the coordinates come from a linear solve.  Without them only fields
    of degree <= 2 are solved directly; larger fields fall back to an integer
    relation search.  Every returned value is re-embedded and checked.
    """
    phi = euler_phi(order)
    if conjugates is not None:
        ts = sorted(t for t in range(1, order + 1) if math.gcd(t, order) == 1)
        ts = [t % order for t in ts]
        if order == 1:
            ts = [0]
        mat = acb_mat(phi, phi)
        rhs = acb_mat(phi, 1)
        for row, t in enumerate(ts):
            val = z if t % order == 1 % order else conjugates[t if t else order]
            for col in range(phi):
                mat[row, col] = acb.exp_pi_i(acb(2 * ((t * col) % order)) / order)
            rhs[row, 0] = val
        try:
            sol = mat.solve(rhs)
        except ZeroDivisionError as exc:  # singular at this precision
            raise RecognitionFailed(str(exc)) from exc
        coeffs = []
        for i in range(phi):
            c = sol[i, 0]
            if not c.imag.contains(0) and abs(float(c.imag.mid())) > 1e-6:
                raise RecognitionFailed("non-real coordinate in power basis")
            r = _rationalize(c.real, den_bound)
            if r is None:
                raise RecognitionFailed("coordinate not near a small-denominator rational")
            coeffs.append(r)
        x = CycElem.from_fractions(order, coeffs)
        checks = {1 % order: z, **(conjugates or {})}
        for t, val in checks.items():
            tt = t % order if order > 1 else 0
            if order > 1 and not x.galois(tt or order).embed().overlaps(val):
                raise RecognitionFailed("re-embedding does not meet the supplied conjugate")
        return x

    if phi <= 2:
        if phi == 1:
            if not z.imag.contains(0) and abs(float(z.imag.mid())) > radius(z) + 1e-30:
                raise RecognitionFailed("value is not real")
            r = _rationalize(z.real, den_bound)
            if r is None:
                raise RecognitionFailed("no rational candidate")
            x = CycElem.from_rational(r, order)
        else:
            zeta = acb.exp_pi_i(acb(2) / order)
            c1 = z.imag / zeta.imag
            c0 = z.real - c1 * zeta.real
            r0, r1 = _rationalize(c0, den_bound), _rationalize(c1, den_bound)
            if r0 is None or r1 is None:
                raise RecognitionFailed("no rational candidate")
            x = CycElem.from_fractions(order, [r0, r1])
        if not x.embed().overlaps(z):
            raise RecognitionFailed("re-embedding does not meet the ball")
        return x

    # integer relation search over a real projection of the power basis
    dps = max(30, int(ctx.prec * 0.29))
    with mpmath.workdps(dps):
        theta = mpmath.sqrt(2) + mpmath.mpf(1) / 3
        zr = mpmath.mpf(z.real.mid().str(dps, radius=False))
        zi = mpmath.mpf(z.imag.mid().str(dps, radius=False))
        vec = [zr + theta * zi]
        for k in range(phi):
            w = mpmath.expjpi(mpmath.mpf(2 * k) / order)
            vec.append(w.real + theta * w.imag)
        tol = max(mpmath.mpf(radius(z)) * 10, mpmath.mpf(10) ** (-dps + 5))
        rel = mpmath.pslq(vec, tol=tol, maxcoeff=den_bound * 10**6, maxsteps=10**5)
    if rel is None or rel[0] == 0:
        raise RecognitionFailed("no integer relation found")
    den = -rel[0]
    coeffs = [Fraction(c, den) for c in rel[1:]]
    if any(c.denominator > den_bound for c in coeffs):
        raise RecognitionFailed("relation exceeds the denominator bound")
    x = CycElem.from_fractions(order, coeffs)
    if not x.embed().overlaps(z):
        raise RecognitionFailed("re-embedding does not meet the ball")
    return x


def embed_quad(x: QuadElem) -> acb:
    return x.to_acb()


def quad_to_cyc(x: QuadElem, order: int) -> CycElem:
    """Image of an element of O_K in Q(zeta_order) (requires K inside it)."""
    t = tau_in_cyclotomic(x.disc, order)
    if t is None:
        raise ValueError(f"Q(zeta_{order}) does not contain K")
    return CycElem.from_rational(x.a, order) + t * x.b


def k_automorphisms(disc: int, order: int) -> list[int]:
    """The t mod order for which zeta -> zeta^t fixes K (K must lie in Q(zeta_order))."""
    tau = tau_in_cyclotomic(disc, order)
    if tau is None:
        raise ValueError(f"Q(zeta_{order}) does not contain K")
    return [t for t in range(1, order + 1) if math.gcd(t, order) == 1 and tau.galois(t) == tau]


def recognize_over_k(
    conjugates: dict[int, acb],
    order: int,
    disc: int,
    den_bound: int,
) -> CycElem:
    """Recognize x in Q(zeta_order) = K(zeta_order) from its images under Gal(./K).

    ``conjugates[t]`` is the image under zeta -> zeta^t for every t in
    k_automorphisms(disc, order).  Coordinates are solved in the K-basis
    1, zeta, ..., zeta^(d-1) and each coordinate is read as a + b tau.
    """
    if den_bound.bit_length() * 2 > ctx.prec // 2:
        raise RecognitionFailed("denominator bound too large for the working precision")
    ts = k_automorphisms(disc, order)
    d = len(ts)
    if any(t not in conjugates for t in ts):
        raise RecognitionFailed("incomplete conjugate family")
    mat = acb_mat(d, d)
    rhs = acb_mat(d, 1)
    for row, t in enumerate(ts):
        for col in range(d):
            mat[row, col] = acb.exp_pi_i(acb(2 * ((t * col) % order)) / order)
        rhs[row, 0] = conjugates[t]
    try:
        sol = mat.solve(rhs)
    except ZeroDivisionError as exc:
        raise RecognitionFailed(str(exc)) from exc
    tau_c = tau_acb(disc)
    tau_cyc = tau_in_cyclotomic(disc, order)
    x = CycElem.zero(order)
    for k in range(d):
        c = sol[k, 0]
        b = c.imag / tau_c.imag
        a = c.real - b * tau_c.real
        ra, rb = _rationalize(a, den_bound), _rationalize(b, den_bound)
        if ra is None or rb is None:
            raise RecognitionFailed("coordinate not near a small-denominator element of K")
        x = x + (CycElem.from_rational(ra, order) + tau_cyc * CycElem.from_rational(rb, order)) * CycElem.root_of_unity(order, k)
    for t in ts:
        if not x.galois(t).embed().overlaps(conjugates[t]):
            raise RecognitionFailed("re-embedding does not meet the supplied conjugate")
    return x
