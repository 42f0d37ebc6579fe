"""Small finite fields F_{p^r} in a polynomial basis."""

from __future__ import annotations

from functools import lru_cache


def _poly_mulmod(a: list[int], b: list[int], mod: tuple[int, ...], p: int) -> list[int]:
    r = len(mod) - 1
    prod = [0] * (2 * r - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                prod[i + j] += x * y
    for k in range(len(prod) - 1, r - 1, -1):
        c = prod[k] % p
        if c:
            for j in range(r):
                prod[k - r + j] -= c * mod[j]
    return [v % p for v in prod[:r]]


def _is_irreducible(mod: tuple[int, ...], p: int) -> bool:
    """Rabin's test for a monic polynomial (coefficients low degree first)."""
    from sympy.polys.domains import ZZ
    from sympy.polys.galoistools import gf_irreducible_p

    return gf_irreducible_p([ZZ(c) for c in reversed(mod)], p, ZZ)


@lru_cache(maxsize=None)
def conway_like_modulus(p: int, r: int) -> tuple[int, ...]:
    """The lexicographically first monic irreducible polynomial of degree r over F_p."""
    if r == 1:
        return (0, 1)
    for code in range(p**r):
        coeffs = []
        c = code
        for _ in range(r):
            coeffs.append(c % p)
            c //= p
        mod = tuple(coeffs) + (1,)
        if coeffs[0] and _is_irreducible(mod, p):
            return mod
    raise ValueError("no irreducible polynomial found")


class FiniteField:
    """F_{p^r}; elements are FFElem with coefficient tuples of length r."""

    def __init__(self, p: int, r: int = 1):
        self.p = p
        self.r = r
        self.modulus = conway_like_modulus(p, r)
        self.size = p**r

    def __call__(self, v) -> "FFElem":
        if isinstance(v, FFElem):
            return v
        if isinstance(v, int):
            return FFElem(self, (v % self.p,) + (0,) * (self.r - 1))
        return FFElem(self, tuple(int(c) % self.p for c in v))

    def from_index(self, k: int) -> "FFElem":
        coeffs = []
        for _ in range(self.r):
            coeffs.append(k % self.p)
            k //= self.p
        return FFElem(self, tuple(coeffs))

    def elements(self):
        for k in range(self.size):
            yield self.from_index(k)

    def iter_points(self, curve):
        """Affine points of y^2 = 4x^3 - g2 x - g3 in a fixed order (x by index, then y, -y)."""
        g2, g3 = curve.a_coeffs()
        for x in self.elements():
            rhs = 4 * x * x * x - g2 * x - g3
            y = rhs.sqrt()
            if y is None:
                continue
            yield (x, y)
            if not y.is_zero():
                yield (x, -y)

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteField) and (self.p, self.r) == (other.p, other.r)

    def __hash__(self) -> int:
        return hash((self.p, self.r))

    def __repr__(self) -> str:
        return f"F_{self.p}^{self.r}"


class FFElem:
    __slots__ = ("F", "c")

    def __init__(self, F: FiniteField, c: tuple[int, ...]):
        self.F = F
        self.c = c

    def _co(self, other) -> "FFElem":
        return other if isinstance(other, FFElem) else self.F(other)

    def __add__(self, other):
        o = self._co(other)
        p = self.F.p
        return FFElem(self.F, tuple((a + b) % p for a, b in zip(self.c, o.c)))

    __radd__ = __add__

    def __neg__(self):
        p = self.F.p
        return FFElem(self.F, tuple((-a) % p for a in self.c))

    def __sub__(self, other):
        return self + (-self._co(other))

    def __rsub__(self, other):
        return self._co(other) - self

    def __mul__(self, other):
        o = self._co(other)
        return FFElem(self.F, tuple(_poly_mulmod(list(self.c), list(o.c), self.F.modulus, self.F.p)))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = self.F(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def inverse(self):
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero in a finite field")
        return self ** (self.F.size - 2)

    def __truediv__(self, other):
        return self * self._co(other).inverse()

    def __rtruediv__(self, other):
        return self._co(other) * self.inverse()

    def __eq__(self, other) -> bool:
        if isinstance(other, int):
            other = self.F(other)
        return isinstance(other, FFElem) and self.c == other.c

    def __hash__(self) -> int:
        return hash(self.c)

    def is_zero(self) -> bool:
        return not any(self.c)

    def is_square(self) -> bool:
        if self.is_zero():
            return True
        return self ** ((self.F.size - 1) // 2) == self.F(1)

    def sqrt(self) -> "FFElem | None":
        """A square root (Tonelli-Shanks), or None for non-squares."""
        if self.is_zero():
            return self
        if not self.is_square():
            return None
        F = self.F
        Q, S = F.size - 1, 0
        while Q % 2 == 0:
            Q //= 2
            S += 1
        # deterministic non-residue
        k = 1
        z = F.from_index(k)
        while z.is_zero() or z.is_square():
            k += 1
            z = F.from_index(k)
        M, c, t, R = S, z**Q, self**Q, self ** ((Q + 1) // 2)
        one = F(1)
        while not t == one:
            i, t2 = 0, t
            while not t2 == one:
                t2 = t2 * t2
                i += 1
            b = c ** (2 ** (M - i - 1))
            M, c = i, b * b
            t, R = t * c, R * b
        return R

    def frobenius(self) -> "FFElem":
        return self**self.F.p

    def __repr__(self) -> str:
        return f"FF{self.c}"
