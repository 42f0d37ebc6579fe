"""Finite-level distributions on Z_q^2, Fourier transforms and Gamma transforms.

A measure of level (m, n) stores the value of every cell
(a + q^m Z_q) x (b + q^n Z_q).  Values are cyclotomic numbers.  Internally the
transforms work on dense coordinate vectors in Z[x]/(x^M - 1), where every
root of unity that shows up is a power of x, so multiplying by one is a
cyclic shift.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

from .arith import CycElem, HeckeLabError, euler_phi, _power_table


class LevelMismatch(HeckeLabError):
    pass


class IncompleteData(HeckeLabError):
    pass


class NotAUnit(HeckeLabError):
    pass


class SymmetryViolation(HeckeLabError):
    pass


_INT64_SAFE = 2**62


def _lcm(*xs: int) -> int:
    out = 1
    for x in xs:
        out = out * x // math.gcd(out, x)
    return out


# ---------------------------------------------------------------------------
# Unit groups mod q^l


@lru_cache(maxsize=None)
def primitive_root(q: int) -> int:
    """Smallest primitive root modulo q^2 (hence modulo every power of q)."""
    mod = q * q
    order = q * (q - 1)
    primes = [r for r in range(2, order + 1) if order % r == 0 and all(r % s for s in range(2, r))]
    for g in range(2, mod):
        if g % q and all(pow(g, order // r, mod) != 1 for r in primes):
            return g
    raise ValueError(f"no primitive root modulo {q}^2")


@lru_cache(maxsize=None)
def dlog_table(q: int, level: int) -> tuple[int, ...]:
    """Discrete logs base primitive_root(q) on Z/q^level; -1 marks non-units.

    At level 0 the single residue class counts as a unit with log 0.
    """
    if level == 0:
        return (0,)
    mod = q**level
    table = [-1] * mod
    g = primitive_root(q)
    x = 1
    for k in range(euler_phi(mod)):
        table[x] = k
        x = x * g % mod
    return tuple(table)


def unit_residues(q: int, level: int) -> list[int]:
    return [x for x, k in enumerate(dlog_table(q, level)) if k >= 0]


def is_unit(x: int, q: int, level: int) -> bool:
    return level == 0 or x % q != 0


def teichmuller_group(q: int, level: int) -> list[int]:
    """The q-1 roots of unity of Z_q reduced mod q^level, as powers of a generator."""
    if level == 0:
        return [0]
    mod = q**level
    t = pow(primitive_root(q), q ** (level - 1), mod)
    return [pow(t, k, mod) for k in range(q - 1)]


# ---------------------------------------------------------------------------
# Characters


@lru_cache(maxsize=None)
def _exponent_table(q: int, lev: int, e: int, order: int) -> np.ndarray:
    """kappa(x) = zeta_order^table[x] on Z/q^lev; -1 marks non-units."""
    logs = np.array(dlog_table(q, lev), dtype=np.int64)
    ph = euler_phi(q**lev)
    out = (e * logs * (order // ph)) % order
    out[logs < 0] = -1
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CharPair:
    """A character of (Z/q^l1)^x x (Z/q^l2)^x.

    ``exps[i]`` fixes the image of the primitive root g:
    kappa_i(g) = exp(2 pi i exps[i] / phi(q^l_i)).  Off the units the
    character is extended by zero.
    """

    q: int
    level: tuple[int, int]
    exps: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "level", tuple(int(v) for v in self.level))
        phis = self.group_orders
        object.__setattr__(self, "exps", tuple(int(e) % p for e, p in zip(self.exps, phis)))

    @property
    def group_orders(self) -> tuple[int, int]:
        return (euler_phi(self.q ** self.level[0]), euler_phi(self.q ** self.level[1]))

    @property
    def value_order(self) -> int:
        """N such that every value lies in mu_N."""
        return _lcm(*self.group_orders)

    @property
    def conductor(self) -> tuple[int, int]:
        out = []
        for lev, e in zip(self.level, self.exps):
            ph = euler_phi(self.q**lev)
            c = 0
            while c < lev and (e * euler_phi(self.q**c)) % ph:
                c += 1
            out.append(c)
        return tuple(out)

    @property
    def order(self) -> int:
        return _lcm(*(p // math.gcd(e, p) for e, p in zip(self.exps, self.group_orders)))

    def is_trivial(self) -> bool:
        return self.exps == (0, 0)

    def is_primitive(self) -> bool:
        return self.conductor == self.level

    def is_wild(self) -> bool:
        """Trivial on the (q-1)-st roots of unity, i.e. a character of (1+qZ_q)^2."""
        return all(e % (self.q - 1) == 0 for e, l in zip(self.exps, self.level) if l > 0)

    def component_exponent(self, i: int, x: int, order: int) -> int | None:
        """kappa_i(x) = zeta_order^result, or None when x is not a unit."""
        lev = self.level[i]
        val = int(_exponent_table(self.q, lev, self.exps[i], order)[x % self.q**lev])
        return None if val < 0 else val

    def exponent_grid(self, shape: tuple[int, int], order: int) -> np.ndarray:
        """Exponents of kappa on the cells of a finer level; -1 off the units."""
        t1 = _exponent_table(self.q, self.level[0], self.exps[0], order)
        t2 = _exponent_table(self.q, self.level[1], self.exps[1], order)
        a = t1[np.arange(shape[0]) % len(t1)]
        b = t2[np.arange(shape[1]) % len(t2)]
        grid = (a[:, None] + b[None, :]) % order
        grid[(a[:, None] < 0) | (b[None, :] < 0)] = -1
        return grid

    def exponent(self, x1: int, x2: int, order: int | None = None) -> int | None:
        order = order or self.value_order
        e1 = self.component_exponent(0, x1, order)
        e2 = self.component_exponent(1, x2, order)
        if e1 is None or e2 is None:
            return None
        return (e1 + e2) % order

    def __call__(self, x1: int, x2: int) -> CycElem:
        e = self.exponent(x1, x2)
        if e is None:
            return CycElem.zero(self.value_order)
        return CycElem.root_of_unity(self.value_order, e)

    def power(self, t: int) -> "CharPair":
        return CharPair(self.q, self.level, (self.exps[0] * t, self.exps[1] * t))

    def inverse(self) -> "CharPair":
        return self.power(-1)

    def __mul__(self, other: "CharPair") -> "CharPair":
        if (self.q, self.level) != (other.q, other.level):
            raise LevelMismatch("characters at different levels")
        return CharPair(self.q, self.level, (self.exps[0] + other.exps[0], self.exps[1] + other.exps[1]))

    def at_level(self, level: tuple[int, int]) -> "CharPair":
        """The same character viewed at another level (must contain the conductor)."""
        cond = self.conductor
        if any(c > l for c, l in zip(cond, level)):
            raise LevelMismatch("level below the conductor")
        exps = []
        for i in range(2):
            src, dst = self.group_orders[i], euler_phi(self.q ** level[i])
            prim = euler_phi(self.q ** cond[i])
            e_prim = self.exps[i] * prim // src if src else 0
            exps.append(e_prim * dst // prim)
        return CharPair(self.q, level, tuple(exps))

    def primitive(self) -> "CharPair":
        return self.at_level(self.conductor)

    @classmethod
    def all(cls, q: int, level: tuple[int, int]) -> list["CharPair"]:
        p1, p2 = euler_phi(q ** level[0]), euler_phi(q ** level[1])
        return [cls(q, level, (e1, e2)) for e1 in range(p1) for e2 in range(p2)]

    @classmethod
    def all_wild(cls, q: int, level: tuple[int, int]) -> list["CharPair"]:
        return [c for c in cls.all(q, level) if c.is_wild()]


@dataclass(frozen=True)
class ZetaPair:
    """(zeta_1, zeta_2) = (exp(2 pi i u1/q^e1), exp(2 pi i u2/q^e2))."""

    q: int
    exps: tuple[int, int]
    powers: tuple[int, int]

    def at_level(self, level: tuple[int, int]) -> tuple[int, int]:
        """Frequencies (u1', u2') with zeta_i = exp(2 pi i u_i'/q^level_i)."""
        if any(e > l for e, l in zip(self.exps, level)):
            raise LevelMismatch("root of unity order exceeds the measure level")
        return tuple(
            (u * self.q ** (l - e)) % self.q**l for u, e, l in zip(self.powers, self.exps, level)
        )

    def power(self, t: tuple[int, int]) -> "ZetaPair":
        return ZetaPair(self.q, self.exps, (self.powers[0] * t[0], self.powers[1] * t[1]))

    def embed(self):
        from flint import acb

        return tuple(acb.exp_pi_i(acb(2 * u) / self.q**e) for u, e in zip(self.powers, self.exps))


# ---------------------------------------------------------------------------
# Dense helpers


def _to_dense_rows(values: list[CycElem], order: int) -> tuple[np.ndarray, int]:
    """Stack values as rows of Z[x]/(x^order - 1) coordinates over one denominator."""
    den = 1
    for v in values:
        den = den * v.den // math.gcd(den, v.den)
    out = np.zeros((len(values), order), dtype=object)
    for r, v in enumerate(values):
        if order % v.order:
            raise ValueError("value field not contained in the working field")
        step = order // v.order
        f = den // v.den
        for k, c in enumerate(v.num):
            if c:
                out[r, k * step] = c * f
    return _shrink(out), den


def _shrink(arr: np.ndarray) -> np.ndarray:
    """Use int64 storage when entries are small enough to sum safely."""
    if arr.dtype != object:
        return arr
    try:
        small = arr.astype(np.int64)
    except OverflowError:
        return arr
    if int(np.abs(small).max(initial=0)) * max(arr.shape[0], 1) * 64 < _INT64_SAFE:
        return small
    return arr


def _reduce_rows(order: int, rows: np.ndarray, den: int) -> list[CycElem]:
    table = _power_table(order)
    if rows.dtype == object or table.dtype == object:
        red = rows.astype(object).dot(table.astype(object))
    else:
        biggest = int(np.abs(rows).max(initial=0)) * int(np.abs(table).max(initial=0)) * order
        if biggest < _INT64_SAFE:
            red = rows.dot(table)
        else:
            red = rows.astype(object).dot(table.astype(object))
    return [CycElem(order, [int(v) for v in row], den) for row in red]


def _shift_sum(rows: np.ndarray, shifts: np.ndarray, order: int) -> np.ndarray:
    """sum_r x^shifts[r] * rows[r] in Z[x]/(x^order - 1); rows is (R, order)."""
    # few distinct shifts occur (they are character values), so bucket first
    perm = np.argsort(shifts, kind="stable")
    sorted_shifts = shifts[perm]
    starts = np.flatnonzero(np.r_[True, sorted_shifts[1:] != sorted_shifts[:-1]])
    buckets = np.add.reduceat(rows[perm], starts, axis=0)
    uniq = sorted_shifts[starts]
    k = np.arange(order)
    idx = (k[None, :] - uniq[:, None]) % order
    return np.take_along_axis(buckets, idx, axis=1).sum(axis=0)


def _safe_accumulate(rows: np.ndarray, count: int) -> np.ndarray:
    if rows.dtype != object:
        biggest = int(np.abs(rows).max(initial=0))
        if biggest * count >= _INT64_SAFE:
            return rows.astype(object)
    return rows


# ---------------------------------------------------------------------------
# Measures


class FiniteMeasure:
    """A distribution on Z_q^2 known at level (m, n).

    ``values[(a, b)]`` is the mass of (a + q^m Z_q) x (b + q^n Z_q).
    Missing cells have mass zero.
    """

    def __init__(self, q: int, level: tuple[int, int], values: Mapping[tuple[int, int], CycElem] | Callable):
        self.q = int(q)
        self.level = (int(level[0]), int(level[1]))
        A, B = self.shape
        table: dict[tuple[int, int], CycElem] = {}
        if callable(values):
            for a in range(A):
                for b in range(B):
                    v = values(a, b)
                    if not isinstance(v, CycElem):
                        v = CycElem.from_rational(Fraction(v))
                    if not v.is_zero():
                        table[(a, b)] = v
        else:
            for (a, b), v in values.items():
                if not isinstance(v, CycElem):
                    v = CycElem.from_rational(Fraction(v))
                if not (0 <= a < A and 0 <= b < B):
                    raise LevelMismatch(f"cell {(a, b)} outside level {self.level}")
                if not v.is_zero():
                    table[(a, b)] = v
        self._values = table
        self._cache: dict = {}
        self._value_order = _lcm(1, *(v.order for v in table.values()))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.q ** self.level[0], self.q ** self.level[1])

    @property
    def values(self) -> dict[tuple[int, int], CycElem]:
        return dict(self._values)

    def __getitem__(self, cell: tuple[int, int]) -> CycElem:
        A, B = self.shape
        return self._values.get((cell[0] % A, cell[1] % B), CycElem.zero())

    @property
    def value_order(self) -> int:
        return self._value_order

    def cells(self) -> Iterable[tuple[int, int]]:
        A, B = self.shape
        return itertools.product(range(A), range(B))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteMeasure):
            return NotImplemented
        if (self.q, self.level) != (other.q, other.level):
            return False
        keys = set(self._values) | set(other._values)
        return all(self[c] == other[c] for c in keys)

    __hash__ = None

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        if (self.q, self.level) != (other.q, other.level):
            raise LevelMismatch("cannot add measures of different levels")
        keys = set(self._values) | set(other._values)
        return FiniteMeasure(self.q, self.level, {c: self[c] + other[c] for c in keys})

    def scale(self, c) -> "FiniteMeasure":
        return FiniteMeasure(self.q, self.level, {k: v * c for k, v in self._values.items()})

    def total_mass(self) -> CycElem:
        out = CycElem.zero()
        for v in self._values.values():
            out = out + v
        return out

    def push_forward(self, level: tuple[int, int]) -> "FiniteMeasure":
        """The same distribution read at a coarser level (sums over fibres)."""
        if level[0] > self.level[0] or level[1] > self.level[1]:
            raise LevelMismatch("can only coarsen")
        A, B = self.q ** level[0], self.q ** level[1]
        out: dict[tuple[int, int], CycElem] = {}
        for (a, b), v in self._values.items():
            key = (a % A, b % B)
            out[key] = out[key] + v if key in out else v
        return FiniteMeasure(self.q, level, out)

    def _dense(self, order: int) -> tuple[np.ndarray, int]:
        key = ("dense", order)
        if key not in self._cache:
            A, B = self.shape
            cells = list(self.cells())
            rows, den = _to_dense_rows([self[c] for c in cells], order)
            self._cache[key] = (rows.reshape(A, B, order), den)
        return self._cache[key]

    def working_order(self, extra: int = 1) -> int:
        return _lcm(self.value_order, self.q ** max(self.level), extra)

    def fourier_table(self, order: int | None = None) -> tuple[np.ndarray, int, int]:
        """Dense Fourier transform at every (u, v) frequency of the level.

        Returns (T, den, order) with T[u, v] the coordinates of
        sum_{a,b} zeta_{q^m}^{ua} zeta_{q^n}^{vb} alpha(a, b) times den.
        """
        order = order or self.working_order()
        key = ("fourier", order)
        if key not in self._cache:
            dense, den = self._dense(order)
            self._cache[key] = (_dft2(dense, self.q, self.level, order, +1), den, order)
        return self._cache[key]

    def to_json(self) -> dict:
        entries = [
            {"a": a, "b": b, "coeffs": v.to_json()} for (a, b), v in sorted(self._values.items())
        ]
        return {"q": self.q, "level": list(self.level), "entries": entries}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteMeasure":
        vals = {(int(e["a"]), int(e["b"])): CycElem.from_json(e["coeffs"]) for e in obj["entries"]}
        return cls(int(obj["q"]), tuple(obj["level"]), vals)

    def __repr__(self) -> str:
        return f"FiniteMeasure(q={self.q}, level={self.level}, support={len(self._values)})"

    # constructors
    @classmethod
    def dirac(cls, q: int, level: tuple[int, int], cell: tuple[int, int], mass=1) -> "FiniteMeasure":
        return cls(q, level, {cell: CycElem.from_rational(Fraction(mass)) if not isinstance(mass, CycElem) else mass})

    @classmethod
    def zero(cls, q: int, level: tuple[int, int]) -> "FiniteMeasure":
        return cls(q, level, {})


def _dft2(dense: np.ndarray, q: int, level: tuple[int, int], order: int, sign: int) -> np.ndarray:
    """out[u, v] = sum_{a, b} x^(sign*(M/q^m*u*a + M/q^n*v*b)) dense[a, b] in Z[x]/(x^M - 1)."""
    A, B, M = dense.shape
    dense = _safe_accumulate(dense, A * B)
    k = np.arange(M)
    s1, s2 = M // q ** level[0], M // q ** level[1]
    # transform along the first coordinate
    stage = np.zeros_like(dense)
    for u in range(A):
        shifts = (sign * s1 * u * np.arange(A)) % M
        idx = (k[None, :] - shifts[:, None]) % M
        gathered = np.take_along_axis(dense, np.broadcast_to(idx[:, None, :], dense.shape), axis=2)
        stage[u] = gathered.sum(axis=0)
    out = np.zeros_like(stage)
    for v in range(B):
        shifts = (sign * s2 * v * np.arange(B)) % M
        idx = (k[None, :] - shifts[:, None]) % M
        gathered = np.take_along_axis(stage, np.broadcast_to(idx[None, :, :], stage.shape), axis=2)
        out[:, v] = gathered.sum(axis=1)
    return out


def fourier(alpha: FiniteMeasure, zeta: ZetaPair) -> CycElem:
    """sum over cells of zeta_1^a zeta_2^b alpha(U_{a,b})."""
    if zeta.q != alpha.q:
        raise LevelMismatch("different primes")
    u, v = zeta.at_level(alpha.level)
    table, den, order = alpha.fourier_table()
    return _reduce_rows(order, table[u, v][None, :], den)[0]


def fourier_all(alpha: FiniteMeasure) -> dict[tuple[int, int], CycElem]:
    """Fourier transform at every frequency (u, v) of the level."""
    table, den, order = alpha.fourier_table()
    A, B = alpha.shape
    vals = _reduce_rows(order, table.reshape(A * B, order), den)
    return {(u, v): vals[u * B + v] for u in range(A) for v in range(B)}


def measure_from_fourier(q: int, level: tuple[int, int], F: Mapping[tuple[int, int], CycElem] | Callable) -> FiniteMeasure:
    """The measure of the given level whose transform at frequency (u, v) is F(u, v).

    Frequencies are read at the level: zeta = (zeta_{q^m}^u, zeta_{q^n}^v).
    """
    A, B = q ** level[0], q ** level[1]
    data = []
    for u in range(A):
        for v in range(B):
            if callable(F):
                val = F(u, v)
            else:
                if (u, v) not in F:
                    raise IncompleteData(f"missing transform value at {(u, v)}")
                val = F[(u, v)]
            if not isinstance(val, CycElem):
                val = CycElem.from_rational(Fraction(val))
            data.append(val)
    order = _lcm(q ** max(level), *(d.order for d in data))
    rows, den = _to_dense_rows(data, order)
    inv = _dft2(rows.reshape(A, B, order), q, level, order, -1)
    vals = _reduce_rows(order, inv.reshape(A * B, order), den * A * B)
    return FiniteMeasure(q, level, {(a, b): vals[a * B + b] for a in range(A) for b in range(B)})


# ---------------------------------------------------------------------------
# Gauss sums and Gamma transforms


@lru_cache(maxsize=None)
def _component_gauss(q: int, lev: int, e: int) -> CycElem:
    """q^-lev * sum_{x unit mod q^lev} kappa(x) zeta_{q^lev}^(-x), kappa(g) = zeta_phi^e."""
    mod = q**lev
    ph = euler_phi(mod)
    order = _lcm(mod, ph)
    vec = [0] * order
    logs = dlog_table(q, lev)
    for x in range(mod):
        if logs[x] < 0:
            continue
        k = (e * logs[x] * (order // ph) - x * (order // mod)) % order
        vec[k] += 1
    return CycElem.from_dense(order, vec, mod)


def gauss_sum(chi: CharPair) -> CycElem:
    """q^-(m+n) sum chi(x1, x2) zeta_{q^m}^-x1 zeta_{q^n}^-x2 at the level of chi."""
    return _component_gauss(chi.q, chi.level[0], chi.exps[0]) * _component_gauss(
        chi.q, chi.level[1], chi.exps[1]
    )


def _check_levels(alpha: FiniteMeasure, chi: CharPair) -> None:
    if chi.q != alpha.q:
        raise LevelMismatch("different primes")
    if chi.level[0] > alpha.level[0] or chi.level[1] > alpha.level[1]:
        raise LevelMismatch(f"character level {chi.level} exceeds measure level {alpha.level}")


def gamma_direct(alpha: FiniteMeasure, chi: CharPair) -> CycElem:
    """sum over unit cells of chi(x) alpha(U_x), chi extended by zero."""
    _check_levels(alpha, chi)
    order = _lcm(alpha.value_order, chi.value_order)
    dense, den = alpha._dense(order)
    A, B = alpha.shape
    grid = chi.exponent_grid((A, B), order)
    mask = grid >= 0
    if not mask.any():
        return CycElem.zero(order)
    rows = _safe_accumulate(dense[mask], int(mask.sum()))
    total = _shift_sum(rows, grid[mask], order)
    return _reduce_rows(order, total[None, :], den)[0]


def gamma_direct_all(alpha: FiniteMeasure, level: tuple[int, int] | None = None) -> dict[tuple[int, int], CycElem]:
    """gamma_direct for every character at the given level, keyed by exponents."""
    level = level or alpha.level
    return {chi.exps: gamma_direct(alpha, chi) for chi in CharPair.all(alpha.q, level)}


@lru_cache(maxsize=None)
def _component_expansion(q: int, meas_level: int, lev: int, e: int) -> tuple[CycElem, int, tuple[tuple[int, int, int, int], ...]]:
    """Write one extended-by-zero character component as additive characters.

    Returns (tau, d, terms) with chi(y) = (tau/d) * sum c * zeta_R^k * zeta_{q^L}^{u y}
    over the terms (c, k, R, u), where L is the measure level of the component.
    """
    ph = euler_phi(q**lev)
    cond = 0
    while cond < lev and (e * euler_phi(q**cond)) % ph:
        cond += 1
    if cond == 0:
        if meas_level == 0 or lev == 0:
            return CycElem.one(), 1, ((1, 0, 1, 0),)
        # indicator of the units: 1 - (1/q) sum_x zeta_q^{x y}
        step = q ** (meas_level - 1)
        return CycElem.one(), q, ((q, 0, 1, 0),) + tuple((-1, 0, 1, x * step) for x in range(q))
    prim_ph = euler_phi(q**cond)
    e_prim = e * prim_ph // ph
    tau = _component_gauss(q, cond, e_prim)
    step = q ** (meas_level - cond)
    logs = dlog_table(q, cond)
    terms = tuple(
        (1, (-e_prim * logs[x]) % prim_ph, prim_ph, x * step) for x in range(q**cond) if logs[x] >= 0
    )
    return tau, 1, terms


def gamma_gauss(alpha: FiniteMeasure, chi: CharPair) -> CycElem:
    """Gamma transform through the Fourier transform and Gauss sums.

    Each component of chi (extended by zero) is expanded into additive
    characters: for conductor c >= 1, chi(y) = tau(chi) sum_x chi^-1(x)
    zeta_{q^c}^{xy}; for conductor 0 the indicator of the units is
    1 - (1/q) sum_x zeta_q^{xy}.  Pairing with alpha gives
    tau sum chi^-1(x) alpha_hat(zeta^x).
    """
    _check_levels(alpha, chi)
    q = alpha.q
    (tau1, d1, terms1), (tau2, d2, terms2) = (
        _component_expansion(q, alpha.level[i], chi.level[i], chi.exps[i]) for i in range(2)
    )
    order = _lcm(q ** max(alpha.level), alpha.value_order, *(t[2] for t in terms1 + terms2))
    table, den, _ = alpha.fourier_table(order)
    coefs, rows, shifts = [], [], []
    for c1, k1, r1, u1 in terms1:
        for c2, k2, r2, u2 in terms2:
            coefs.append(c1 * c2)
            rows.append(table[u1, u2])
            shifts.append((k1 * (order // r1) + k2 * (order // r2)) % order)
    D = d1 * d2
    factors = np.array(coefs, dtype=np.int64)
    rows_arr = np.array(rows)
    if rows_arr.dtype != object and int(np.abs(rows_arr).max(initial=0)) * D * len(rows) < _INT64_SAFE:
        rows_arr = rows_arr * factors[:, None]
    else:
        rows_arr = rows_arr.astype(object) * factors.astype(object)[:, None]
    total = _shift_sum(rows_arr, np.array(shifts, dtype=np.int64), order)
    inner = _reduce_rows(order, total[None, :], den * D)[0]
    return tau1 * tau2 * inner


# ---------------------------------------------------------------------------
# Unit action, restriction and the beta construction


def act_by_unit(alpha: FiniteMeasure, c: tuple[int, int]) -> FiniteMeasure:
    """(alpha o c)(U_{a,b}) = alpha(U_{c1 a, c2 b})."""
    q = alpha.q
    for ci, lev in zip(c, alpha.level):
        if lev > 0 and ci % q == 0:
            raise NotAUnit(f"{ci} is not a unit mod {q}")
    A, B = alpha.shape
    return FiniteMeasure(q, alpha.level, lambda a, b: alpha[(c[0] * a % A, c[1] * b % B)])


def restrict(alpha: FiniteMeasure, S: Callable[[int, int], bool]) -> FiniteMeasure:
    """Keep the cells (a, b) with S(a, b) true, zero the rest."""
    return FiniteMeasure(alpha.q, alpha.level, {k: v for k, v in alpha.values.items() if S(*k)})


def units_predicate(q: int, level: tuple[int, int]) -> Callable[[int, int], bool]:
    return lambda a, b: is_unit(a, q, level[0]) and is_unit(b, q, level[1])


def one_plus_q_predicate(q: int, level: tuple[int, int]) -> Callable[[int, int], bool]:
    if min(level) < 1:
        raise LevelMismatch("(1+qZ_q)^2 needs level at least (1, 1)")
    return lambda a, b: a % q == 1 and b % q == 1


def coset_predicate(q: int, level: tuple[int, int], y: tuple[int, int], depth: tuple[int, int]) -> Callable[[int, int], bool]:
    """Cells inside y1(1+q^d1 Z_q) x y2(1+q^d2 Z_q)."""
    m1, m2 = q ** depth[0], q ** depth[1]
    return lambda a, b: (a - y[0]) % m1 == 0 and (b - y[1]) % m2 == 0


def build_beta(alpha: FiniteMeasure, w_K: int) -> FiniteMeasure:
    """Fold a mu_K^2-invariant unit-supported measure onto (1+qZ_q)^2.

    beta = sum over eta in (mu_{q-1}/mu_K)^2 of (alpha o eta) restricted to
    (1+qZ_q)^2.
    """
    q = alpha.q
    if (q - 1) % w_K:
        raise SymmetryViolation("w_K must divide q - 1")
    units_only = units_predicate(q, alpha.level)
    if any(not units_only(*c) for c in alpha.values):
        raise SymmetryViolation("measure is not supported on the units")
    mods = alpha.shape
    tei = [teichmuller_group(q, l) for l in alpha.level]
    muK = [[t[k] for k in range(0, q - 1, (q - 1) // w_K)] for t in tei]
    for w1 in muK[0]:
        for w2 in muK[1]:
            if act_by_unit(alpha, (w1, w2)) != alpha:
                raise SymmetryViolation(f"alpha is not invariant under {(w1, w2)}")
    reps = [[t[k] for k in range((q - 1) // w_K)] for t in tei]
    pred = one_plus_q_predicate(q, alpha.level)
    out = FiniteMeasure.zero(q, alpha.level)
    for e1 in reps[0]:
        for e2 in reps[1]:
            out = out + restrict(act_by_unit(alpha, (e1 % mods[0], e2 % mods[1])), pred)
    return out


def symmetrize(alpha: FiniteMeasure, w_K: int) -> FiniteMeasure:
    """Average of alpha o omega over omega in mu_K^2."""
    q = alpha.q
    tei = [teichmuller_group(q, l) for l in alpha.level]
    muK = [[t[k] for k in range(0, q - 1, (q - 1) // w_K)] for t in tei]
    out = FiniteMeasure.zero(q, alpha.level)
    for w1 in muK[0]:
        for w2 in muK[1]:
            out = out + act_by_unit(alpha, (w1, w2))
    return out.scale(Fraction(1, w_K * w_K))


# ---------------------------------------------------------------------------
# Trace identity


def _wild_layer(q: int, N: int) -> list[int]:
    """t mod q^N with t = 1 mod q: the Galois group of Q(mu_{q^N}) over Q(mu_q)."""
    return [t for t in range(1, q**N, q)]


def _trace_setup(beta: FiniteMeasure, kappa: CharPair, y: tuple[int, int]) -> tuple[int, int, int]:
    q = kappa.q
    if not kappa.is_wild() or not kappa.is_primitive() or min(kappa.level) < 2:
        raise ValueError("kappa must be a primitive character of (1+qZ_q)^2 with conductor exponents >= 2")
    if y[0] % q != 1 or y[1] % q != 1:
        raise ValueError("y must lie in (1+qZ_q)^2")
    if any(not (a % q == 1 and b % q == 1) for a, b in beta.values):
        raise ValueError("beta must be supported on (1+qZ_q)^2")
    m, n = kappa.level[0] - 1, kappa.level[1] - 1
    return m, n, max(m, n)


def trace_identity_sides(beta: FiniteMeasure, kappa: CharPair, y: tuple[int, int]) -> tuple[CycElem, CycElem]:
    """Both sides of the trace identity for a (1+qZ_q)^2-supported beta.

    kappa is a character of (1+qZ_q)^2 with kernels exactly 1 + q^(m+1) and
    1 + q^(n+1) (so it lives primitively at level (m+1, n+1)), and y lies in
    (1+qZ_q)^2.  Left side: sum over t in Gal(Q(mu_{q^N})/Q(mu_q)) of
    kappa^t(y)^-1 Gamma_beta(kappa^t), N = max(m, n).  Right side: q^(N-1)
    times the integral of kappa(x/y) over y1(1+q^m Z_q) x y2(1+q^n Z_q).
    """
    m, n, N = _trace_setup(beta, kappa, y)
    q = kappa.q
    q_pow = q**N
    order = _lcm(kappa.value_order, q_pow)
    lhs = CycElem.zero(order)
    for t in _wild_layer(q, N):
        # kappa is wild, so its values are q-power roots of unity and t acts by powering
        kt = kappa.power(t)
        lhs = lhs + kt.inverse()(*y) * gamma_direct(beta, kt)
    pred = coset_predicate(q, beta.level, y, (m, n))
    rhs = CycElem.zero(order)
    A, B = beta.shape
    yinv = (pow(y[0], -1, A), pow(y[1], -1, B))
    for (a, b), v in beta.values.items():
        if pred(a, b):
            rhs = rhs + kappa(a * yinv[0] % A, b * yinv[1] % B) * v
    return lhs, rhs * (q_pow // q)


def trace_identity_refined_rhs(beta: FiniteMeasure, kappa: CharPair, y: tuple[int, int]) -> CycElem:
    """q^(N-1) times the integral of kappa(x/y) over the x with kappa(x/y) in mu_q.

    The trace of a root of unity of q-power order from Q(mu_{q^N}) down to
    Q(mu_q) is q^(N-1) times it when it lies in mu_q and 0 otherwise, so this
    is the value of the trace sum at every level.  It agrees with the coset
    integral whenever min(m, n) <= 1; for m, n >= 2 a product
    kappa_1 kappa_2 can fall into mu_q without either factor doing so.
    """
    m, n, N = _trace_setup(beta, kappa, y)
    q = kappa.q
    A, B = beta.shape
    yinv = (pow(y[0], -1, A), pow(y[1], -1, B))
    order = kappa.value_order
    out = CycElem.zero(order)
    for (a, b), v in beta.values.items():
        e = kappa.exponent(a * yinv[0] % A, b * yinv[1] % B, order)
        if e is None:
            continue
        if q % (order // math.gcd(e, order)) == 0:
            out = out + CycElem.root_of_unity(order, e) * v
    return out * q ** (N - 1)

