"""Eisenstein-Kronecker series E_{j,k}(z, L) and their log-derivative counterparts.

E_{j,k}(z, L) = (k-1)! A(L)^j sum' conj(z+w)^(k-j) / |z+w|^(2k)
             = (k-1)! A(L)^j sum' conj(z+w)^(-j) (z+w)^(-k),

summed row by row: with w2 = the second basis vector and x = (z + n w1)/w2, the
inner sum over m reduces to S_e(x) = sum_m (x+m)^-e, read off the Taylor series
of pi cot(pi x).  Rows far from the real axis are bounded analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from flint import acb, acb_series, arb, ctx

from .arith import HeckeLabError, IdealK, PrecisionExhausted, working_precision
from .cm_curve import LatticeBasis, PoleAtLatticePoint, _disc


class ConvergenceRegion(HeckeLabError):
    pass


class PoleOrZeroAtPoint(HeckeLabError):
    pass


def a_const(L: LatticeBasis) -> arb:
    """A(L) = (w1 conj(w2) - conj(w1) w2) / (2 pi i) = area / pi."""
    val = (L.w1 * L.w2.conjugate() - L.w1.conjugate() * L.w2) / acb(0, 2 * arb.pi())
    if not val.real > 0:
        from .cm_curve import BasisOrientation

        raise BasisOrientation("A(L) must be positive; check the basis orientation")
    return val.real


@dataclass(frozen=True)
class EisParams:
    j: int
    k: int
    z: acb
    L: LatticeBasis

    def __post_init__(self):
        if self.j > 0 or -self.j >= self.k:
            raise ConvergenceRegion("need 0 <= -j < k")
        if self.k + self.j < 3:
            raise ConvergenceRegion("need k + j >= 3 for absolute convergence")


def _cot_sums(x: acb, top: int) -> list[acb]:
    """[S_1(x), ..., S_top(x)] with S_e(x) = sum_m (x+m)^-e (S_1 as the symmetric sum)."""
    ser = acb_series([x, 1], top).cot_pi()
    coeffs = ser.coeffs()
    coeffs += [acb(0)] * (top - len(coeffs))
    pi = arb.pi()
    # d^(e-1)/dx^(e-1) [pi cot(pi x)] = pi (e-1)! c_{e-1} = (-1)^(e-1) (e-1)! S_e(x)
    return [(-1) ** (e - 1) * pi * coeffs[e - 1] for e in range(1, top + 1)]


def _row_bound(t: arb, J: int, k: int, w2abs: arb) -> arb:
    """Bound for |sum_m conj(y)^J y^-k| over a row with |Im x| = t >= 1/2."""
    y = (-2 * arb.pi() * t).exp()
    total = arb(0)
    for i in range(J + 1):
        e = k - J + i
        s_bound = (2 * arb.pi()) ** e * y / (1 - y) ** e
        total += math.comb(J, i) * (2 * t) ** i * s_bound
    return total * w2abs ** (J - k)


def eis_sum(z: acb, L: LatticeBasis, J: int, k: int) -> acb:
    """sum' over w in L of conj(z+w)^J (z+w)^-k, for k - J >= 3 and z not in L."""
    if k - J < 3:
        raise ConvergenceRegion("need k - J >= 3")
    prec = ctx.prec
    with working_precision(prec + 30):
        tau = L.tau
        u = z / L.w2
        n0 = int(round(float(u.imag.mid()) / float(tau.imag.mid())))
        u = u - n0 * tau
        m0 = int(round(float(u.real.mid())))
        u = u - m0
        if abs(u).contains(0) or (abs(u) < arb(10) ** (-(prec // 4))):
            raise PoleAtLatticePoint("z lies on the lattice")
        w2c = L.w2.conjugate()
        pref = w2c**J / L.w2**k
        w2abs = abs(L.w2)
        stau = tau.imag
        total = acb(0)
        eps = arb(2) ** (-(prec + 20))
        n = 0
        while True:
            for sgn in ((1, -1) if n else (1,)):
                x = u + sgn * n * tau
                S = _cot_sums(x, k + 1)
                t2 = acb(0, -2) * x.imag
                row = acb(0)
                for i in range(J + 1):
                    row += math.comb(J, i) * t2**i * S[k - J + i - 1]
                total += row
            n += 1
            t_next = n * stau - abs(u.imag)
            if t_next > arb(1) / 2:
                b = _row_bound(t_next, J, k, w2abs)
                ratio = _row_bound(t_next + stau, J, k, w2abs) / b
                if b < eps * 0.25 and ratio < 1:
                    tail = 2 * b / (1 - ratio)
                    total = total * pref + _disc(tail)
                    break
            if n > 100000:
                raise PrecisionExhausted("row sum did not converge")
    return +total


def eis_jk(params: EisParams) -> acb:
    """E_{j,k}(z, L) as a certified ball at the current precision."""
    j, k = params.j, params.k
    A = a_const(params.L)
    s = eis_sum(params.z, params.L, -j, k)
    return math.factorial(k - 1) * A**j * s


def eis(j: int, k: int, z: acb, L: LatticeBasis) -> acb:
    return eis_jk(EisParams(j, k, z, L))


def eis_jk_smoothed(params: EisParams, a: IdealK) -> acb:
    """N(a) E_{j,k}(z, L) - E_{j,k}(z, a^-1 L)."""
    alpha = a.gen.to_acb()
    La = params.L.scale(1 / alpha)
    first = a.norm() * eis_jk(params)
    second = eis_jk(EisParams(params.j, params.k, params.z, La))
    return first - second


def djk_via_log_derivative(R, z: acb, k: int) -> acb:
    """(-d/dz)^k log R(xi(z)) for a structured rational function R (j = 0 case)."""
    if k < 1:
        raise ValueError("k must be positive")
    coeffs = R.log_taylor(z, k)
    return (-1) ** k * math.factorial(k) * coeffs[k]


def cross_check_djk(cctx, b: IdealK, a: IdealK, z: acb, j: int, k: int) -> acb:
    """D_{j,k}(gamma_{b,a})(P) + E_{j,k}(z; L_b, a); contains 0 when both sides agree.

    For j < 0 the operator D_{j,k}(gamma) is defined through the Eisenstein side,
    so the residual is zero by construction.
    """
    from .efm import gamma_fn

    L = cctx.lattice()
    if a.norm() == 1:
        return acb(0)
    E = eis_jk_smoothed(EisParams(j, k, z, L), a)
    if j < 0:
        return -E + E
    g = gamma_fn(cctx, b, a)
    D = djk_via_log_derivative(g, z, k)
    return D + E
