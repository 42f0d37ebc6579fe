import math
from fractions import Fraction

import pytest
from flint import acb, arb

from heckelab.arith import IdealK, PrimeContext, QuadElem, working_precision
from heckelab.efm import choose_auxiliary, choose_V
from heckelab.lvalues import (
    HeckeCharSpec,
    NormNotRecognized,
    RouteUnavailable,
    TailTooLarge,
    alg_l_value,
    alg_l_value_gamma,
    class_table,
    condition_rho_valuation,
    factor_valuation,
    imprimitive_l,
    integral_class_values,
    l_via_eisenstein,
    ord_p_orbit_norm,
    partial_l_direct,
    reinstated_euler_factors,
    theorem_scan,
    theta_class_values,
)
from heckelab.measures import CharPair

P13 = PrimeContext(13)


def _normalized(a, b):
    """The unit multiple of a + bi that is 1 mod 2 + 2i."""
    for ua, ub in ((1, 0), (0, 1), (-1, 0), (0, -1)):
        x, y = a * ua - b * ub, a * ub + b * ua
        # (x - 1 + y i) / (2 + 2i) = ((x - 1 + y i)(2 - 2i)) / 8
        re, im = 2 * (x - 1) + 2 * y, 2 * y - 2 * (x - 1)
        if re % 8 == 0 and im % 8 == 0:
            return complex(x, y)
    raise AssertionError("no normalized generator")


def _enumerated_l(w, s, B):
    """Sum over ideals prime to 10 with norm <= B of conj(phi(b))^w / N(b)^s."""
    tot = 0
    R = math.isqrt(B) + 1
    seen = set()
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            n = a * a + b * b
            if n == 0 or n > B or n % 2 == 0 or n % 5 == 0:
                continue
            g = _normalized(a, b)
            if g in seen:
                continue
            seen.add(g)
            tot += g.conjugate() ** w / n**s
    return tot


def test_class_count(cctx):
    assert len(class_table(HeckeCharSpec(cctx, 5, 0))) == 16
    assert len(class_table(HeckeCharSpec(cctx, 5, 0, (1, 1)))) == 400


def test_imprimitive_against_independent_enumeration(cctx, prec256):
    spec = HeckeCharSpec(cctx, 5, 0)
    B = 3000
    got = imprimitive_l(spec, B)
    ref = _enumerated_l(5, 5, B)
    assert abs(complex(got.mid()) - ref) < 1e-12
    assert got.overlaps(acb(ref.real, ref.imag))


def test_partition_recombines(cctx, prec256):
    spec = HeckeCharSpec(cctx, 4, 0).with_kappa((1, 2))
    total = acb(0)
    kap = spec.kappa
    for x in class_table(spec):
        total += kap.inverse()(*x).embed() * partial_l_direct(spec, x, 2000)
    assert total.overlaps(imprimitive_l(spec, 2000))


def test_empty_class_is_a_tail_ball(cctx, prec256):
    spec = HeckeCharSpec(cctx, 5, 0)
    x = list(class_table(spec))[-1]
    ball = partial_l_direct(spec, x, 1)
    assert ball.contains(0)


def test_tail_tolerance(cctx, prec256):
    spec = HeckeCharSpec(cctx, 4, 0)
    with pytest.raises(TailTooLarge):
        partial_l_direct(spec, (1, 1), 100, tol=1e-12)


@pytest.mark.parametrize("k,j", [(4, 0), (5, 0), (4, -1), (5, -1)])
def test_dual_route(cctx, k, j):
    spec = HeckeCharSpec(cctx, k, j)
    with working_precision(128):
        for x in list(class_table(spec))[::5]:
            d = partial_l_direct(spec, x, 20000)
            e = l_via_eisenstein(spec, x)
            assert d.overlaps(e)
            assert abs(complex(d.mid()) - complex(e.mid())) < 1e-4 * abs(complex(e.mid()))


def test_euler_factors_are_units(cctx):
    for level in ((0, 0), (1, 1)):
        base = HeckeCharSpec(cctx, 5, 0, level)
        for chi in CharPair.all(5, base.char_level)[::23]:
            for ef in reinstated_euler_factors(base.with_kappa(chi)):
                assert not ef.factor().is_zero()
                assert P13.val_cyc(ef.factor()) == 0


def test_reinstated_primes(cctx):
    base = HeckeCharSpec(cctx, 5, 0)
    nu = cctx.q_prime()
    # primitive kappa: nothing to reinstate above q
    prim = reinstated_euler_factors(base.with_kappa((1, 1)))
    assert all(ef.prime.norm() != 5 for ef in prim)
    # trivial kappa: both primes above q come back
    triv = reinstated_euler_factors(base)
    assert sum(ef.prime.norm() == 5 for ef in triv) == 2
    assert cctx.phi(nu) in [ef.prime for ef in triv]


def test_factor_valuation_trivial_character(cctx):
    spec = HeckeCharSpec(cctx, 5, 0)
    assert factor_valuation(spec, IdealK(QuadElem(-4, 1))) == 0


def test_factor_valuation_has_exceptions(cctx):
    # search small split primes a with N(a) = phi(a)^5 mod the prime above p
    spec = HeckeCharSpec(cctx, 5, 0)
    hits = []
    for a in range(-12, 13):
        for b in range(1, 13):
            n = a * a + b * b
            if n < 5 or math.gcd(n, 2 * 3 * 5 * 13) != 1 or not all(n % d for d in range(2, math.isqrt(n) + 1)):
                continue
            if factor_valuation(spec, IdealK(QuadElem(a, b))) > 0:
                hits.append((a, b))
    assert hits


def test_condition_on_rho(cctx):
    for k in (4, 5, 6):
        assert condition_rho_valuation(cctx, k) == 0


def test_orbit_norm_constant_families():
    kap = CharPair(5, (1, 1), (1, 2))
    with working_precision(256):
        v, _ = ord_p_orbit_norm(lambda chi: acb(13), kap, P13)
        assert v == 1
        v, _ = ord_p_orbit_norm(lambda chi: acb(0, 1), kap, P13)
        assert v == 0
    with working_precision(64):
        with pytest.raises(NormNotRecognized):
            ord_p_orbit_norm(lambda chi: arb.pi() * (chi.exps[0] + 1), kap, P13)


def test_alg_value_of_trivial_character(cctx):
    with working_precision(512):
        spec = HeckeCharSpec(cctx, 5, 0)
        val = alg_l_value(spec)
        assert val.exact is not None
        assert val.exact.embed().overlaps(val.ball)
        assert val.val_p == 0
        assert val.method == "recognized"


def test_routes_agree(cctx):
    a = choose_auxiliary(cctx, cctx.conductor)
    V = choose_V(cctx, cctx.conductor)
    base = HeckeCharSpec(cctx, 5, 0)
    with working_precision(768):
        ints = integral_class_values(base)
        thetas = theta_class_values(base, a, V)
        for chi in CharPair.all(5, (1, 1))[::3]:
            spec = base.with_kappa(chi)
            d = alg_l_value(spec, ints)
            g = alg_l_value_gamma(spec, thetas, a, V)
            assert d.ball.overlaps(g.ball)
            assert abs(d.ball - g.ball) < arb(10) ** -100 * abs(d.ball)
            assert d.val_p == g.val_p == 0


def test_gamma_route_needs_j_zero(cctx):
    spec = HeckeCharSpec(cctx, 5, -1)
    with pytest.raises(RouteUnavailable):
        theta_class_values(spec, choose_auxiliary(cctx, cctx.conductor), choose_V(cctx, cctx.conductor))


def test_scan_level_zero(cctx):
    res = theorem_scan(cctx, 5, 0, [(0, 0)])
    assert len(res.rows) == 32
    assert res.C_observed == 0
    assert res.route_agreement is True
    assert res.exceptions == []
    assert res.hypothesis_report["condition_rho_holds"]
    assert all(x["overlap"] for x in res.cross_validation)


def test_scan_marks_gamma_unavailable_for_negative_j(cctx):
    res = theorem_scan(cctx, 5, -1, [(0, 0)])
    gam = [r for r in res.rows if r.route == "gamma"]
    assert gam and all(r.status == "unavailable" for r in gam)
    assert all(r.ord_p == Fraction(0) for r in res.rows if r.route == "direct")
