from fractions import Fraction

import pytest
from flint import acb, arb
from hypothesis import given
from hypothesis import strategies as st

from heckelab.arith import QuadElem, working_precision
from heckelab.cm_curve import (
    BadReduction,
    CMCurveCtx,
    ConfigError,
    PoleAtLatticePoint,
    TorsionPoint,
    period_from_invariants,
    reference_ctx,
    wp_eval,
    wp_lattice_sum,
)

LEMNISCATE = "2.6220575542921198104648395898911194136827549514316"


def test_period_is_the_lemniscate_constant(cctx):
    with working_precision(256):
        om = period_from_invariants(-4, 4, 0)
        # Gamma(1/4)^2 / (2 sqrt(2 pi)), independent of the AGM
        g = (arb(1) / 4).gamma()
        oracle = g * g / (2 * (2 * arb.pi()).sqrt())
        assert om.imag == 0 or abs(om.imag) < arb(10) ** -70
        assert om.real.overlaps(oracle)
        assert abs(om.real - arb(LEMNISCATE)) < arb(10) ** -48


def test_invariants_recovered(cctx, prec256):
    from heckelab.cm_curve import lattice_invariants

    g2, g3 = lattice_invariants(cctx.lattice())
    assert g2.overlaps(acb(4)) and abs(g2 - 4) < arb(10) ** -60
    assert abs(g3) < arb(10) ** -60


def test_wp_against_lattice_sum(cctx, prec256):
    L = cctx.lattice()
    om = complex(cctx.omega().mid())
    z = acb(0.31, 0.17) * cctx.omega()
    wp, wpd = wp_eval(z, L)
    ref, refd = wp_lattice_sum(complex(z.mid()), 1j * om, om, 120)
    assert abs(complex(wp.mid()) - ref) < 1e-4
    assert abs(complex(wpd.mid()) - refd) < 1e-3


unit_interval = st.floats(0.03, 0.97)


@given(unit_interval, unit_interval, st.integers(-3, 3), st.integers(-3, 3))
def test_wp_periodic_and_even(a, b, m, n):
    cctx = reference_ctx()
    with working_precision(128):
        L = cctx.lattice()
        z = acb(a, b) * cctx.omega()
        wp, wpd = wp_eval(z, L)
        shifted = wp_eval(z + m * L.w1 + n * L.w2, L)
        neg = wp_eval(-z, L)
        assert shifted[0].overlaps(wp) and shifted[1].overlaps(wpd)
        assert neg[0].overlaps(wp) and neg[1].overlaps(-wpd)
        assert cctx.weierstrass_residual(wp, wpd).contains(0)


def test_half_periods_are_two_torsion(cctx, prec256):
    L = cctx.lattice()
    for w in (L.w1 / 2, L.w2 / 2, (L.w1 + L.w2) / 2):
        x, y = wp_eval(w, L)
        assert y.contains(0) and abs(y) < arb(10) ** -60
        # roots of 4x^3 - 4x
        assert any(x.overlaps(acb(r)) for r in (-1, 0, 1))


def test_multiplication_by_i(cctx, prec256):
    L = cctx.lattice()
    z = acb(0.2, 0.35) * cctx.omega()
    assert wp_eval(acb(0, 1) * z, L)[0].overlaps(-wp_eval(z, L)[0])


def test_endo_act_by_i_negates_x(cctx, prec256):
    i = QuadElem(0, 1)
    for P in cctx.torsion_points(5)[1:8]:
        x, _ = cctx.xy(P)
        xi, _ = cctx.xy(cctx.endo_act(i, P))
        assert xi.overlaps(-x)


def test_torsion_group_law(cctx, prec256):
    for P in cctx.torsion_points(5):
        if P.is_zero():
            continue
        assert cctx.mul_xy(5, cctx.xy(P)) is None
        assert P * 5 == TorsionPoint(0, 0)


def test_origin_has_no_coordinates(cctx):
    with pytest.raises(PoleAtLatticePoint):
        cctx.xy(TorsionPoint(0, 0))


def test_eigen_generators_are_killed_by_their_prime(cctx):
    nu, nuc = cctx.q_prime(), cctx.q_prime_conj()
    assert nu == QuadElem(-2, 1)
    for n in (1, 2):
        P1, P2 = cctx.eigen_generators(n)
        assert cctx.endo_act(nu**n, P1).is_zero() and not cctx.endo_act(nu ** (n - 1), P1).is_zero()
        assert cctx.endo_act(nuc**n, P2).is_zero() and not cctx.endo_act(nuc ** (n - 1), P2).is_zero()
        assert P1 * 5**n == TorsionPoint(0, 0)
        # compatible under multiplication by q
        if n == 2:
            Q1, Q2 = cctx.eigen_generators(1)
            assert P1 * 5 == Q1 and P2 * 5 == Q2


@given(st.integers(-60, 60), st.integers(-60, 60))
def test_endo_act_diagonal_on_eigenbasis(a, b):
    cctx = reference_ctx()
    mu = QuadElem(a, b)
    if mu.norm() % 5 == 0:
        return
    for n in (1, 2):
        P1, P2 = cctx.eigen_generators(n)
        r1, r2 = cctx.residue_pair(mu, n)
        assert cctx.endo_act(mu, P1) == P1 * r1
        assert cctx.endo_act(mu, P2) == P2 * r2


def test_delta_round_trip(cctx):
    for u, v in ((0, 0), (1, 3), (4, 2)):
        assert cctx.delta_inverse(cctx.delta(u, v, (1, 1)), (1, 1)) == (u, v)


def test_singular_curve_rejected():
    with pytest.raises(ConfigError):
        CMCurveCtx(g2=Fraction(0), g3=Fraction(0))


def _brute_count(ell):
    squares = {}
    for y in range(ell):
        squares[y * y % ell] = squares.get(y * y % ell, 0) + 1
    return 1 + sum(squares.get((4 * x**3 - 4 * x) % ell, 0) for x in range(ell))


@pytest.mark.parametrize("ell", [13, 17, 29])
def test_frobenius_point_count(cctx, ell):
    from heckelab.arith import prime_above

    pi = cctx.phi(prime_above(ell, -4))
    trace = 2 * pi.a
    assert ell + 1 - trace == _brute_count(ell)


def test_reduction_degree_level1(cctx):
    E = cctx.reduce_curve(13, 1)
    assert E.r == 4
    pts = E.torsion()
    assert len(pts) == 25 and all(E.on_curve(P) for P in pts.values())
    assert E.mul(5, E.basis[0]) is None and E.mul(5, E.basis[1]) is None


@pytest.mark.slow
def test_reduction_degree_level2(cctx):
    assert cctx.reduce_curve(13, 2).r == 20


def test_bad_reduction(cctx):
    with pytest.raises(BadReduction):
        cctx.reduce_curve(5, 1)
    with pytest.raises(BadReduction):
        cctx.reduce_curve(7, 1)
