from fractions import Fraction

import pytest
from flint import acb, arb

from heckelab.arith import CycElem, IdealK, QuadElem, working_precision
from heckelab.cm_curve import INFINITY, wp_eval
from heckelab.efm import (
    BadAuxiliaryIdeal,
    Factor,
    HypothesisViolation,
    PoleOnTorsion,
    RatFnProduct,
    ThetaPsiSpec,
    choose_auxiliary,
    choose_V,
    distribution_residual,
    gamma_fn,
    measure_of_ratfn,
    ord_pi_ratfn,
    primitive_division_points,
    theta_psi_build,
    theta_via_eisenstein,
    torsion_of,
    zeta_fn,
)
from heckelab.eisenstein import djk_via_log_derivative
from heckelab.measures import CharPair, FiniteMeasure, fourier_all, gamma_direct, gamma_gauss

A = IdealK(QuadElem(2, 1))
ONE = IdealK(QuadElem(1, 0))


def _z(cctx, s, t):
    return acb(s, t) * cctx.omega()


def _dist_to_root_of_unity(r: acb, n: int = 24) -> float:
    return min(float(abs(r - acb(arb(2 * e) / n).exp_pi_i()).mid()) for e in range(n))


def test_zeta_has_half_the_nonzero_kernel(cctx):
    Z = zeta_fn(cctx, ONE, A)
    assert len(Z.factors) == 2
    assert len(torsion_of(cctx, A.gen)) == 5


def test_zeta_needs_coprime_auxiliary(cctx):
    with pytest.raises(BadAuxiliaryIdeal):
        zeta_fn(cctx, ONE, IdealK(QuadElem(1, 1)))
    with pytest.raises(BadAuxiliaryIdeal):
        zeta_fn(cctx, ONE, IdealK(QuadElem(3, 0)))


def test_zeta_against_weierstrass_product(cctx, prec256):
    Z = zeta_fn(cctx, ONE, A)
    L = cctx.lattice()
    alpha = A.gen.to_acb()
    om = cctx.omega()
    z = _z(cctx, 0.31, 0.52)
    x = wp_eval(z, L)[0]
    ref = 1 / ((x - wp_eval(om / alpha, L)[0]) * (x - wp_eval(2 * om / alpha, L)[0]))
    assert Z.evaluate(z).overlaps(ref)
    # even in P
    assert Z.evaluate(-z).overlaps(Z.evaluate(z))


def test_zeta_pole_on_kernel(cctx, prec256):
    Z = zeta_fn(cctx, ONE, A)
    with pytest.raises(PoleOnTorsion):
        Z.evaluate(torsion_of(cctx, A.gen)[1])


@pytest.mark.parametrize("beta", [QuadElem(1, 1), QuadElem(2, 0)])
def test_gamma_distribution_relation(cctx, prec256, beta):
    G = gamma_fn(cctx, ONE, A)
    for s, t in ((0.12, 0.43), (0.66, 0.27), (0.81, 0.9)):
        r = distribution_residual(G, beta, _z(cctx, s, t))
        assert _dist_to_root_of_unity(r) < 1e-20


def test_log_derivative_ignores_the_constant(cctx, prec256):
    Z, G = zeta_fn(cctx, ONE, A), gamma_fn(cctx, ONE, A)
    z = _z(cctx, 0.2, 0.37)
    for k in (1, 3, 5):
        assert djk_via_log_derivative(G, z, k).overlaps(djk_via_log_derivative(Z, z, k))


def test_log_derivative_against_finite_difference(cctx, prec256):
    Z = zeta_fn(cctx, ONE, A)
    z = _z(cctx, 0.44, 0.18)
    h = arb(10) ** -30
    fd = -((Z.evaluate(z + h)).log() - (Z.evaluate(z - h)).log()) / (2 * h)
    # truncation error O(h^2), cancellation costs about 30 digits
    assert abs(djk_via_log_derivative(Z, z, 1) - fd) < arb(10) ** -40


def test_log_derivative_product_rule(cctx, prec256):
    R1 = RatFnProduct(cctx, (Factor(Fraction(0), -2),))
    R2 = zeta_fn(cctx, ONE, A)
    both = RatFnProduct(cctx, R1.factors + R2.factors)
    z = _z(cctx, 0.37, 0.29)
    for k in (1, 2, 4):
        lhs = djk_via_log_derivative(both, z, k)
        assert lhs.overlaps(djk_via_log_derivative(R1, z, k) + djk_via_log_derivative(R2, z, k))


def test_theta_single_term_matches_eisenstein_side(cctx, prec256):
    a = choose_auxiliary(cctx, cctx.conductor)
    V = choose_V(cctx, cctx.conductor)
    assert a == IdealK(QuadElem(-4, 1)) or a.norm() == 17
    spec = ThetaPsiSpec(a, V, 0, 5, cctx.conductor)
    T = theta_psi_build(cctx, spec)
    assert len(T.djk_terms) == 1
    P = cctx.delta(1, 2, (1, 1))
    assert T.evaluate(P).overlaps(theta_via_eisenstein(cctx, spec, P))
    G = gamma_fn(cctx, ONE, a)
    assert T.evaluate(P).overlaps(G.djk(V + P, 0, 5))


def test_theta_hypotheses(cctx):
    V = choose_V(cctx, cctx.conductor)
    with pytest.raises(HypothesisViolation):
        theta_psi_build(cctx, ThetaPsiSpec(IdealK(QuadElem(2, 1)), V, 0, 5, cctx.conductor))
    with pytest.raises(HypothesisViolation):
        theta_psi_build(cctx, ThetaPsiSpec(IdealK(QuadElem(-4, 1)), V, -1, 3, cctx.conductor))


def test_primitive_division_points(cctx):
    pts = primitive_division_points(cctx, cctx.conductor)
    # (O/(2+2i))^x has 4 elements
    assert len(pts) == 4
    assert choose_V(cctx, cctx.conductor) == pts[0]
    assert all(P * 4 == INFINITY for P in pts)


def test_ord_of_constants(cctx):
    assert ord_pi_ratfn(13, cctx).value == 1
    assert ord_pi_ratfn(1, cctx).value == 0
    assert ord_pi_ratfn(Fraction(1, 169), cctx).value == -2


def test_ord_of_theta_at_level_one(cctx):
    a = choose_auxiliary(cctx, cctx.conductor)
    T = theta_psi_build(cctx, ThetaPsiSpec(a, choose_V(cctx, cctx.conductor), 0, 5, cctx.conductor))
    rep = ord_pi_ratfn(T, cctx, levels=(1,), prec=768)
    assert rep.value == 0
    assert rep.attained_fraction >= 0.9


def test_measure_of_constant_is_dirac(cctx, prec256):
    assert measure_of_ratfn(cctx, RatFnProduct(cctx), (1, 1)) == FiniteMeasure.dirac(5, (1, 1), (0, 0))


def test_measure_of_inverse_square_x(cctx, prec256):
    R = RatFnProduct(cctx, (Factor(Fraction(0), -2),))
    alpha = measure_of_ratfn(cctx, R, (1, 1))
    F = fourier_all(alpha)
    assert F[(0, 0)] == CycElem.zero()
    for (u, v), val in F.items():
        if (u, v) != (0, 0):
            assert val.embed().overlaps(R.evaluate(cctx.delta(u, v, (1, 1))))
    for chi in CharPair.all(5, (1, 1)):
        assert gamma_direct(alpha, chi) == gamma_gauss(alpha, chi)


def test_measure_of_x_squared_drops_the_pole(cctx, prec256):
    R = RatFnProduct(cctx, (Factor(Fraction(0), 2),))
    F = fourier_all(measure_of_ratfn(cctx, R, (1, 1)))
    assert F[(0, 0)] == CycElem.zero()
    assert F[(1, 0)].embed().overlaps(R.evaluate(cctx.delta(1, 0, (1, 1))))
