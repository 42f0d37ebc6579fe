import pytest
from flint import acb, arb
from hypothesis import given, settings
from hypothesis import strategies as st

from heckelab.arith import IdealK, QuadElem, working_precision
from heckelab.cm_curve import BasisOrientation, LatticeBasis, PoleAtLatticePoint, reference_ctx, wp_eval
from heckelab.eisenstein import (
    ConvergenceRegion,
    EisParams,
    a_const,
    cross_check_djk,
    eis,
    eis_jk_smoothed,
)


def _close(a: acb, b: acb, tol=1e-60) -> bool:
    return a.overlaps(b) and abs(a - b) < arb(tol) * (1 + abs(b))


def _point(cctx, s, t):
    return acb(s, t) * cctx.omega()


def test_area_constant_of_gaussian_lattice(prec256):
    A = a_const(LatticeBasis(acb(0, 1), acb(1)))
    assert A.overlaps(1 / arb.pi())


def test_area_constant_scales_by_norm(prec256):
    L = LatticeBasis(acb(0, 1), acb(1))
    lam = acb(2, 1)
    assert a_const(L.scale(lam)).overlaps(5 / arb.pi())


def test_swapped_basis_rejected(prec256):
    with pytest.raises(BasisOrientation):
        a_const(LatticeBasis(acb(1), acb(0, 1)))


@pytest.mark.parametrize("j,k", [(1, 4), (-4, 4), (-1, 3), (0, 2)])
def test_outside_convergence_region(j, k, cctx, prec256):
    with pytest.raises(ConvergenceRegion):
        eis(j, k, _point(cctx, 0.3, 0.2), cctx.lattice())


def test_lattice_point_rejected(cctx, prec256):
    with pytest.raises(PoleAtLatticePoint):
        eis(0, 4, cctx.omega(), cctx.lattice())


def test_holomorphic_cases_match_weierstrass(cctx, prec256):
    L = cctx.lattice()
    for s, t in ((0.3, 0.2), (0.71, 0.45), (0.1, 0.9)):
        z = _point(cctx, s, t)
        wp, wpd = wp_eval(z, L)
        assert _close(eis(0, 3, z, L), -wpd)
        assert _close(eis(0, 4, z, L), 6 * wp**2 - 2)  # g2 = 4
        assert _close(eis(0, 5, z, L), -12 * wp * wpd)


def _float_sum(z, w1, w2, j, k, R):
    import math

    tot = 0
    for m in range(-R, R + 1):
        for n in range(-R, R + 1):
            u = z + m * w1 + n * w2
            tot += u.conjugate() ** (-j) * u ** (-k)
    return math.factorial(k - 1) * tot


def test_nonholomorphic_against_truncated_sum(cctx, prec256):
    import math

    L = cctx.lattice()
    z = _point(cctx, 0.37, 0.21)
    w1, w2 = complex(L.w1.mid()), complex(L.w2.mid())
    A = float(a_const(L).mid())
    got = complex(eis(-1, 5, z, L).mid())
    ref = A**-1 * _float_sum(complex(z.mid()), w1, w2, -1, 5, 150)
    assert abs(got - ref) < 1e-4 * abs(ref)
    assert math.isfinite(abs(got))


@pytest.mark.parametrize("j,k", [(0, 3), (0, 4), (-1, 4), (-1, 5), (-2, 5)])
def test_homogeneity(j, k, cctx, prec256):
    L = cctx.lattice()
    lam = acb(2, 1)
    z = _point(cctx, 0.23, 0.61)
    lhs = eis(j, k, lam * z, L.scale(lam))
    rhs = lam ** (j - k) * eis(j, k, z, L)
    assert _close(lhs, rhs)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([(0, 3), (-1, 4), (-2, 5)]))
@settings(max_examples=15)
def test_unit_and_conjugation_symmetry(s, t, jk):
    j, k = jk
    cctx = reference_ctx()
    with working_precision(192):
        L = cctx.lattice()
        z = _point(cctx, s, t)
        base = eis(j, k, z, L)
        for u in (acb(0, 1), acb(-1), acb(0, -1)):
            assert eis(j, k, u * z, L).overlaps(u.conjugate() ** (-j) * u ** (-k) * base)
        assert eis(j, k, z.conjugate(), L).overlaps(base.conjugate())
        # periodicity in z
        assert eis(j, k, z + L.w1 - 2 * L.w2, L).overlaps(base)


def test_coset_sum(cctx, prec256):
    L = cctx.lattice()
    om = cctx.omega()
    a = IdealK(QuadElem(2, 1))
    alpha = a.gen.to_acb()
    La = L.scale(1 / alpha)
    for j, k in ((0, 4), (-1, 4)):
        z = _point(cctx, 0.33, 0.14)
        lhs = eis(j, k, z, La)
        rhs = sum((eis(j, k, z + om * r.to_acb() / alpha, L) for r in a.residues()), acb(0))
        rhs *= arb(a.norm()) ** (-j)
        assert _close(lhs, rhs)


def test_smoothing_by_unit_ideal_vanishes(cctx, prec256):
    z = _point(cctx, 0.4, 0.3)
    val = eis_jk_smoothed(EisParams(0, 4, z, cctx.lattice()), IdealK(QuadElem(1, 0)))
    assert val.contains(0) and abs(val) < arb(10) ** -60


def test_log_derivative_cross_check(cctx, prec256):
    a = IdealK(QuadElem(2, 1))
    b = IdealK(QuadElem(1, 0))
    for k in (3, 4, 5):
        r = cross_check_djk(cctx, b, a, _point(cctx, 0.27, 0.58), 0, k)
        assert r.contains(0) and abs(r) < arb(10) ** -40
    assert cross_check_djk(cctx, b, b, _point(cctx, 0.27, 0.58), 0, 4) == 0
