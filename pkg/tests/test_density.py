import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from heckelab.arith import QuadElem
from heckelab.density import (
    BadP,
    EtaTuple,
    TorsionNotAvailable,
    ReducedRatFn,
    crt_lift,
    dioph_approx,
    independence_test,
    small_relation,
    verify_approx,
    vq,
    xi_set,
)


@pytest.fixture(scope="module")
def curve13(cctx):
    return cctx.reduce_curve(13, 1)


def test_vq():
    assert vq(250, 5) == 3
    assert vq(7, 5) == 0


@pytest.mark.parametrize("P,n,size", [(6, 1, 1), (6, 2, 25), (26, 2, 1), (26, 3, 25), (11, 2, 25)])
def test_xi_sizes(P, n, size):
    xi = xi_set(5, P, n)
    assert len(xi.elements) == size == xi.expected_size()
    assert xi.is_closed()


def test_xi_against_direct_orbit():
    xi = xi_set(5, 6, 3)
    powers = {pow(6, e, 125) for e in range(200)}
    assert xi.elements == frozenset((a, b) for a in powers for b in powers)


@pytest.mark.parametrize("q,P,n", [(4, 5, 2), (5, 7, 2), (5, 1, 2), (5, 26, 1)])
def test_xi_rejects(q, P, n):
    with pytest.raises(BadP):
        xi_set(q, P, n)


def test_crt_lift_residues(cctx):
    eta = EtaTuple(5, 3, (17, 99))
    t = crt_lift(cctx, eta)
    assert cctx.residue_pair(t, 3) == (17, 99)


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_dioph_approx_verifies(seed, n):
    from heckelab.cm_curve import reference_ctx

    cctx = reference_ctx()
    rng = random.Random(seed)
    mod = 5**n
    betas = [EtaTuple(5, n, (rng.randrange(mod), rng.randrange(mod))) for _ in range(2)]
    res = dioph_approx(cctx, betas, c=1)
    assert verify_approx(cctx, betas, Fraction(1), res)
    assert all(b.norm() < mod * mod for b in res.b)


def test_dioph_approx_twenty_trials(cctx):
    rng = random.Random(1)
    for _ in range(20):
        n = rng.randint(1, 4)
        mod = 5**n
        betas = [EtaTuple(5, n, (rng.randrange(mod), rng.randrange(1, mod))) for _ in range(3)]
        res = dioph_approx(cctx, betas, c=Fraction(1, 2))
        assert verify_approx(cctx, betas, Fraction(1, 2), res)


def test_verify_rejects_tampered_answer(cctx):
    betas = [EtaTuple(5, 2, (7, 11))]
    res = dioph_approx(cctx, betas)
    res.b[0] = res.b[0] + QuadElem(1, 0)
    assert not verify_approx(cctx, betas, Fraction(1), res)


def test_dioph_approx_argument_checks(cctx):
    with pytest.raises(ValueError):
        dioph_approx(cctx, [EtaTuple(5, 1, (1, 1))], c=2)
    with pytest.raises(ValueError):
        dioph_approx(cctx, [EtaTuple(5, 1, (1, 1)), EtaTuple(5, 2, (1, 1))])


def test_x_coordinate_has_a_witness(curve13):
    v = independence_test(curve13, [EtaTuple(5, 1, (1, 1))], [ReducedRatFn.x()])
    assert v.verdict == "nonvanishing-witness"
    assert v.witness is not None


def test_witness_is_order_independent(curve13):
    etas = [EtaTuple(5, 1, (1, 1)), EtaTuple(5, 1, (2, 3))]
    rs = [ReducedRatFn.x(), ReducedRatFn.y()]
    cells = [(a, b) for a in range(5) for b in range(5)]
    ref = independence_test(curve13, etas, rs)
    random.Random(4).shuffle(cells)
    assert independence_test(curve13, etas, rs, order=cells).witness == ref.witness


def test_constants_cancel(curve13):
    etas = [EtaTuple(5, 1, (1, 1)), EtaTuple(5, 1, (2, 2))]
    v = independence_test(curve13, etas, [ReducedRatFn.constant(3), ReducedRatFn.constant(-3)])
    assert v.verdict == "identically-zero-on-E[q^n]"
    assert v.alarm is None


def test_unit_related_etas_flag_a_relation(cctx, curve13):
    # x(iQ) = -x(Q), so x(eta Q) + x(i eta Q) vanishes identically
    i_pair = cctx.residue_pair(QuadElem(0, 1), 1)
    etas = [EtaTuple(5, 1, (1, 1)), EtaTuple(5, 1, i_pair)]
    v = independence_test(curve13, etas, [ReducedRatFn.x(), ReducedRatFn.x()])
    assert v.verdict == "identically-zero-on-E[q^n]"
    assert v.relation is not None
    assert v.alarm.startswith("hypothesis-excluded")


def test_small_relation_absent_for_generic_etas(cctx):
    assert small_relation(cctx, [EtaTuple(5, 2, (1, 1)), EtaTuple(5, 2, (7, 1))], height=1) is None


def test_level_above_curve_rejected(curve13):
    with pytest.raises(TorsionNotAvailable):
        independence_test(curve13, [EtaTuple(5, 2, (1, 1))], [ReducedRatFn.x()], n=2)


def test_reduced_ratfn_evaluation(curve13):
    F = curve13.field
    assert ReducedRatFn.constant(14).evaluate(None, F) == F(1)
    assert ReducedRatFn.x().evaluate(None, F) is None
    assert ReducedRatFn.constant(26).is_constant(13)
