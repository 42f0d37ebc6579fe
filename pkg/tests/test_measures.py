import cmath
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from heckelab.arith import CycElem, working_precision
from heckelab.measures import (
    CharPair,
    FiniteMeasure,
    IncompleteData,
    LevelMismatch,
    NotAUnit,
    SymmetryViolation,
    ZetaPair,
    act_by_unit,
    build_beta,
    fourier,
    fourier_all,
    gamma_direct,
    gamma_gauss,
    gauss_sum,
    measure_from_fourier,
    primitive_root,
    restrict,
    symmetrize,
    trace_identity_refined_rhs,
    trace_identity_sides,
    units_predicate,
)

Q = 5


def _to_complex(x: CycElem) -> complex:
    with working_precision(128):
        return complex(x.embed().mid())


def _chi_oracle(chi: CharPair, x1: int, x2: int) -> complex:
    """Character value by brute-force discrete logarithm in floating point."""
    g = primitive_root(chi.q)
    out = 1
    for x, lev, e in zip((x1, x2), chi.level, chi.exps):
        if lev == 0:
            continue
        mod = chi.q**lev
        if x % chi.q == 0:
            return 0
        ph = mod // chi.q * (chi.q - 1)
        k = next(k for k in range(ph) if pow(g, k, mod) == x % mod)
        out *= cmath.exp(2j * math.pi * e * k / ph)
    return out


def _random_measure(seed: int, level, order=4, density=0.6) -> FiniteMeasure:
    rng = random.Random(seed)
    A, B = Q ** level[0], Q ** level[1]
    vals = {}
    for a in range(A):
        for b in range(B):
            if rng.random() < density:
                vals[(a, b)] = CycElem.from_dense(order, [rng.randint(-3, 3) for _ in range(order)], rng.randint(1, 3))
    return FiniteMeasure(Q, level, vals)


def _gamma_oracle(alpha: FiniteMeasure, chi: CharPair) -> complex:
    return sum(_chi_oracle(chi, a, b) * _to_complex(v) for (a, b), v in alpha.values.items())


levels = st.sampled_from([(1, 1), (1, 0), (0, 1), (2, 1), (1, 2)])


# characters


def test_character_counts():
    assert len(CharPair.all(Q, (0, 0))) == 1
    assert len(CharPair.all(Q, (1, 1))) == 16
    assert len(CharPair.all(Q, (2, 2))) == 400
    assert len(CharPair.all_wild(Q, (2, 2))) == 25


def test_character_values_match_oracle():
    for chi in CharPair.all(Q, (1, 2))[::7]:
        for x1, x2 in ((1, 1), (2, 7), (3, 24), (0, 3), (4, 10)):
            assert abs(_to_complex(chi(x1, x2)) - _chi_oracle(chi, x1, x2)) < 1e-12


def test_conductor_and_level_change():
    chi = CharPair(Q, (2, 2), (5, 0))
    assert chi.conductor == (1, 0)
    prim = chi.primitive()
    assert prim.level == (1, 0)
    assert prim.at_level((2, 2)) == chi
    with pytest.raises(LevelMismatch):
        CharPair(Q, (1, 1), (1, 1)).at_level((0, 1))


# Dirac and uniform examples


def test_dirac_at_one_gives_character_value():
    alpha = FiniteMeasure.dirac(Q, (1, 1), (1, 1))
    for chi in CharPair.all(Q, (1, 1)):
        assert gamma_direct(alpha, chi) == CycElem.one()
        assert gamma_gauss(alpha, chi) == CycElem.one()


def test_dirac_at_nonunit_vanishes():
    alpha = FiniteMeasure.dirac(Q, (1, 1), (0, 2))
    for chi in CharPair.all(Q, (1, 1)):
        assert gamma_direct(alpha, chi).is_zero()


def test_uniform_measure_is_orthogonal_to_nontrivial_characters():
    alpha = FiniteMeasure(Q, (1, 1), lambda a, b: Fraction(1, 25))
    for chi in CharPair.all(Q, (1, 1)):
        expected = CycElem.from_rational(Fraction(16, 25)) if chi.is_trivial() else CycElem.zero()
        assert gamma_direct(alpha, chi) == expected


def test_fourier_of_dirac():
    alpha = FiniteMeasure.dirac(Q, (1, 1), (2, 3))
    val = fourier(alpha, ZetaPair(Q, (1, 1), (1, 1)))
    assert abs(_to_complex(val) - cmath.exp(2j * math.pi * 5 / 5)) < 1e-12
    val = fourier(alpha, ZetaPair(Q, (1, 1), (1, 2)))
    assert abs(_to_complex(val) - cmath.exp(2j * math.pi * (2 + 6) / 5)) < 1e-12


# Gauss sums


def test_gauss_sum_absolute_values():
    for chi in CharPair.all(Q, (1, 1)):
        n = abs(_to_complex(gauss_sum(chi))) ** 2
        if chi.is_primitive():
            assert abs(n - 1 / 25) < 1e-14
    quad = CharPair(Q, (1, 0), (2, 0))
    assert quad.order == 2
    assert abs(_to_complex(gauss_sum(quad)) - math.sqrt(5) / 5) < 1e-14


def test_gauss_sum_against_float_sum():
    for chi in CharPair.all(Q, (2, 1))[::9]:
        ref = sum(
            _chi_oracle(chi, x1, x2) * cmath.exp(-2j * math.pi * (x1 / 25 + x2 / 5)) for x1 in range(25) for x2 in range(5)
        ) / 125
        assert abs(_to_complex(gauss_sum(chi)) - ref) < 1e-12


# Gamma transform


@pytest.mark.parametrize("level", [(1, 1), (1, 2), (2, 1)])
def test_gamma_routes_agree_with_float_oracle(level):
    alpha = _random_measure(sum(level), level)
    for chi in CharPair.all(Q, level)[::5]:
        g = gamma_direct(alpha, chi)
        assert g == gamma_gauss(alpha, chi)
        assert abs(_to_complex(g) - _gamma_oracle(alpha, chi)) < 1e-9


@given(st.integers(0, 10**6), levels)
def test_gamma_routes_agree(seed, level):
    alpha = _random_measure(seed, level, density=0.4)
    chis = CharPair.all(Q, level)
    rng = random.Random(seed)
    for chi in rng.sample(chis, min(4, len(chis))):
        assert gamma_direct(alpha, chi) == gamma_gauss(alpha, chi)


def test_gamma_at_lower_character_level():
    alpha = _random_measure(7, (2, 2), density=0.2)
    for chi in CharPair.all(Q, (1, 1))[::3]:
        assert gamma_direct(alpha, chi) == gamma_gauss(alpha, chi)
        assert gamma_direct(alpha, chi) == gamma_direct(alpha.push_forward((1, 1)), chi)


def test_character_above_measure_level_rejected():
    with pytest.raises(LevelMismatch):
        gamma_direct(FiniteMeasure.zero(Q, (1, 1)), CharPair(Q, (2, 1), (1, 1)))


# Fourier inversion


@given(st.integers(0, 10**6), levels)
def test_fourier_round_trip(seed, level):
    alpha = _random_measure(seed, level)
    assert measure_from_fourier(Q, level, fourier_all(alpha)) == alpha


def test_fourier_inverse_missing_value():
    with pytest.raises(IncompleteData):
        measure_from_fourier(Q, (1, 0), {(0, 0): 1})


# unit action and restriction


@given(st.integers(0, 10**6), st.sampled_from([1, 2, 3, 4, 7, 11]), st.sampled_from([1, 2, 3, 4, 6, 13]))
def test_unit_action_composes(seed, c, d):
    alpha = _random_measure(seed, (1, 2))
    lhs = act_by_unit(act_by_unit(alpha, (c, d)), (d, c))
    assert lhs == act_by_unit(alpha, (c * d, d * c))


def test_unit_action_twists_gamma():
    alpha = _random_measure(3, (1, 1))
    for chi in CharPair.all(Q, (1, 1))[::3]:
        lhs = gamma_direct(act_by_unit(alpha, (2, 3)), chi)
        rhs = chi(pow(2, -1, 5), pow(3, -1, 5)) * gamma_direct(alpha, chi)
        assert lhs == rhs


def test_unit_action_rejects_nonunits():
    with pytest.raises(NotAUnit):
        act_by_unit(FiniteMeasure.zero(Q, (1, 1)), (5, 1))


def test_restrict_to_units_keeps_gamma():
    alpha = _random_measure(11, (1, 1), density=1.0)
    res = restrict(alpha, units_predicate(Q, (1, 1)))
    assert all(a % 5 and b % 5 for a, b in res.values)
    for chi in CharPair.all(Q, (1, 1)):
        assert gamma_direct(res, chi) == gamma_direct(alpha, chi)


# folding onto (1+qZ)^2


def test_build_beta_folds_gamma_by_wk_squared():
    alpha = symmetrize(restrict(_random_measure(5, (2, 2), density=0.3), units_predicate(Q, (2, 2))), 4)
    beta = build_beta(alpha, 4)
    assert all(a % 5 == 1 and b % 5 == 1 for a, b in beta.values)
    # every coset of mu_K^2 in mu_{q-1}^2 is counted w_K^2 times in alpha
    for chi in CharPair.all_wild(Q, (2, 2))[:6]:
        assert gamma_direct(beta, chi) * 16 == gamma_direct(alpha, chi)


def test_build_beta_needs_symmetry():
    alpha = FiniteMeasure.dirac(Q, (1, 1), (1, 1))
    with pytest.raises(SymmetryViolation):
        build_beta(alpha, 4)
    with pytest.raises(SymmetryViolation):
        build_beta(FiniteMeasure.dirac(Q, (1, 1), (0, 1)), 4)


def test_trace_identity():
    rng = random.Random(2)
    cells = [(a, b) for a in range(1, 25, 5) for b in range(1, 25, 5)]
    beta = FiniteMeasure(Q, (2, 2), {c: CycElem.from_dense(4, [rng.randint(-3, 3) for _ in range(4)]) for c in cells})
    wild = [chi for chi in CharPair.all_wild(Q, (2, 2)) if chi.is_primitive()]
    assert wild
    for chi in wild:
        for y in ((1, 1), (6, 11), (21, 16)):
            lhs, rhs = trace_identity_sides(beta, chi, y)
            assert lhs == rhs == trace_identity_refined_rhs(beta, chi, y)


def test_trace_identity_argument_checks():
    beta = FiniteMeasure.dirac(Q, (2, 2), (1, 1))
    chi = next(c for c in CharPair.all_wild(Q, (2, 2)) if c.is_primitive())
    with pytest.raises(ValueError):
        trace_identity_sides(beta, chi, (2, 1))
    with pytest.raises(ValueError):
        trace_identity_sides(beta, CharPair(Q, (2, 2), (1, 1)), (1, 1))


def test_json_round_trip():
    alpha = _random_measure(9, (1, 2))
    assert FiniteMeasure.from_json(alpha.to_json()) == alpha
