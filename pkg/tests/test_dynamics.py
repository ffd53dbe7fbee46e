import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taylorshift.dynamics import (
    MixingWitness,
    WitnessError,
    as_combo,
    exterior_poles,
    kernel_power,
    mixing_witness,
    norm,
    orbit_norms,
    verify_witness,
)
from taylorshift.funcspace import RationalCombo, TaylorPoly, inner_product, shift
from taylorshift.geometry import CRESCENT, UNIT_DISC, DomainSpec, make_cusp

CUSP_DOM = DomainSpec.disc([make_cusp(0.0, 1.0, 1.0, 0.6)])


def iterate(f, n):
    for _ in range(n):
        f = shift(f)
    return f


# -- exact powers


def test_as_combo_of_polynomial():
    p = TaylorPoly([1, 2, 3])
    z = np.array([0.2, -0.5j])
    assert as_combo(p)(z) == pytest.approx(p(z))


@given(st.complex_numbers(min_magnitude=1.01, max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.integers(1, 40))
@settings(max_examples=50)
def test_kernel_power_inverts_on_eigenvectors(beta, n):
    g = RationalCombo.gamma(beta)
    scaled = kernel_power(g, -n)
    ((a, k, c),) = scaled.terms
    assert (a, k) == (complex(beta), 0)
    assert c == pytest.approx(complex(beta) ** -n, rel=1e-12)
    back = kernel_power(scaled, n)
    assert back.terms[0][2] == pytest.approx(1.0, rel=1e-11)


def test_kernel_power_matches_repeated_shift():
    f = RationalCombo.from_terms([(0.4 + 0.3j, 2, 1.0), (-0.7, 1, 2j), (0.0, 5, 0.5)])
    z = 0.6 * np.exp(2j * np.pi * np.arange(7) / 7)
    for p in (1, 3, 6):
        assert kernel_power(f, p)(z) == pytest.approx(iterate(f, p)(z), rel=1e-11, abs=1e-13)


def test_kernel_power_round_trip_on_jordan_blocks():
    g = RationalCombo.from_terms([(2.0, k, 1.0 / (k + 1)) for k in range(5)])
    z = np.array([0.1, 0.3j, -0.2 + 0.1j])
    for n in (1, 4, 16):
        assert kernel_power(kernel_power(g, -n), n)(z) == pytest.approx(g(z), rel=1e-10)


def test_kernel_power_preconditions_and_underflow():
    with pytest.raises(ValueError):
        kernel_power(RationalCombo.monomial(2), -1)
    assert kernel_power(RationalCombo.monomial(2), 3) == RationalCombo()
    assert kernel_power(RationalCombo.gamma(0.5), 0) == RationalCombo.gamma(0.5)
    tiny = kernel_power(RationalCombo.gamma(1.5, 3), -5000)
    assert all(math.isfinite(abs(c)) for _, _, c in tiny.terms)


# -- orbits


def test_orbit_of_eigenvector_decays_geometrically():
    a = 0.6
    r = orbit_norms(UNIT_DISC, RationalCombo.gamma(a), 5, 1e-10)
    assert [x / r[0] for x in r] == pytest.approx([a**n for n in range(6)], rel=1e-7)


def test_orbit_of_zero_and_polynomials():
    assert orbit_norms(UNIT_DISC, TaylorPoly([0]), 3) == [0, 0, 0, 0]
    r = orbit_norms(UNIT_DISC, TaylorPoly([1, 1, 1]), 3)
    assert r[3] == 0 and r[0] > r[1] > r[2] > 0
    with pytest.raises(ValueError):
        orbit_norms(UNIT_DISC, TaylorPoly([1]), -1)


def test_orbit_semigroup():
    f = RationalCombo.from_terms([(0.5j, 1, 1.0), (-0.3, 0, 2.0)])
    a = orbit_norms(CRESCENT, f, 5)
    b = orbit_norms(CRESCENT, iterate(f, 2), 3)
    assert a[2:] == pytest.approx(b, rel=1e-8)


def test_norm_agrees_with_inner_product():
    g = RationalCombo.gamma(0.5, 1)
    v, err = norm(g, CRESCENT, 1e-10)
    assert v**2 == pytest.approx(inner_product(g, g, CRESCENT, 1e-10).value.real, rel=1e-8)
    assert 0 <= err < 1e-6
    assert norm(RationalCombo(), CRESCENT) == (0.0, 0.0)


# -- exterior poles and witnesses


def test_exterior_poles_lie_in_removed_set():
    for dom in (CUSP_DOM, CRESCENT):
        betas = exterior_poles(dom, (0.01, 0.05))
        assert betas
        for b in betas:
            assert abs(b) > 1
            assert not dom.contains(np.array([1 / b]))[0]
    assert exterior_poles(UNIT_DISC) == []


def test_witness_with_exact_exterior_target():
    f, g = RationalCombo.gamma(0.3), RationalCombo.gamma(1 / 0.995)
    w = mixing_witness(CUSP_DOM, f, g, 1e-2)
    assert w.n >= 1 and w.order == 0
    ok, es, es_e, ee, ee_e = verify_witness(CUSP_DOM, w, f, g, 1e-2, 1e-10)
    assert ok and es + 2 * es_e < 1e-2 and ee + 2 * ee_e < 1e-2
    # T^n u is exactly T^n f~ + g~
    z = np.array([0.1, -0.4j])
    assert iterate(w.u, w.n)(z) == pytest.approx(w.image()(z), rel=1e-9)


def test_witness_with_zero_target():
    f = RationalCombo.gamma(0.3)
    w = mixing_witness(CUSP_DOM, f, TaylorPoly([0]), 1e-2)
    assert w.err_start < 1e-12 and w.err_end < 1e-2
    assert 0.3**w.n * norm(f, CUSP_DOM)[0] < 1e-2


def test_witness_json_round_trip():
    w = mixing_witness(CUSP_DOM, RationalCombo.gamma(0.3), RationalCombo.gamma(1 / 0.995), 1e-2)
    text = w.to_json()
    back = MixingWitness.from_dict(json.loads(text))
    assert back == w and back.to_json() == text


def test_witness_preconditions():
    with pytest.raises(ValueError):
        mixing_witness(CUSP_DOM, TaylorPoly([1]), TaylorPoly([0, 1]), 0)
    with pytest.raises(ValueError):
        mixing_witness(UNIT_DISC, TaylorPoly([1]), TaylorPoly([0, 1]), 1e-2)
    with pytest.raises(ValueError):
        MixingWitness(RationalCombo(), 0, 0, 0, RationalCombo(), RationalCombo())
    with pytest.raises(WitnessError):
        mixing_witness(CUSP_DOM, TaylorPoly([1]), RationalCombo.gamma(1 / 0.995), 1e-2, n_max=0)
