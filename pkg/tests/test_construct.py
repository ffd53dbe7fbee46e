import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taylorshift.construct import (
    ACCUMULATING,
    FINITE,
    KSpec,
    RungeError,
    StageCertificate,
    ZSpec,
    build_domain,
    collar_integral,
    dumps_certificates,
    loads_certificates,
    runge_approximant,
    verify_certificates,
)
from taylorshift.funcspace import RationalCombo
from taylorshift.geometry import DomainSpec, make_cusp, wrap_angle

from conftest import ACCEPTANCE_R, ACCEPTANCE_Z


# -- target sets


def test_zspec_validation():
    with pytest.raises(ValueError):
        ZSpec(FINITE, (0.0, 2 * math.pi))
    with pytest.raises(ValueError):
        ZSpec(ACCUMULATING, (0.1, 0.2), 0.0)
    with pytest.raises(ValueError):
        ZSpec(ACCUMULATING, (0.2, 0.1))
    with pytest.raises(ValueError):
        ZSpec("cantor", (0.1,))
    z = ZSpec.dyadic(8)
    assert len(z.points()) == 9 and z.points()[-1] == 0.0
    assert ZSpec.from_dict(z.to_dict()) == z


def test_near_one_sorted_by_distance():
    z = ZSpec.dyadic(8)
    near = z.near_one(0.45)
    assert near[0] == 0.0
    assert all(abs(np.exp(1j * a) - 1) < 0.45 for a in near)
    assert [abs(a) for a in near] == sorted(abs(a) for a in near)


def test_kspec_points_avoid_window():
    K = KSpec(0.4)
    for z in (K.fit_points(), K.check_points()):
        assert np.all(np.abs(z) <= 1 + 1e-12)
        assert np.all(np.abs(z - 1) >= 0.4 - 1e-12)
    assert len(K.check_points()) == 8 * len(K._boundary(K.n_boundary))


# -- Runge step


def test_runge_target_in_span_is_exact():
    a = 0.2
    combo, err = runge_approximant(0, np.exp(1j * a), 3, [0.1, a, 0.3], KSpec(0.4), 1e-8)
    assert err < 1e-12
    assert len(combo.terms) == 1


def test_runge_zero_budget_reports_target_sup():
    K = KSpec(0.4)
    with pytest.raises(RungeError) as info:
        runge_approximant(1, 1.0, 0, [0.1], K, 1e-3)
    assert info.value.sup_error == pytest.approx(np.abs(RationalCombo.gamma(1.0, 1)(K.check_points())).max())


def test_runge_constant_target_against_denser_grid():
    pool = ZSpec.dyadic(8).near_one(0.49)
    combo, err = runge_approximant(0, 0.0, 6, pool, KSpec(0.49), 0.5)
    assert err < 0.5
    dense = KSpec(0.49, n_boundary=3000).check_points()
    assert np.abs(combo(dense) - 1).max() == pytest.approx(err, rel=0.05)


def test_runge_preconditions():
    with pytest.raises(ValueError):
        runge_approximant(0, 1.0, 2, [], KSpec(0.4), 0.1)
    with pytest.raises(ValueError):
        runge_approximant(-1, 1.0, 2, [0.1], KSpec(0.4), 0.1)


# -- build preconditions and small builds


@pytest.mark.parametrize("r", [[0.45, 0.47], [0.45, 0.45], [0.3, 1.2], [1.0]])
def test_build_rejects_bad_schedules(r):
    with pytest.raises(ValueError):
        build_domain(ACCEPTANCE_Z, len(r), r)


def test_build_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_domain(ACCEPTANCE_Z, 0, [0.4])
    with pytest.raises(ValueError):
        build_domain(ZSpec(FINITE, (0.5,)), 1, [0.4])
    with pytest.raises(NotImplementedError, match="not implemented"):
        build_domain(ACCEPTANCE_Z, 1, [0.4], connected_complement=True)
    with pytest.raises(NotImplementedError, match="not implemented"):
        build_domain(ACCEPTANCE_Z, 1, [0.4], spectrum_on_Z=True)


@pytest.fixture(scope="module")
def single_stage():
    return build_domain(ZSpec(FINITE, (0.0,)), 1, [0.5])


def test_single_anchor_single_stage(single_stage):
    dom, certs = single_stage
    assert len(dom.cusps) == 1 and dom.cusps[0].anchor_angle == 0.0
    (c,) = certs
    assert c.pass_ and c.check()
    assert len(c.integral_R) == len(c.integral_gamma) == 1
    assert c.sup_bound == c.integral_bound == 1.0


def test_certificate_round_trip(single_stage):
    _, certs = single_stage
    text = dumps_certificates(certs)
    assert '"pass": true' in text
    assert loads_certificates(text) == certs
    assert dumps_certificates(loads_certificates(text)) == text


def test_verify_vacuous_and_foreign(single_stage):
    dom, certs = single_stage
    assert verify_certificates(dom, [])
    other = DomainSpec.disc([make_cusp(2.0, 1.0)])
    res = verify_certificates(other, certs)
    assert not res and "not a cusp" in res.issues[0]


def test_verify_detects_tampering(single_stage):
    dom, certs = single_stage
    bad = loads_certificates(dumps_certificates(certs))
    bad[0].integral_gamma[0] *= 0.5
    res = verify_certificates(dom, bad)
    assert not res and "differs" in res.issues[0]


def test_certificate_check_is_strict():
    c = StageCertificate(1, 0.4, [0.0], 0.5, 0.5, [0.1], [0.1], 0.5, 1.0, 1.0, False)
    assert not c.check()
    c.sup_error = 0.49
    assert c.check()


# -- properties of the acceptance build


def test_anchors_lie_in_z(built):
    dom, _ = built
    zpts = [wrap_angle(a) for a in ACCEPTANCE_Z.points()]
    for c in dom.cusps:
        # the cusp at conj(zeta) makes zeta an eigenvalue
        assert min(abs(wrap_angle(-c.anchor_angle - a)) for a in zpts) < 1e-12


def test_bounds_decrease_exactly(built):
    _, certs = built
    assert [c.sup_bound for c in certs] == [1.0, 0.5, 1.0 / 3.0]
    assert [c.integral_bound for c in certs] == [c.sup_bound for c in certs]
    assert [c.r_n for c in certs] == list(ACCEPTANCE_R)
    assert all(c.pass_ for c in certs)


def test_stages_are_nested(built):
    dom, certs = built
    rng = np.random.default_rng(11)
    z = np.sqrt(rng.uniform(0, 1, 10_000)) * np.exp(2j * np.pi * rng.uniform(size=10_000))
    z = np.concatenate([z, 1 - 0.5 * rng.uniform(0, 1, 10_000) * np.exp(1j * rng.uniform(-1.5, 1.5, 10_000))])
    prev = None
    anchors: list = []
    for c in certs:
        anchors += c.new_anchor_angles
        stage = dom.with_cusps([k for k in dom.cusps if any(abs(wrap_angle(k.anchor_angle - a)) < 1e-12 for a in anchors)])
        removed = ~stage.contains(z) & (np.abs(z) < 1)
        if prev is not None:
            assert np.all(removed | ~prev)
        prev = removed


def test_collar_integrals_grow_with_rho(built):
    # smaller rho removes more of the collar; the search records max integral per rho
    _, certs = built
    for c in certs:
        pts = [(rho, v) for rho, v in c.search_trace if not isinstance(v, str)]
        for (r1, v1), (r2, v2) in zip(pts, pts[1:]):
            assert r2 < r1 and v2 <= v1 * (1 + 1e-9)


def test_collar_integral_monotone_in_rho_direct():
    vals = []
    for rho in (1.0, 0.5, 0.25):
        dom = DomainSpec.disc([make_cusp(0.0, 1.0, rho, 0.99 * 0.45)])
        vals.append(collar_integral(dom, RationalCombo.gamma(1.0), 0.45, 1e-8).value)
    assert vals[0] >= vals[1] >= vals[2]
