import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taylorshift.geometry import (
    CRESCENT,
    INFINITY,
    UNIT_DISC,
    AmbiguousComponentError,
    CupSpec,
    DegenerateCupError,
    DomainSpec,
    StripPoint,
    cup_height,
    cup_membership,
    cusp_clusters,
    domain_membership,
    invert,
    is_convex_polygon,
    make_cusp,
    plane_to_strip,
    star_component,
    star_membership,
    strip_to_plane,
    strip_to_plane_array,
    verify_bridge,
)

CUSP_DOM = DomainSpec.disc([make_cusp(0.0, 1.0, 1.0, 0.6)])


# -- strip coordinates


def test_strip_to_plane_equator_points():
    assert strip_to_plane(StripPoint(0.0, 0.0)) == pytest.approx(1.0, abs=1e-15)
    assert strip_to_plane(StripPoint(math.pi / 2, 0.0)) == pytest.approx(1j, abs=1e-15)


def test_strip_to_plane_positive_latitude_matches_sphere_oracle():
    # explicit sphere point projected from the north pole
    s = 0.1
    x1, x2, x3 = math.cos(s), 0.0, math.sin(s)
    oracle = complex(x1, x2) / (1.0 - x3)
    z = strip_to_plane(StripPoint(0.0, s))
    assert z.imag == 0.0 and z.real > 1.0
    assert z == pytest.approx(oracle, rel=1e-14)


@given(st.floats(-50, 50), st.floats(-1.5, 1.5))
def test_strip_round_trip(t, s):
    z = strip_to_plane_array(t, s)
    t2, s2 = plane_to_strip(z)
    assert s2 == pytest.approx(s, abs=1e-12)
    assert np.exp(1j * t2) == pytest.approx(np.exp(1j * t), abs=1e-12)


def test_real_axis_maps_to_unit_circle():
    t = np.random.default_rng(0).uniform(-20, 20, 1000)
    assert np.max(np.abs(np.abs(strip_to_plane_array(t, 0.0)) - 1.0)) < 1e-12


def test_strip_point_rejects_pole_latitudes():
    with pytest.raises(ValueError):
        StripPoint(0.0, math.pi / 2)


def test_invert_extended_plane():
    assert invert(0) is INFINITY
    assert invert(INFINITY) == 0
    assert invert(2.0) == 0.5


# -- cups


def test_cup_height_underflows_near_zero():
    assert cup_height(0.0) == 0.0
    assert cup_height(0.15) == 0.0
    assert cup_height(1.0) == pytest.approx(math.exp(-math.e))


def test_cup_membership_examples():
    cup = CupSpec(1.0, 1.0)
    hull = cup.hull()
    assert cup_membership(cup, StripPoint(0.0, cup.height / 2)) == "inside"
    assert cup_membership(cup, StripPoint(0.0, 0.0)) == "boundary-band"
    assert cup_membership(cup, StripPoint(2.0, 0.0)) == "outside"
    # brute-force ray-casting oracle on the sampled hull
    x, y = 0.0, cup.height / 2
    crossings = 0
    for (x0, y0), (x1, y1) in zip(hull, np.roll(hull, -1, axis=0)):
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            crossings += 1
    assert crossings % 2 == 1


def test_degenerate_cup_is_an_error():
    with pytest.raises(DegenerateCupError):
        CupSpec(0.1, 1.0).hull()


@pytest.mark.parametrize("delta,rho", [(0.5, 1.0), (1.0, 0.25), (1.4, 1e-3)])
def test_cup_hull_is_convex(delta, rho):
    assert is_convex_polygon(CupSpec(delta, rho).hull())


@given(st.floats(0.4, 1.5), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(-1, 1), st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_cup_scaling_covariance(delta, rho_a, rho_b, u, v):
    # the cup curve is rho * s(t), so the rho-cup is the unit cup scaled vertically by rho;
    # membership of (t, rho*y) in the rho-cup does not depend on rho
    lo, hi = sorted((rho_a, rho_b))
    top = cup_height(delta)
    t, y = delta * u, top * v
    a = cup_membership(CupSpec(delta, lo), StripPoint(t, lo * y), tol=0.0)
    b = cup_membership(CupSpec(delta, hi), StripPoint(t, hi * y), tol=0.0)
    assert a == b or "boundary-band" in (a, b)


def test_smaller_rho_cusp_contains_larger_rho_cusp():
    # the removed cusp lies below latitude -rho s(t); shrinking rho enlarges it
    # on the side of both closing chords
    big = make_cusp(0.0, 1.0, 0.1, 0.6)
    small = make_cusp(0.0, 1.0, 1.0, 0.6)
    rng = np.random.default_rng(1)
    z = 1.0 - rng.uniform(0, 0.6, 20000) * np.exp(1j * rng.uniform(-1.2, 1.2, 20000))
    z = z[z.real > max(big.chord, small.chord)]
    assert np.all(big.contains(z) | ~small.contains(z))
    between = strip_to_plane(StripPoint(0.5, -0.5 * float(cup_height(0.5))))
    assert big.contains(between) and not small.contains(between)


def test_cusp_polygon_convex_and_flat_at_anchor():
    c = make_cusp(0.0, 1.0, 0.5, 2.0)
    poly = c.polygon()
    assert is_convex_polygon(poly)
    # flatness in strip coordinates: polygon vertices near the anchor hug the circle
    z = poly[:, 0] + 1j * poly[:, 1]
    t, s = plane_to_strip(z)
    near = np.abs(t) < 0.5
    assert near.any()
    assert np.all(np.abs(s[near]) >= -1e-15)
    outer = s[near] > -1e-3
    bound = 0.5 * cup_height(np.abs(t[near][outer])) + 1e-12
    assert np.all(np.abs(s[near][outer]) <= bound)


def test_cusp_rejects_bad_parameters():
    with pytest.raises(ValueError):
        make_cusp(0.0, 1.6)
    with pytest.raises(ValueError):
        make_cusp(0.0, 1.0, 2.0)
    with pytest.raises(DegenerateCupError):
        make_cusp(0.0, 0.1)


# -- domains


def test_domain_membership_examples():
    assert domain_membership(CUSP_DOM, 0) == "inside"
    assert domain_membership(UNIT_DISC, 1.5) == "outside"
    assert domain_membership(CUSP_DOM, CUSP_DOM.anchors[0]) in ("boundary-band", "outside")
    assert domain_membership(CRESCENT, 0.5) == "outside"
    assert domain_membership(CRESCENT, -0.5) == "inside"
    with pytest.raises(ValueError):
        domain_membership(CRESCENT, 0, tol=0)


def test_domain_must_contain_origin():
    with pytest.raises(ValueError):
        DomainSpec.crescent(center=0.3, radius=0.5)


def test_domain_round_trip():
    dom = DomainSpec.crescent(cusps=[make_cusp(2.0, 0.8, 0.5, 1.0)])
    assert DomainSpec.loads(dom.dumps()) == dom


def test_star_membership_examples():
    assert star_membership(CUSP_DOM, 0.5)
    assert not star_membership(CUSP_DOM, INFINITY)
    z = CUSP_DOM.cusps[0].interior_point()
    assert domain_membership(CUSP_DOM, z) == "outside"
    assert star_membership(CUSP_DOM, 1 / z)


def test_star_membership_matches_domain_membership():
    rng = np.random.default_rng(2)
    alphas = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    for a in alphas:
        assert star_membership(CRESCENT, a) == (not bool(CRESCENT.contains(1 / a)))


def test_star_components():
    assert star_component(CRESCENT, 0.5) == "unit-disc"
    assert star_component(CRESCENT, 2.0) == "crescent-reflection"
    assert star_component(CRESCENT, -2.0) is None
    z = CUSP_DOM.cusps[0].interior_point()
    assert star_component(CUSP_DOM, 1 / z) == "cusp-0"


def test_cusp_clusters_group_overlaps():
    dom = DomainSpec.disc([make_cusp(0.0, 1.0), make_cusp(0.3, 1.0), make_cusp(math.pi, 0.5, 1.0, 0.3)])
    assert cusp_clusters(dom) == [[0, 1], [2]]


# -- bridges


def test_bridge_preconditions():
    with pytest.raises(ValueError):
        verify_bridge(CUSP_DOM, 1, 1, 0.5, 0, 0.5, 2.0)
    with pytest.raises(AmbiguousComponentError):
        verify_bridge(CRESCENT, 1, 1, 0.5, 5, 0.5, -2.0)


def test_bridge_at_cusp_anchor():
    z = CUSP_DOM.cusps[0].interior_point()
    rep = verify_bridge(CUSP_DOM, 1, 1, 0.5, 12, 1 / z, 0.5)
    assert rep.verified and rep.counterexample is None


def test_free_arc_is_not_a_bridge():
    rep = verify_bridge(CRESCENT, -1, 1j, 0.05, 10, 0.5, 2.0)
    assert not rep.verified
    z = strip_to_plane(rep.counterexample)
    assert star_component(CRESCENT, z) != "unit-disc"


@pytest.mark.parametrize("omega", [1, 1j, -1, -1j])
def test_crescent_tangency_admits_no_flat_cup_bridge(omega):
    # the two circles meet to second order only; doubly exponentially flat cups cross the horn
    rep = verify_bridge(CRESCENT, 1, omega, 0.05, 10, 0.5, 2.0)
    assert not rep.verified
