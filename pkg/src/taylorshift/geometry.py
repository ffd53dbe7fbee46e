"""Extended plane, strip coordinates, cups, cusp regions and domains.

Points of the sphere minus its poles are addressed by strip coordinates
``w = t + i s`` (longitude ``t``, latitude ``s``).  Composed with the
stereographic projection from the north pole this is the Mercator map

    z = exp(i t + artanh(sin s)),

so the equator ``s = 0`` is the unit circle and ``s < 0`` is the unit disc.
All region boundaries below are described in these coordinates, which keeps
the doubly-exponentially thin gaps near cusp anchors representable.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

FORMAT_VERSION = 1
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

INSIDE = "inside"
OUTSIDE = "outside"
BOUNDARY = "boundary-band"


class DegenerateCupError(ValueError):
    """Raised when a cup's height is below floating point resolution."""


class AmbiguousComponentError(ValueError):
    """Raised when a seed point lies in no component of the star interior."""


# --------------------------------------------------------------------------
# extended plane


class _Infinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


def is_infinity(z) -> bool:
    return z is INFINITY


def invert(z):
    """Inversion of the extended plane with 1/0 = inf and 1/inf = 0."""
    if z is INFINITY:
        return 0j
    z = complex(z)
    if z == 0:
        return INFINITY
    return 1.0 / z


# --------------------------------------------------------------------------
# strip coordinates


@dataclass(frozen=True)
class StripPoint:
    t: float
    s: float

    def __post_init__(self):
        if not (-HALF_PI < self.s < HALF_PI):
            raise ValueError(f"latitude {self.s} outside (-pi/2, pi/2)")


def radius_from_lat(s):
    """|z| for latitude s, i.e. tan(pi/4 + s/2)."""
    return np.exp(np.arctanh(np.sin(s)))


def lat_from_radius(r):
    """Latitude of a point with modulus r (r = 0 maps to -pi/2)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2.0 * np.arctan((r - 1.0) / (r + 1.0))
    return np.where(np.isinf(r), HALF_PI, out)


def strip_to_plane(w: StripPoint):
    """Stereographic image of the sphere point parametrised by ``w``."""
    return complex(np.exp(1j * w.t + np.arctanh(np.sin(w.s))))


def strip_to_plane_array(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.exp(np.arctanh(np.sin(s))) * np.exp(1j * t)


def plane_to_strip(z):
    """Inverse of :func:`strip_to_plane_array` for finite nonzero z."""
    z = np.asarray(z, dtype=complex)
    return np.angle(z), lat_from_radius(np.abs(z))


def wrap_angle(t):
    """Map angles into [-pi, pi)."""
    return np.mod(np.asarray(t, dtype=float) + math.pi, TWO_PI) - math.pi


# --------------------------------------------------------------------------
# cups


def cup_height(t, rho=1.0):
    """rho * exp(-exp(1/|t|)), zero at t = 0 and below underflow."""
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(over="ignore", divide="ignore"):
        inner = np.where(t > 0, np.exp(1.0 / np.where(t > 0, t, 1.0)), np.inf)
        return rho * np.exp(-inner)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone chain hull, counter-clockwise, no repeated endpoint."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def is_convex_polygon(vertices) -> bool:
    """All turns of a closed polygon share one orientation."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return False
    e = np.roll(v, -1, axis=0) - v
    cr = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cr >= 0) or np.all(cr <= 0))


def _polygon_classify(hull: np.ndarray, x: float, y: float, tol: float) -> str:
    # hull is counter-clockwise; signed distance to each edge line
    a = hull
    b = np.roll(hull, -1, axis=0)
    e = b - a
    length = np.hypot(e[:, 0], e[:, 1])
    d = (e[:, 0] * (y - a[:, 1]) - e[:, 1] * (x - a[:, 0])) / length
    if np.all(d > tol):
        return INSIDE
    if np.any(d < -tol):
        return OUTSIDE
    return BOUNDARY


@dataclass(frozen=True)
class CupSpec:
    """The cup C_{delta,rho}: interior of the hull of t + i rho s(t), |t| <= delta."""

    delta: float
    rho: float = 1.0
    samples: int = 512

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.samples < 3:
            raise ValueError("samples must be at least 3")

    @property
    def height(self) -> float:
        return float(cup_height(self.delta, self.rho))

    def sample_t(self) -> np.ndarray:
        # quadratic grading clusters samples near t = 0
        u = np.linspace(-1.0, 1.0, self.samples)
        return self.delta * u * np.abs(u)

    def curve(self) -> np.ndarray:
        t = self.sample_t()
        return np.column_stack([t, cup_height(t, self.rho)])

    def hull(self) -> np.ndarray:
        if not self.height > np.finfo(float).tiny:
            raise DegenerateCupError(
                f"cup height rho*s(delta) = {self.height!r} is below the floating point floor"
            )
        return _convex_hull(self.curve())


def cup_membership(cup: CupSpec, w: StripPoint, tol: float = 1e-14) -> str:
    """Classify a strip point against the sampled cup hull."""
    return _polygon_classify(cup.hull(), w.t, w.s, tol)


# --------------------------------------------------------------------------
# removed sets, described per longitude by one latitude interval


class RemovedDisc:
    """Closed disc |z - center| <= radius, removed from (or kept in) a domain."""

    def __init__(self, center: complex, radius: float):
        self.center = complex(center)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def radial_interval(self, t):
        t = np.asarray(t, dtype=float)
        c = self.center
        p = (c * np.exp(-1j * t)).real
        q = (c * np.exp(-1j * t)).imag
        disc = self.radius**2 - q**2
        root = np.sqrt(np.maximum(disc, 0.0))
        # the product of the two roots is |c|^2 - r^2; use it on the side
        # where p -/+ root would cancel
        prod = (abs(c) - self.radius) * (abs(c) + self.radius)
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(p > 0, prod / (p + root), p - root)
            hi = np.where(p < 0, prod / (p - root), p + root)
        snap = 1e-15 * (abs(c) + self.radius)
        lo = np.where(lo < snap, 0.0, lo)
        valid = (disc > 0) & (hi > snap)
        return lo, hi, valid

    def lat_interval(self, t):
        lo, hi, valid = self.radial_interval(t)
        return lat_from_radius(lo), lat_from_radius(hi), valid

    def breakpoints(self) -> list[float]:
        c, r = self.center, self.radius
        out = []
        if abs(c) > r:
            phi = math.asin(r / abs(c))
            out += [math.atan2(c.imag, c.real) + phi, math.atan2(c.imag, c.real) - phi]
        if abs(c) > 0:
            out.append(math.atan2(c.imag, c.real))
        if abs(c) > 0 and abs(abs(c) - r) < 1e-15 * max(1.0, r):
            a = math.atan2(c.imag, c.real)
            out += [a + HALF_PI, a - HALF_PI]
        return out

    def contains(self, z):
        return np.abs(np.asarray(z, dtype=complex) - self.center) <= self.radius


@functools.lru_cache(maxsize=256)
def _clip_kinks(cusp: "CuspRegion") -> tuple[float, ...]:
    """Relative longitudes where the window clip switches the active bound."""
    window = RemovedDisc(1.0, cusp.window_radius)
    d = cusp.cup.delta

    def parts(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            chord_lo = lat_from_radius(cusp.chord / np.cos(t))
            cup_hi = -cup_height(t, cusp.cup.rho)
            wlo, whi, wv = window.lat_interval(t)
        wlo = np.where(wv, wlo, HALF_PI)
        whi = np.where(wv, whi, -HALF_PI)
        return np.stack([chord_lo - wlo, cup_hi - whi, np.minimum(cup_hi, whi) - np.maximum(chord_lo, wlo)])

    grid = np.linspace(-d, d, 4097)
    vals = parts(grid)
    out = []
    for row in range(vals.shape[0]):
        v = vals[row]
        for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
            out.append(brentq(lambda x: float(parts(np.array([x]))[row][0]), grid[i], grid[i + 1], xtol=1e-15))
    return tuple(sorted(out))


@dataclass(frozen=True)
class CuspRegion:
    """Planar convex hull of anchor * (image of the inward cup), clipped to a window.

    In coordinates relative to the anchor (longitude ``t`` measured from the
    anchor angle) the region is the set of points with ``|t| <= delta``,
    latitude at most ``-rho s(t)``, real part (after rotating the anchor to 1)
    at least ``r(delta) cos(delta)``, and distance to the anchor at most
    ``window_radius``.
    """

    anchor_angle: float
    cup: CupSpec
    window_radius: float = 2.0

    def __post_init__(self):
        if not self.cup.delta < HALF_PI:
            raise ValueError("delta must be below pi/2 so the chord stays off the origin")
        if not self.window_radius > 0:
            raise ValueError("window_radius must be positive")
        if self.cup.height <= 0:
            raise DegenerateCupError("cusp with underflowed height at its ends")
        # polar curve r(t) = exp(g(t)) is convex toward the origin iff g'' < 1 + g'^2
        t = np.linspace(0.0, self.cup.delta, 4001)
        g = np.arctanh(np.sin(-cup_height(t, self.cup.rho)))
        h = t[1] - t[0]
        g1 = np.gradient(g, h)
        g2 = np.gradient(g1, h)
        if np.any(g2[2:-2] >= 1.0 + g1[2:-2] ** 2):
            raise ValueError("cusp curve is not convex; reduce delta or rho")

    # -- derived geometry
    @property
    def anchor(self) -> complex:
        return complex(np.exp(1j * self.anchor_angle))

    @property
    def delta(self) -> float:
        return self.cup.delta

    @property
    def rho(self) -> float:
        return self.cup.rho

    @property
    def chord(self) -> float:
        """Real part of the chord after rotating the anchor to 1."""
        rd = float(radius_from_lat(-self.cup.height))
        return rd * math.cos(self.cup.delta)

    @property
    def half_width(self) -> float:
        """Angular half-width of the clipped region about the anchor."""
        d = self.cup.delta
        if self.window_radius < 1:
            d = min(d, math.asin(self.window_radius))
        return d

    def _curve_points(self, t):
        return radius_from_lat(-cup_height(t, self.cup.rho)) * np.exp(1j * t)

    def rel_lat_interval(self, t):
        """Removed latitude interval at relative longitude t (arrays)."""
        t = np.asarray(t, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            hi = -cup_height(t, self.cup.rho)
            cos_t = np.cos(t)
            lo = lat_from_radius(np.where(cos_t > 0, self.chord / np.where(cos_t > 0, cos_t, 1.0), np.inf))
            window = RemovedDisc(1.0, self.window_radius)
            wlo, whi, wvalid = window.lat_interval(t)
        lo = np.maximum(lo, wlo)
        hi = np.minimum(hi, whi)
        valid = (np.abs(t) <= self.cup.delta) & wvalid & (cos_t > 0) & (hi > lo)
        return lo, hi, valid

    def lat_interval(self, t):
        return self.rel_lat_interval(wrap_angle(np.asarray(t, dtype=float) - self.anchor_angle))

    def breakpoints(self) -> list[float]:
        a = self.anchor_angle
        out = [a, a + self.cup.delta, a - self.cup.delta]
        if self.window_radius < 2:
            # where the window circle meets the unit circle
            phi = 2.0 * math.asin(min(1.0, self.window_radius / 2.0))
            out += [a + phi, a - phi]
        if self.window_radius < 1:
            phi = math.asin(self.window_radius)
            out += [a + phi, a - phi]
        out += [a + k for k in _clip_kinks(self)]
        return out

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        t, s = plane_to_strip(z)
        lo, hi, valid = self.lat_interval(t)
        return valid & (s >= lo) & (s <= hi) & (np.abs(z) > 0)

    def polygon(self, samples: int | None = None) -> np.ndarray:
        """Counter-clockwise planar boundary polygon (x, y) of the clipped region."""
        n = samples or self.cup.samples
        hw = self.half_width
        t = np.linspace(-hw, hw, n)
        lo, hi, valid = self.rel_lat_interval(t)
        t, lo, hi = t[valid], lo[valid], hi[valid]
        top = radius_from_lat(hi) * np.exp(1j * t)
        bottom = radius_from_lat(lo) * np.exp(1j * t)
        ring = np.concatenate([bottom, top[::-1]]) * self.anchor
        pts = np.column_stack([ring.real, ring.imag])
        return _convex_hull(pts)

    @property
    def hull(self) -> np.ndarray:
        return self.polygon()

    def interior_point(self) -> complex:
        """A point well inside the region on the anchor ray."""
        lo, hi, _ = self.rel_lat_interval(np.array([0.0]))
        r_lo = float(radius_from_lat(lo[0]))
        r_hi = min(1.0, float(radius_from_lat(hi[0])))
        return 0.5 * (r_lo + r_hi) * self.anchor

    def to_dict(self) -> dict:
        return {
            "anchor_angle": self.anchor_angle,
            "delta": self.cup.delta,
            "rho": self.cup.rho,
            "window_radius": self.window_radius,
            "samples": self.cup.samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CuspRegion":
        return cls(
            float(d["anchor_angle"]),
            CupSpec(float(d["delta"]), float(d["rho"]), int(d["samples"])),
            float(d["window_radius"]),
        )


def make_cusp(anchor_angle: float, delta: float, rho: float = 1.0, window_radius: float = 2.0, samples: int = 512):
    return CuspRegion(float(anchor_angle), CupSpec(delta, rho, samples), window_radius)


# --------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class DomainSpec:
    """Unit disc (or crescent) minus a finite union of closed cusp regions."""

    base: str = "unit-disc"
    center: float = 0.5
    radius: float = 0.5
    cusps: tuple = field(default_factory=tuple)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.base not in ("unit-disc", "crescent"):
            raise ValueError(f"unknown base {self.base!r}")
        object.__setattr__(self, "cusps", tuple(self.cusps))
        angles = [wrap_angle(c.anchor_angle) for c in self.cusps]
        for i in range(len(angles)):
            for j in range(i):
                if abs(wrap_angle(angles[i] - angles[j])) < 1e-15:
                    raise ValueError("cusp anchors must be distinct")
        # the classical crescent has 0 on the rim of its removed disc
        if not self.contains(0j) and not (
            self.base == "crescent" and abs(abs(self.center) - self.radius) < 1e-15
        ):
            raise ValueError("the domain must contain 0")

    @classmethod
    def disc(cls, cusps: Sequence[CuspRegion] = ()) -> "DomainSpec":
        return cls("unit-disc", cusps=tuple(cusps))

    @classmethod
    def crescent(cls, center: float = 0.5, radius: float = 0.5, cusps=()) -> "DomainSpec":
        return cls("crescent", center=center, radius=radius, cusps=tuple(cusps))

    def removed_sets(self) -> list:
        out: list = []
        if self.base == "crescent":
            out.append(RemovedDisc(self.center, self.radius))
        out.extend(self.cusps)
        return out

    def with_cusps(self, cusps) -> "DomainSpec":
        return DomainSpec(self.base, self.center, self.radius, tuple(cusps), self.format_version)

    @property
    def anchors(self) -> np.ndarray:
        return np.array([c.anchor for c in self.cusps], dtype=complex)

    def contains(self, z):
        """Exact membership in the open set (vectorised)."""
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < 1.0
        if self.base == "crescent":
            inside &= np.abs(z - self.center) > self.radius
        for c in self.cusps:
            inside &= ~c.contains(z)
        return inside

    # -- serialisation
    def to_dict(self) -> dict:
        base = {"kind": self.base}
        if self.base == "crescent":
            base.update(center=self.center, radius=self.radius)
        return {
            "format_version": self.format_version,
            "base": base,
            "cusps": [c.to_dict() for c in self.cusps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        if int(d.get("format_version", 0)) != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
        base = d["base"]
        cusps = tuple(CuspRegion.from_dict(c) for c in d.get("cusps", []))
        if base["kind"] == "crescent":
            return cls("crescent", float(base["center"]), float(base["radius"]), cusps)
        return cls(base["kind"], cusps=cusps)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "DomainSpec":
        return cls.from_dict(json.loads(text))


CRESCENT = DomainSpec.crescent()
UNIT_DISC = DomainSpec.disc()


def domain_membership(dom: DomainSpec, z: complex, tol: float = 1e-12) -> str:
    """Classify z as inside, outside or within ``tol`` of the boundary."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    z = complex(z)
    probes = z + tol * np.array([0, 1, -1, 1j, -1j, (1 + 1j) / math.sqrt(2), (-1 - 1j) / math.sqrt(2)])
    hits = dom.contains(probes)
    if hits.all():
        return INSIDE
    if not hits.any():
        return OUTSIDE
    return BOUNDARY


def star_membership(dom: DomainSpec, alpha) -> bool:
    """True iff alpha lies in the star set, i.e. 1/alpha is not in the domain."""
    z = invert(alpha)
    if z is INFINITY:
        return True
    return not bool(dom.contains(complex(z)))


# --------------------------------------------------------------------------
# components of the star interior and bridging


def cusp_clusters(dom: DomainSpec) -> list[list[int]]:
    """Groups of cusp indices whose regions overlap (connected unions)."""
    from shapely.geometry import Polygon

    polys = [Polygon(c.polygon()) for c in dom.cusps]
    n = len(polys)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i):
            if polys[i].intersects(polys[j]) and polys[i].intersection(polys[j]).area > 0:
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def star_component(dom: DomainSpec, alpha, clusters=None):
    """Label of the component of the star interior containing alpha, or None.

    Labels: ``"unit-disc"`` (reflection of the exterior of the closed disc),
    ``"crescent-reflection"`` and ``"cusp-k"`` for the k-th overlapping cusp
    cluster.  The interior of the star set is the image under inversion of the interior
    of the complement of the domain, whose components are the exterior of the
    closed disc, the removed crescent disc and the overlapping cusp clusters.
    """
    z = invert(alpha)
    if z is INFINITY:
        return "unit-disc"
    z = complex(z)
    if abs(z) > 1.0:
        return "unit-disc"
    if dom.base == "crescent" and abs(z - dom.center) < dom.radius:
        return "crescent-reflection"
    clusters = cusp_clusters(dom) if clusters is None else clusters
    for k, group in enumerate(clusters):
        for i in group:
            c = dom.cusps[i]
            if c.contains(z) and _strictly_inside(c, z):
                return f"cusp-{k}"
    return None


def _strictly_inside(c: CuspRegion, z: complex) -> bool:
    t, s = plane_to_strip(np.array([z]))
    lo, hi, valid = c.lat_interval(t)
    return bool(valid[0] and lo[0] < s[0] < hi[0])


@dataclass(frozen=True)
class BridgeReport:
    bridge_point: complex
    orientation: complex
    delta: float
    verified: bool
    counterexample: StripPoint | None = None


def cup_interior_samples(delta: float, grid: int) -> np.ndarray:
    """Strip points (as complex t + i u) strictly inside the cup C_delta."""
    tt = delta * np.linspace(-1.0, 1.0, grid + 2)[1:-1]
    top = float(cup_height(delta))
    ff = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    tg, fg = np.meshgrid(tt, ff, indexing="ij")
    low = cup_height(tg)
    u = low + fg * (top - low)
    return (tg + 1j * u).ravel()


def verify_bridge(
    dom: DomainSpec,
    zeta: complex,
    omega: complex,
    delta: float,
    grid: int,
    seed_a,
    seed_b,
) -> BridgeReport:
    """Check w + omega C_delta in component A and w - omega C_delta in component B.

    ``w`` is the strip point of the unimodular ``zeta``; components of the
    star interior are named by seed points ``seed_a`` and ``seed_b``.
    """
    if grid < 1:
        raise ValueError("grid must be a positive integer")
    zeta, omega = complex(zeta), complex(omega)
    if abs(abs(zeta) - 1) > 1e-12 or abs(abs(omega) - 1) > 1e-12:
        raise ValueError("zeta and omega must be unimodular")
    clusters = cusp_clusters(dom) if dom.cusps else []
    comp_a = star_component(dom, seed_a, clusters)
    comp_b = star_component(dom, seed_b, clusters)
    if comp_a is None or comp_b is None:
        raise AmbiguousComponentError("a seed point lies in no component of the star interior")
    w = complex(math.atan2(zeta.imag, zeta.real), 0.0)
    cup = cup_interior_samples(delta, grid)
    for sign, comp in ((1.0, comp_a), (-1.0, comp_b)):
        pts = w + sign * omega * cup
        for p in pts:
            if not -HALF_PI < p.imag < HALF_PI:
                return BridgeReport(zeta, omega, delta, False, StripPoint(p.real, math.copysign(HALF_PI * 0.999, p.imag)))
            sp = StripPoint(p.real, p.imag)
            if star_component(dom, strip_to_plane(sp), clusters) != comp:
                return BridgeReport(zeta, omega, delta, False, sp)
    return BridgeReport(zeta, omega, delta, True, None)
