"""Integration against the spherical measure over disc-based domains.

The domain is swept in strip coordinates (longitude ``t``, latitude ``s``),
where the spherical measure is ``cos(s) dt ds`` and every removed set cuts a
single latitude interval per longitude.  Longitudes are split into cells on
which the ordering of all boundary curves is fixed; each resulting curvilinear
piece ``{lo(t) < s < hi(t)}`` is mapped to a unit square and integrated by an
adaptive quadtree with tensor Gauss-Legendre rules.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .geometry import (
    HALF_PI,
    TWO_PI,
    DomainSpec,
    RemovedDisc,
    strip_to_plane_array,
    wrap_angle,
)

GAUSS_ORDER = 8
_X8, _W8 = np.polynomial.legendre.leggauss(GAUSS_ORDER)
_X4, _W4 = np.polynomial.legendre.leggauss(4)
# rows: orthonormal Legendre coefficients of degree 6 and 7 from GL8 samples
_TAIL = (np.polynomial.legendre.legvander(_X8, 7).T * _W8)[6:] * np.sqrt(np.arange(6, 8) + 0.5)[:, None]


class QuadratureError(RuntimeError):
    """An integral needed downstream failed to converge."""


@dataclass
class QuadResult:
    value: complex | float
    error_estimate: float
    cells_used: int
    max_depth_hit: bool
    converged: bool
    trace: "RefinementTrace | None" = None

    def to_json(self) -> str:
        v = self.value
        d = {
            "value": [float(np.real(v)), float(np.imag(v))] if np.iscomplexobj(v) else float(v),
            "error_estimate": float(self.error_estimate),
            "cells_used": int(self.cells_used),
            "max_depth_hit": bool(self.max_depth_hit),
            "converged": bool(self.converged),
        }
        return json.dumps(d, sort_keys=True)


@dataclass
class RefinementTrace:
    epsilons: list = field(default_factory=list)
    partials: list = field(default_factory=list)
    unconverged: list = field(default_factory=list)

    def add(self, eps: float, value: float, converged: bool = True):
        if self.epsilons and not eps < self.epsilons[-1]:
            raise ValueError("scales must be strictly decreasing")
        self.epsilons.append(float(eps))
        self.partials.append(float(value))
        if not converged:
            self.unconverged.append(float(eps))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "partial_integral"])
        for e, v in zip(self.epsilons, self.partials):
            w.writerow([repr(e), repr(v)])
        return buf.getvalue()


def spherical_density(z):
    """Pullback of the unit sphere's area element: 4 / (1 + |z|^2)^2."""
    return 4.0 / (1.0 + np.abs(z) ** 2) ** 2


# --------------------------------------------------------------------------
# region description


_SLIVER = 0.0
_BASE_LO = ("base", "lo")
_BASE_HI = ("base", "hi")


class Region:
    """Domain, optionally intersected with a disc and minus excision discs."""

    def __init__(self, dom: DomainSpec, keep: RemovedDisc | None = None, excise: Sequence[RemovedDisc] = (),
                 singular_points: Sequence[complex] = ()):
        self.dom = dom
        self.keep = keep
        self.removed = list(dom.removed_sets()) + list(excise)
        self.singular_points = [complex(p) for p in singular_points]

    def breakpoints(self) -> list[float]:
        pts: list[float] = []
        for o in self.removed:
            pts += o.breakpoints()
        if self.keep is not None:
            pts += self.keep.breakpoints()
        for p in self.singular_points:
            if p != 0:
                pts.append(math.atan2(p.imag, p.real))
        return pts

    def bound(self, label, t):
        if label == _BASE_LO:
            return np.full_like(t, -HALF_PI)
        if label == _BASE_HI:
            return np.zeros_like(t)
        if label[0] == "keep":
            lo, hi, _ = self.keep.lat_interval(t)
        else:
            lo, hi, _ = self.removed[label[1]].lat_interval(t)
        return lo if label[-1] == "lo" else hi

    def sections(self, t: np.ndarray) -> list[tuple]:
        """Signature (tuple of (lower label, upper label)) at each longitude."""
        t = np.asarray(t, dtype=float)
        n = len(t)
        ivs = [[(-HALF_PI, _BASE_LO, 0.0, _BASE_HI)] for _ in range(n)]
        if self.keep is not None:
            klo, khi, kv = self.keep.lat_interval(t)
            for m in range(n):
                if not kv[m]:
                    ivs[m] = []
                    continue
                a, al, b, bl = ivs[m][0]
                if klo[m] > a:
                    a, al = klo[m], ("keep", "lo")
                if khi[m] < b:
                    b, bl = khi[m], ("keep", "hi")
                ivs[m] = [(a, al, b, bl)] if b > a else []
        for i, o in enumerate(self.removed):
            rlo, rhi, rv = o.lat_interval(t)
            for m in range(n):
                if not rv[m]:
                    continue
                new = []
                for a, al, b, bl in ivs[m]:
                    if rhi[m] <= a or rlo[m] >= b:
                        new.append((a, al, b, bl))
                        continue
                    if rlo[m] > a:
                        new.append((a, al, rlo[m], ("rm", i, "lo")))
                    if rhi[m] < b:
                        new.append((rhi[m], ("rm", i, "hi"), b, bl))
                ivs[m] = new
        return [tuple((al, bl) for a, al, b, bl in iv if b - a > _SLIVER) for iv in ivs]

    def seam(self) -> float:
        """A longitude far from every breakpoint, used to cut the circle open."""
        bps = np.sort(wrap_angle(np.array(self.breakpoints() + [-math.pi])))
        gaps = np.diff(np.concatenate([bps, [bps[0] + TWO_PI]]))
        k = int(np.argmax(gaps))
        return float(bps[k] + 0.5 * gaps[k])

    def longitude_cells(self, uniform: int = 64, max_level: int = 60, samples: int = 9):
        """Split [seam, seam + 2 pi] into cells with a constant signature."""
        t0 = self.seam()
        bps = np.mod(np.array(self.breakpoints(), dtype=float) - t0, TWO_PI)
        graded = []
        for p in self.singular_points:
            if p != 0:
                a = (math.atan2(p.imag, p.real) - t0) % TWO_PI
                off = 0.5 ** np.arange(3, 48)
                graded += [a - off, a + off]
        edges = np.unique(np.concatenate([np.linspace(0.0, TWO_PI, uniform + 1), bps, *graded]))
        edges = edges[(edges >= 0) & (edges <= TWO_PI)] + t0
        frac = np.linspace(1e-6, 1 - 1e-6, samples)
        stack = [(float(a), float(b), 0) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        cells = []
        budget = 200_000
        while stack:
            budget -= 1
            if budget < 0:
                raise RuntimeError("boundary curves change order too often to resolve")
            a, b, lev = stack.pop()
            sig = self.sections(a + (b - a) * frac)
            if all(s == sig[0] for s in sig) or lev >= max_level or b - a < 1e-14:
                mid = sig[len(sig) // 2]
                if mid:
                    cells.append((a, b, mid))
                continue
            m = 0.5 * (a + b)
            stack.append((m, b, lev + 1))
            stack.append((a, m, lev + 1))
        cells.sort(key=lambda c: c[0])
        return cells


# --------------------------------------------------------------------------
# adaptive quadtree


def _cell_nodes(region, piece_bounds, roots, rid, t0, t1, v0, v1, x):
    """Tensor nodes and area weights (without the 1-D rule weights) per cell.

    Cells live in ``[0, 1]^2`` coordinates of their root cell.  Returns
    ``z`` and ``area`` of shape (cells, len(x), len(x)).
    """
    n = len(x)
    z = np.empty((len(t0), n, n), dtype=complex)
    area = np.empty((len(t0), n, n))
    pid = roots[0][rid]
    for p in np.unique(pid):
        sel = np.nonzero(pid == p)[0]
        lo_label, hi_label = piece_bounds[p]
        ra, rb = roots[1][rid[sel]], roots[2][rid[sel]]
        a, b, c, d = t0[sel], t1[sel], v0[sel], v1[sel]
        jac = 0.25 * (b - a) * (d - c) * (rb - ra)
        un = 0.5 * (a[:, None] + b[:, None]) + 0.5 * (b - a)[:, None] * x[None, :]
        tn = ra[:, None] + (rb - ra)[:, None] * un
        lo = region.bound(lo_label, tn)
        width = region.bound(hi_label, tn) - lo
        vn = 0.5 * (c[:, None] + d[:, None]) + 0.5 * (d - c)[:, None] * x[None, :]
        s = lo[:, :, None] + vn[:, None, :] * width[:, :, None]
        z[sel] = strip_to_plane_array(tn[:, :, None] + 0 * s, s)
        area[sel] = width[:, :, None] * np.cos(s) * jac[:, None, None]
    return z, area


def _cell_rules(region, f, piece_bounds, roots, rid, t0, t1, v0, v1):
    """Gauss-Legendre order 8 and 4 values on a batch of mapped cells.

    Also returns whether the high-degree Legendre content of the order 8
    samples is larger along the longitude than along the latitude, which
    picks the split axis.
    """
    out = []
    for x, w in ((_X8, _W8), (_X4, _W4)):
        z, area = _cell_nodes(region, piece_bounds, roots, rid, t0, t1, v0, v1, x)
        g = np.asarray(f(z.ravel()), dtype=complex).reshape(z.shape) * area
        out.append(np.einsum("j,k,ijk->i", w, w, g))
        if len(out) == 1:
            tail_t = np.abs(np.einsum("mj,ijk->imk", _TAIL, g)).sum(axis=(1, 2))
            tail_v = np.abs(np.einsum("mk,ijk->ijm", _TAIL, g)).sum(axis=(1, 2))
    return out[0], out[1], tail_t >= tail_v


@dataclass
class Mesh:
    """Final cell set of an adaptive run, reusable for other integrands."""

    region: Region
    piece_bounds: list
    roots: tuple
    cells: tuple

    def __len__(self) -> int:
        return len(self.cells[0])

    def batches(self, order: int = 8, size: int = 4096):
        """Yield ``(z, weights)`` arrays of shape (cells, order**2) in cell order."""
        x, w = (_X8, _W8) if order == 8 else (_X4, _W4)
        ww = (w[:, None] * w[None, :]).ravel()
        rid, t0, t1, v0, v1 = self.cells
        for i in range(0, len(rid), size):
            sl = slice(i, i + size)
            z, area = _cell_nodes(self.region, self.piece_bounds, self.roots, rid[sl], t0[sl], t1[sl],
                                  v0[sl], v1[sl], x)
            yield z.reshape(len(z), -1), area.reshape(len(z), -1) * ww


def integrate(
    dom: DomainSpec,
    f: Callable,
    tol: float = 1e-8,
    max_depth: int = 40,
    *,
    rtol: float = 0.0,
    keep: RemovedDisc | None = None,
    excise: Sequence[RemovedDisc] = (),
    singular_points: Sequence[complex] = (),
    max_cells: int = 400_000,
    min_depth: int = 1,
    real: bool | None = None,
    return_mesh: bool = False,
):
    """Integrate ``f(z)`` against the spherical measure over the domain.

    Parameters
    ----------
    dom : DomainSpec
        Base domain.
    f : callable
        Vectorised integrand taking a complex array.
    tol, rtol : float
        Absolute and relative error targets; converged when the summed error
        estimate is below ``max(tol, rtol * |value|)``.
    max_depth : int
        Quadtree depth cap below each boundary-fitted root cell.
    keep : RemovedDisc, optional
        Restrict the integral to this disc.
    excise : sequence of RemovedDisc
        Discs removed in addition to the domain's own removed sets.
    singular_points : sequence of complex
        Points where the integrand is singular; their angles become cell edges.
    return_mesh : bool
        Also return the final :class:`Mesh`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    region = Region(dom, keep, excise, singular_points)
    cells = region.longitude_cells()
    piece_bounds: list = []
    piece_index: dict = {}
    roots = []
    for a, b, sig in cells:
        for lab in sig:
            if lab not in piece_index:
                piece_index[lab] = len(piece_bounds)
                piece_bounds.append(lab)
            roots.append((piece_index[lab], a, b))
    if not roots:
        res = QuadResult(0.0 if real is not False else 0j, 0.0, 1, False, True)
        empty = (np.zeros(0, dtype=int),) + (np.zeros(0),) * 4
        return (res, Mesh(region, [], (np.zeros(0, dtype=int), np.zeros(0), np.zeros(0)), empty)) if return_mesh else res

    root_arr = (np.array([r[0] for r in roots], dtype=int), np.array([r[1] for r in roots]),
                np.array([r[2] for r in roots]))
    pid = np.arange(len(roots))
    t0 = np.zeros(len(roots))
    t1 = np.ones(len(roots))
    v0 = np.zeros(len(roots))
    v1 = np.ones(len(roots))
    depth = np.zeros(len(roots), dtype=int)
    for m in range(2 * min_depth):
        pid, t0, t1, v0, v1, depth = _split(np.full(len(pid), m % 2 == 0), pid, t0, t1, v0, v1, depth,
                                            np.arange(len(pid)))
    q8, q4, along = _cell_rules(region, f, piece_bounds, root_arr, pid, t0, t1, v0, v1)
    val, err = q8, np.abs(q8 - q4)

    hit = False
    while True:
        total_err = float(math.fsum(err))
        value = complex(math.fsum(val.real), math.fsum(val.imag))
        target = max(tol, rtol * abs(value))
        if total_err <= target:
            break
        refinable = depth < 2 * max_depth
        if not refinable.any() or len(pid) + 1 > max_cells:
            hit = hit or not refinable.all()
            break
        hit = hit or not refinable.all()
        idx = np.nonzero(refinable)[0]
        order = idx[np.lexsort((idx, -err[idx]))]
        cum = np.cumsum(err[order])
        need = total_err - 0.5 * target
        k = int(np.searchsorted(cum, need)) + 1
        k = max(1, min(k, len(order), max_cells - len(pid)))
        chosen = np.sort(order[:k])
        keep_mask = np.ones(len(pid), dtype=bool)
        keep_mask[chosen] = False
        cp, ct0, ct1, cv0, cv1, cd = _split(along, pid, t0, t1, v0, v1, depth, chosen)
        c8, c4, ca = _cell_rules(region, f, piece_bounds, root_arr, cp, ct0, ct1, cv0, cv1)
        pid = np.concatenate([pid[keep_mask], cp])
        t0 = np.concatenate([t0[keep_mask], ct0])
        t1 = np.concatenate([t1[keep_mask], ct1])
        v0 = np.concatenate([v0[keep_mask], cv0])
        v1 = np.concatenate([v1[keep_mask], cv1])
        depth = np.concatenate([depth[keep_mask], cd])
        val = np.concatenate([val[keep_mask], c8])
        err = np.concatenate([err[keep_mask], np.abs(c8 - c4)])
        along = np.concatenate([along[keep_mask], ca])

    converged = total_err <= target
    if real is None:
        real = float(np.max(np.abs(val.imag), initial=0.0)) == 0.0
    out = value.real if real else value
    res = QuadResult(out, total_err, int(len(pid)), bool(hit and not converged), bool(converged))
    if return_mesh:
        return res, Mesh(region, piece_bounds, root_arr, (pid, t0, t1, v0, v1))
    return res


def _split(along, rid, t0, t1, v0, v1, depth, which):
    """Bisect the chosen cells across the axis flagged in ``along``."""
    a, b, c, d = t0[which], t1[which], v0[which], v1[which]
    at = along[which]
    um = 0.5 * (a + b)
    vm = 0.5 * (c + d)
    ct0 = np.stack([a, np.where(at, um, a)], axis=1).ravel()
    ct1 = np.stack([np.where(at, um, b), b], axis=1).ravel()
    cv0 = np.stack([c, np.where(at, c, vm)], axis=1).ravel()
    cv1 = np.stack([np.where(at, d, vm), d], axis=1).ravel()
    return np.repeat(rid[which], 2), ct0, ct1, cv0, cv1, np.repeat(depth[which] + 1, 2)


def measure(dom: DomainSpec, tol: float = 1e-10, **kw) -> QuadResult:
    """Spherical measure of the domain."""
    return integrate(dom, lambda z: np.ones(z.shape), tol, real=True, **kw)


# --------------------------------------------------------------------------
# W-integrals and the logarithmic tail


def w_integrand(k: int, x: complex):
    x = complex(x)

    def f(z):
        return np.abs(1.0 - x * z) ** (-(2 * k + 2))

    return f


def w_integral(dom: DomainSpec, k: int, x: complex, tol: float = 1e-8, *, rtol: float = 1e-9,
               max_depth: int = 40, keep: RemovedDisc | None = None) -> QuadResult:
    """W(k, x): integral of |1 - x z|^(-2k-2) over the domain."""
    if k < 0:
        raise ValueError("k must be non-negative")
    x = complex(x)
    sing = [1.0 / x] if x != 0 else []
    res = integrate(dom, w_integrand(k, x), tol, max_depth, rtol=rtol, keep=keep,
                    singular_points=sing, real=True)
    if not res.converged and sing and abs(abs(sing[0]) - 1.0) < 1e-9:
        scales = [0.5 * 2.0**-m for m in range(8)]
        res.trace = excision_trace(dom, w_integrand(k, x), sing[0], scales, tol)
    return res


def log_tail_integral(k: int, r: float, *, direct: bool = False) -> float:
    """Integral of exp(-u) log(u)^(2k) / u over (exp(1/r), inf).

    The range is split at max(k^2, exp(1/r)); on each piece the integrand is
    evaluated as exp(L(u) - L_max) with L its logarithm, so log(u)^(2k) never
    overflows.  ``direct=True`` integrates the unscaled integrand instead.
    """
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if k < 0:
        raise ValueError("k must be non-negative")
    a = math.exp(1.0 / r)
    split = max(float(k * k), a)

    if direct:
        def g(u):
            return math.exp(-u) / u * math.log(u) ** (2 * k)

        parts = []
        if split > a:
            parts.append(sp_integrate.quad(g, a, split, epsabs=0, epsrel=1e-13, limit=200)[0])
        parts.append(sp_integrate.quad(g, split, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0])
        return math.fsum(parts)

    def logg(u):
        return -u - math.log(u) + 2 * k * math.log(math.log(u))

    logs = []
    pieces = [(a, split), (split, math.inf)] if split > a else [(split, math.inf)]
    for lo, hi in pieces:
        ustar = _argmax(logg, lo, hi)
        m = logg(ustar)

        def g(u, m=m):
            return math.exp(logg(u) - m)

        parts = []
        if ustar > lo:
            parts.append(sp_integrate.quad(g, lo, ustar, epsabs=0, epsrel=1e-13, limit=200)[0])
        parts.append(sp_integrate.quad(g, ustar, hi, epsabs=0, epsrel=1e-13, limit=200)[0])
        logs.append(math.log(math.fsum(parts)) + m)
    mx = max(logs)
    return math.exp(mx) * math.fsum(math.exp(t - mx) for t in logs)


def _argmax(logg, lo, hi):
    from scipy.optimize import minimize_scalar

    top = hi if not math.isinf(hi) else lo + 1000.0
    res = minimize_scalar(lambda u: -logg(u), bounds=(lo, top), method="bounded",
                          options={"xatol": 1e-10 * top})
    return max(lo, min(float(res.x), top)) if logg(float(res.x)) > logg(lo) else lo


# --------------------------------------------------------------------------
# divergence diagnosis


def excision_trace(dom: DomainSpec, f: Callable, point: complex, scales: Sequence[float], tol: float = 1e-8,
                   rtol: float = 1e-9, max_depth: int = 40) -> RefinementTrace:
    """Partial integrals of f over the domain minus discs about ``point``."""
    trace = RefinementTrace()
    for eps in scales:
        res = integrate(dom, f, tol, max_depth, rtol=rtol, excise=[RemovedDisc(point, eps)],
                        singular_points=[point], real=True)
        trace.add(eps, float(res.value), res.converged)
    return trace


CONVERGENT = "convergent"
LOG_DIVERGENT = "log-divergent"
INCONCLUSIVE = "inconclusive"


@dataclass
class DivergenceReport:
    trace: RefinementTrace
    classification: str
    slope: float
    fit_residual: float


def classify_trace(trace: RefinementTrace) -> tuple[str, float, float]:
    """Convergent / log-divergent / inconclusive from partial integrals.

    Log-divergent when the partials fit ``a + c log(1/eps)`` with ``c > 0``
    and maximal residual below 10% of the fitted rise; convergent when the
    increments decay geometrically (ratio at most 0.8) or vanish.  Any
    non-converged partial integral makes the result inconclusive.
    """
    eps = np.asarray(trace.epsilons)
    p = np.asarray(trace.partials)
    x = np.log(1.0 / eps)
    A = np.column_stack([np.ones_like(x), x])
    coef = np.linalg.lstsq(A, p, rcond=None)[0]
    slope = float(coef[1])
    rise = abs(slope) * (x[-1] - x[0])
    resid = float(np.max(np.abs(A @ coef - p)) / rise) if rise > 0 else math.inf

    inc = np.diff(p)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(p))))
    decaying = True
    for a, b in zip(inc[:-1], inc[1:]):
        if abs(b) <= floor:
            continue
        if a <= floor or b > 0.8 * a:
            decaying = False
            break
    if trace.unconverged:
        return INCONCLUSIVE, slope, resid
    if np.all(inc >= -floor) and decaying:
        return CONVERGENT, slope, resid
    ratios = inc[1:] / np.where(inc[:-1] > floor, inc[:-1], np.nan)
    steady = np.all(np.isfinite(ratios)) and np.all((ratios > 0.8) & (ratios < 1.25))
    if slope > 0 and resid < 0.1 and steady:
        return LOG_DIVERGENT, slope, resid
    return INCONCLUSIVE, slope, resid


def gamma_sq(alpha: complex, k: int = 0):
    alpha = complex(alpha)

    def f(z):
        return np.abs(z) ** (2 * k) / np.abs(1.0 - alpha * z) ** (2 * k + 2)

    return f


def divergence_probe(dom: DomainSpec, alpha: complex, scales: Sequence[float], k: int = 0,
                     tol: float = 1e-7, rtol: float = 1e-8) -> DivergenceReport:
    """Excision study of the integral of |gamma_{alpha,k}|^2 near z = 1/alpha."""
    scales = [float(s) for s in scales]
    if len(scales) < 3:
        raise ValueError("at least three scales are needed for a fit")
    if any(not 0 < s < 1 for s in scales) or any(b >= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly decreasing in (0, 1)")
    alpha = complex(alpha)
    trace = excision_trace(dom, gamma_sq(alpha, k), 1.0 / alpha, scales, tol, rtol)
    cls, slope, resid = classify_trace(trace)
    return DivergenceReport(trace, cls, slope, resid)


DEFAULT_SCALES = tuple(0.25 * 2.0**-m for m in range(9))
