"""Cauchy transforms, derivative growth along a boundary interval, and
classification of unimodular eigenvalues.

For ``g`` in the Bergman space the Cauchy transform is

    (Vg)(alpha) = int gamma_alpha conj(g) dm,

holomorphic on the interior of the star set, with derivatives
``(Vg)^(k)(alpha) = k! <gamma_{alpha,k}, g>``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .funcspace import Function, PoleError, RationalCombo, TaylorPoly, inner_product
from .geometry import DomainSpec, StripPoint, star_membership, strip_to_plane
from .quadrature import (
    CONVERGENT,
    DEFAULT_SCALES,
    LOG_DIVERGENT,
    QuadratureError,
    QuadResult,
    RefinementTrace,
    divergence_probe,
    gamma_sq,
    integrate,
    w_integral,
)

EIGENVALUE = "eigenvalue"
NOT_EIGENVALUE = "not-eigenvalue"
INCONCLUSIVE = "inconclusive"


def log_shape(k: int) -> float:
    """log(max(k, 2)), the small-k reading of log k."""
    return math.log(max(k, 2))


def derivative_shape(k: int) -> float:
    """k! 5^(k/2) log^k(max(k, 2))."""
    return math.factorial(k) * 5.0 ** (k / 2) * log_shape(k) ** k


def w_shape(k: int) -> float:
    """5^k log^(2k)(max(k, 2))."""
    return 5.0**k * log_shape(k) ** (2 * k)


def cauchy_transform(g: Function, alpha: complex, k: int, dom: DomainSpec, tol: float = 1e-9) -> QuadResult:
    """k-th derivative of Vg at alpha, as ``k! <gamma_{alpha,k}, g>``.

    Raises :class:`PoleError` when ``1/alpha`` lies in the open domain.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    alpha = complex(alpha)
    if not star_membership(dom, alpha):
        raise PoleError(f"1/alpha = {1 / alpha} lies inside the domain")
    if isinstance(g, RationalCombo) and not g.terms or isinstance(g, TaylorPoly) and not np.any(g.coeffs):
        return QuadResult(0j, 0.0, 0, False, True)
    res = inner_product(RationalCombo.gamma(alpha, k), g, dom, tol)
    f = math.factorial(k)
    return QuadResult(f * res.value, f * res.error_estimate, res.cells_used, res.max_depth_hit, res.converged)


def interval_points(r: float, grid: int) -> np.ndarray:
    """``grid`` points of the real interval image of ``i [-r/2, r/2]``."""
    if grid < 1:
        raise ValueError("grid must be positive")
    s = np.linspace(-r / 2, r / 2, grid) if grid > 1 else np.zeros(1)
    return np.array([strip_to_plane(StripPoint(0.0, float(v))).real for v in s])


@dataclass
class GrowthReport:
    k_values: list
    sup_derivatives: list
    bound_values: list
    fitted_C: float
    pass_: bool
    cs_bounds: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sup_derivative", "bound_value", "ratio", "cauchy_schwarz_bound"])
        for i, k in enumerate(self.k_values):
            cs = self.cs_bounds[i] if i < len(self.cs_bounds) else ""
            w.writerow([k, repr(self.sup_derivatives[i]), repr(self.bound_values[i]),
                        repr(self.sup_derivatives[i] / self.bound_values[i]), repr(cs) if cs != "" else ""])
        return buf.getvalue()


def _fit_and_check(sups, shapes):
    calib = [s / b for s, b in zip(sups[:2], shapes[:2])]
    C = max(calib)
    bounds = [C * b for b in shapes]
    ok = all(s <= b for s, b in zip(sups, bounds))
    return C, bounds, ok


def _check_interval(dom: DomainSpec, xs):
    for x in xs:
        if not star_membership(dom, x):
            raise ValueError(f"x = {x} has 1/x inside the domain; the interval must lie in the star set")


def growth_check(g: Function, dom: DomainSpec, r: float = 0.5, kmax: int = 6, grid: int = 41,
                 tol: float = 1e-9) -> GrowthReport:
    """Sup of ``|(Vg)^(k)|`` over the sampled interval against k! 5^(k/2) log^k.

    The constant is calibrated on k in {0, 1}; the report passes when it
    dominates every later k.  The per-k Cauchy-Schwarz bound
    ``k! |g| sup_x W(k, x)^(1/2)`` is reported alongside.
    """
    xs = interval_points(r, grid)
    _check_interval(dom, xs)
    gnorm = math.sqrt(max(inner_product(g, g, dom, tol).value.real, 0.0))
    sups, cs = [], []
    for k in range(kmax + 1):
        best = 0.0
        wbest = 0.0
        for x in xs:
            res = cauchy_transform(g, x, k, dom, tol)
            if not res.converged:
                raise QuadratureError(f"derivative k={k} at x={x!r} did not converge")
            best = max(best, abs(res.value))
            wres = w_integral(dom, k, x, tol)
            wbest = max(wbest, wres.value if wres.converged else math.inf)
        sups.append(best)
        cs.append(math.factorial(k) * gnorm * math.sqrt(wbest))
    shapes = [derivative_shape(k) for k in range(kmax + 1)]
    C, bounds, ok = _fit_and_check(sups, shapes)
    return GrowthReport(list(range(kmax + 1)), sups, bounds, C, ok, cs)


@dataclass
class WBoundReport:
    k_values: list
    sup_w: list
    bound_values: list
    fitted_C: float
    pass_: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sup_w", "bound_value", "ratio"])
        for k, s, b in zip(self.k_values, self.sup_w, self.bound_values):
            w.writerow([k, repr(s), repr(b), repr(s / b)])
        return buf.getvalue()


def w_bound_check(dom: DomainSpec, r: float = 0.5, kmax: int = 10, grid: int = 41,
                  tol: float = 1e-9) -> WBoundReport:
    """Sup over the sampled interval of W(k, x) against 5^k log^(2k)."""
    xs = interval_points(r, grid)
    _check_interval(dom, xs)
    sups = []
    for k in range(kmax + 1):
        best = 0.0
        for x in xs:
            res = w_integral(dom, k, x, tol)
            if not res.converged:
                raise QuadratureError(f"W({k}, {x!r}) did not converge")
            best = max(best, float(res.value))
        sups.append(best)
    shapes = [w_shape(k) for k in range(kmax + 1)]
    C, bounds, ok = _fit_and_check(sups, shapes)
    return WBoundReport(list(range(kmax + 1)), sups, bounds, C, ok)


@dataclass
class EigenClassification:
    lam: complex
    verdict: str
    evidence: RefinementTrace
    norm_if_member: float | None = None
    probe_classification: str = ""
    slope: float = math.nan
    at_anchor: bool = False

    def __post_init__(self):
        if self.verdict == EIGENVALUE and (self.norm_if_member is None or not math.isfinite(self.norm_if_member)):
            raise ValueError("an eigenvalue verdict needs a finite norm")

    def to_json(self, trace_file: str | None = None) -> str:
        d = {
            "lambda": [self.lam.real, self.lam.imag],
            "verdict": self.verdict,
            "norm_if_member": self.norm_if_member,
            "probe_classification": self.probe_classification,
            "slope": self.slope if math.isfinite(self.slope) else None,
            "at_anchor": self.at_anchor,
            "trace_file": trace_file,
        }
        if trace_file is None:
            d["trace"] = {"epsilon": self.evidence.epsilons, "partial_integral": self.evidence.partials}
        return json.dumps(d, sort_keys=True)


def eigen_classify(dom: DomainSpec, lam: complex, scales=DEFAULT_SCALES, tol: float = 1e-9) -> EigenClassification:
    """Is ``lam`` on the unit circle an eigenvalue of the shift?

    That happens exactly when ``gamma_lam`` is square integrable, i.e. when
    ``|1 - lam z|^-2`` is integrable near the boundary point ``1/lam``.
    """
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > 1e-12:
        raise ValueError("lambda must be unimodular")
    rep = divergence_probe(dom, lam, scales)
    at_anchor = any(abs(a - 1.0 / lam) < 1e-12 for a in dom.anchors)
    if rep.classification == CONVERGENT:
        res = integrate(dom, gamma_sq(lam), tol, rtol=1e-9, singular_points=[1.0 / lam], real=True)
        if res.converged:
            return EigenClassification(lam, EIGENVALUE, rep.trace, math.sqrt(res.value), rep.classification,
                                       rep.slope, at_anchor)
        return EigenClassification(lam, INCONCLUSIVE, rep.trace, None, rep.classification, rep.slope, at_anchor)
    verdict = NOT_EIGENVALUE if rep.classification == LOG_DIVERGENT else INCONCLUSIVE
    return EigenClassification(lam, verdict, rep.trace, None, rep.classification, rep.slope, at_anchor)
