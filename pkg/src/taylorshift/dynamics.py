"""Orbits of the backward shift and explicit mixing witnesses.

On the span of ``gamma_{alpha,k}``, k = 0..K, the shift acts as the Jordan
block ``alpha I + S`` with ``S gamma_{alpha,k} = gamma_{alpha,k-1}``.  Powers
of it (negative ones too when alpha != 0) are therefore explicit:

    (alpha I + S)^p = sum_m binom(p, m) alpha^(p-m) S^m.

A witness for the pair (f, g) is ``u = f~ + T^(-n) g~`` with f~ built from
kernels with |alpha| < 1 and g~ from kernels whose poles lie in the removed
set (|alpha| > 1).  Then ``T^n u = T^n f~ + g~`` exactly, the first summand
decays and ``T^(-n) g~`` shrinks as n grows.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .funcspace import Function, RationalCombo, TaylorPoly, check_membership, inner_product, shift
from .geometry import DomainSpec, cusp_clusters
from .quadrature import QuadratureError, integrate


class WitnessError(RuntimeError):
    """No witness within the budgets; carries the best residuals reached."""

    def __init__(self, msg: str, err_start: float, err_end: float):
        super().__init__(msg)
        self.err_start = err_start
        self.err_end = err_end


def as_combo(f: Function) -> RationalCombo:
    """A TaylorPoly as a sum of monomials ``gamma_{0,k}``."""
    if isinstance(f, RationalCombo):
        return f
    return RationalCombo.from_terms((0.0, k, c) for k, c in enumerate(f.coeffs))


def _log_binom(p: int, m: int) -> tuple[float, int]:
    """log |binom(p, m)| and its sign, for integer p of either sign."""
    if p >= 0:
        return math.lgamma(p + 1) - math.lgamma(m + 1) - math.lgamma(p - m + 1), 1
    q = -p
    return math.lgamma(q + m) - math.lgamma(m + 1) - math.lgamma(q), (-1) ** m


def kernel_power(f: Function, p: int) -> RationalCombo:
    """``T^p f`` for a kernel combination; p < 0 needs every alpha nonzero.

    Coefficients are formed in log space, so huge binomials times tiny
    powers of alpha neither overflow nor lose range (results below the
    double range flush to zero).
    """
    f = as_combo(f)
    if p == 0:
        return f
    blocks: dict = defaultdict(dict)
    for a, k, c in f.terms:
        blocks[a][k] = c
    out = []
    for a, coef in blocks.items():
        K = max(coef)
        if a == 0:
            if p < 0:
                raise ValueError("negative powers need nonzero alpha")
            out += [(0.0, k - p, c) for k, c in coef.items() if k - p >= 0]
            continue
        la, pa = math.log(abs(a)), math.atan2(a.imag, a.real)
        for k in range(K + 1):
            acc = 0j
            top = K - k if p < 0 else min(p, K - k)
            for m in range(top + 1):
                c = coef.get(k + m)
                if c is None:
                    continue
                lb, sg = _log_binom(p, m)
                e = lb + (p - m) * la
                if e < -745.0:
                    continue
                acc += sg * c * math.exp(e) * complex(math.cos((p - m) * pa), math.sin((p - m) * pa))
            if acc != 0:
                out.append((a, k, acc))
    return RationalCombo.from_terms(out)


def norm(h: Function, dom: DomainSpec, tol: float = 1e-9) -> tuple[float, float]:
    """A^2 norm and an error bound derived from the quadrature estimate."""
    h = as_combo(h)
    if not h.terms:
        return 0.0, 0.0
    q = integrate(dom, lambda z: np.abs(h(z)) ** 2, tol, rtol=tol, real=True)
    if not q.converged:
        raise QuadratureError("norm integral did not converge")
    v = max(float(q.value), 0.0)
    return math.sqrt(v), math.sqrt(v + q.error_estimate) - math.sqrt(v)


def orbit_norms(dom: DomainSpec, f: Function, N: int, tol: float = 1e-9) -> list[float]:
    """``|T^n f|`` for n = 0..N, the iterates formed exactly."""
    if N < 0:
        raise ValueError("N must be non-negative")
    check_membership(f, dom)
    out = []
    h = f
    for n in range(N + 1):
        res = inner_product(h, h, dom, tol, rtol=tol)
        if not res.converged:
            raise QuadratureError(f"norm of T^{n} f did not converge")
        out.append(math.sqrt(max(res.value.real, 0.0)))
        if n < N:
            h = shift(h)
    return out


# --------------------------------------------------------------------------
# pole supply


def _removed_anchors(dom: DomainSpec) -> list[complex]:
    """One touching point per connected piece of the removed set.

    Within a cluster of overlapping cusps the widest window is used, which
    keeps ladder poles far from the domain.
    """
    pts = []
    if dom.base == "crescent" and abs(dom.center + dom.radius - 1.0) < 1e-12:
        pts.append(1.0 + 0j)
    if dom.cusps:
        for cluster in cusp_clusters(dom):
            best = max(cluster, key=lambda i: (dom.cusps[i].window_radius, -i))
            pts.append(dom.cusps[best].anchor)
    return pts


def exterior_poles(dom: DomainSpec, depths: Sequence[float] = (0.01,)) -> list[complex]:
    """Exterior eigenvalues ``beta`` with ``1/beta`` on radial ladders inside
    the removed set, nearest to the anchor first."""
    out: list[complex] = []
    for h in depths:
        for a in _removed_anchors(dom):
            p = a * (1.0 - h)
            if not dom.contains(np.array([p]))[0]:
                out.append(1.0 / p)
    return out


def _admissible_exterior(dom: DomainSpec, f: RationalCombo) -> bool:
    return all(abs(a) > 1 and not dom.contains(np.array([1.0 / a]))[0] for a, _, _ in f.terms)


def _interior_exact(f: Function) -> bool:
    return isinstance(f, TaylorPoly) or all(abs(a) < 1 for a, _, _ in f.terms)


class _MeshFit:
    """Weighted least squares on the nodes of an adaptive mesh.

    ``R`` (from a QR factorisation of the weighted sample matrix) gives the
    discrete norm of any combination of the basis as ``|R v|``.
    """

    def __init__(self, dom: DomainSpec, basis: Sequence[RationalCombo], target: Function, tol: float):
        def env(z):
            s = np.abs(target(z)) ** 2
            for b in basis:
                v = np.abs(b(z)) ** 2
                s = s + v / (1.0 + v)
            return s

        _, mesh = integrate(dom, env, tol, rtol=tol, real=True, return_mesh=True)
        # streaming QR of [A | t]; only the triangular factor is kept
        n = len(basis)
        R = np.zeros((0, n + 1), dtype=complex)
        for z, w in mesh.batches(size=1024):
            z = z.ravel()
            sw = np.sqrt(w.ravel())
            block = np.empty((len(z), n + 1), dtype=complex)
            for j, b in enumerate(basis):
                block[:, j] = b(z) * sw
            block[:, n] = target(z) * sw
            R = np.linalg.qr(np.vstack([R, block]), mode="r")
        scale = np.linalg.norm(R[:, :n], axis=0)
        scale[scale == 0] = 1.0
        Rb = R[:n, :n] / scale
        self.coef = np.linalg.solve(Rb, R[:n, n]) / scale
        self.residual = float(np.linalg.norm(R[n:, n]))
        self.R = R[:n, :n]
        self.cells = len(mesh)

    def norm_of(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.R @ v))


def _exterior_basis(betas, K):
    return [(b, k) for b in betas for k in range(K + 1)]


def _combo(pairs, coef) -> RationalCombo:
    return RationalCombo.from_terms((b, k, c) for (b, k), c in zip(pairs, coef))


# --------------------------------------------------------------------------
# witnesses


@dataclass
class MixingWitness:
    u: RationalCombo
    n: int
    err_start: float
    err_end: float
    interior_part: RationalCombo
    exterior_part: RationalCombo
    err_start_error: float = 0.0
    err_end_error: float = 0.0
    order: int = 0
    poles: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")

    def scaled_exterior(self) -> RationalCombo:
        return kernel_power(self.exterior_part, -self.n)

    def image(self) -> RationalCombo:
        """``T^n u``, assembled as ``T^n interior + exterior``."""
        return kernel_power(self.interior_part, self.n) + self.exterior_part

    def to_dict(self) -> dict:
        return {
            "u": self.u.to_dict(),
            "n": self.n,
            "err_start": self.err_start,
            "err_end": self.err_end,
            "err_start_error": self.err_start_error,
            "err_end_error": self.err_end_error,
            "interior_part": self.interior_part.to_dict(),
            "exterior_part": self.exterior_part.to_dict(),
            "order": self.order,
            "poles": [[complex(p).real, complex(p).imag] for p in self.poles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MixingWitness":
        return cls(RationalCombo.from_dict(d["u"]), d["n"], d["err_start"], d["err_end"],
                   RationalCombo.from_dict(d["interior_part"]), RationalCombo.from_dict(d["exterior_part"]),
                   d["err_start_error"], d["err_end_error"], d["order"], [complex(*p) for p in d["poles"]])


def _approximate_interior(dom, f, eps, budgets, tol):
    if _interior_exact(f):
        return as_combo(f), 0.0
    for K in budgets:
        basis = [RationalCombo.monomial(k) for k in range(K + 1)]
        fit = _MeshFit(dom, basis, f, tol)
        if fit.residual < eps / 4:
            return RationalCombo.from_terms((0.0, k, c) for k, c in enumerate(fit.coef)), fit.residual
    raise WitnessError(f"polynomial residual {fit.residual:.3g} above {eps / 4:.3g}", fit.residual, math.nan)


def mixing_witness(dom: DomainSpec, f: Function, g: Function, eps: float,
                   basis_budgets: Sequence[int] = (8, 16, 24, 32, 40, 48, 56, 64), tol: float = 1e-9,
                   depths: Sequence[float] = (0.01,), n_max: int = 2**24) -> MixingWitness:
    """Find u and n with ``|u - f| < eps`` and ``|T^n u - g| < eps``.

    ``basis_budgets`` are the kernel orders tried for g (and the polynomial
    degrees tried for f when f is not already an interior combination).
    Both errors of the returned witness come from a fresh quadrature at
    ``tol`` with error estimates attached.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    fi, f_err = _approximate_interior(dom, f, eps, basis_budgets, tol)
    g = as_combo(g) if isinstance(g, TaylorPoly) else g
    if _admissible_exterior(dom, g):
        gt, betas, order, fit = g, sorted({a for a, _, _ in g.terms}, key=abs), 0, None
        pairs = [(a, k) for a, k, _ in g.terms]
        g_res = 0.0
    else:
        betas = exterior_poles(dom, depths)
        if not betas:
            raise ValueError("the domain has no removed set to host exterior poles")
        g_res = math.inf
        for order in basis_budgets:
            pairs = _exterior_basis(betas, order)
            fit = _MeshFit(dom, [RationalCombo.gamma(b, k) for b, k in pairs], g, tol)
            g_res = fit.residual
            if g_res < eps / 2:
                break
        else:
            raise WitnessError(f"exterior residual {g_res:.3g} not below {eps / 2:.3g}", math.nan, g_res)
        gt = _combo(pairs, fit.coef)
    n = 1
    best = (math.inf, math.inf)
    while n <= n_max:
        scaled = kernel_power(gt, -n)
        if fit is not None:
            v = np.array([dict(((a, k), c) for a, k, c in scaled.terms).get(pk, 0j) for pk in pairs])
            est = fit.norm_of(v)
        else:
            est = norm(scaled, dom, tol)[0]
        decay = norm(kernel_power(fi, n), dom, tol)[0]
        if est + f_err < eps / 2 and g_res + decay < 0.9 * eps:
            u = fi + scaled
            es, es_e = norm(u - as_combo(f), dom, tol)
            ee, ee_e = norm(kernel_power(fi, n) + gt - as_combo(g), dom, tol)
            best = min(best, (es, ee), key=max)
            if es + 2 * es_e < eps and ee + 2 * ee_e < eps:
                return MixingWitness(u, n, es, ee, fi, gt, es_e, ee_e, order, list(betas))
        n *= 2
    raise WitnessError(f"no n up to {n_max} met eps = {eps:g}", *best)


def verify_witness(dom: DomainSpec, w: MixingWitness, f: Function, g: Function, eps: float,
                   tol: float = 1e-10) -> tuple[bool, float, float, float, float]:
    """Recompute both errors from scratch at ``tol``.

    Returns ``(ok, err_start, err_start_error, err_end, err_end_error)``
    where ok requires each error plus twice its estimate below eps.
    """
    es, es_e = norm(w.u - as_combo(f), dom, tol)
    ee, ee_e = norm(w.image() - as_combo(g), dom, tol)
    return es + 2 * es_e < eps and ee + 2 * ee_e < eps, es, es_e, ee, ee_e
