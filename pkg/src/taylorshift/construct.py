"""Staged construction of a cusp domain with eigenvalues in a prescribed set.

Targets are the kernels ``gamma_{1,j}`` (pole of order j + 1 at 1, which
is assumed to be an accumulation point of Z).  At stage n (counting from
0) we pick a window radius ``r_n``, fit every ``gamma_{1,j}``, j <= n, by a
combination of ``gamma_zeta``, zeta in Z near 1, to within ``1/(n+1)`` on

    K_n = closed disc minus {|z - 1| < r_n},

then add cusps at the poles ``1/zeta = conj(zeta)`` of the kernels used and
check that the squared kernels and approximants integrate to less than
``1/(n+1)`` over the part of the window not covered by the cusps.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .funcspace import RationalCombo
from .geometry import (
    DomainSpec,
    RemovedDisc,
    cusp_clusters,
    make_cusp,
    wrap_angle,
)
from .quadrature import integrate

FINITE = "finite-list"
ACCUMULATING = "accumulating-sequence"


class RungeError(RuntimeError):
    """The requested sup error was not reached; carries the best attempt."""

    def __init__(self, msg: str, combo: RationalCombo, sup_error: float):
        super().__init__(msg)
        self.combo = combo
        self.sup_error = sup_error


class StageFailure(RuntimeError):
    """A stage could not be certified; carries the failing certificate."""

    def __init__(self, msg: str, certificate: "StageCertificate"):
        super().__init__(msg)
        self.certificate = certificate


@dataclass(frozen=True)
class ZSpec:
    """A closed subset of the circle given by angles.

    For an accumulating sequence the set is ``angles`` together with the
    accumulation point.
    """

    kind: str
    angles: tuple
    accumulation_point: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if self.kind not in (FINITE, ACCUMULATING):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == ACCUMULATING and self.accumulation_point is None:
            raise ValueError("an accumulating sequence needs its accumulation point")
        pts = list(self.points())
        for i in range(len(pts)):
            for j in range(i):
                if abs(wrap_angle(pts[i] - pts[j])) < 1e-12:
                    raise ValueError("angles must be distinct modulo 2 pi")
        if self.kind == ACCUMULATING:
            d = [abs(wrap_angle(a - self.accumulation_point)) for a in self.angles]
            if any(b >= a for a, b in zip(d, d[1:])):
                raise ValueError("angles must approach the accumulation point monotonically")

    def points(self) -> tuple:
        if self.kind == ACCUMULATING:
            return self.angles + (float(self.accumulation_point),)
        return self.angles

    def near_one(self, r: float) -> list[float]:
        """Angles of points within distance r of 1, sorted by distance."""
        pts = [a for a in self.points() if abs(np.exp(1j * a) - 1.0) < r]
        return sorted(pts, key=lambda a: (abs(wrap_angle(a)), a))

    @classmethod
    def dyadic(cls, m_max: int = 8) -> "ZSpec":
        """{2 pi / 2^m : m = 1..m_max} together with 0."""
        return cls(ACCUMULATING, tuple(2 * math.pi / 2**m for m in range(1, m_max + 1)), 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "angles": list(self.angles), "accumulation_point": self.accumulation_point}

    @classmethod
    def from_dict(cls, d: dict) -> "ZSpec":
        return cls(d["kind"], tuple(d["angles"]), d.get("accumulation_point"))


# --------------------------------------------------------------------------
# Runge step


@dataclass(frozen=True)
class KSpec:
    """Closed unit disc minus the open disc of radius r about 1, sampled.

    Sup norms of functions holomorphic near K are attained on its boundary,
    so the fit uses boundary samples (plus a few interior points) and the
    check uses a finer boundary grid.
    """

    r: float
    n_boundary: int = 400
    n_interior: int = 64

    def _boundary(self, n: int) -> np.ndarray:
        phi = 2.0 * math.asin(min(self.r / 2.0, 1.0))
        arc = np.exp(1j * np.linspace(phi, 2 * math.pi - phi, n))
        # window circle inside the disc: angles about 1 with |1 + r e^{i psi}| <= 1
        psi0 = math.pi / 2 + math.asin(min(self.r / 2.0, 1.0))
        psi = np.linspace(psi0, 2 * math.pi - psi0, max(n // 2, 8))
        inner = 1.0 + self.r * np.exp(1j * psi)
        return np.concatenate([arc, inner])

    def fit_points(self) -> np.ndarray:
        rr = np.sqrt((np.arange(self.n_interior) + 0.5) / self.n_interior) * 0.9
        ang = np.arange(self.n_interior) * (math.pi * (3 - math.sqrt(5)))
        interior = rr * np.exp(1j * ang)
        interior = interior[np.abs(interior - 1.0) > self.r]
        return np.concatenate([self._boundary(self.n_boundary), interior])

    def check_points(self) -> np.ndarray:
        return self._boundary(8 * self.n_boundary)


def _kernel_values(alpha: complex, j: int, z: np.ndarray) -> np.ndarray:
    return RationalCombo.gamma(alpha, j)(z)


def _fit(target: np.ndarray, cols: np.ndarray, lawson: int = 30) -> np.ndarray:
    """Weighted least squares iterated towards the minimax solution (Lawson)."""
    w = np.full(len(target), 1.0 / len(target))
    best, best_err = None, math.inf
    for _ in range(lawson):
        sw = np.sqrt(w)
        c = np.linalg.lstsq(cols * sw[:, None], target * sw, rcond=None)[0]
        res = np.abs(cols @ c - target)
        err = float(res.max())
        if err < best_err:
            best, best_err = c, err
        if err == 0:
            break
        w = w * res
        s = w.sum()
        if not s > 0:
            break
        w /= s
    return best


def runge_approximant(j: int, alpha: complex, pole_budget: int, pole_pool: Sequence[float], K_spec: KSpec,
                      tol: float) -> tuple[RationalCombo, float]:
    """Fit ``gamma_{alpha,j}`` on K by kernels ``gamma_zeta``, zeta = e^{i theta}.

    Poles are picked greedily from ``pole_pool`` (angles), each time adding
    the one that lowers the fitted sup error most.  Raises
    :class:`RungeError` when ``tol`` is out of reach within the budget.
    """
    if j < 0:
        raise ValueError("j must be non-negative")
    pool = [float(a) for a in pole_pool]
    if not pool:
        raise ValueError("pole_pool must be nonempty")
    zf = K_spec.fit_points()
    zc = K_spec.check_points()
    tf = _kernel_values(alpha, j, zf)
    tc = _kernel_values(alpha, j, zc)
    chosen: list[float] = []
    best_combo = RationalCombo()
    best_err = float(np.abs(tc).max())

    def combo_for(angles):
        cols = np.stack([_kernel_values(np.exp(1j * a), 0, zf) for a in angles], axis=1)
        c = _fit(tf, cols)
        return RationalCombo.from_terms((np.exp(1j * a), 0, ci) for a, ci in zip(angles, c))

    while best_err >= tol and len(chosen) < pole_budget:
        trial = None
        for a in pool:
            if a in chosen:
                continue
            combo = combo_for(chosen + [a])
            err = float(np.abs(combo(zc) - tc).max())
            if trial is None or err < trial[0]:
                trial = (err, a, combo)
        if trial is None:
            break
        chosen.append(trial[1])
        if trial[0] < best_err:
            best_err, best_combo = trial[0], trial[2]
    if best_err >= tol:
        raise RungeError(f"sup error {best_err:.3g} not below {tol:.3g} with {len(chosen)} poles", best_combo,
                         best_err)
    return best_combo, best_err


# --------------------------------------------------------------------------
# stages


@dataclass
class CuspSearch:
    """Cusp parameters for new anchors and the feasibility search."""

    delta: float = 1.0
    rho: float = 1.0
    max_halvings: int = 12
    delta_growth: float = 1.15
    max_delta: float = 1.45
    samples: int = 512
    pole_budget: int = 6
    quad_tol: float = 1e-8


@dataclass
class StageCertificate:
    n: int
    r_n: float
    Z_n: list
    sup_error: float
    sup_bound: float
    integral_R: list
    integral_gamma: list
    integral_bound: float
    delta_n: float
    rho_n: float
    pass_: bool
    sup_errors: list = field(default_factory=list)
    integral_R_error: list = field(default_factory=list)
    integral_gamma_error: list = field(default_factory=list)
    approximants: list = field(default_factory=list)
    new_anchor_angles: list = field(default_factory=list)
    search_trace: list = field(default_factory=list)

    def check(self) -> bool:
        return (
            self.sup_error < self.sup_bound
            and all(v < self.integral_bound for v in self.integral_R)
            and all(v < self.integral_bound for v in self.integral_gamma)
        )

    def combos(self) -> list[RationalCombo]:
        return [RationalCombo.from_dict(d) for d in self.approximants]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("pass_")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StageCertificate":
        d = dict(d)
        d["pass_"] = d.pop("pass")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def dumps_certificates(certs: Sequence[StageCertificate]) -> str:
    """One JSON object per line."""
    return "".join(c.to_json() + "\n" for c in certs)


def loads_certificates(text: str) -> list[StageCertificate]:
    return [StageCertificate.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def _gamma1(j: int) -> RationalCombo:
    return RationalCombo.gamma(1.0, j)


def collar_integral(dom: DomainSpec, f: RationalCombo, r: float, tol: float):
    """Integral of |f|^2 over the domain inside the window |z - 1| < r."""
    sing = list(f.poles())

    def g(z):
        return np.abs(f(z)) ** 2

    return integrate(dom, g, tol, rtol=tol, keep=RemovedDisc(1.0, r), singular_points=sing, real=True)


WINDOW_MARGIN = 0.99


def _stage_cusps(angles, r, delta, rho, samples):
    """Cusps anchored at conj(e^{i a}), windowed to stay inside |z - 1| < r.

    The window is shrunk by ``WINDOW_MARGIN`` so no cusp edge coincides with
    the collar circle.
    """
    out = []
    for a in angles:
        anchor = -a
        win = WINDOW_MARGIN * (r - abs(np.exp(1j * anchor) - 1.0))
        out.append(make_cusp(anchor, delta, rho, win, samples))
    return out


def _connected(dom: DomainSpec) -> bool:
    return len(dom.cusps) <= 1 or len(cusp_clusters(dom)) == 1


def build_domain(Z: ZSpec, stages: int, r_schedule: Sequence[float], tol_schedule: Sequence[float] | None = None,
                 cusp_search: CuspSearch | None = None, *, connected_complement: bool = False,
                 spectrum_on_Z: bool = False) -> tuple[DomainSpec, list[StageCertificate]]:
    """Run ``stages`` stages of the construction.

    Returns the domain ``D minus closure(G_stages)`` and one certificate per
    stage.  Raises :class:`StageFailure` rather than return an uncertified
    domain.
    """
    if connected_complement:
        raise NotImplementedError("not implemented: modification to a connected complement")
    if spectrum_on_Z:
        raise NotImplementedError("not implemented: restricting the spectrum on the circle to Z")
    if stages < 1:
        raise ValueError("stages must be at least 1")
    r_schedule = [float(r) for r in r_schedule]
    if len(r_schedule) < stages:
        raise ValueError("r_schedule shorter than the number of stages")
    if any(b >= a for a, b in zip(r_schedule, r_schedule[1:])):
        raise ValueError("r_schedule must be strictly decreasing")
    if not 0 < r_schedule[0] < 1 or any(r_schedule[n] >= 1.0 / n for n in range(1, stages)):
        raise ValueError("need 0 < r_0 < 1 and r_n < 1/n")
    if 0.0 not in [wrap_angle(a) for a in Z.points()]:
        raise ValueError("the construction is normalised so that 1 (angle 0) lies in Z")
    tol_schedule = list(tol_schedule) if tol_schedule is not None else [0.5 / (n + 1) for n in range(stages)]
    cs = cusp_search or CuspSearch()

    dom = DomainSpec.disc()
    used: list[float] = []
    certs: list[StageCertificate] = []
    for n in range(stages):
        r = r_schedule[n]
        bound = 1.0 / (n + 1)
        pool = Z.near_one(r)
        if not pool:
            raise ValueError(f"no point of Z within {r} of 1")
        combos, errs = [], []
        for j in range(n + 1):
            combo, err = runge_approximant(j, 1.0, cs.pole_budget, pool, KSpec(r), min(tol_schedule[n], bound))
            combos.append(combo)
            errs.append(err)
        Zn = sorted({float(wrap_angle(-np.angle(p))) for c in combos for p in c.poles()}, key=abs)
        new = [a for a in Zn if all(abs(wrap_angle(a - u)) > 1e-12 for u in used)]
        # the first stage's cusp at 1 spans the whole window
        delta = cs.delta
        rho = cs.rho
        trace = []
        cert = None
        for _ in range(cs.max_halvings + 1):
            try:
                cand = dom.with_cusps(dom.cusps + tuple(_stage_cusps(new, r, delta, rho, cs.samples)))
                while not _connected(cand) and delta * cs.delta_growth < cs.max_delta:
                    delta *= cs.delta_growth
                    cand = dom.with_cusps(dom.cusps + tuple(_stage_cusps(new, r, delta, rho, cs.samples)))
            except ValueError as exc:
                trace.append([rho, f"rejected: {exc}"])
                break
            iR = [collar_integral(cand, c, r, cs.quad_tol) for c in combos]
            iG = [collar_integral(cand, _gamma1(j), r, cs.quad_tol) for j in range(n + 1)]
            cert = StageCertificate(
                n=n, r_n=r, Z_n=Zn, sup_error=max(errs), sup_bound=bound,
                integral_R=[float(q.value) for q in iR], integral_gamma=[float(q.value) for q in iG],
                integral_bound=bound, delta_n=delta, rho_n=rho, pass_=False, sup_errors=errs,
                integral_R_error=[q.error_estimate for q in iR], integral_gamma_error=[q.error_estimate for q in iG],
                approximants=[c.to_dict() for c in combos], new_anchor_angles=[-a for a in new],
                search_trace=trace,
            )
            trace.append([rho, max(cert.integral_R + cert.integral_gamma)])
            converged = all(q.converged for q in iR + iG)
            if converged and _connected(cand) and cert.check():
                cert.pass_ = True
                break
            rho *= 0.5
        if cert is None or not cert.pass_:
            raise StageFailure(f"stage {n} could not be certified", cert)
        dom = cand
        used.extend(new)
        certs.append(cert)
    return dom, certs


# --------------------------------------------------------------------------
# independent re-check


@dataclass
class Verification:
    ok: bool
    issues: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _stage_domain(dom: DomainSpec, certs: Sequence[StageCertificate], n: int):
    """Domain built from the cusps added in stages 0..n, or None if absent."""
    wanted = [a for c in certs[: n + 1] for a in c.new_anchor_angles]
    cusps = []
    for a in wanted:
        hit = [c for c in dom.cusps if abs(wrap_angle(c.anchor_angle - a)) < 1e-12]
        if not hit:
            return None
        cusps.append(hit[0])
    return dom.with_cusps(cusps)


def verify_certificates(dom: DomainSpec, certs: Sequence[StageCertificate], quad_tol: float = 1e-9,
                        *, rel_match: float = 1e-4) -> Verification:
    """Recompute every certified quantity at ``quad_tol``.

    Each strict inequality must hold with a margin of at least twice the
    new error estimate, and each recomputed value must agree with the
    certificate to ``rel_match`` (relative, plus the error estimates).
    """
    issues = []
    for cert in certs:
        n = cert.n
        if abs(cert.sup_bound - 1.0 / (n + 1)) > 0 or abs(cert.integral_bound - 1.0 / (n + 1)) > 0:
            issues.append(f"stage {n}: bounds are not 1/(n+1)")
        stage_dom = _stage_domain(dom, certs, n)
        if stage_dom is None:
            issues.append(f"stage {n}: an anchor of the certificate is not a cusp of the domain")
            break
        K = KSpec(cert.r_n)
        zc = K.check_points()
        for j, combo in enumerate(cert.combos()):
            err = float(np.abs(combo(zc) - _gamma1(j)(zc)).max())
            if not err < cert.sup_bound:
                issues.append(f"stage {n}, j={j}: sup error {err:.3g} not below {cert.sup_bound:.3g}")
            if abs(err - cert.sup_errors[j]) > rel_match * max(err, 1e-12):
                issues.append(f"stage {n}, j={j}: sup error {err!r} differs from certified {cert.sup_errors[j]!r}")
        for label, funcs, recorded in (
            ("R", cert.combos(), cert.integral_R),
            ("gamma", [_gamma1(j) for j in range(n + 1)], cert.integral_gamma),
        ):
            for j, f in enumerate(funcs):
                q = collar_integral(stage_dom, f, cert.r_n, quad_tol)
                if not q.converged:
                    issues.append(f"stage {n}, {label}_{j}: integral did not converge")
                    continue
                v = float(q.value)
                if not v + 2.0 * q.error_estimate < cert.integral_bound:
                    issues.append(f"stage {n}, {label}_{j}: {v:.3g} not below {cert.integral_bound:.3g} with margin")
                if abs(v - recorded[j]) > rel_match * abs(v) + 2.0 * q.error_estimate + 1e-12:
                    issues.append(f"stage {n}, {label}_{j}: recomputed {v!r} differs from certified {recorded[j]!r}")
    return Verification(not issues, issues)
