"""Taylor polynomials, Cauchy-kernel combinations and the backward shift.

Two exact representations are supported.  :class:`TaylorPoly` stores a
finite coefficient vector, on which the shift ``T`` drops the constant term.
:class:`RationalCombo` stores finite sums of ``c z^k / (1 - alpha z)^(k+1)``,
a family closed under ``T``:

* ``T gamma_{alpha,0} = alpha gamma_{alpha,0}``
* ``T gamma_{alpha,k} = gamma_{alpha,k-1} + alpha gamma_{alpha,k}`` for k >= 1

Inner products in the Bergman space use the spherical measure, and Gram
systems are assembled on a shared adaptive mesh.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .geometry import INSIDE, OUTSIDE, DomainSpec, domain_membership
from .quadrature import (
    CONVERGENT,
    DEFAULT_SCALES,
    QuadratureError,
    QuadResult,
    divergence_probe,
    integrate,
)

SPECTRAL_CUTOFF = 1e-12


class PoleError(ZeroDivisionError):
    """Evaluation at (or integration across) a pole."""


class NotInSpaceError(ValueError):
    """A function that is not square integrable over the domain."""


def _canon(z) -> complex:
    # adding 0.0 turns negative zeros into positive ones
    z = complex(z)
    return complex(z.real + 0.0, z.imag + 0.0)


# --------------------------------------------------------------------------
# Taylor polynomials


class TaylorPoly:
    """Coefficients ``a_0, ..., a_N`` of a truncated power series.

    The stored length is part of the identity; trailing zeros are kept.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[complex] = ()):
        c = np.array(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=complex).ravel()
        c.setflags(write=False)
        self.coeffs = c

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def degree(self) -> int:
        """Index of the last stored entry (-1 for the empty polynomial)."""
        return len(self.coeffs) - 1

    def __eq__(self, other) -> bool:
        return isinstance(other, TaylorPoly) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(tuple(self.coeffs.tolist()))

    def __repr__(self) -> str:
        return f"TaylorPoly({self.coeffs.tolist()})"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if len(self.coeffs) == 0:
            return np.zeros(z.shape, dtype=complex)
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def partial_sum(self, n: int) -> "TaylorPoly":
        """S_n: the first n + 1 coefficients."""
        return TaylorPoly(self.coeffs[: n + 1])

    def __add__(self, other: "TaylorPoly") -> "TaylorPoly":
        n = max(len(self), len(other))
        a = np.zeros(n, dtype=complex)
        a[: len(self)] += self.coeffs
        a[: len(other)] += other.coeffs
        return TaylorPoly(a)

    def __mul__(self, c: complex) -> "TaylorPoly":
        return TaylorPoly(complex(c) * self.coeffs)

    __rmul__ = __mul__

    def poles(self) -> list[complex]:
        return []

    def to_dict(self) -> dict:
        return {"kind": "taylor", "coefficients": [[float(a.real), float(a.imag)] for a in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "TaylorPoly":
        if d.get("kind") != "taylor":
            raise ValueError("not a TaylorPoly record")
        return cls([complex(re, im) for re, im in d["coefficients"]])


# --------------------------------------------------------------------------
# combinations of Cauchy kernels


@dataclass(frozen=True)
class RationalCombo:
    """Sum of ``c * z**k / (1 - alpha z)**(k + 1)`` over canonical terms.

    ``terms`` holds ``(alpha, k, c)`` sorted by (Re alpha, Im alpha, k) with
    no repeated ``(alpha, k)`` and no zero ``c``.  Use :meth:`from_terms` to
    build one from arbitrary input.
    """

    terms: tuple = ()

    def __post_init__(self):
        prev = None
        for alpha, k, c in self.terms:
            if not isinstance(k, int) or k < 0:
                raise ValueError("k must be a non-negative integer")
            if c == 0:
                raise ValueError("zero coefficient in canonical form")
            key = _term_key(alpha, k)
            if prev is not None and not key > prev:
                raise ValueError("terms are not in canonical order or contain duplicates")
            prev = key

    @classmethod
    def from_terms(cls, terms: Iterable[tuple]) -> "RationalCombo":
        acc: dict = {}
        for alpha, k, c in terms:
            key = (_canon(alpha), int(k))
            acc[key] = acc.get(key, 0j) + complex(c)
        items = sorted(((a, k, _canon(c)) for (a, k), c in acc.items() if c != 0), key=lambda t: _term_key(t[0], t[1]))
        return cls(tuple(items))

    @classmethod
    def gamma(cls, alpha: complex, k: int = 0, c: complex = 1.0) -> "RationalCombo":
        """The kernel ``c * gamma_{alpha,k}``."""
        return cls.from_terms([(alpha, k, c)])

    @classmethod
    def monomial(cls, k: int, c: complex = 1.0) -> "RationalCombo":
        return cls.gamma(0.0, k, c)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for alpha, k, c in self.terms:
                if alpha == 0:
                    out += c * z**k
                else:
                    d = 1.0 - alpha * z
                    out += c * (z / d) ** k / d
        return out

    def __add__(self, other: "RationalCombo") -> "RationalCombo":
        return RationalCombo.from_terms(self.terms + other.terms)

    def __sub__(self, other: "RationalCombo") -> "RationalCombo":
        return self + (-1.0) * other

    def __mul__(self, s: complex) -> "RationalCombo":
        return RationalCombo.from_terms((a, k, complex(s) * c) for a, k, c in self.terms)

    __rmul__ = __mul__

    def __neg__(self) -> "RationalCombo":
        return (-1.0) * self

    def poles(self) -> list[complex]:
        """Distinct finite poles ``1 / alpha``."""
        out = []
        for alpha, _, _ in self.terms:
            if alpha != 0:
                p = 1.0 / alpha
                if p not in out:
                    out.append(p)
        return out

    def pole_orders(self) -> dict:
        """Largest k per nonzero alpha."""
        out: dict = {}
        for alpha, k, _ in self.terms:
            if alpha != 0:
                out[alpha] = max(out.get(alpha, 0), k)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "rational",
            "terms": [[float(a.real), float(a.imag), k, float(c.real), float(c.imag)] for a, k, c in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RationalCombo":
        if d.get("kind") != "rational":
            raise ValueError("not a RationalCombo record")
        return cls(tuple((_canon(complex(ar, ai)), int(k), _canon(complex(cr, ci))) for ar, ai, k, cr, ci in d["terms"]))


def _term_key(alpha, k):
    alpha = complex(alpha)
    return (alpha.real, alpha.imag, k)


Function = Union[TaylorPoly, RationalCombo]


def dumps(f: Function) -> str:
    return json.dumps(f.to_dict(), sort_keys=True)


def loads(text: str) -> Function:
    d = json.loads(text)
    return TaylorPoly.from_dict(d) if d.get("kind") == "taylor" else RationalCombo.from_dict(d)


# --------------------------------------------------------------------------
# the shift


def shift_poly(f: TaylorPoly) -> TaylorPoly:
    """Drop a_0 and move every coefficient down by one."""
    return TaylorPoly(f.coeffs[1:])


def shift_rational(f: RationalCombo) -> RationalCombo:
    """Exact image of a kernel combination under T."""
    out = []
    for alpha, k, c in f.terms:
        if alpha == 0:
            if k > 0:
                out.append((alpha, k - 1, c))
        elif k == 0:
            out.append((alpha, 0, alpha * c))
        else:
            out.append((alpha, k - 1, c))
            out.append((alpha, k, alpha * c))
    return RationalCombo.from_terms(out)


def shift(f: Function) -> Function:
    return shift_poly(f) if isinstance(f, TaylorPoly) else shift_rational(f)


def evaluate(f: Function, z: complex) -> complex:
    """Value at a finite point; raises :class:`PoleError` at a pole."""
    z = complex(z)
    if isinstance(f, RationalCombo):
        for alpha, _, _ in f.terms:
            if alpha * z == 1:
                raise PoleError(f"pole of the term with alpha={alpha} at z={z}")
    return complex(f(np.array([z]))[0])


def iterate_identity_residual(f: TaylorPoly, n: int, z: complex) -> float:
    """Gap between ``T^(n+1) f(z)`` and ``(f(z) - S_n f(z)) / z^(n+1)``.

    Also folds in the check ``T^(n+1) f(0) = a_(n+1)``.
    """
    z = complex(z)
    if z == 0:
        raise ValueError("the identity is checked at z != 0")
    if n < 0 or n + 1 > len(f):
        raise ValueError("n + 1 must not exceed the stored length")
    g = f
    for _ in range(n + 1):
        g = shift_poly(g)
    lhs = evaluate(g, z)
    rhs = (evaluate(f, z) - evaluate(f.partial_sum(n), z)) / z ** (n + 1)
    a_next = f.coeffs[n + 1] if n + 1 < len(f) else 0j
    return max(abs(lhs - rhs), abs(evaluate(g, 0.0) - a_next))


# --------------------------------------------------------------------------
# inner products


def _poles(fs: Iterable[Function]) -> list[complex]:
    out: list[complex] = []
    for f in fs:
        for p in f.poles():
            if p not in out:
                out.append(p)
    return out


def _reject_interior_poles(dom: DomainSpec, f: Function):
    for p in f.poles():
        if dom.contains(p):
            raise PoleError(f"pole {p} lies inside the domain")


def inner_product(f: Function, g: Function, dom: DomainSpec, tol: float = 1e-9, *, rtol: float = 0.0) -> QuadResult:
    """Bergman inner product ``int f conj(g) dm``.

    The integrand's poles are handed to the integrator as singular points.
    """
    _reject_interior_poles(dom, f)
    _reject_interior_poles(dom, g)

    def integrand(z):
        return f(z) * np.conj(g(z))

    return integrate(dom, integrand, tol, rtol=rtol, singular_points=_poles([f, g]), real=False)


_MEMBERSHIP_CACHE: dict = {}


def check_membership(f: Function, dom: DomainSpec, scales: Sequence[float] = DEFAULT_SCALES) -> None:
    """Raise :class:`NotInSpaceError` unless f is square integrable.

    Poles inside the domain are fatal.  Poles on the unit circle or in the
    boundary band trigger an excision study of the highest-order kernel
    there, which must come out convergent.
    """
    if isinstance(f, TaylorPoly):
        return
    key_dom = dom.dumps()
    for alpha, k in sorted(f.pole_orders().items(), key=lambda t: _term_key(*t)):
        p = 1.0 / alpha
        where = domain_membership(dom, p, 1e-9)
        if where == INSIDE:
            raise NotInSpaceError(f"pole {p} lies inside the domain")
        if where == OUTSIDE and abs(abs(p) - 1.0) > 1e-9:
            continue
        key = (key_dom, alpha, k, tuple(scales))
        if key not in _MEMBERSHIP_CACHE:
            _MEMBERSHIP_CACHE[key] = divergence_probe(dom, alpha, scales, k=k).classification
        if _MEMBERSHIP_CACHE[key] != CONVERGENT:
            raise NotInSpaceError(
                f"kernel gamma_{{{alpha},{k}}} is not square integrable ({_MEMBERSHIP_CACHE[key]} near {p})"
            )


def _moment_matrix(fs: Sequence[Function], dom: DomainSpec, tol: float, max_rounds: int = 4):
    """All pairwise inner products ``M[a, b] = <f_a, f_b>`` on one mesh.

    The mesh is adapted to the envelope ``sum |f_a|^2 / |f_a|^2_norm``;
    each entry must then meet ``err <= tol * max(1, sqrt(M_aa M_bb))``.
    Returns ``(M, err)``.
    """
    m = len(fs)
    if m == 0:
        return np.zeros((0, 0), dtype=complex), np.zeros((0, 0))
    sing = _poles(fs)

    def values(z):
        return np.stack([np.asarray(f(z), dtype=complex) for f in fs])

    scale = np.ones(m)
    rough = integrate(dom, lambda z: (np.abs(values(z)) ** 2).sum(axis=0), 1e-6, rtol=1e-4,
                      singular_points=sing, real=True, return_mesh=True)[1]
    diag = _accumulate(rough, values, diagonal_only=True)[0].real
    scale = np.where(diag > 0, diag, 1.0)
    env_rtol = 0.1 * tol
    for _ in range(max_rounds):
        res, mesh = integrate(dom, lambda z: (np.abs(values(z)) ** 2 / scale[:, None]).sum(axis=0),
                              env_rtol * m, rtol=env_rtol, singular_points=sing, real=True, return_mesh=True)
        M, err = _accumulate(mesh, values)
        d = np.sqrt(np.maximum(M.diagonal().real, 0.0))
        target = tol * np.maximum(1.0, np.outer(d, d))
        bad = np.argwhere(err > target)
        if len(bad) == 0:
            return M, err
        env_rtol *= 0.1
    a, b = bad[0]
    raise QuadratureError(f"inner product of functions {a} and {b} did not converge (error {err[a, b]:.3g})")


def _accumulate(mesh, values: Callable, diagonal_only: bool = False):
    m = None
    tot8 = tot4 = err = None
    for (z8, w8), (z4, w4) in zip(mesh.batches(8, 1024), mesh.batches(4, 1024)):
        f8 = values(z8)
        f4 = values(z4)
        if diagonal_only:
            c8 = np.einsum("acq,cq->ac", np.abs(f8) ** 2, w8).astype(complex)[:, None, :]
            c4 = np.einsum("acq,cq->ac", np.abs(f4) ** 2, w4).astype(complex)[:, None, :]
        else:
            c8 = np.einsum("acq,bcq,cq->abc", f8, np.conj(f8), w8)
            c4 = np.einsum("acq,bcq,cq->abc", f4, np.conj(f4), w4)
        if m is None:
            m = c8.shape[:2]
            tot8 = np.zeros(m, dtype=complex)
            err = np.zeros(m)
        tot8 += c8.sum(axis=2)
        err += np.abs(c8 - c4).sum(axis=2)
    if diagonal_only:
        return tot8[:, 0], err[:, 0]
    return tot8, err


# --------------------------------------------------------------------------
# Gram systems and projections


@dataclass
class GramSystem:
    """Normal equations for the best approximation of a target.

    ``gram[i, j] = <b_j, b_i>``, ``rhs[i] = <target, b_i>``.
    """

    gram: np.ndarray
    rhs: np.ndarray
    condition_estimate: float
    quad_tol: float
    target_norm_sq: float = 0.0
    gram_error: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    rhs_error: np.ndarray = field(default_factory=lambda: np.zeros(0))
    target_error: float = 0.0

    def restrict(self, n: int) -> "GramSystem":
        """System for the first n basis functions."""
        g = self.gram[:n, :n]
        return GramSystem(g, self.rhs[:n], _condition(g), self.quad_tol, self.target_norm_sq,
                          self.gram_error[:n, :n], self.rhs_error[:n], self.target_error)


def _condition(g: np.ndarray) -> float:
    if g.size == 0:
        return 1.0
    ev = np.linalg.eigvalsh(g)
    return float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf


def _hermitian(g: np.ndarray) -> np.ndarray:
    g = 0.5 * (g + g.conj().T)
    np.fill_diagonal(g, g.diagonal().real)
    return g


def _check_basis(basis: Sequence[Function]):
    for i, b in enumerate(basis):
        for j in range(i):
            if basis[j] == b:
                raise ValueError(f"basis entries {j} and {i} coincide")


def gram_system(basis: Sequence[Function], target: Function, dom: DomainSpec, tol: float = 1e-9,
                *, check: bool = True) -> GramSystem:
    """Assemble the Gram matrix and right-hand side of a projection problem."""
    return _gram_systems(basis, [target], dom, tol, check=check)[0]


def _gram_systems(basis, targets, dom, tol, *, check=True) -> list[GramSystem]:
    basis = list(basis)
    _check_basis(basis)
    if check:
        for f in basis + list(targets):
            check_membership(f, dom)
    fs = basis + list(targets)
    M, err = _moment_matrix(fs, dom, tol)
    n = len(basis)
    g = _hermitian(M[:n, :n].T.copy())
    ge = np.maximum(err[:n, :n], err[:n, :n].T)
    cond = _condition(g)
    out = []
    for t in range(len(targets)):
        row = n + t
        out.append(GramSystem(g, M[row, :n].copy(), cond, tol, float(M[row, row].real), ge,
                              err[row, :n].copy(), float(err[row, row])))
    return out


def project(sys: GramSystem) -> tuple[np.ndarray, float]:
    """Least-squares coefficients and residual norm.

    Eigenvalues of the unit-diagonal scaled Gram matrix below
    ``SPECTRAL_CUTOFF`` times the largest are dropped.
    """
    n = len(sys.rhs)
    if n == 0:
        return np.zeros(0, dtype=complex), math.sqrt(max(sys.target_norm_sq, 0.0))
    # the cutoff acts on the unit-diagonal scaling of the Gram matrix
    d = np.sqrt(np.maximum(sys.gram.diagonal().real, 0.0))
    scale = np.divide(1.0, d, out=np.zeros(n), where=d > 0)
    ev, vec = np.linalg.eigh(sys.gram * np.outer(scale, scale))
    keep = ev > SPECTRAL_CUTOFF * ev[-1] if ev[-1] > 0 else np.zeros(n, dtype=bool)
    coef = scale * (vec[:, keep] @ ((vec[:, keep].conj().T @ (scale * sys.rhs)) / ev[keep]))
    r2 = sys.target_norm_sq - 2.0 * float(np.real(np.vdot(coef, sys.rhs))) + float(np.real(np.vdot(coef, sys.gram @ coef)))
    a = np.abs(coef)
    slack = 10.0 * (sys.target_error + 2.0 * float(a @ sys.rhs_error) + float(a @ sys.gram_error @ a))
    slack += 1e-12 * max(sys.target_norm_sq, 1.0)
    if r2 < -slack:
        raise QuadratureError(f"negative squared residual {r2:.3g} beyond quadrature slack {slack:.3g}")
    return coef, math.sqrt(max(r2, 0.0))


def residual_for(sys: GramSystem, coef: np.ndarray) -> float:
    """Residual norm of an arbitrary coefficient vector."""
    coef = np.asarray(coef, dtype=complex)
    r2 = sys.target_norm_sq - 2.0 * float(np.real(np.vdot(coef, sys.rhs))) + float(np.real(np.vdot(coef, sys.gram @ coef)))
    return math.sqrt(max(r2, 0.0))


@dataclass
class DensityRow:
    target: str
    K: int
    residual: float
    condition_estimate: float


@dataclass
class DensityReport:
    rows: list = field(default_factory=list)

    def residuals(self, target: str) -> list[float]:
        return [r.residual for r in self.rows if r.target == target]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "K", "residual", "condition_estimate"])
        for r in self.rows:
            w.writerow([r.target, r.K, repr(r.residual), repr(r.condition_estimate)])
        return buf.getvalue()


def density_probe(dom: DomainSpec, basis_family: Callable[[int], Function], targets: Sequence[Function],
                  K_schedule: Sequence[int], tol: float = 1e-9, *, labels: Sequence[str] | None = None) -> DensityReport:
    """Projection residuals of each target onto the first K basis functions.

    ``basis_family(i)`` returns the i-th basis function.  A single Gram
    matrix for the largest K is assembled and its leading blocks reused.
    """
    K_schedule = [int(k) for k in K_schedule]
    if any(k < 0 for k in K_schedule) or any(b <= a for a, b in zip(K_schedule, K_schedule[1:])):
        raise ValueError("K_schedule must be strictly increasing and non-negative")
    report = DensityReport()
    if not targets or not K_schedule:
        return report
    labels = list(labels) if labels is not None else [f"f{i}" for i in range(len(targets))]
    basis = [basis_family(i) for i in range(K_schedule[-1])]
    systems = _gram_systems(basis, targets, dom, tol)
    for lab, sys in zip(labels, systems):
        for K in K_schedule:
            sub = sys.restrict(K)
            _, res = project(sub)
            report.rows.append(DensityRow(lab, K, res, sub.condition_estimate))
    return report
