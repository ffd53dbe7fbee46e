"""Command-line front end.

Every run is described by a :class:`RunConfig` (JSON on disk).  Flags
override fields of the config file.  Reports land in the output directory;
exit status is 0 when every check passes, 1 when a check fails (a
``FAILED`` marker file lists the failures) and 2 on configuration errors.

Example::

    taylorshift --command build --out runs/build --stages 3
    taylorshift --command verify --config runs/verify.json
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis, construct, dynamics, funcspace, quadrature
from .geometry import CRESCENT, UNIT_DISC, DomainSpec, make_cusp

COMMANDS = ("build", "eigen", "density", "mixing", "growth", "integrate", "render", "verify")


class ConfigError(ValueError):
    """Invalid run configuration (exit status 2)."""


@dataclass
class RunConfig:
    command: str
    domain_file: str | None = None
    z_spec: dict | str | None = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"tolerance {k!r} must be a positive number")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    def tol(self, name: str = "quad", default: float = 1e-9) -> float:
        return float(self.tolerances.get(name, default))

    def dumps(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# SVG


def _fmt(x: float) -> str:
    return f"{x:.6f}".rstrip("0").rstrip(".") if x != 0 else "0"


def _path(points) -> str:
    pts = [f"{_fmt(x)},{_fmt(-y)}" for x, y in points]
    return "M" + " L".join(pts) + " Z"


def render_svg(dom: DomainSpec, zoom: int | None = None, size: int = 600, samples: int = 400) -> str:
    """Deterministic SVG of the domain.

    Unit circle, shaded removed regions, and a labelled tick at every
    anchor.  ``zoom`` selects a cusp whose hull polyline is redrawn
    magnified in an inset.
    """
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="-1.3 -1.3 2.6 2.6">',
        '<rect x="-1.3" y="-1.3" width="2.6" height="2.6" fill="white"/>',
        '<circle cx="0" cy="0" r="1" fill="#eef3fb" stroke="black" stroke-width="0.006"/>',
    ]
    if dom.base == "crescent":
        out.append(f'<circle cx="{_fmt(dom.center)}" cy="0" r="{_fmt(dom.radius)}" fill="#c9c9c9" '
                   'stroke="#555" stroke-width="0.004"/>')
    for c in dom.cusps:
        out.append(f'<path d="{_path(c.polygon(samples))}" fill="#c9c9c9" stroke="#555" stroke-width="0.003"/>')
    for c in dom.cusps:
        a = c.anchor
        p, q = a * 1.02, a * 1.08
        out.append(f'<line x1="{_fmt(p.real)}" y1="{_fmt(-p.imag)}" x2="{_fmt(q.real)}" y2="{_fmt(-q.imag)}" '
                   'stroke="#b00" stroke-width="0.006"/>')
        lab = a * 1.16
        out.append(f'<text x="{_fmt(lab.real)}" y="{_fmt(-lab.imag)}" font-size="0.05" text-anchor="middle" '
                   f'fill="#b00">{c.anchor_angle:.4f}</text>')
    if zoom is not None:
        c = dom.cusps[zoom]
        poly = c.polygon(samples) - np.array([c.anchor.real, c.anchor.imag])
        s = 0.4 / max(float(np.abs(poly).max()), 1e-12)
        out.append('<g transform="translate(0.8 0.8)">')
        out.append('<rect x="-0.45" y="-0.45" width="0.9" height="0.9" fill="white" stroke="black" '
                   'stroke-width="0.004"/>')
        out.append(f'<path d="{_path(poly * s)}" fill="none" stroke="#555" stroke-width="0.004"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# pipelines


class _Run:
    def __init__(self, cfg: RunConfig, quiet: bool):
        self.cfg = cfg
        self.quiet = quiet
        self.out = Path(cfg.output_dir)
        self.failures: list[str] = []

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        if not ok:
            self.failures.append(f"{name}: {detail}")
        if not self.quiet:
            print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)

    def domain(self) -> DomainSpec:
        if self.cfg.domain_file:
            try:
                return DomainSpec.loads(Path(self.cfg.domain_file).read_text())
            except (OSError, KeyError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read domain file: {exc}") from exc
        kind = self.cfg.params.get("domain", "crescent")
        if kind == "crescent":
            return CRESCENT
        if kind == "disc":
            return UNIT_DISC
        if kind == "cusp":
            p = self.cfg.params
            return DomainSpec.disc([make_cusp(p.get("anchor_angle", 0.0), p.get("delta", 1.2), p.get("rho", 1.0),
                                              p.get("window_radius", 2.0))])
        raise ConfigError(f"unknown domain {kind!r}")

    def z_spec(self) -> construct.ZSpec:
        z = self.cfg.z_spec
        if z is None:
            return construct.ZSpec.dyadic(8)
        if isinstance(z, str):
            try:
                z = json.loads(Path(z).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read z_spec: {exc}") from exc
        return construct.ZSpec.from_dict(z)


def _function(d) -> funcspace.Function:
    if isinstance(d, dict):
        return funcspace.RationalCombo.from_dict(d) if d.get("kind") == "rational" else funcspace.TaylorPoly.from_dict(d)
    raise ConfigError("functions are given as serialized TaylorPoly/RationalCombo objects")


def _build(run: _Run) -> None:
    p = run.cfg.params
    stages = int(p.get("stages", 3))
    r_schedule = p.get("r_schedule", [0.49, 0.47, 0.45])
    search = construct.CuspSearch(quad_tol=run.cfg.tol("quad", 1e-8))
    try:
        dom, certs = construct.build_domain(run.z_spec(), stages, r_schedule, p.get("tol_schedule"), search)
    except construct.StageFailure as exc:
        if exc.certificate is not None:
            run.write("certificates.jsonl", construct.dumps_certificates([exc.certificate]))
        run.check("build", False, str(exc))
        return
    run.write("domain.json", dom.dumps())
    run.write("certificates.jsonl", construct.dumps_certificates(certs))
    run.write("domain.svg", render_svg(dom))
    for c in certs:
        run.check(f"stage {c.n}", c.pass_ and c.check(),
                  f"sup {c.sup_error:.3g} < {c.sup_bound:.3g}, integrals {max(c.integral_R + c.integral_gamma):.3g}")
    # nesting of the removed sets across stages on random points
    rng = np.random.default_rng(run.cfg.seed)
    z = np.sqrt(rng.random(10_000)) * np.exp(2j * np.pi * rng.random(10_000))
    prev = np.zeros(len(z), dtype=bool)
    for n in range(len(certs)):
        cur = ~construct._stage_domain(dom, certs, n).contains(z)
        run.check(f"nesting {n}", bool(np.all(cur | ~prev)))
        prev = cur


def _angles(run: _Run):
    return [float(a) for a in run.cfg.params.get("angles", [0.0])]


def _eigen(run: _Run) -> None:
    dom = run.domain()
    rows = []
    for a in _angles(run):
        ec = analysis.eigen_classify(dom, complex(np.exp(1j * a)), tol=run.cfg.tol("quad"))
        rows.append(json.loads(ec.to_json()) | {"angle": a})
        run.check(f"eigen angle={a!r}", ec.verdict != analysis.INCONCLUSIVE, ec.verdict)
    run.write("eigen.json", json.dumps(rows, indent=2, sort_keys=True))


def _density(run: _Run) -> None:
    dom = run.domain()
    p = run.cfg.params
    Ks = [int(k) for k in p.get("K_schedule", [0, 10, 20, 40])]
    alpha = complex(p.get("alpha", 1.0))
    degs = p.get("targets", [0, 1, 2, 3])
    targets = [funcspace.TaylorPoly([0] * d + [1]) for d in degs]
    labels = [f"z^{d}" for d in degs]
    rep = funcspace.density_probe(dom, lambda i: funcspace.RationalCombo.gamma(alpha, i), targets, Ks, run.cfg.tol("quad"), labels=labels)
    run.write("density.csv", rep.to_csv())
    factor = float(p.get("min_decrease", 10.0))
    for lab in labels:
        r = rep.residuals(lab)
        run.check(f"density {lab}", r[-1] * factor <= r[0], f"{r[0]:.3g} -> {r[-1]:.3g}")


def _mixing(run: _Run) -> None:
    dom = run.domain()
    p = run.cfg.params
    f = _function(p["f"]) if "f" in p else funcspace.TaylorPoly([1.0])
    g = _function(p["g"]) if "g" in p else funcspace.TaylorPoly([0.0, 1.0])
    eps = float(p.get("eps", 1e-2))
    tol = run.cfg.tol("quad")
    try:
        w = dynamics.mixing_witness(dom, f, g, eps, tol=tol)
    except dynamics.WitnessError as exc:
        run.check("mixing", False, str(exc))
        return
    run.write("witness.json", w.to_json())
    ok, es, es_e, ee, ee_e = dynamics.verify_witness(dom, w, f, g, eps, tol / 10)
    run.check("mixing", ok, f"n={w.n} err_start={es:.3g} err_end={ee:.3g}")


def _growth(run: _Run) -> None:
    dom = run.domain()
    p = run.cfg.params
    g = _function(p["g"]) if "g" in p else funcspace.RationalCombo.gamma(0.5)
    r, grid = float(p.get("r", 0.3)), int(p.get("grid", 41))
    rep = analysis.growth_check(g, dom, r, int(p.get("kmax", 6)), grid, run.cfg.tol("quad"))
    run.write("growth.csv", rep.to_csv())
    run.check("growth", rep.passed, f"C={rep.fitted_C:.4g}")
    if p.get("w_bound", False):
        wrep = analysis.w_bound_check(dom, r, int(p.get("w_kmax", 10)), grid, run.cfg.tol("quad"))
        run.write("w_bound.csv", wrep.to_csv())
        run.check("w-bound", wrep.pass_, f"C={wrep.fitted_C:.4g}")


def _integrate(run: _Run) -> None:
    dom = run.domain()
    p = run.cfg.params
    tol = run.cfg.tol("quad")
    if "f" in p:
        f = _function(p["f"])
        res = quadrature.integrate(dom, lambda z: np.abs(f(z)) ** 2, tol, rtol=tol, real=True,
                                   singular_points=f.poles())
    else:
        res = quadrature.measure(dom, tol)
    run.write("integrate.json", res.to_json())
    run.check("integrate", res.converged, f"value={res.value!r} error={res.error_estimate:.3g}")


def _render(run: _Run) -> None:
    dom = run.domain()
    run.write("domain.svg", render_svg(dom, run.cfg.params.get("zoom")))
    run.check("render", True)


def _verify(run: _Run) -> None:
    dom = run.domain()
    path = run.cfg.params.get("certificates")
    if not path:
        raise ConfigError("verify needs params.certificates")
    try:
        certs = construct.loads_certificates(Path(path).read_text())
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificates: {exc}") from exc
    v = construct.verify_certificates(dom, certs, run.cfg.tol("quad", 1e-9))
    run.write("verify.json", json.dumps({"ok": v.ok, "issues": v.issues}, indent=2, sort_keys=True))
    for c in certs:
        run.check(f"certificate {c.n}", c.pass_ and c.check())
    run.check("verify", v.ok, "; ".join(v.issues[:3]))


PIPELINES: dict[str, Callable[[_Run], None]] = {
    "build": _build,
    "eigen": _eigen,
    "density": _density,
    "mixing": _mixing,
    "growth": _growth,
    "integrate": _integrate,
    "render": _render,
    "verify": _verify,
}


def run(cfg: RunConfig, quiet: bool = False) -> int:
    """Execute one configured pipeline and return the exit status."""
    try:
        cfg.validate()
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    r = _Run(cfg, quiet)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        PIPELINES[cfg.command](r)
    except (ConfigError, ValueError, NotImplementedError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (quadrature.QuadratureError, RuntimeError) as exc:
        r.check(cfg.command, False, str(exc))
    if r.failures:
        marker.write_text("\n".join(r.failures) + "\n")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taylorshift", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", help="RunConfig JSON file")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--tol", type=float, help="quadrature tolerance")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--stages", type=int, help="number of construction stages (build)")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = RunConfig.loads(Path(args.config).read_text())
        elif args.command:
            cfg = RunConfig(args.command)
        else:
            raise ConfigError("need --config or --command")
    except (OSError, TypeError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command:
        cfg.command = args.command
    if args.out:
        cfg.output_dir = args.out
    if args.tol is not None:
        cfg.tolerances = dict(cfg.tolerances, quad=args.tol)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.stages is not None:
        cfg.params = dict(cfg.params, stages=args.stages)
    return run(cfg, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
