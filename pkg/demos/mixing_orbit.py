"""Orbits of the shift and an explicit mixing witness.

Inside the disc, eigenvectors gamma_alpha (|alpha| < 1) shrink under T by
the factor |alpha| per step.  Kernels whose poles lie in the removed set
(|beta| > 1) grow, so T^(-n) of them shrinks.  Adding a small multiple of
such a kernel to f produces u close to f whose n-th image is close to g.

The demo uses a single flat cusp touching the circle at 1, where kernels
with pole 1/beta just inside the cusp are square integrable.

Run:  python demos/mixing_orbit.py
"""

from taylorshift.dynamics import mixing_witness, orbit_norms, verify_witness
from taylorshift.funcspace import RationalCombo
from taylorshift.geometry import DomainSpec, make_cusp

dom = DomainSpec.disc([make_cusp(0.0, 1.0, 1.0, 0.6)])

f = RationalCombo.gamma(0.6)
norms = orbit_norms(dom, f, 6)
print("|T^n gamma_0.6| / |gamma_0.6|:", ", ".join(f"{x / norms[0]:.4f}" for x in norms))

f, g = RationalCombo.gamma(0.5), RationalCombo.gamma(1 / 0.99)
w = mixing_witness(dom, f, g, 1e-3)
ok, es, _, ee, _ = verify_witness(dom, w, f, g, 1e-3)
print(f"\nwitness for f = gamma_0.5, g = gamma_(1/0.99): n = {w.n}")
print(f"  |u - f|     = {es:.3e}")
print(f"  |T^n u - g| = {ee:.3e}")
print("  re-checked at a tighter tolerance:", ok)
print(f"  (T^n u - g = T^n f, of size 0.5^{w.n} times |f|, below the double range)")
