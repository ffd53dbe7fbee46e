"""Which boundary points of the crescent carry eigenvalues of the shift?

The crescent is the unit disc minus the closed disc |z - 1/2| <= 1/2.  The
two circles touch at z = 1.  A unimodular lambda is an eigenvalue exactly
when gamma_lambda = 1/(1 - lambda z) is square integrable, and the only
trouble spot is the boundary point 1/lambda.

At z = -1 the domain looks like a half disc and |gamma|^2 ~ |z + 1|^-2
diverges logarithmically: the partial integrals over the domain minus a
disc of radius eps grow like pi * log(1/eps).  At z = 1 the domain is a
thin horn and the same integral converges.

Run:  python demos/crescent_dichotomy.py
"""

import numpy as np

from taylorshift.analysis import eigen_classify
from taylorshift.geometry import CRESCENT
from taylorshift.quadrature import DEFAULT_SCALES, divergence_probe

print("excised partial integrals of |gamma_alpha|^2 on the crescent")
for alpha in (1, -1):
    rep = divergence_probe(CRESCENT, alpha, DEFAULT_SCALES)
    print(f"\nalpha = {alpha:+d}: {rep.classification}, log-fit slope {rep.slope:.4f}")
    for eps, p in zip(rep.trace.epsilons, rep.trace.partials):
        print(f"  eps = {eps:.2e}   partial = {p:.8f}")

print("\nverdicts around the circle (the probed boundary point is 1/lambda):")
for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
    ec = eigen_classify(CRESCENT, np.exp(-1j * t))
    norm = f"  |gamma| = {ec.norm_if_member:.4f}" if ec.norm_if_member else ""
    print(f"  boundary angle {t:.3f}: {ec.verdict}{norm}")
