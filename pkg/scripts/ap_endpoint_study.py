"""Print the A_p estimate per sampling depth for exponents around the upper endpoint.

Shows the difference between plateau (inside), logarithmic growth (endpoint) and
geometric growth (outside).
"""
import argparse

import numpy as np

from spfem.weights import Box, FeatureSet, PowerWeight, ap_range, estimate_ap_constant

ap = argparse.ArgumentParser()
ap.add_argument("--p", type=float, default=2.0)
ap.add_argument("--depth", type=int, default=9)
args = ap.parse_args()

lo, hi = ap_range(2, 0, args.p)
box = Box(-1.0, -1.0, 2.0)
origin = FeatureSet(points=((0.0, 0.0),))
for lam in (hi - 0.5, hi - 0.1, hi, hi + 0.1, hi + 0.5):
    est = estimate_ap_constant(PowerWeight(lam, origin), args.p, box, args.depth)
    row = " ".join(f"{v:9.3f}" for v in est.by_depth)
    print(f"lambda={lam:5.2f} increments {np.round(np.diff(est.by_depth)[-3:], 3)}\n   {row}")
