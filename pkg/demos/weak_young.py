"""Weak-type Young inequality for a Riesz kernel on the grid.

g * h is bounded in weak L^q by ||g||_p times the weak L^r quasinorm of
h = |x|^-(n-theta).  The check also replays the level-set splitting used
in the proof and counts any step that fails; every count should be 0.
The constant blows up like (r - 1)^(-p/q) as r approaches 1.

    python3 demos/weak_young.py
"""

import numpy as np

from fraclab.geometry import cell_centers
from fraclab.grid import GridFunction
from fraclab.mapping import (riesz_kernel_grid, weak_young_check, young_blowup_sweep,
                             young_q)

N, L, theta, p = 32, 1.0, 1.0, 1.2
r = 2 / (2 - theta)
c = cell_centers(2, N, L)
g = GridFunction((np.linalg.norm(c, axis=-1) < 0.8).astype(float), L)
hk = riesz_kernel_grid(2, theta, N // 2 + N // 4, 2 * L / N)

rep = weak_young_check(g, hk, p, young_q(p, r), r)
print(f"||g*h||_(q,inf) = {rep.lhs:.4f} <= {rep.rhs:.4f}   passed={rep.passed}")
print("proof-step violations:", rep.details["violations"])

sweep = young_blowup_sweep(1.0, [1.5, 1.2, 1.1, 1.05, 1.02])
for rr, C, nm in zip(sweep["r"], sweep["C"], sweep["normalized"]):
    print(f"  r={rr:<5} C={C:10.3f}  C (r-1)^(p/q)={nm:.3f}")
