"""Decay of the discrete fundamental solution with and without a potential.

Without a potential the kernel of (-Delta)^s decays like |x-y|^-(n-2s).
Adding V = 1 only lowers it, and the product u |x-y|^(n-2s) (1 + |x-y| m)^N
stays bounded, which is the polynomial form of the faster decay.

    python3 demos/fundamental_solution.py
"""

import numpy as np

from fraclab.fundsol import decay_slope, estimate_fundamental_solution, poly_decay_fit
from fraclab.kernel import KernelSpec
from fraclab.weights import Weight

K = KernelSpec.fractional_laplacian(2, 0.5)
L, N = 4.0, 64
y = np.full(2, L / N)

free = estimate_fundamental_solution(K, None, y, L, N)
damped = estimate_fundamental_solution(K, Weight.constant(1.0, 2), y, L, N)
print(f"log-log slope without potential: {decay_slope(free):.3f} (expected -1)")
print("V = 1 lies below V = 0 everywhere:",
      bool(np.all(damped.u.values <= free.u.values * (1 + 1e-9))))

r, _, uf = free.window()
_, _, ud = damped.window()
o = np.argsort(r)
r, uf, ud = r[o], uf[o], ud[o]
for k in np.linspace(0, r.size - 1, 6).astype(int):
    print(f"  r={r[k]:.3f}  u_free={uf[k]:.3e}  u_V={ud[k]:.3e}")

fit = poly_decay_fit(damped, [1, 2, 4])
print("fitted C_N:", {k: round(v, 4) for k, v in fit.constants["C_N"].items()})
