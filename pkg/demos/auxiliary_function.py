"""The critical radius function m_V for a few potentials.

m_V(x) is the reciprocal of the largest radius r at which the averaged
potential r^(2s-n) * int_{B(x,r)} V balances the scale.  Constant potentials
give a constant m_V; a growing potential makes m_V grow with |x|.

    python3 demos/auxiliary_function.py
"""

import numpy as np

from fraclab.auxfunc import m_v
from fraclab.weights import Weight

s = 0.5
xs = [np.array([t, 0.0]) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]

for name, V in [("V = 1", Weight.constant(1.0, 2)),
                ("V = |x|^2", Weight.power(2.0, 2)),
                ("V = |x|", Weight.power(1.0, 2))]:
    vals = [m_v(V, s, x).value for x in xs]
    print(f"{name:10s}", "  ".join(f"{v:8.4f}" for v in vals))

# scaling: the dilated potential t^(2s) V(t x) has m equal to t m_V(t x)
V = Weight.power(2.0, 2)
x = np.array([0.3, -0.7])
for t in (0.5, 2.0):
    lhs = m_v(V.dilated(t, s), s, x).value
    print(f"t={t}: m_Vt(x) = {lhs:.10f}, t m_V(tx) = {t * m_v(V, s, t * x).value:.10f}")
