"""Walk through the free-fermion pipeline on a modest box.

Run with ``python3 demos/edge_current_tour.py [L]``.  Prints every route
to the magnetization next to the edge current ``I^d`` for growing ``d``,
then the shell-maximum decay of the bulk currents.
"""
import math
import sys

from bulkedge import currents as cur
from bulkedge.fock import ThermoParams
from bulkedge.free import FreeGibbs, one_body
from bulkedge.model import hofstadter
from bulkedge.thermo import magnetization

L = int(sys.argv[1]) if len(sys.argv) > 1 else 12
b = 2 * math.pi * 0.15
params = ThermoParams(beta=2.0, mu=0.0)

spec = hofstadter(L, b)
state = FreeGibbs(one_body(spec), params)
field = cur.current_field(spec, state)
print(f"Hofstadter box L={L}: {len(spec.region)} sites, b={b:.6f}, beta={params.beta}, mu={params.mu}")

rep = magnetization(spec, params, "free", d_values=range(1, L + 1), state=state, field_=field)
print(f"  m from d p / d b     {rep.m_fd: .12f}")
print(f"  m from <dH/db>       {rep.m_duhamel: .12f}")
print(f"  m from current sum   {rep.m_current_sum: .12f}")
print(f"  (m - I^L)(2L+1)      {rep.edge_gap * (2 * L + 1): .6f}")
print(f"  (m + I^L)(2L+1)      {rep.edge_sum * (2 * L + 1): .6f}")

print("\nedge current I^d along the centre column")
for d, value in sorted(rep.edge_currents.items()):
    print(f"  d={d:3d}  {value: .12e}")

prof = cur.bloch_profile(field)
print(f"\nbulk current decay (log-slope {prof.slope:.3f} per step)")
for r, m in prof.as_rows():
    print(f"  r={r:3d}  max|j|={m:.3e}")
