"""Exact diagonalization of a small interacting model.

Checks the continuity equation on every site, then compares the
magnetization routes and the mu-derivatives obtained from
``beta Cov(N, A)`` with central differences.
"""
import math

from bulkedge.currents import continuity_residuals
from bulkedge.fock import ThermoParams
from bulkedge.model import spinless_tv
from bulkedge.thermo import magnetization, mu_derivative_report

b = 2 * math.pi * 0.15
spec = spinless_tv(1, b, V=1.0)
params = ThermoParams(beta=2.0, mu=0.5)

res = continuity_residuals(spec)
print(f"continuity residual, worst site: {max(res.values()):.2e} over {len(res)} sites")

m = magnetization(spec, params, "ed")
print(f"m (finite difference) {m.m_fd: .12f}")
print(f"m (<dH/db>)           {m.m_duhamel: .12f}")
print(f"m (current sum)       {m.m_current_sum: .12f}")

r = mu_derivative_report(spec, params, "ed")
print(f"d m / d mu: covariance {r.dm_cov: .10e}, finite difference {r.dm_fd: .10e}")
print(f"d p / d mu = {r.dp_fd: .10f}, density = {r.density: .10f}")
print(f"largest relative disagreement {r.max_relative_disagreement():.1e}")
