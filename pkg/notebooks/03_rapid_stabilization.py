# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Decay rate versus the damping `lam`
#
# The target PDE decays at `lam` plus the rate of its slowest undamped mode,
# so raising `lam` speeds up the PDE part without bound.  The ODE part of the
# target system decays at the rate set by `A + BK`.  The closed-loop rate is
# the smaller of the two.

# %%
import numpy as np

from kdvcascade import certify, kernels, sim
from kdvcascade.gains import Plant
from kdvcascade.sim import SimConfig
from kdvcascade.transform import SampledState, build_table, inverse

N = 128
cfg = SimConfig(N=N, dt=1e-3, T=10.0, record_every=10)
mu, f = sim.slow_mode(1.0, N=N)


def rate(plant):
    q = kernels.solve_kernel(plant, "direct")
    h = kernels.solve_kernel(plant, "inverse")
    table = build_table(plant, q, h, N)
    z0 = inverse(SampledState([1.0, -0.5], f, plant.l), table)
    tr = sim.simulate_closed_loop(plant, table, z0.u, z0.X, cfg)
    return certify.decay_fit(tr.H_norm, tr.times)


# %%
for K in ([[-3, -4]], [[-181, -27]]):
    base = Plant(A=[[0, 1], [1, 0]], B=[[0], [1]], K=K)
    ab = -max(np.linalg.eigvals(base.closed_loop).real)
    print(f"K = {K[0]}, slowest A+BK rate = {ab:.4f}")
    for lam in (0.5, 1.0, 2.0):
        print(f"    lam = {lam}: fitted rate {rate(base.replace(lam=lam)):.4f}   "
              f"(PDE part: {lam - mu:.4f})")

# %% [markdown]
# With `K = [-3, -4]` all three runs decay at `2 - sqrt(2)`; the ODE pole is
# the bottleneck.  With `A + BK` at `-12, -15` the PDE part is the slow one
# and the rate grows with `lam`.
