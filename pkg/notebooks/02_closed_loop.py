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
# # Closed loop, target system and the Lyapunov certificate
#
# With the kernels tabulated on a grid, the feedback
# `U = int_0^l q(0, y) u(y) dy + phi(0) X` is a linear functional of the
# sampled state, and the closed loop is a linear ODE in time.  Mapping the
# target trajectory back through the inverse transformation must give the
# closed-loop trajectory.

# %%
import numpy as np

from kdvcascade import certify, kernels, sim
from kdvcascade.gains import Plant
from kdvcascade.sim import SimConfig
from kdvcascade.transform import SampledState, build_table, forward, h_norm, inverse

plant = Plant(A=[[0, 1], [1, 0]], B=[[0], [1]], K=[[-3, -4]], l=1.0, lam=1.0)
q = kernels.solve_kernel(plant, "direct")
h = kernels.solve_kernel(plant, "inverse")
N = 128
table = build_table(plant, q, h, N)

# %% [markdown]
# ## Initial data
#
# Generic bumps violate the higher compatibility conditions at the
# boundaries, and the solution then starts with a thin layer the grid cannot
# resolve.  The slowest eigenfunction of the target operator is smooth and
# satisfies every condition; pulled back through the inverse map it is also
# compatible with the feedback.

# %%
mu, f = sim.slow_mode(plant.l, N=N)
print(f"slowest target eigenvalue (undamped): {mu:.7f}")
X0 = np.array([1.0, -0.5])
z0 = inverse(SampledState(X0, f, plant.l), table)
print("H-norm of the initial state:", h_norm(z0))

# %%
cfg = SimConfig(N=N, dt=1e-3, T=10.0, record_every=10)
res = sim.equivalence_check(plant, table, z0.u, z0.X, cfg)
cl, tg = res["closed_loop"], res["target"]
print(f"sup |closed loop - inverse(target)|_H = {res['sup_error']:.2e} "
      f"(relative {res['relative']:.2e})")

# %%
for k in range(0, len(cl), 100):
    print(f"t = {cl.times[k]:5.2f}   |z|_H = {cl.H_norm[k]:.3e}   U = {cl.U[k]: .3e}   "
          f"|w| = {tg.u_norm[k]:.3e}")

# %% [markdown]
# ## Certificate
#
# `V = X^T P X + (mu/2) |w|^2` decays at least like `exp(-delta t)`.  The
# check allows 5 % slack for the discretization.

# %%
cert = certify.design(plant)
cert, V = certify.certify_trace(tg, cert)
print(f"mu = {cert.mu:.4f}, delta = {cert.delta:.4f}, c2 = delta/2 = {cert.c2:.4f}")
print(f"envelope passed: {cert.passed}, margin {cert.margin:.3e}")
print("fitted closed-loop rate:", certify.decay_fit(cl.H_norm, cl.times))

# %% [markdown]
# The certified rate `delta/2` is conservative.  The observed rate is the
# slowest eigenvalue of `A + BK`, `2 - sqrt(2)`.

# %% [markdown]
# The energy identity `d/dt |w|^2/2 = -lam |w|^2 - (w(l)^2 + w_x(0)^2)/2` is
# checked from recorded samples, so it needs every step recorded.

# %%
for n, dt in ((64, 2e-3), (128, 1e-3), (256, 5e-4)):
    _, fn = sim.slow_mode(plant.l, N=n)
    tr = sim.simulate_target(plant, fn, X0, SimConfig(N=n, dt=dt, T=1.0))
    print(f"N = {n:3d}: energy residual {sim.energy_balance_check(tr, plant)[1]:.2e}")
