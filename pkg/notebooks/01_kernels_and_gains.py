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
# # Kernels and gains
#
# The plant is an unstable ODE driven through the right end of a linearized
# KdV equation,
#
#     X' = A X + B u(l, t),    u_t = -u_x - u_xxx,    u(0, t) = U(t),
#     u_x(l, t) = u_xx(l, t) = 0.
#
# The backstepping map
#
#     w(x) = u(x) - int_x^l q(x, y) u(y) dy - phi(x) X
#
# turns it into a target system with damping `lam` and `A + BK` in the ODE
# part.  This notebook computes the gain `phi`, its inverse counterpart `psi`,
# and the kernels `q`, `h`.

# %%
import numpy as np

from kdvcascade import gains, kernels
from kdvcascade.gains import Plant

plant = Plant(A=[[0, 1], [1, 0]], B=[[0], [1]], K=[[-3, -4]], l=1.0, lam=1.0)
print("eig(A)      =", np.linalg.eigvals(plant.A))
print("eig(A + BK) =", np.linalg.eigvals(plant.closed_loop))

# %% [markdown]
# ## Gains
#
# `phi` and `psi` are rows of a matrix exponential of a 6x6 block matrix; the
# other two blocks of the row are the first two derivatives.

# %%
xs = np.linspace(0, plant.l, 6)
for x, p, s in zip(xs, gains.phi(plant, xs), gains.psi(plant, xs)):
    print(f"x = {x:.1f}   phi = {p}   psi = {s}")

# %% [markdown]
# ## The kernel iteration
#
# In `s = x + y`, `t = y - x` the kernel solves an integral equation on a
# triangle.  The iteration works on exact bivariate polynomials, so each sweep
# is a handful of coefficient operations.  The second iterate has a closed
# form that we can check directly.

# %%
th = gains.theta_series(plant, "direct", 40)
G1 = kernels.seed_poly(plant.lam, plant.l)
G2 = kernels.iterate_once(G1, th, plant, -1)
s, t = np.array([0.5, 1.0, 1.5]), np.array([0.2, 0.5, 0.4])
print("second iterate   :", G2.eval(s, t))
print("closed form      :", kernels.second_iterate_reference(s, t, th, plant.lam, plant.l))

# %%
q = kernels.solve_kernel(plant, "direct")
h = kernels.solve_kernel(plant, "inverse")
for sol in (q, h):
    print(f"{sol.which:8s} iterations = {sol.iterations}, last change = {sol.coeff_delta:.1e}")
    for k, v in sol.residual_report.items():
        print(f"    {k:10s} {v:.2e}")

# %% [markdown]
# The coefficient changes drop quickly; the factorial denominators of the
# integrals win after a few sweeps.

# %%
print(np.array(q.history))

# %% [markdown]
# ## Reciprocity
#
# The inverse map has the same structure with `h` and `psi`.  Composing the
# two gives identities between the kernels that hold only if both are right,
# including the sign of the boundary forcing of `h`.

# %%
print(kernels.reciprocity_check(q, h, plant))
