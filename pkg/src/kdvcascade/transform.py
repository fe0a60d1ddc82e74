"""Grid evaluation of the backstepping transformation, its inverse and the feedback law.

All three maps are linear in the sampled state.  A :class:`KernelTable`
tabulates the kernels and gains on the grid once and folds the tail
quadrature into dense matrices, so each application is a matrix-vector
product.
"""
from dataclasses import dataclass

import numpy as np

from . import gains
from .errors import InputError
from .kernels import to_st

__all__ = ["SampledState", "KernelTable", "build_table", "simpson_weights",
           "tail_weights", "h_norm", "l2_norm", "forward", "inverse", "feedback_U",
           "operator_norm_estimates"]


def simpson_weights(N, h):
    """Composite Simpson weights on ``N + 1`` equispaced nodes (``N`` even)."""
    if N % 2:
        raise InputError("Simpson's rule needs an even number of intervals")
    w = np.ones(N + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def tail_weights(N, h, odd="trapezoid"):
    """Row ``j`` integrates samples over ``[x_j, x_N]``.

    Tails with an even number of intervals use Simpson's rule.  Odd tails use
    the composite trapezoid rule (``odd="trapezoid"``), or one trapezoid
    panel followed by Simpson (``odd="trap_simpson"``).
    """
    W = np.zeros((N + 1, N + 1))
    for j in range(N):
        m = N - j
        if m % 2 == 0:
            W[j, j:] = simpson_weights(m, h)
        elif odd == "trapezoid" or m == 1:
            W[j, j:] = h
            W[j, j] = W[j, N] = 0.5 * h
        elif odd == "trap_simpson":
            W[j, j] += 0.5 * h
            W[j, j + 1] += 0.5 * h
            W[j, j + 1:] += simpson_weights(m - 1, h)
        else:
            raise ValueError(f"unknown odd-tail rule {odd!r}")
    return W


@dataclass(frozen=True)
class SampledState:
    """ODE state ``X`` and PDE samples ``u[j] = u(j l / N)``."""

    X: np.ndarray
    u: np.ndarray
    l: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).ravel()
        u = np.asarray(self.u, dtype=float).ravel()
        if u.size < 9 or (u.size - 1) % 2:
            raise InputError("need an even number N >= 8 of intervals (N + 1 samples)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(u))):
            raise InputError("state has non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "l", float(self.l))

    @property
    def N(self):
        return self.u.size - 1

    @property
    def dx(self):
        return self.l / self.N

    @property
    def x(self):
        return np.linspace(0.0, self.l, self.N + 1)

    def __add__(self, other):
        return SampledState(self.X + other.X, self.u + other.u, self.l)

    def __sub__(self, other):
        return SampledState(self.X - other.X, self.u - other.u, self.l)

    def __mul__(self, a):
        return SampledState(a * self.X, a * self.u, self.l)

    __rmul__ = __mul__


def l2_norm(u, l):
    u = np.asarray(u, float)
    N = u.shape[-1] - 1
    return np.sqrt((u * u) @ simpson_weights(N, l / N))


def h_norm(state):
    """``(|X|^2 + ||u||^2)^(1/2)`` with Simpson quadrature for ``||u||``."""
    N = state.N
    uu = state.u @ (simpson_weights(N, state.dx) * state.u)
    return float(np.sqrt(state.X @ state.X + uu))


@dataclass(frozen=True)
class KernelTable:
    """Kernels and gains tabulated on ``x_j = j l / N``.

    ``q_grid[j, k] = q(x_j, x_k)`` for ``k >= j`` (zero below the diagonal),
    likewise ``h_grid``; ``phi_grid[j]`` and ``psi_grid[j]`` are gain rows.
    ``Fq`` and ``Fh`` fold the tail quadrature into the kernels;
    ``fb_weights`` is the quadrature row of the feedback integral.
    """

    N: int
    l: float
    q_grid: np.ndarray
    h_grid: np.ndarray
    phi_grid: np.ndarray
    psi_grid: np.ndarray
    Fq: np.ndarray
    Fh: np.ndarray
    fb_weights: np.ndarray

    @property
    def phi0(self):
        return self.phi_grid[0]


def build_table(plant, q_sol, h_sol, N, odd="trapezoid"):
    """Precompute the grid operators for ``N`` intervals."""
    if N < 8 or N % 2:
        raise InputError("N must be even and >= 8")
    l = plant.l
    x = np.linspace(0.0, l, N + 1)
    Xg, Yg = np.meshgrid(x, x, indexing="ij")
    upper = Yg >= Xg
    S, T = to_st(Xg, Yg)
    q = np.where(upper, q_sol.G.eval(S, T), 0.0)
    h = np.where(upper, h_sol.G.eval(S, T), 0.0)
    dx = l / N
    W = tail_weights(N, dx, odd)
    arrays = dict(
        q_grid=q,
        h_grid=h,
        phi_grid=gains.phi(plant, x),
        psi_grid=gains.psi(plant, x),
        Fq=W * q,
        Fh=W * h,
        fb_weights=simpson_weights(N, dx) * q[0],
    )
    for a in arrays.values():
        a.setflags(write=False)
    return KernelTable(N=N, l=l, **arrays)


def _check(state, table):
    if state.N != table.N or abs(state.l - table.l) > 1e-12 * table.l:
        raise InputError(f"state grid (N={state.N}, l={state.l}) does not match "
                         f"table grid (N={table.N}, l={table.l})")


def forward(state, table):
    """``w = u - int_x^l q(x, y) u(y) dy - phi(x) X``; ``X`` passes through."""
    _check(state, table)
    w = state.u - table.Fq @ state.u - table.phi_grid @ state.X
    return SampledState(state.X, w, state.l)


def inverse(state_w, table):
    """``u = w + int_x^l h(x, y) w(y) dy + psi(x) X``."""
    _check(state_w, table)
    u = state_w.u + table.Fh @ state_w.u + table.psi_grid @ state_w.X
    return SampledState(state_w.X, u, state_w.l)


def feedback_U(state, table):
    """Boundary control ``U = int_0^l q(0, y) u(y) dy + phi(0) X``."""
    _check(state, table)
    return float(table.fb_weights @ state.u + table.phi0 @ state.X)


def operator_norm_estimates(table, n, count=20, seed=0):
    """Empirical continuity constants of the forward and inverse maps.

    Returns ``(d1, d2)``: the largest observed ratios ``|forward(z)|_H / |z|_H``
    and ``|inverse(z)|_H / |z|_H`` over ``count`` random states (Gaussian ODE
    part, random low-mode Fourier samples).
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, table.l, table.N + 1)
    d1 = d2 = 0.0
    for _ in range(count):
        c = rng.standard_normal((2, 6))
        k = np.arange(1, 7)[:, None] * np.pi * x / table.l
        u = c[0] @ np.cos(k) + c[1] @ np.sin(k)
        z = SampledState(rng.standard_normal(n), u, table.l)
        nz = h_norm(z)
        d1 = max(d1, h_norm(forward(z, table)) / nz)
        d2 = max(d2, h_norm(inverse(z, table)) / nz)
    return d1, d2
