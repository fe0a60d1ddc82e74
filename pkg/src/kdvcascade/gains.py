"""Plant data and the closed-form gain functions of the transformation.

The direct gain ``phi`` and the inverse gain ``psi`` solve third order linear
ODEs with final conditions at ``x = l``.  Both are rows of a matrix
exponential of a ``3n x 3n`` block companion matrix, so no ODE solver is
involved; the second and third blocks of the propagated row give the first
and second derivatives for free.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import linops
from .errors import DimensionError, DomainError, PlantError

__all__ = ["Plant", "GainSystem", "gain_system", "phi", "psi", "gain_rows",
           "ThetaSeries", "theta_series"]


@dataclass(frozen=True)
class Plant:
    """The ODE-KdV cascade ``X' = AX + B u(l)`` with design data ``K`` and ``lam``.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n, 1) array_like
        Column vector; a flat length-n sequence is accepted.
    K : (1, n) array_like
        State feedback making ``A + BK`` Hurwitz.
    l : float
        Length of the spatial domain.
    lam : float
        Damping of the target system.
    check : bool
        Validate controllability and the Hurwitz property.  Test fixtures
        that deliberately break the invariants pass ``check=False``.
    """

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    l: float = 1.0
    lam: float = 1.0
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        A = linops.as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(-1, 1)
        K = np.asarray(self.K, dtype=float).reshape(1, -1)
        if B.shape[0] != n or K.shape[1] != n:
            raise DimensionError(f"B {B.shape} and K {K.shape} must match n = {n}")
        for name, arr in (("A", A), ("B", B), ("K", K)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "lam", float(self.lam))
        if self.check:
            self.validate()

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def closed_loop(self):
        """``A + BK``."""
        return self.A + self.B @ self.K

    def violations(self):
        """Names of the violated plant invariants (empty when valid)."""
        out = []
        if not self.l > 0:
            out.append("length_nonpositive")
        if not self.lam > 0:
            out.append("lambda_nonpositive")
        if not linops.is_controllable(self.A, self.B):
            out.append("not_controllable")
        if not linops.is_hurwitz(self.closed_loop)[0]:
            out.append("not_hurwitz")
        return out

    def validate(self):
        bad = self.violations()
        if bad:
            raise PlantError(bad[0], f"plant invariant violated: {', '.join(bad)}")
        return self

    def replace(self, **kw):
        d = dict(A=self.A, B=self.B, K=self.K, l=self.l, lam=self.lam, check=self.check)
        d.update(kw)
        return Plant(**d)


@dataclass(frozen=True)
class GainSystem:
    """Block matrices generating ``phi`` (from ``M``) and ``psi`` (from ``N``)."""

    M: np.ndarray
    N: np.ndarray
    E: np.ndarray
    row_init: np.ndarray


def _companion(F, n):
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, Z, -F], [I, Z, -I], [Z, I, Z]])


def gain_system(plant):
    n = plant.n
    M = _companion(plant.A + plant.lam * np.eye(n), n)
    N = _companion(plant.closed_loop, n)
    E = np.vstack([np.eye(n), np.zeros((2 * n, n))])
    row = np.hstack([plant.K, np.zeros((1, 2 * n))])
    return GainSystem(M, N, E, row)


def _check_x(plant, x):
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * max(plant.l, 1.0)
    if np.any(x < -tol) or np.any(x > plant.l + tol):
        raise DomainError(f"x must lie in [0, {plant.l}]")
    return np.clip(x, 0.0, plant.l)


def gain_rows(plant, x, which="direct"):
    """Propagated rows ``(K, 0, 0) e^{(x - l) M}`` for each ``x``.

    Returns an array of shape ``(len(x), 3, n)``: index 1 selects the
    function, its first, or its second derivative.
    """
    gs = gain_system(plant)
    F = gs.M if which == "direct" else gs.N
    if which not in ("direct", "inverse"):
        raise ValueError("which must be 'direct' or 'inverse'")
    xs = np.atleast_1d(_check_x(plant, x))
    n = plant.n
    out = np.empty((xs.size, 3, n))
    for k, xk in enumerate(xs):
        r = (gs.row_init @ linops.mat_exp((xk - plant.l) * F)).ravel()
        out[k] = r.reshape(3, n)
    return out


def _gain(plant, x, which, derivs):
    rows = gain_rows(plant, x, which)
    scalar = np.ndim(x) == 0
    if derivs:
        return rows[0] if scalar else rows
    g = rows[:, 0, :]
    return g[0] if scalar else g


def phi(plant, x, derivs=False):
    """Direct gain ``phi(x) = (K, 0, 0) e^{(x - l) M} E``.

    With ``derivs=True`` returns ``(phi, phi', phi'')`` stacked along the
    second-to-last axis.
    """
    return _gain(plant, x, "direct", derivs)


def psi(plant, x, derivs=False):
    """Inverse gain ``psi(x) = (K, 0, 0) e^{(x - l) N} E``."""
    return _gain(plant, x, "inverse", derivs)


@dataclass(frozen=True)
class ThetaSeries:
    """Power series of the boundary forcing ``theta(t)``.

    ``coeffs[k]`` multiplies ``t**k``; ``coeffs[0] = coeffs[1] = 0``.
    ``tail_bound`` bounds the dropped part of the underlying gain series.
    """

    coeffs: np.ndarray
    tail_bound: float
    which: str

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, float), self.coeffs)


def theta_series(plant, which="direct", D=40):
    """Taylor coefficients of the double integral of the boundary gain.

    For the direct kernel the integrand is ``phi(l - xi) B``; for the inverse
    kernel it is ``psi(l - xi) B`` with ``N`` in place of ``M``.  Expanding
    ``e^{-xi M}`` termwise, the ``t^(k+2)`` coefficient is
    ``row_init (-M)^k E B / (k! (k+1) (k+2))``.
    """
    if D < 2:
        raise ValueError("D must be >= 2")
    gs = gain_system(plant)
    if which == "direct":
        F = gs.M
    elif which == "inverse":
        F = gs.N
    else:
        raise ValueError("which must be 'direct' or 'inverse'")
    EB = gs.E @ plant.B
    coeffs = np.zeros(D + 1)
    v = gs.row_init.copy()
    for k in range(D - 1):
        coeffs[k + 2] = (v @ EB).item() / (math.factorial(k) * (k + 1) * (k + 2))
        v = v @ (-F)
    # Taylor remainder of the exponential in the induced 1-norm
    a = np.abs(gs.row_init).sum() * np.abs(EB).sum()
    normF = np.linalg.norm(F, 1)
    tail = 0.0
    k = D - 1
    term = a * normF ** k / math.factorial(k)
    while term > 1e-300 and k < D + 400:
        tail += term
        k += 1
        term *= normF / k
    return ThetaSeries(coeffs, float(tail), which)
