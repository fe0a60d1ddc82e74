"""Small dense linear algebra: exponentials, Lyapunov solves, spectra.

Matrices here are at most a few dozen rows (the 3n x 3n block matrices of the
gain ODEs), so everything is dense and delegated to LAPACK through scipy.
"""
import numpy as np
import scipy.linalg as sla

from .errors import CertificationError, DimensionError, InputError

__all__ = [
    "as_matrix",
    "mat_exp",
    "solve_lyapunov",
    "sym_eig_bounds",
    "is_hurwitz",
    "spectral_abscissa",
    "is_controllable",
]


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


def _square(a, name):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def mat_exp(F):
    """Matrix exponential ``e^F`` (Pade scaling and squaring)."""
    return sla.expm(_square(F, "F"))


def spectral_abscissa(F):
    """Largest real part among the eigenvalues of ``F``."""
    F = _square(F, "F")
    return float(np.max(np.linalg.eigvals(F).real))


def is_hurwitz(F):
    """Hurwitz test.

    Returns
    -------
    ok : bool
        True iff every eigenvalue has negative real part.
    abscissa : float
        The spectral abscissa.
    """
    a = spectral_abscissa(F)
    return a < 0.0, a


def sym_eig_bounds(S, rtol=1e-12):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    S = _square(S, "S")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > rtol * scale:
        raise InputError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(ev[0]), float(ev[-1])


def solve_lyapunov(F, Q):
    """Solve ``P F + F^T P + Q = 0`` for the SPD matrix ``P``.

    Parameters
    ----------
    F : (n, n) array_like
        Hurwitz matrix.
    Q : (n, n) array_like
        Symmetric positive definite right-hand side.

    Raises
    ------
    CertificationError
        If ``F`` is not Hurwitz (the spectral abscissa is attached).
    InputError
        If ``Q`` is not symmetric positive definite.
    """
    F = _square(F, "F")
    Q = _square(Q, "Q")
    if F.shape != Q.shape:
        raise DimensionError(f"F {F.shape} and Q {Q.shape} differ in shape")
    ok, a = is_hurwitz(F)
    if not ok:
        raise CertificationError(f"matrix is not Hurwitz (abscissa {a:.6g})", abscissa=a)
    qmin, _ = sym_eig_bounds(Q)
    if qmin <= 0.0:
        raise InputError("Q is not positive definite")
    # scipy solves A X + X A^H = C
    P = sla.solve_continuous_lyapunov(F.T, -Q)
    return 0.5 * (P + P.T)


def is_controllable(A, B, tol=None):
    """Kalman rank test for the pair ``(A, B)``."""
    A = _square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        B = B.T
    if B.shape[0] != A.shape[0]:
        raise DimensionError("B row count must match A")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    C = np.hstack(blocks)
    return int(np.linalg.matrix_rank(C, tol=tol)) == n
