"""Lyapunov certificate for the target system and decay-rate measurements.

For ``V = X^T P X + (mu / 2) ||w||^2`` with ``P (A+BK) + (A+BK)^T P = -Q``,
choosing ``mu > max(2 |PB|^2 / lmin(Q), 2 lmax(P))`` gives
``V(t) <= V(0) exp(-delta t)`` with ``delta = min(lmin(Q), 4 lam) / mu``.
"""
from dataclasses import dataclass, replace
import json

import numpy as np

from . import linops
from .errors import DimensionError, InputError
from .transform import l2_norm

__all__ = ["Certificate", "design", "evaluate_V", "check_envelope", "decay_fit",
           "certify_trace", "MU_FACTOR"]

MU_FACTOR = 1.05


@dataclass(frozen=True)
class Certificate:
    P: np.ndarray
    Q: np.ndarray
    mu: float
    delta: float
    alpha1: float
    alpha2: float
    mu_bound: float
    passed: bool = None
    margin: float = None

    @property
    def c2(self):
        """Decay rate of the H-norm implied by the certificate."""
        return 0.5 * self.delta

    def to_json(self):
        d = {
            "P": [[float(v) for v in row] for row in self.P],
            "mu": self.mu,
            "delta": self.delta,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "passed": self.passed,
            "margin": self.margin,
        }
        return json.dumps(d, indent=2)


def design(plant, Q=None, mu_factor=MU_FACTOR):
    """Solve the Lyapunov equation and pick ``mu``, ``delta``, ``alpha1/2``.

    Raises
    ------
    CertificationError
        If ``A + BK`` is not Hurwitz.
    InputError
        If ``Q`` is not symmetric positive definite.
    """
    n = plant.n
    Q = np.eye(n) if Q is None else linops.as_matrix(Q, "Q")
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n}x{n}")
    P = linops.solve_lyapunov(plant.closed_loop, Q)
    qmin, _ = linops.sym_eig_bounds(Q)
    pmin, pmax = linops.sym_eig_bounds(P)
    PB = float(np.linalg.norm(P @ plant.B))
    bound = max(2.0 * PB**2 / qmin, 2.0 * pmax)
    mu = mu_factor * bound
    delta = min(qmin, 4.0 * plant.lam) / mu
    return Certificate(P=P, Q=Q, mu=mu, delta=delta, alpha1=min(pmin, mu / 2.0),
                       alpha2=max(pmax, mu / 2.0), mu_bound=bound)


def evaluate_V(trace, cert):
    """``V_k = X_k^T P X_k + (mu / 2) ||w_k||^2`` along a recorded trace."""
    X = np.asarray(trace.X, float)
    if X.ndim != 2 or X.shape[1] != cert.P.shape[0]:
        raise DimensionError("trace state dimension does not match the certificate")
    w_norm = l2_norm(trace.u, trace.l)
    return np.einsum("ki,ij,kj->k", X, cert.P, X) + 0.5 * cert.mu * w_norm**2


def check_envelope(V, times, delta, tol=0.05):
    """Check ``V_k <= V_0 exp(-delta t_k) (1 + tol)`` for every ``k``.

    Returns ``(passed, margin)`` with ``margin = min_k (envelope_k - V_k)``.
    """
    V = np.asarray(V, float)
    times = np.asarray(times, float)
    if V[0] <= 0:
        raise InputError("V(0) must be positive")
    env = V[0] * np.exp(-delta * (times - times[0])) * (1.0 + tol)
    gap = env - V
    return bool(np.all(gap >= 0.0)), float(gap.min())


def decay_fit(series, times, window=0.5):
    """Least-squares slope of ``-log(series)`` against time.

    ``window`` is the fraction of the horizon used, counted from the end (the
    default fits the second half).  A pair ``(t0, t1)`` selects an explicit
    interval instead.
    """
    series = np.asarray(series, float)
    times = np.asarray(times, float)
    if isinstance(window, tuple):
        t0, t1 = window
        m = (times >= t0) & (times <= t1)
    else:
        t0 = times[-1] - window * (times[-1] - times[0])
        m = times >= t0
    if m.sum() < 2:
        raise InputError("fit window holds fewer than two samples")
    y = series[m]
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InputError("series must be positive and finite on the fit window")
    slope = np.polyfit(times[m], np.log(y), 1)[0]
    return float(-slope)


def certify_trace(trace, cert, tol=0.05):
    """Evaluate ``V`` along a target trace and attach the envelope verdict."""
    V = evaluate_V(trace, cert)
    passed, margin = check_envelope(V, trace.times, cert.delta, tol)
    trace.V = V
    return replace(cert, passed=passed, margin=margin), V
