"""Kernels of the direct and inverse transformations.

With ``s = x + y`` and ``t = y - x`` the kernel ``q(x, y) = G(s, t)`` lives on
the triangle ``T0 = {0 <= t <= l, t <= s <= 2l - t}`` and solves an integral
equation of the form ``G = theta + seed + L[G]`` where ``seed`` is
``-(lam t / 6)(2l - s)`` and ``L`` is the linear integral operator below.  ``L``
raises the degree in ``t`` by at least one, so on capped polynomials the
fixed-point iteration terminates after at most ``cap + 1`` sweeps and in
practice reaches double precision much earlier.

The inverse kernel ``h`` solves the same problem with the sign of the
damping term flipped and with ``theta`` built from ``psi`` instead of ``phi``.
"""
from dataclasses import dataclass, field
import json
import warnings

import numpy as np

from . import gains
from .errors import ConvergenceError, DomainError
from .poly2 import DEFAULT_CAP, Poly2

__all__ = [
    "KernelSolution",
    "seed_poly",
    "iterate_once",
    "solve_kernel",
    "q_eval",
    "kernel_eval",
    "kernel_residuals",
    "reciprocity_check",
    "second_iterate_reference",
    "to_st",
    "to_xy",
    "kernel_to_json",
    "kernel_from_json",
]

_SIGN = {"direct": -1, "inverse": +1}


def to_st(x, y):
    """``(x, y) -> (s, t) = (x + y, y - x)``."""
    return np.add(x, y), np.subtract(y, x)


def to_xy(s, t):
    """Inverse of :func:`to_st`."""
    return 0.5 * np.subtract(s, t), 0.5 * np.add(s, t)


def seed_poly(lam, l, cap=DEFAULT_CAP):
    """``-(lam t / 6)(2l - s) = -(lam l / 3) t + (lam / 6) s t``."""
    c = np.zeros((2, 2))
    c[0, 1] = -lam * l / 3.0
    c[1, 1] = lam / 6.0
    return Poly2(c, cap)


def _theta_poly(theta, cap):
    if isinstance(theta, Poly2):
        return theta
    coeffs = getattr(theta, "coeffs", theta)
    return Poly2.from_t_series(coeffs, cap)


def iterate_once(Gn, theta, plant, sign_lam):
    """One sweep ``theta + L[Gn]`` of the successive-approximation scheme.

    ``L[G] = -2 int_0^t G_s - int int (G_ss + G)
    - (1/6) int int int_s^{2l-xi} (4 G_sss + 4 G_s + sign_lam*lam*G + 12 G_sts)``.

    ``sign_lam = -1`` gives the direct kernel, ``+1`` the inverse kernel.
    The constant seed ``-(lam t/6)(2l - s)`` is *not* added here; see
    :func:`solve_kernel`.
    """
    if sign_lam not in (-1, 1):
        raise ValueError("sign_lam must be -1 or +1")
    lam, l = plant.lam, plant.l
    th = _theta_poly(theta, Gn.cap)
    Gs = Gn.diff("s")
    Gss = Gs.diff("s")
    integrand = 4.0 * Gss.diff("s") + 4.0 * Gs + (sign_lam * lam) * Gn + 12.0 * Gss.diff("t")
    band = integrand.int_eta_band(l)
    out = th
    out = out - 2.0 * Gs.integrate("t")
    out = out - (Gss + Gn).integrate("t").integrate("t")
    out = out - band.integrate("t").integrate("t") / 6.0
    return out


def second_iterate_reference(s, t, theta, lam, l):
    """Closed form of ``theta + L[seed]`` for the direct kernel.

    ``theta`` is a callable of ``t``.  Used as an independent check of
    :func:`iterate_once` started from the seed.
    """
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    poly = (-lam * t**2
            + (lam * l / 9.0 - lam**2 * l**2 / 18.0) * t**3
            + lam / 18.0 * t**4
            + lam**2 / 240.0 * t**5
            + (l * lam**2 - lam) / 18.0 * s * t**3
            - lam**2 / 72.0 * s**2 * t**3)
    return theta(t) + poly / 6.0


@dataclass(frozen=True)
class KernelSolution:
    """Converged kernel in ``(s, t)`` coordinates plus iteration metadata."""

    G: Poly2
    which: str
    lam: float
    l: float
    iterations: int
    coeff_delta: float
    history: tuple = ()
    truncation_flag: bool = False
    truncated: float = 0.0
    residual_report: dict = field(default_factory=dict)

    @property
    def cap(self):
        return self.G.cap

    def __call__(self, x, y):
        return kernel_eval(self, x, y)


def solve_kernel(plant, which="direct", D=DEFAULT_CAP, tol=1e-13, max_iter=60,
                 residual_grid=41, trunc_tol=1e-13, G0=None):
    """Fixed point of ``G -> theta + seed + L[G]`` started from the seed.

    Parameters
    ----------
    plant : Plant
    which : {"direct", "inverse"}
    D : int
        Total-degree cap of the polynomial representation.
    tol : float
        Stop when the sup-norm change of the coefficients is ``<= tol``.
    max_iter : int
    residual_grid : int or None
        Side of the sample grid for :func:`kernel_residuals`; ``None`` skips
        the report.
    trunc_tol : float
        Dropped coefficients larger than this (relative to the largest kept
        coefficient) set ``truncation_flag`` and trigger a warning.

    Raises
    ------
    ConvergenceError
        If ``tol`` is not met within ``max_iter`` sweeps.
    """
    if which not in _SIGN:
        raise ValueError("which must be 'direct' or 'inverse'")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if D < 6:
        raise ValueError("degree cap must be >= 6")
    sign = _SIGN[which]
    theta = _theta_poly(gains.theta_series(plant, which, D), D)
    seed = seed_poly(plant.lam, plant.l, D)
    G = seed if G0 is None else G0
    history = []
    delta = np.inf
    for it in range(1, max_iter + 1):
        G_new = iterate_once(G, theta, plant, sign) + seed
        delta = float(np.abs(G_new.coeffs - G.coeffs).max())
        history.append(delta)
        G = G_new
        if delta <= tol:
            break
    else:
        raise ConvergenceError(
            f"{which} kernel did not converge in {max_iter} iterations "
            f"(last change {delta:.3e}); for large lam*l^2 raise the degree cap",
            history)
    scale = max(G.max_abs(), 1.0)
    flag = G.truncated > trunc_tol * scale
    sol = KernelSolution(G, which, plant.lam, plant.l, it, delta, tuple(history),
                         bool(flag), G.truncated)
    report = {}
    if residual_grid:
        report = kernel_residuals(sol, plant, which, residual_grid)
    if flag:
        report["truncation_warning"] = (
            f"coefficients up to {G.truncated:.3e} dropped at degree cap {D}")
        warnings.warn(report["truncation_warning"], RuntimeWarning, stacklevel=2)
    return KernelSolution(G, which, plant.lam, plant.l, it, delta, tuple(history),
                          bool(flag), G.truncated, report)


def _in_triangle(x, y, l):
    tol = 1e-12 * max(l, 1.0)
    return (x >= -tol) & (y <= l + tol) & (y - x >= -tol)


def kernel_eval(sol, x, y):
    """Evaluate the kernel at ``0 <= x <= y <= l``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if not np.all(_in_triangle(x, y, sol.l)):
        raise DomainError("kernel evaluated outside the triangle 0 <= x <= y <= l")
    return sol.G.eval(*to_st(x, y))


q_eval = kernel_eval


def _triangle_grid(l, m):
    g = np.linspace(0.0, l, m)
    X, Y = np.meshgrid(g, g, indexing="ij")
    keep = Y >= X
    return X[keep], Y[keep]


def kernel_residuals(sol, plant, which=None, grid=41):
    """Sup-norm residuals of the Goursat problem on a ``grid x grid`` sample.

    Keys: ``pde_sup`` (interior PDE), ``bc_yl_sup`` (boundary ``y = l``),
    ``diag_sup`` (``|k(x, x)|``) and ``diagx_sup``
    (``|k_x(x, x) - lam (l - x) / 3|``).
    """
    which = which or sol.which
    G = sol.G
    lam, l = plant.lam, plant.l
    sign = _SIGN[which]
    Gs = G.diff("s")
    Gt = G.diff("t")
    Gss, Gst, Gtt = Gs.diff("s"), Gs.diff("t"), Gt.diff("t")
    # k_xxx + k_yyy + k_x + k_y = 2 G_sss + 6 G_stt + 2 G_s
    pde = 2.0 * Gss.diff("s") + 6.0 * Gst.diff("t") + 2.0 * Gs - (sign * lam) * G

    X, Y = _triangle_grid(l, grid)
    S, T = to_st(X, Y)
    pde_sup = float(np.abs(pde.eval(S, T)).max())

    xb = np.linspace(0.0, l, grid)
    g = gains.phi(plant, xb) if which == "direct" else gains.psi(plant, xb)
    forcing = (g @ plant.B).ravel()
    sb, tb = to_st(xb, np.full_like(xb, l))
    # k + k_yy at y = l, k_yy = G_ss + 2 G_st + G_tt
    bc = (G + Gss + 2.0 * Gst + Gtt).eval(sb, tb) - forcing
    sd = 2.0 * xb
    zero = np.zeros_like(xb)
    diag = G.eval(sd, zero)
    diagx = (Gs - Gt).eval(sd, zero) - lam / 3.0 * (l - xb)
    return {
        "pde_sup": pde_sup,
        "bc_yl_sup": float(np.abs(bc).max()),
        "diag_sup": float(np.abs(diag).max()),
        "diagx_sup": float(np.abs(diagx).max()),
    }


def _simpson_weights(n, h):
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def reciprocity_check(q_sol, h_sol, plant, grid=21, nodes=129):
    """Residuals of the identities implied by ``inverse o forward = id``.

    ``h(x, z) - q(x, z) - int_x^z h(x, y) q(y, z) dy`` on the triangle and
    ``psi(x) - phi(x) - int_x^l h(x, y) phi(y) dy`` on ``[0, l]``, both with
    composite Simpson on ``nodes`` points.
    """
    l = plant.l
    if nodes % 2 == 0:
        raise ValueError("nodes must be odd for Simpson's rule")
    X, Z = _triangle_grid(l, grid)
    u = np.linspace(0.0, 1.0, nodes)
    Ypts = X[:, None] + (Z - X)[:, None] * u[None, :]
    Xb = np.broadcast_to(X[:, None], Ypts.shape)
    Zb = np.broadcast_to(Z[:, None], Ypts.shape)
    integrand = h_sol.G.eval(*to_st(Xb, Ypts)) * q_sol.G.eval(*to_st(Ypts, Zb))
    w = _simpson_weights(nodes, 1.0 / (nodes - 1))
    integral = (integrand @ w) * (Z - X)
    kern = h_sol.G.eval(*to_st(X, Z)) - q_sol.G.eval(*to_st(X, Z)) - integral
    kernel_sup = float(np.abs(kern).max())

    xs = np.linspace(0.0, l, grid)
    ph = gains.phi(plant, xs)
    ps = gains.psi(plant, xs)
    gain_res = []
    for k, x in enumerate(xs):
        ys = x + (l - x) * u
        hv = h_sol.G.eval(*to_st(np.full_like(ys, x), ys))
        integral = (w * hv) @ gains.phi(plant, ys) * (l - x)
        gain_res.append(ps[k] - ph[k] - integral)
    gain_sup = float(np.abs(np.array(gain_res)).max())
    return {"kernel_sup": kernel_sup, "gain_sup": gain_sup}


def _num(v):
    return format(float(v), ".17g")


def kernel_to_json(sol):
    """Serialize a kernel dump (coefficients with 17 significant digits)."""
    coeffs = ", ".join(f"[{i}, {j}, {_num(c)}]" for i, j, c in sol.G.triples())
    head = {
        "which": sol.which,
        "lambda": sol.lam,
        "l": sol.l,
        "deg_cap": sol.cap,
        "iterations": sol.iterations,
    }
    resid = {k: v for k, v in sol.residual_report.items()}
    body = json.dumps(head)[:-1]
    return (body + f', "coeffs": [{coeffs}], "residuals": '
            + json.dumps(resid, sort_keys=True) + "}")


def kernel_from_json(text):
    d = json.loads(text)
    G = Poly2.from_triples([(int(i), int(j), float(c)) for i, j, c in d["coeffs"]],
                           d["deg_cap"])
    return KernelSolution(G, d["which"], d["lambda"], d["l"], d["iterations"], 0.0,
                          residual_report=d.get("residuals", {}))
