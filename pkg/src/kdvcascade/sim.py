"""Method-of-lines simulation of the closed loop and of the target system.

Space: second order finite differences on ``x_j = j l / N``.  The PDE is
collocated at nodes ``1 .. N-2``; the two right boundary conditions
``u_x(l) = u_xx(l) = 0`` are one-sided identities that express ``u_{N-1}``
and ``u_N`` through interior values, and ``u_0`` is the Dirichlet datum.  The
unknown vector is therefore ``v = u[1:N-1]`` and the full sample vector is
recovered as ``u = lift @ v + lift0 * u_0``.

Time: TR-BDF2 by default.  The discrete third-derivative operator has
eigenvalues with huge imaginary parts and comparatively small real parts;
the trapezoidal rule keeps those modes alive with amplification close to one,
which swamps long-horizon decay measurements once the physical solution has
decayed below rounding level.  TR-BDF2 is second order and L-stable and shares
one factorization between its trapezoidal and BDF2 stages.  Plain
``"trapezoidal"`` is kept for comparison.

The ODE state and, for the closed loop, the feedback law are part of one
linear system, so every step is a single LU back-substitution.
"""
from dataclasses import dataclass, field, replace
import io
import math
import warnings

import numpy as np
import scipy.linalg as sla

from .errors import DivergenceError, InputError, SimulationError
from .transform import SampledState, KernelTable, forward, inverse, simpson_weights

__all__ = [
    "fd_weights",
    "SpatialOperator",
    "spatial_operator",
    "SimConfig",
    "SimTrace",
    "simulate_target",
    "simulate_closed_loop",
    "energy_balance_check",
    "equivalence_check",
    "slow_mode",
]

SCHEMES = ("tr_bdf2", "trapezoidal")


def fd_weights(offsets, order):
    """Weights ``c`` with ``sum c_k f(x + o_k h) = h^order f^(order)(x) + ...``."""
    o = np.asarray(offsets, dtype=float)
    V = np.vander(o, o.size, increasing=True).T
    rhs = np.zeros(o.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


@dataclass(frozen=True)
class SpatialOperator:
    """Discretization of ``-u_x - u_xxx - lam u`` with the boundary closure.

    Attributes
    ----------
    full : (N+1, N+1) ndarray
        Stencil rows on all nodes; only rows ``1 .. N-2`` are nonzero.
    A : (N-2, N-2) ndarray
        Operator on the unknown interior vector ``v``.
    inj : (N-2,) ndarray
        Column multiplying the Dirichlet value ``u_0``.
    lift, lift0 : ndarrays
        ``u = lift @ v + lift0 * u_0``.
    """

    N: int
    l: float
    lam: float
    full: np.ndarray
    A: np.ndarray
    inj: np.ndarray
    lift: np.ndarray
    lift0: np.ndarray

    @property
    def dx(self):
        return self.l / self.N

    def bandwidth(self):
        rows, cols = np.nonzero(self.A)
        d = cols - rows
        return int(-d.min()), int(d.max())


def spatial_operator(N, l=1.0, side="target", lam=0.0, bc_order=2):
    """Build the semi-discrete operator.

    ``side="target"`` folds ``-lam`` into the diagonal (Dirichlet value 0);
    ``side="plant"`` ignores ``lam`` (Dirichlet value is the control).
    ``bc_order`` is the order of the one-sided boundary identities.
    """
    if N < 32 or N % 2:
        raise InputError("spatial operator needs an even N >= 32")
    if side not in ("plant", "target"):
        raise InputError("side must be 'plant' or 'target'")
    damping = float(lam) if side == "target" else 0.0
    h = l / N
    full = np.zeros((N + 1, N + 1))
    w1 = fd_weights([-1, 0, 1], 1) / h
    w3c = fd_weights([-2, -1, 0, 1, 2], 3) / h**3
    w3l = fd_weights([-1, 0, 1, 2, 3], 3) / h**3
    for j in range(1, N - 1):
        full[j, j - 1:j + 2] -= w1
        if j == 1:
            full[j, 0:5] -= w3l
        else:
            full[j, j - 2:j + 3] -= w3c
        full[j, j] -= damping
    k = bc_order
    C = np.zeros((2, N + 1))
    C[0, N - k:] = fd_weights(range(-k, 1), 1)
    C[1, N - k - 1:] = fd_weights(range(-k - 1, 1), 2)
    # [u_{N-1}, u_N] = R @ u[0:N-1]
    R = -np.linalg.solve(C[:, N - 1:], C[:, :N - 1])
    nv = N - 2
    lift = np.zeros((N + 1, nv))
    lift[1:N - 1] = np.eye(nv)
    lift[N - 1:] = R[:, 1:]
    lift0 = np.zeros(N + 1)
    lift0[0] = 1.0
    lift0[N - 1:] = R[:, 0]
    rows = full[1:N - 1]
    A = rows @ lift
    A[np.abs(A) < 1e-14 * np.abs(A).max()] = 0.0
    return SpatialOperator(N, float(l), damping, full, A, rows @ lift0, lift, lift0)


@dataclass(frozen=True)
class SimConfig:
    """Grid and time-stepping options."""

    N: int = 128
    dt: float = 1e-3
    T: float = 10.0
    scheme: str = "tr_bdf2"
    record_every: int = 1
    bc_order: int = 2
    check_residual: bool = False
    compat_tol: float = 1e-3
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.N < 32 or self.N % 2:
            raise InputError("N must be even and >= 32")
        if not (self.dt > 0 and self.T > 0 and self.dt <= self.T):
            raise InputError("need 0 < dt <= T")
        if self.scheme not in SCHEMES:
            raise InputError(f"scheme must be one of {SCHEMES}")
        if self.record_every < 1:
            raise InputError("record_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def refined(self, factor=2):
        return replace(self, N=self.N * factor, dt=self.dt / factor,
                       record_every=self.record_every * factor)


@dataclass
class SimTrace:
    """Recorded trajectory.

    ``u`` holds the full sample vectors (``w`` for target runs); ``U`` the
    boundary value at ``x = 0`` (the control for plant runs, zero otherwise).
    ``bdry_l`` is ``u(l, t)`` and ``bdry_x0`` a second order one-sided
    estimate of ``u_x(0, t)``.
    """

    kind: str
    l: float
    times: np.ndarray
    X: np.ndarray
    u: np.ndarray
    U: np.ndarray
    u_norm: np.ndarray
    X_norm: np.ndarray
    H_norm: np.ndarray
    bdry_l: np.ndarray
    bdry_x0: np.ndarray
    V: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    @property
    def N(self):
        return self.u.shape[1] - 1

    def state(self, k):
        return SampledState(self.X[k], self.u[k], self.l)

    def csv_header(self):
        n = self.X.shape[1]
        cols = ["time"] + [f"X_{i + 1}" for i in range(n)]
        return cols + ["U", "u_norm", "X_norm", "H_norm", "bdry_l", "bdry_x0", "V"]

    def to_csv(self, path=None):
        """Write the trace; returns the text when ``path`` is None."""
        V = self.V if self.V is not None else np.full(len(self), np.nan)
        cols = np.column_stack([self.times, self.X, self.U, self.u_norm, self.X_norm,
                                self.H_norm, self.bdry_l, self.bdry_x0, V])
        buf = io.StringIO()
        buf.write(",".join(self.csv_header()) + "\n")
        for row in cols:
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return path


def read_trace_csv(path):
    """Load the scalar columns of a trace CSV as a dict of arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.asarray(data[name]) for name in data.dtype.names}


class _Stepper:
    """Time stepper for ``y' = M y`` with a single reusable factorization."""

    GAMMA = 2.0 - math.sqrt(2.0)

    def __init__(self, M, dt, scheme, check_residual=False):
        n = M.shape[0]
        I = np.eye(n)
        self.scheme = scheme
        if scheme == "tr_bdf2":
            c = self.GAMMA / 2.0
            g = self.GAMMA
            self.a1 = 1.0 / (g * (2.0 - g))
            self.a0 = (1.0 - g) ** 2 / (g * (2.0 - g))
        else:
            c = 0.5
        self.lhs = I - c * dt * M
        self.rhs = I + c * dt * M
        self.lu = sla.lu_factor(self.lhs, check_finite=False)
        self.check_residual = check_residual
        self.max_residual = 0.0

    def _solve(self, b, step):
        x = sla.lu_solve(self.lu, b, check_finite=False)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"linear solve produced non-finite values at step {step}", step)
        if self.check_residual:
            nb = np.linalg.norm(b)
            r = np.linalg.norm(self.lhs @ x - b) / (nb if nb > 0 else 1.0)
            self.max_residual = max(self.max_residual, r)
            if r > 1e-10:
                raise SimulationError(f"step {step}: relative solve residual {r:.2e}", step)
        return x

    def step(self, y, k):
        yg = self._solve(self.rhs @ y, k)
        if self.scheme == "trapezoidal":
            return yg
        return self._solve(self.a1 * yg - self.a0 * y, k)


def _recorder(op, n_rec, n):
    N = op.N
    return dict(times=np.empty(n_rec), X=np.empty((n_rec, n)), u=np.empty((n_rec, N + 1)),
                U=np.empty(n_rec))


def _finish(kind, l, rec, meta):
    u = rec["u"]
    N = u.shape[1] - 1
    h = l / N
    wts = simpson_weights(N, h)
    u_norm = np.sqrt(np.einsum("kj,j,kj->k", u, wts, u))
    X_norm = np.sqrt(np.einsum("ki,ki->k", rec["X"], rec["X"]))
    H_norm = np.sqrt(X_norm**2 + u_norm**2)
    bdry_x0 = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * h)
    return SimTrace(kind, l, rec["times"], rec["X"], u, rec["U"], u_norm, X_norm, H_norm,
                    u[:, -1].copy(), bdry_x0, meta=meta)


def _run(M, y0, unpack, cfg, op, n, kind, l, guard):
    stepper = _Stepper(M, cfg.dt, cfg.scheme, cfg.check_residual)
    n_steps = cfg.n_steps
    idx = list(range(0, n_steps + 1, cfg.record_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    rec = _recorder(op, len(idx), n)
    y = y0
    r = 0
    limit = None
    for k in range(n_steps + 1):
        if k > 0:
            y = stepper.step(y, k)
        if k == idx[r]:
            u, X, U = unpack(y)
            rec["times"][r] = k * cfg.dt
            rec["X"][r] = X
            rec["u"][r] = u
            rec["U"][r] = U
            r += 1
        if guard:
            nrm = float(np.abs(y).max())
            if limit is None:
                limit = cfg.divergence_factor * max(nrm, 1e-300)
            elif nrm > limit:
                raise DivergenceError(f"state grew beyond {cfg.divergence_factor:g}x its "
                                      f"initial size at step {k}", k)
    meta = {"scheme": cfg.scheme, "dt": cfg.dt, "N": cfg.N, "steps": n_steps,
            "max_solve_residual": stepper.max_residual}
    return _finish(kind, l, rec, meta)


def simulate_target(plant, w0, X0, cfg):
    """Integrate ``X' = (A+BK)X + B w(l)``, ``w_t = -w_x - w_xxx - lam w``.

    ``w0`` are samples on the ``cfg.N`` grid; the values at ``x = 0`` and at
    the last two nodes are replaced by the boundary conditions.
    """
    w0 = np.asarray(w0, float).ravel()
    X0 = np.asarray(X0, float).ravel()
    if w0.size != cfg.N + 1 or X0.size != plant.n:
        raise InputError("initial data does not match the grid or the ODE dimension")
    op = spatial_operator(cfg.N, plant.l, "target", plant.lam, cfg.bc_order)
    n, nv = plant.n, cfg.N - 2
    B = plant.B
    M = np.zeros((nv + n, nv + n))
    M[:nv, :nv] = op.A
    M[nv:, :nv] = B @ op.lift[-1][None, :]
    M[nv:, nv:] = plant.closed_loop
    y0 = np.concatenate([w0[1:cfg.N - 1], X0])

    def unpack(y):
        return op.lift @ y[:nv], y[nv:], 0.0

    return _run(M, y0, unpack, cfg, op, n, "target", plant.l, guard=False)


def simulate_closed_loop(plant, table, u0, X0, cfg):
    """Integrate the plant with the boundary feedback ``U = int q(0,y) u + phi(0) X``.

    The feedback is a linear functional of the state, so it is eliminated
    exactly and the closed loop is a single linear ODE; no lag is introduced.
    Emits a warning when ``u0(0)`` differs from the feedback value of the
    initial state by more than ``cfg.compat_tol`` (relative to its H-norm).

    Raises
    ------
    DivergenceError
        If the state grows by more than ``cfg.divergence_factor``.
    """
    if not isinstance(table, KernelTable):
        raise InputError("table must be a KernelTable")
    if table.N != cfg.N:
        raise InputError(f"kernel table has N={table.N}, config has N={cfg.N}")
    u0 = np.asarray(u0, float).ravel()
    X0 = np.asarray(X0, float).ravel()
    if u0.size != cfg.N + 1 or X0.size != plant.n:
        raise InputError("initial data does not match the grid or the ODE dimension")
    op = spatial_operator(cfg.N, plant.l, "plant", 0.0, cfg.bc_order)
    n, nv = plant.n, cfg.N - 2
    fb = table.fb_weights
    denom = 1.0 - fb @ op.lift0
    g_v = (fb @ op.lift) / denom
    g_X = table.phi0 / denom
    B = plant.B
    M = np.zeros((nv + n, nv + n))
    M[:nv, :nv] = op.A + np.outer(op.inj, g_v)
    M[:nv, nv:] = np.outer(op.inj, g_X)
    uN_v = op.lift[-1] + op.lift0[-1] * g_v
    uN_X = op.lift0[-1] * g_X
    M[nv:, :nv] = B @ uN_v[None, :]
    M[nv:, nv:] = plant.A + B @ uN_X[None, :]

    st0 = SampledState(X0, u0, plant.l)
    U0 = float(fb @ u0 + table.phi0 @ X0)
    from .transform import h_norm
    scale = max(h_norm(st0), 1e-300)
    mismatch = abs(u0[0] - U0)
    if mismatch > cfg.compat_tol * scale:
        warnings.warn(f"initial data incompatible with the feedback: |u0(0) - U(0)| = "
                      f"{mismatch:.3e}", RuntimeWarning, stacklevel=2)
    y0 = np.concatenate([u0[1:cfg.N - 1], X0])
    first = [True]

    def unpack(y):
        v, X = y[:nv], y[nv:]
        if first[0]:
            first[0] = False
            return u0.copy(), X, U0
        U = float(g_v @ v + g_X @ X)
        return op.lift @ v + op.lift0 * U, X, U

    trace = _run(M, y0, unpack, cfg, op, n, "closed_loop", plant.l, guard=True)
    trace.meta["compat_mismatch"] = mismatch
    return trace


def energy_balance_check(trace, plant):
    """Residual of ``d/dt ||w||^2/2 = -lam ||w||^2 - (w(l)^2 + w_x(0)^2)/2``.

    The time derivative is a centered difference of the recorded energies
    (second order one-sided at the ends).  Returns ``(residuals, sup)``.
    """
    e = 0.5 * trace.u_norm**2
    t = trace.times
    if t.size < 3:
        raise InputError("need at least three recorded steps")
    de = np.gradient(e, t, edge_order=2)
    r = de + plant.lam * trace.u_norm**2 + 0.5 * (trace.bdry_l**2 + trace.bdry_x0**2)
    return r, float(np.abs(r).max())


def equivalence_check(plant, table, u0, X0, cfg):
    """Compare the closed loop with the inverse image of the target trajectory.

    Returns a dict with ``sup_error`` (sup over recorded times of the H-norm
    difference), ``relative`` (divided by the initial H-norm) and both traces.
    """
    from .transform import h_norm
    st0 = SampledState(X0, u0, plant.l)
    cl = simulate_closed_loop(plant, table, u0, X0, cfg)
    w0 = forward(st0, table)
    tg = simulate_target(plant, w0.u, w0.X, cfg)
    err = np.empty(len(cl))
    for k in range(len(cl)):
        back = inverse(tg.state(k), table)
        err[k] = h_norm(back - cl.state(k))
    n0 = h_norm(st0)
    sup = float(err.max())
    return {"sup_error": sup, "relative": sup / n0 if n0 > 0 else 0.0, "errors": err,
            "closed_loop": cl, "target": tg}


def slow_mode(l=1.0, N=None, x=None):
    """Slowest eigenpair of ``-w' - w'''`` with ``w(0) = w'(l) = w''(l) = 0``.

    Returns ``(mu, f)`` where ``f`` solves ``f''' + f' + mu f = 0`` with the
    boundary conditions, so ``-f' - f''' = mu f`` and
    ``w(x, t) = exp((mu - lam) t) f(x)`` is an exact target solution
    (``mu`` is negative, about -6.68 for ``l = 1``).
    ``f`` is normalized to unit sup-norm; it is returned as a callable, or
    as samples when ``x`` or ``N`` is given.
    """
    import scipy.optimize as so

    def mat(mu):
        r = np.roots([1.0, 0.0, 1.0, mu])
        e = np.exp(r * l)
        return np.array([np.ones(3), r * e, r * r * e]), r

    def det(mu):
        d = np.linalg.det(mat(mu)[0])
        return d.real if abs(d.real) >= abs(d.imag) else d.imag

    # bracket the root of largest mu (slowest decay) on a coarse scan
    scale = 1.0 / l**3
    grid = np.linspace(-0.05 * scale, -60.0 * scale, 1200)
    vals = np.array([det(m) for m in grid])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if not idx.size:
        raise SimulationError("could not bracket the slowest mode")
    i = idx[0]
    mu = so.brentq(det, grid[i + 1], grid[i], xtol=1e-15, rtol=1e-15)
    Mm, r = mat(mu)
    _, _, vh = np.linalg.svd(Mm)
    c = vh[-1].conj()
    xs = np.linspace(0.0, l, 2001)
    vals = (np.exp(np.outer(xs, r)) @ c)
    k = np.argmax(np.abs(vals))
    c = c / vals[k]

    def f(xx):
        return (np.exp(np.outer(np.atleast_1d(xx), r)) @ c).real.reshape(np.shape(xx))

    if x is None and N is not None:
        x = np.linspace(0.0, l, N + 1)
    return (mu, f) if x is None else (mu, f(np.asarray(x, float)))
