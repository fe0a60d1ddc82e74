"""Dense bivariate polynomials in ``(s, t)`` with a total-degree cap.

A :class:`Poly2` stores ``c[i, j]``, the coefficient of ``s**i * t**j``, in a
square array of side ``cap + 1``.  Any coefficient with ``i + j > cap`` is
dropped when produced; the largest magnitude ever dropped is carried along in
``truncated`` so callers can tell a harmless cap from a lossy one.

The operations are exactly the ones needed to iterate the kernel integral
equation: partial derivatives, antiderivatives vanishing at zero, and the
band integral over ``eta in [s, 2l - xi]``.
"""
import math

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = ["Poly2", "DEFAULT_CAP"]

DEFAULT_CAP = 40

_VARS = {"s": 0, "t": 1}


def _axis(var):
    try:
        return _VARS[var]
    except KeyError:
        raise ValueError(f"variable must be 's' or 't', got {var!r}") from None


class Poly2:
    """Immutable dense polynomial ``sum c[i, j] s^i t^j`` with ``i + j <= cap``.

    Parameters
    ----------
    coeffs : array_like, 2-D
        Coefficients indexed ``[power of s, power of t]``.  Any shape is
        accepted; entries beyond the cap are dropped and recorded.
    cap : int
        Total-degree cap.
    truncated : float
        Carried-over magnitude of previously dropped coefficients.
    """

    __slots__ = ("_c", "cap", "truncated")

    def __init__(self, coeffs, cap=DEFAULT_CAP, truncated=0.0):
        if cap < 0:
            raise ValueError("cap must be non-negative")
        src = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if not np.all(np.isfinite(src)):
            raise ValueError("coefficients must be finite")
        size = cap + 1
        c = np.zeros((size, size))
        ni, nj = min(src.shape[0], size), min(src.shape[1], size)
        c[:ni, :nj] = src[:ni, :nj]
        mask = _cap_mask(cap)
        dropped = float(np.abs(c[~mask]).max(initial=0.0))
        c[~mask] = 0.0
        if src.shape[0] > size or src.shape[1] > size:
            i, j = np.indices(src.shape)
            dropped = max(dropped, float(np.abs(src[(i + j) > cap]).max(initial=0.0)))
        c.setflags(write=False)
        self._c = c
        self.cap = int(cap)
        self.truncated = max(float(truncated), dropped)

    # -- construction -------------------------------------------------------
    @classmethod
    def zeros(cls, cap=DEFAULT_CAP):
        return cls(np.zeros((1, 1)), cap)

    @classmethod
    def monomial(cls, i, j, coef=1.0, cap=DEFAULT_CAP):
        c = np.zeros((i + 1, j + 1))
        c[i, j] = coef
        return cls(c, cap)

    @classmethod
    def from_t_series(cls, coeffs, cap=DEFAULT_CAP):
        """Polynomial in ``t`` alone: ``sum coeffs[k] t^k``."""
        return cls(np.asarray(coeffs, dtype=float)[None, :], cap)

    # -- inspection ---------------------------------------------------------
    @property
    def coeffs(self):
        """Read-only ``(cap + 1, cap + 1)`` coefficient array."""
        return self._c

    @property
    def truncation_flag(self):
        return self.truncated > 0.0

    @property
    def deg_s(self):
        nz = np.nonzero(np.any(self._c != 0.0, axis=1))[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def deg_t(self):
        nz = np.nonzero(np.any(self._c != 0.0, axis=0))[0]
        return int(nz[-1]) if nz.size else 0

    def is_zero(self):
        return not np.any(self._c)

    def max_abs(self):
        return float(np.abs(self._c).max())

    def __repr__(self):
        return (f"Poly2(cap={self.cap}, deg_s={self.deg_s}, deg_t={self.deg_t}, "
                f"truncated={self.truncated:.3g})")

    # -- evaluation ---------------------------------------------------------
    def eval(self, s, t):
        """Evaluate at points ``(s, t)``; broadcasts like numpy."""
        out = npoly.polyval2d(np.asarray(s, float), np.asarray(t, float), self._c)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval

    # -- arithmetic ---------------------------------------------------------
    def _new(self, coeffs, *others, extra=0.0):
        tr = max([self.truncated, extra] + [o.truncated for o in others])
        return Poly2(coeffs, self.cap, tr)

    def _check(self, other):
        if not isinstance(other, Poly2):
            return NotImplemented
        if other.cap != self.cap:
            raise ValueError(f"cap mismatch: {self.cap} vs {other.cap}")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._new(self._c + other._c, other)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._new(self._c - other._c, other)

    def __neg__(self):
        return self._new(-self._c)

    def __mul__(self, a):
        if isinstance(a, Poly2):
            return NotImplemented
        return self._new(float(a) * self._c)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self._new(self._c / float(a))

    def __eq__(self, other):
        if not isinstance(other, Poly2):
            return NotImplemented
        return self.cap == other.cap and np.array_equal(self._c, other._c)

    __hash__ = None

    # -- calculus -----------------------------------------------------------
    def diff(self, var, order=1):
        """Exact partial derivative of the given order in ``var``."""
        if order < 0:
            raise ValueError("order must be >= 0")
        if order == 0:
            return self
        ax = _axis(var)
        size = self.cap + 1
        if order >= size:
            return self._new(np.zeros((1, 1)))
        k = np.arange(size - order)
        # falling factorial (k+order)!/k!
        fac = np.ones(size - order)
        for m in range(1, order + 1):
            fac *= k + m
        if ax == 0:
            out = self._c[order:, :] * fac[:, None]
        else:
            out = self._c[:, order:] * fac[None, :]
        return self._new(out)

    def integrate(self, var):
        """Antiderivative in ``var`` that vanishes at ``var = 0``."""
        ax = _axis(var)
        size = self.cap + 1
        if ax == 0:
            out = np.zeros((size + 1, size))
            out[1:, :] = self._c / np.arange(1, size + 1)[:, None]
        else:
            out = np.zeros((size, size + 1))
            out[:, 1:] = self._c / np.arange(1, size + 1)[None, :]
        return self._new(out)

    int_first_from_0 = integrate

    def int_eta_band(self, l):
        """Integrate over the first variable from ``s`` to ``2l - xi``.

        ``self`` is read as a polynomial in ``(eta, xi)``.  The result, a
        polynomial in ``(s, xi)``, is ``P(2l - xi, xi) - P(s, xi)`` where ``P``
        is the antiderivative in ``eta``.  The affine upper limit is expanded
        exactly by the binomial theorem.
        """
        size = self.cap + 1
        # antiderivative kept one degree past the cap until the final truncation
        P = np.zeros((size + 1, size))
        P[1:, :] = self._c / np.arange(1, size + 1)[:, None]
        # binom[i, m] = coefficient of xi^m in (2l - xi)^i
        n = size + 1
        binom = np.zeros((n, n))
        two_l = 2.0 * float(l)
        for i in range(n):
            for m in range(i + 1):
                binom[i, m] = math.comb(i, m) * two_l ** (i - m) * (-1.0) ** m
        R = binom.T @ P  # R[m, j] multiplies xi^(m + j)
        top = np.zeros(n + size - 1)
        for m in range(n):
            top[m:m + size] += R[m]
        out = np.zeros((size + 1, max(size, top.size)))
        out[0, :top.size] = top
        out[:, :size] -= P
        return self._new(out)

    # -- serialization ------------------------------------------------------
    def dump_lines(self):
        """One ``"i j c"`` line per nonzero coefficient (17 significant digits)."""
        ii, jj = np.nonzero(self._c)
        return [f"{i} {j} {self._c[i, j]:.17g}" for i, j in zip(ii, jj)]

    def dumps(self):
        return "\n".join([f"# cap {self.cap}"] + self.dump_lines()) + "\n"

    @classmethod
    def loads(cls, text, cap=None):
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if cap is None and len(parts) == 2 and parts[0] == "cap":
                    cap = int(parts[1])
                continue
            i, j, c = line.split()
            entries.append((int(i), int(j), float(c)))
        return cls.from_triples(entries, cap)

    def triples(self):
        ii, jj = np.nonzero(self._c)
        return [(int(i), int(j), float(self._c[i, j])) for i, j in zip(ii, jj)]

    @classmethod
    def from_triples(cls, entries, cap=None):
        entries = list(entries)
        if cap is None:
            cap = max((i + j for i, j, _ in entries), default=0)
        c = np.zeros((cap + 1, cap + 1))
        for i, j, v in entries:
            if i + j > cap:
                raise ValueError(f"coefficient ({i}, {j}) exceeds cap {cap}")
            c[i, j] = v
        return cls(c, cap)


def _cap_mask(cap):
    i, j = np.indices((cap + 1, cap + 1))
    return (i + j) <= cap
