"""Truncated total-time-derivative arithmetic ("jets").

A jet stores a quantity together with its total time derivatives along a
trajectory, ``d[m] = d^m q / dt^m`` (raw derivatives, not Taylor
coefficients).  Arithmetic between jets of unequal order truncates to the
smaller order.

The numerical kernels work on plain float64 arrays and are compiled with
numba so the controller recursion can run inside an integrator loop; the
:class:`Jet` class is a thin immutable wrapper around them.
"""

import math

import numpy as np
from numba import njit

from .errors import NumericError, SingularityError
from .scalarmath import MAX_ORDER, ShapeParams, TimeGain, mu_derivative

_BINOM = np.array(
    [[math.comb(m, j) for j in range(MAX_ORDER + 1)] for m in range(MAX_ORDER + 1)],
    dtype=np.float64,
)


# --------------------------------------------------------------------------
# array kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _add(u, v):
    q = min(u.size, v.size)
    return u[:q] + v[:q]


@njit(cache=True)
def _sub(u, v):
    q = min(u.size, v.size)
    return u[:q] - v[:q]


@njit(cache=True)
def _mul(u, v):
    # general Leibniz rule
    q = min(u.size, v.size)
    out = np.zeros(q)
    for m in range(q):
        acc = 0.0
        for j in range(m + 1):
            acc += _BINOM[m, j] * u[j] * v[m - j]
        out[m] = acc
    return out


@njit(cache=True)
def _div(u, v):
    # solve u = w v for w, coefficient by coefficient
    q = min(u.size, v.size)
    out = np.zeros(q)
    for m in range(q):
        acc = u[m]
        for j in range(m):
            acc -= _BINOM[m, j] * out[j] * v[m - j]
        out[m] = acc / v[0]
    return out


@njit(cache=True)
def _exp(u):
    # y = exp(u), y' = u' y  =>  y^(m+1) = sum_j C(m, j) u^(j+1) y^(m-j)
    q = u.size
    out = np.zeros(q)
    out[0] = math.exp(u[0])
    for m in range(q - 1):
        acc = 0.0
        for j in range(m + 1):
            acc += _BINOM[m, j] * u[j + 1] * out[m - j]
        out[m + 1] = acc
    return out


@njit(cache=True)
def _h_nonneg(x, a, b):
    c = a + b
    w = _exp(-c * x)
    num = -w
    num[0] = -math.expm1(-c * x[0])
    den = b * w
    den[0] += a
    return _div(num, den)


@njit(cache=True)
def _h(x, a, b):
    if x[0] >= 0.0:
        return _h_nonneg(x, a, b)
    return -_h_nonneg(-x, b, a)


@njit(cache=True)
def _recursion(x, mu, k, a, b, z_out, phi_out, gamma_out):
    """Auxiliary-vector recursion on the chain of integrators.

    Level i (1-based) is carried as a jet of order n - i: the state jets are
    seeded with d^m x_i / dt^m = x_{i+m}, which is exact for i + m <= n and
    never needs the derivative of x_n, so the recursion closes without
    knowing u.  ``mu`` holds the time-gain jet (order >= n - 1).

    Returns (status, phidot) where status is 0 on success or the 1-based
    index of the first non-finite level, and phidot is the first derivative
    of phi_{n-1} (zero when n == 1).
    """
    n = x.size
    phi_prev = np.zeros(n + 1)
    z_prev = np.zeros(n + 1)
    phidot_last = 0.0
    for i in range(1, n + 1):
        q = n - i + 1  # number of stored coefficients at this level
        xi = x[i - 1:].copy()
        if i == 1:
            z = xi
        else:
            z = xi + phi_prev[:q]
        gam = k * _mul(mu[:q], _h(z, a, b))
        if i == 1:
            phi = gam
        else:
            phidot = phi_prev[1:q + 1]
            phi = phidot + z_prev[:q] + gam
            if i == n:
                phidot_last = phidot[0]
        z_out[i - 1] = z[0]
        phi_out[i - 1] = phi[0]
        gamma_out[i - 1] = gam[0]
        for m in range(q):
            if not (math.isfinite(phi[m]) and math.isfinite(z[m])):
                return i, phidot_last
        phi_prev = phi
        z_prev = z
    return 0, phidot_last


# --------------------------------------------------------------------------
# value type
# --------------------------------------------------------------------------


class Jet:
    """Immutable truncated derivative sequence ``d[0..order]``."""

    __slots__ = ("_d",)

    def __init__(self, d):
        arr = np.array(d, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("a jet needs at least one coefficient")
        if arr.size > MAX_ORDER + 1:
            raise ValueError(f"jet order exceeds MAX_ORDER={MAX_ORDER}")
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"jet coefficients must be finite, got {arr}")
        arr.flags.writeable = False
        self._d = arr

    @classmethod
    def constant(cls, value, order):
        d = np.zeros(order + 1)
        d[0] = value
        return cls(d)

    @property
    def d(self):
        return self._d

    @property
    def order(self):
        return self._d.size - 1

    @property
    def value(self):
        return float(self._d[0])

    def truncate(self, order):
        return Jet(self._d[: order + 1])

    def derivative(self):
        """Jet of the first time derivative (one order lower)."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self._d[1:])

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(float(other), self.order)

    def __add__(self, other):
        return jet_add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(_sub(self._d, self._coerce(other)._d))

    def __rsub__(self, other):
        return Jet(_sub(self._coerce(other)._d, self._d))

    def __neg__(self):
        return Jet(-self._d)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return Jet(self._d * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return jet_div(self, other)
        return Jet(self._d / float(other))

    def __rtruediv__(self, other):
        return jet_div(self._coerce(other), self)

    def exp(self):
        return jet_exp(self)

    def __eq__(self, other):
        return isinstance(other, Jet) and np.array_equal(self._d, other._d)

    def __hash__(self):
        return hash(self._d.tobytes())

    def __repr__(self):
        return f"Jet({self._d.tolist()})"


def jet_add(u, v):
    return Jet(_add(u.d, v.d))


def jet_mul(u, v):
    return Jet(_mul(u.d, v.d))


def jet_div(u, v):
    if v.d[0] == 0.0:
        raise SingularityError("division by a jet with zero value")
    return Jet(_div(u.d, v.d))


def jet_exp(u):
    return Jet(_exp(u.d))


def h_jet(x, p: ShapeParams):
    """Compose the tanh-like function with a jet (overflow-safe form)."""
    return Jet(_h(np.ascontiguousarray(x.d), p.a, p.b))


def mu_jet(t, g: TimeGain, order):
    """Jet of mu(t) = 1/(t_p - t): ``d[m] = m! / (t_p - t)^(m+1)``."""
    return Jet([mu_derivative(t, g, m) for m in range(order + 1)])


def seed_state_jets(x):
    """Jets of the states along the chain of integrators.

    The k-th jet (1-based) has order n - k with ``d[m] = x_{k+m}``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return [Jet(x[k:]) for k in range(x.size)]
