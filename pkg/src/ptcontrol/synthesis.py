"""State-feedback synthesis for linear systems in controller canonical form.

Plant::

    x_i' = x_{i+1}            (i < n)
    x_n' = sum_i a_i x_i + u + d(x, t)
    y    = sum_i c_i x_i

Auxiliary vectors (computed level by level)::

    z_1 = x_1,               phi_1 = k mu^r h(z_1)
    z_i = x_i + phi_{i-1},   phi_i = phi_{i-1}' + z_{i-1} + k mu^r h(z_i)

and the control ``u = -sum_i a_i x_i - phi_n``.  Along the closed loop the
auxiliary state obeys ``z' = (J - J^T) z - k mu^r H(z)`` with J the upper
shift matrix.  ``r = 1`` gives convergence at ``t_p`` (needs k > n),
``r = 0`` gives asymptotic convergence (k > 0).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NumericError, ParameterError, SingularityError
from numba import njit

from .jets import _recursion
from .scalarmath import MAX_ORDER, ShapeParams, TimeGain, h_eval

_POW = np.arange(1, MAX_ORDER + 2, dtype=np.float64)


def _zero_disturbance(x, t):
    return 0.0


@dataclass
class CanonicalSystem:
    """Single-input plant in controller canonical form.

    ``a_coeffs`` is the last row of A (a_1..a_n), ``c_coeffs`` the output
    row (b_0..b_{n-1}).  ``disturbance(x, t)`` enters the last equation;
    ``disturbance_bound(x)`` is only needed by sliding-mode control.
    """

    n: int
    a_coeffs: np.ndarray
    c_coeffs: np.ndarray
    disturbance: Callable[[np.ndarray, float], float] = _zero_disturbance
    disturbance_bound: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        self.n = int(self.n)
        if self.n < 1:
            raise ParameterError(f"system order must be >= 1, got {self.n}")
        if self.n > MAX_ORDER:
            raise ParameterError(f"system order must be <= {MAX_ORDER}, got {self.n}")
        self.a_coeffs = np.asarray(self.a_coeffs, dtype=np.float64).reshape(-1)
        self.c_coeffs = np.asarray(self.c_coeffs, dtype=np.float64).reshape(-1)
        if self.a_coeffs.size != self.n or self.c_coeffs.size != self.n:
            raise ParameterError(
                f"a_coeffs and c_coeffs must have length n={self.n}, "
                f"got {self.a_coeffs.size} and {self.c_coeffs.size}"
            )

    @classmethod
    def chain(cls, n, **kwargs):
        """Chain of n integrators with output x_1."""
        c = np.zeros(n)
        c[0] = 1.0
        return cls(n, np.zeros(n), c, **kwargs)

    @property
    def A(self):
        A = shift_matrix(self.n)
        A[-1, :] += self.a_coeffs
        return A

    @property
    def B(self):
        B = np.zeros(self.n)
        B[-1] = 1.0
        return B

    @property
    def C(self):
        return self.c_coeffs.copy()

    def output(self, x):
        return float(self.c_coeffs @ x)

    def rhs(self, x, u, t):
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = self.a_coeffs @ x + u + self.disturbance(x, t)
        return dx


@dataclass(frozen=True)
class ControllerParams:
    """Gains of the nonlinear time-varying feedback.

    ``r = 1`` selects the prescribed-time law, ``r = 0`` the asymptotic one.
    ``post_k`` is the gain of the asymptotic law used after the switch near
    ``t_p``.
    """

    shape: ShapeParams
    k: float
    r: int
    gain: TimeGain
    post_k: float = 1.0

    def __post_init__(self):
        if self.r not in (0, 1):
            raise ParameterError(f"r must be 0 or 1, got {self.r}")
        if not (math.isfinite(self.k) and self.k > 0):
            raise ParameterError(f"k must be positive, got {self.k}")
        if not (math.isfinite(self.post_k) and self.post_k > 0):
            raise ParameterError(f"post_k must be positive, got {self.post_k}")
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "post_k", float(self.post_k))

    @property
    def t_p(self):
        return self.gain.t_p

    def check_order(self, n):
        """Raise unless the gain is admissible for a system of order ``n``."""
        if self.r == 1 and not self.k > n:
            raise ParameterError(
                f"k must exceed the system order for r=1 (k > n), got k={self.k}, n={n}"
            )

    def asymptotic(self):
        """The r = 0 law with gain ``post_k`` used after the switch."""
        return ControllerParams(self.shape, self.post_k, 0, self.gain, self.post_k)


@dataclass(frozen=True)
class SynthesisResult:
    z: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    u_core: float
    # first time derivative of phi_{n-1} along the flow (0 for n = 1)
    phidot_prev: float = field(default=0.0)


def shift_matrix(n):
    """Upper shift J_n (ones on the superdiagonal)."""
    return np.eye(n, k=1)


@njit(cache=True)
def _mu_raw(tau, n, r, mu_max):
    # mu_max <= 0 means no clamp
    mu = np.zeros(n)
    if r == 0:
        mu[0] = 1.0
    elif mu_max > 0.0 and (tau <= 0.0 or 1.0 / tau > mu_max):
        mu[0] = mu_max
    else:
        inv = 1.0 / tau
        mu[0] = inv
        for m in range(1, n):
            mu[m] = mu[m - 1] * m * inv
    return mu


@njit(cache=True)
def _law(x, tau, r, k, a, b, acoef, mu_max, z, phi, gamma):
    mu = _mu_raw(tau, x.size, r, mu_max)
    status, phidot = _recursion(x, mu, k, a, b, z, phi, gamma)
    u = -phi[-1]
    for i in range(x.size):
        u -= acoef[i] * x[i]
    return status, u, phidot


@njit(cache=True)
def _closed_loop_rhs(x, tau, r, k, a, b, acoef, mu_max, dist, z, phi, gamma):
    # plant in controller form under the state-feedback law
    status, u, _ = _law(x, tau, r, k, a, b, acoef, mu_max, z, phi, gamma)
    dx = np.empty(x.size)
    dx[:-1] = x[1:]
    acc = u + dist
    for i in range(x.size):
        acc += acoef[i] * x[i]
    dx[-1] = acc
    return status, dx


@njit(cache=True)
def _rk4_undisturbed(x, t, h, t_p, r, k, a, b, acoef, mu_max, z, phi, gamma):
    # one RK4 step of the disturbance-free closed loop; status as in _recursion
    s1, k1 = _closed_loop_rhs(x, t_p - t, r, k, a, b, acoef, mu_max, 0.0, z, phi, gamma)
    s2, k2 = _closed_loop_rhs(x + 0.5 * h * k1, t_p - t - 0.5 * h, r, k, a, b, acoef, mu_max,
                              0.0, z, phi, gamma)
    s3, k3 = _closed_loop_rhs(x + 0.5 * h * k2, t_p - t - 0.5 * h, r, k, a, b, acoef, mu_max,
                              0.0, z, phi, gamma)
    s4, k4 = _closed_loop_rhs(x + h * k3, t_p - t - h, r, k, a, b, acoef, mu_max,
                              0.0, z, phi, gamma)
    status = max(max(s1, s2), max(s3, s4))
    return status, x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _check_time(t, cp, mu_max):
    if cp.r == 1 and mu_max is None and not t < cp.gain.t_p:
        raise SingularityError(f"prescribed-time law evaluated at t={t} >= t_p={cp.gain.t_p}")


def mu_array(t, cp, n, mu_max=None):
    """Time-gain jet of order n - 1 for the chosen mode, as a raw array."""
    _check_time(t, cp, mu_max)
    return _mu_raw(cp.gain.t_p - t, n, cp.r, -1.0 if mu_max is None else float(mu_max))


def synthesize(x, t, cp, sys, mu_max=None):
    """Evaluate z, Phi, Gamma and the control for state ``x`` at time ``t``."""
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    n = sys.n
    if x.size != n:
        raise ParameterError(f"state has length {x.size}, system order is {n}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"state must be finite, got {x}")
    _check_time(t, cp, mu_max)
    z = np.empty(n)
    phi = np.empty(n)
    gamma = np.empty(n)
    status, u, phidot = _law(
        x, cp.gain.t_p - t, cp.r, cp.k, cp.shape.a, cp.shape.b, sys.a_coeffs,
        -1.0 if mu_max is None else float(mu_max), z, phi, gamma,
    )
    if status:
        raise NumericError(f"non-finite value in recursion level {status}", component=status)
    return SynthesisResult(z, phi, gamma, u, phidot)


def state_feedback_u(x, t, cp, sys, mu_max=None):
    """Control u = -a.x - phi_n."""
    return synthesize(x, t, cp, sys, mu_max).u_core


def switched_u(x, t, cp, sys, eps_guard, mu_max=None):
    """Prescribed-time law before ``t_p - eps_guard``, asymptotic law after."""
    if t < cp.gain.t_p - eps_guard:
        return state_feedback_u(x, t, cp, sys, mu_max)
    return state_feedback_u(x, t, cp.asymptotic(), sys)


def transformed_rhs(z, t, cp):
    """Closed-loop auxiliary dynamics (J - J^T) z - k mu^r H(z)."""
    z = np.asarray(z, dtype=np.float64)
    n = z.size
    J = shift_matrix(n)
    gain = cp.k * (cp.gain(t) if cp.r == 1 else 1.0)
    H = np.array([h_eval(v, cp.shape) for v in z])
    return (J - J.T) @ z - gain * H
