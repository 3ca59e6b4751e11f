"""Scalar building blocks: the tanh-like shaping function and the blow-up gain.

The shaping function is

    h(x) = (exp(a x) - exp(-b x)) / (a exp(a x) + b exp(-b x)),   0 < b <= a,

bounded in (-1/b, 1/a), equal to tanh for a = b = 1 and tending to the
identity as a, b -> 0.  The time-varying gain is mu(t) = 1 / (t_p - t).

Evaluation never forms exp(a x) directly.  For x >= 0 we divide through by
exp(a x) and use

    h(x) = (1 - w) / (a + b w),   w = exp(-(a + b) x) in (0, 1],

and for x < 0 the mirror identity h(x; a, b) = -h(-x; b, a).
"""

import math
from dataclasses import dataclass

from .errors import DomainError, NumericError, ParameterError, SingularityError

MAX_ORDER = 16


@dataclass(frozen=True)
class ShapeParams:
    """Shape parameters (a, b) of the tanh-like function, 0 < b <= a."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ParameterError(f"shape parameters must be finite, got a={a}, b={b}")
        if a <= 0 or b <= 0:
            raise ParameterError(f"shape parameters must be positive, got a={a}, b={b}")
        if b > a:
            raise ParameterError(f"shape parameters require b <= a, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def upper(self):
        return 1.0 / self.a

    @property
    def lower(self):
        return -1.0 / self.b


@dataclass(frozen=True)
class TimeGain:
    """The blow-up gain mu(t) = 1/(t_p - t) with prescribed time ``t_p``."""

    t_p: float

    def __post_init__(self):
        t_p = float(self.t_p)
        if not (math.isfinite(t_p) and t_p > 0):
            raise ParameterError(f"prescribed time must be positive and finite, got {t_p}")
        object.__setattr__(self, "t_p", t_p)

    def __call__(self, t):
        return mu_derivative(t, self, 0)


def _check_finite(x):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"argument must be finite, got {x}")
    return x


def _h_nonneg(x, a, b):
    # x >= 0; expm1 keeps 1 - w accurate when (a + b) x is tiny
    c = a + b
    return -math.expm1(-c * x) / (a + b * math.exp(-c * x))


def h_eval(x, p):
    """Evaluate h(x) without overflow for any finite ``x``."""
    x = _check_finite(x)
    if x >= 0:
        return _h_nonneg(x, p.a, p.b)
    return -_h_nonneg(-x, p.b, p.a)


def _h_taylor_nonneg(x, a, b, order):
    """Taylor coefficients of h(x + e) in e, for x >= 0."""
    c = a + b
    w0 = math.exp(-c * x)
    # coefficients of w(x + e) = w0 exp(-c e)
    wc = [w0]
    for m in range(1, order + 1):
        wc.append(wc[-1] * (-c) / m)
    num = [-math.expm1(-c * x)] + [-v for v in wc[1:]]
    den = [a + b * w0] + [b * v for v in wc[1:]]
    q = []
    for m in range(order + 1):
        acc = num[m]
        for j in range(1, m + 1):
            acc -= den[j] * q[m - j]
        q.append(acc / den[0])
    return q


def h_derivative(x, p, order):
    """Return the ``order``-th derivative of h at ``x`` (order <= MAX_ORDER)."""
    x = _check_finite(x)
    order = int(order)
    if order < 0 or order > MAX_ORDER:
        raise ParameterError(f"derivative order must lie in [0, {MAX_ORDER}], got {order}")
    if order == 0:
        return h_eval(x, p)
    if x >= 0:
        return _h_taylor_nonneg(x, p.a, p.b, order)[order] * math.factorial(order)
    # d^m/dx^m [-h(-x; b, a)] = (-1)^(m+1) h^(m)(-x; b, a)
    sign = -1.0 if order % 2 == 0 else 1.0
    return sign * _h_taylor_nonneg(-x, p.b, p.a, order)[order] * math.factorial(order)


def mu_derivative(t, g, order):
    """``order``-th time derivative of mu(t) = 1/(t_p - t), i.e. order!/(t_p - t)^(order+1)."""
    t = _check_finite(t)
    order = int(order)
    if order < 0 or order > MAX_ORDER:
        raise ParameterError(f"derivative order must lie in [0, {MAX_ORDER}], got {order}")
    if t >= g.t_p:
        raise SingularityError(f"mu(t) is singular for t >= t_p = {g.t_p} (t = {t})")
    inv = 1.0 / (g.t_p - t)
    try:
        return math.factorial(order) * inv ** (order + 1)
    except OverflowError:
        raise NumericError(f"mu derivative of order {order} overflows at t = {t}") from None


def lemma1_envelope(V0, p, k, g, t):
    """Upper envelope C1 (t_p - t)^k on exp(a V(t)) - exp(-b V(t)).

    Valid for any nonnegative V with V' <= -k mu(t) h(V), k > 1, started
    from V(0) = V0; C1 = (exp(a V0) - exp(-b V0)) / t_p^k.  The envelope is
    continuous at t = t_p, where it vanishes.
    """
    k = float(k)
    if not k > 1:
        raise ParameterError(f"envelope requires k > 1, got k={k}")
    V0 = _check_finite(V0)
    if V0 < 0:
        raise DomainError(f"V0 must be nonnegative, got {V0}")
    t = _check_finite(t)
    if t > g.t_p:
        raise SingularityError(f"envelope defined on [0, t_p], got t={t} > t_p={g.t_p}")
    c1 = (math.exp(p.a * V0) - math.exp(-p.b * V0)) / g.t_p**k
    return c1 * (g.t_p - t) ** k
