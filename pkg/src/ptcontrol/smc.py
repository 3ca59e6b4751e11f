"""Prescribed-time sliding-mode control for matched, nonvanishing uncertainty.

Before ``t_p`` the surface is ``s = x_n + phi_{n-1}`` (the last auxiliary
variable of the state-feedback recursion) and the control is::

    u = -dbar(x) sign(s) - phi_{n-1}' - k mu h(s)

From ``t_p`` on, a time-invariant surface ``s = x_n + sum_i l_i x_i`` and
``u = -dbar(x) sign(s) - sum_i l_i x_{i+1}`` keep the state on the manifold.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, ParameterError
from .observer import routh_hurwitz
from .synthesis import ControllerParams, _check_time, _law


@dataclass(frozen=True)
class SmcParams:
    cp: ControllerParams
    l_coeffs: tuple = ()
    boundary_layer: float = 0.0

    def __post_init__(self):
        l = tuple(float(v) for v in np.asarray(self.l_coeffs, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "l_coeffs", l)
        bl = float(self.boundary_layer)
        if math.isnan(bl) or bl < 0:
            raise ParameterError(f"boundary_layer must be nonnegative, got {bl}")
        object.__setattr__(self, "boundary_layer", bl)
        if self.cp.r != 1:
            raise ParameterError("sliding-mode control uses the prescribed-time gain (r=1)")
        # l_1 + l_2 s + ... + l_{n-1} s^(n-2) + s^(n-1)
        if not routh_hurwitz(np.concatenate(([1.0], l[::-1]))):
            raise ParameterError(f"l_coeffs={l} do not define a Hurwitz polynomial")

    def check_order(self, n):
        if len(self.l_coeffs) != n - 1:
            raise ParameterError(
                f"l_coeffs must have n-1={n - 1} entries, got {len(self.l_coeffs)}"
            )
        self.cp.check_order(n)


def switching(s, width):
    """sign(s) with sign(0) = 0, or a saturation of half-width ``width``."""
    if width == 0.0:
        return float(np.sign(s))
    if math.isinf(width):
        return 0.0
    return min(1.0, max(-1.0, s / width))


def _terms(x, t, sp, mu_max):
    # s, phi_{n-1}', k mu h(s)
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cp = sp.cp
    _check_time(t, cp, mu_max)
    n = x.size
    z = np.empty(n)
    phi = np.empty(n)
    gamma = np.empty(n)
    status, _, phidot = _law(
        x, cp.gain.t_p - t, cp.r, cp.k, cp.shape.a, cp.shape.b, np.zeros(n),
        -1.0 if mu_max is None else float(mu_max), z, phi, gamma,
    )
    if status:
        raise NumericError(f"non-finite value in recursion level {status}", component=status)
    return z[-1], phidot, gamma[-1]


def sliding_surface(x, t, sp, mu_max=None):
    """s = x_n + phi_{n-1}(x_1..x_{n-1}, t)."""
    return _terms(x, t, sp, mu_max)[0]


def _dbar(x, sys):
    if sys.disturbance_bound is None:
        raise ConfigurationError("sliding-mode control needs a disturbance bound", "plant")
    return float(sys.disturbance_bound(x))


def smc_u(x, t, sp, sys, mu_max=None):
    """Prescribed-time sliding-mode control for t < t_p."""
    s, phidot, ks = _terms(x, t, sp, mu_max)
    return -_dbar(x, sys) * switching(s, sp.boundary_layer) - phidot - ks


def linear_surface(x, sp):
    x = np.asarray(x, dtype=np.float64)
    return float(x[-1] + np.dot(sp.l_coeffs, x[:-1]))


def post_tp_smc_u(x, sp, sys):
    """Time-invariant sliding law on the linear surface, for t >= t_p."""
    x = np.asarray(x, dtype=np.float64)
    s = linear_surface(x, sp)
    return -_dbar(x, sys) * switching(s, sp.boundary_layer) - float(np.dot(sp.l_coeffs, x[1:]))
