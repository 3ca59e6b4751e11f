"""Prescribed-time observer and output-feedback control.

The plant is brought to observer canonical form ``xi = M x``::

    xi' = J xi + B_o u + D_o y,   y = xi_1,
    B_o = (b_{n-1}, ..., b_0),     D_o = (a_n, ..., a_1),

and observed with time-varying output injection::

    xi_hat' = J xi_hat + B_o u + D_o y + g(t) (y - xi_hat_1).

The gains come from the lower-triangular transformation w = P(t) e of the
estimation error e = xi - xi_hat, with entries
``P_ij = pbar_ij * mu1^(n + m0 + i - j)`` and ``mu1 = T / (T - t)``, chosen
so that w' = (J - r e_1^T) w.  Hence the error decays like
``mu1^-(m0+1)`` and vanishes at ``t = T`` provided ``J - r e_1^T`` is
Hurwitz, i.e. s^n + r_1 s^(n-1) + ... + r_n is a Hurwitz polynomial.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ParameterError, SingularityError, StructuralError
from .synthesis import _law, shift_matrix, state_feedback_u

OBSERVABILITY_COND_LIMIT = 1e10


def routh_hurwitz(coeffs):
    """True iff the real polynomial ``coeffs`` (highest power first) is Hurwitz.

    Uses the Routh array; any zero or sign change in the first column
    means a root on or right of the imaginary axis.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=np.float64), "f")
    if c.size == 0:
        return False
    if c[0] < 0:
        c = -c
    deg = c.size - 1
    if deg == 0:
        return True
    width = deg // 2 + 1
    rows = [np.zeros(width), np.zeros(width)]
    rows[0][: c[0::2].size] = c[0::2]
    rows[1][: c[1::2].size] = c[1::2]
    for _ in range(deg - 1):
        prev, cur = rows[-2], rows[-1]
        if cur[0] <= 0:
            return False
        nxt = np.zeros(width)
        for j in range(width - 1):
            nxt[j] = (cur[0] * prev[j + 1] - prev[0] * cur[j + 1]) / cur[0]
        rows.append(nxt)
    return bool(all(row[0] > 0 for row in rows))


def error_matrix(r_vec):
    """Constant part of the estimation-error dynamics, J - r e_1^T."""
    r = np.asarray(r_vec, dtype=np.float64).reshape(-1)
    L = shift_matrix(r.size)
    L[:, 0] -= r
    return L


def hurwitz_check(r_vec):
    """True iff the companion matrix J - r e_1^T is Hurwitz."""
    r = np.asarray(r_vec, dtype=np.float64).reshape(-1)
    # characteristic polynomial of J - r e_1^T is s^n + r_1 s^(n-1) + ... + r_n
    return routh_hurwitz(np.concatenate(([1.0], r)))


@dataclass(frozen=True)
class ObserverParams:
    """Horizon ``T``, integer ``m0 >= 1`` and stabilizing vector ``r_vec``."""

    T: float
    m0: int
    r_vec: tuple

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ParameterError(f"observer horizon T must be positive, got {self.T}")
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise ParameterError(f"m0 must be an integer >= 1, got {self.m0}")
        r = tuple(float(v) for v in np.asarray(self.r_vec, dtype=np.float64).reshape(-1))
        if len(r) == 0:
            raise ParameterError("r_vec must not be empty")
        if not hurwitz_check(r):
            raise ParameterError(f"r_vec={r} does not give a Hurwitz error matrix")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "m0", int(self.m0))
        object.__setattr__(self, "r_vec", r)

    @property
    def n(self):
        return len(self.r_vec)


@dataclass
class ObserverState:
    xi_hat: np.ndarray
    gains_cache: np.ndarray


def pbar_table(n, m0, T):
    """Lower-triangular coefficient table ``pbar[i-1, j-1]`` of the gain recursion.

    Unit diagonal, zero above it, filled column by column from the right::

        pbar_{i,j-1} = -((n + m0 + i - j) / T) pbar_{i,j} + pbar_{i+1,j}
        pbar_{n,j-1} = -((2n + m0 - j) / T) pbar_{n,j}
    """
    P = np.eye(n)
    for j in range(n, 1, -1):
        for i in range(j, n + 1):
            below = P[i, j - 1] if i < n else 0.0
            P[i - 1, j - 2] = -((n + m0 + i - j) / T) * P[i - 1, j - 1] + below
    return P


@njit(cache=True)
def _gains(t, n, m0, T, r, table):
    mu1 = T / (T - t)
    g = np.empty(n)
    for i in range(1, n + 1):
        below = table[i, 0] if i < n else 0.0
        acc = r[i - 1] + ((n + m0 + i - 1) / T * table[i - 1, 0] - below) * mu1**i
        for j in range(1, i):
            acc -= g[j - 1] * table[i - 1, j - 1] * mu1 ** (i - j)
        g[i - 1] = acc
    return g


def observer_gains(t, n, m0, T, r_vec, table):
    """Injection gains g_1..g_n at time ``t`` in [0, T)."""
    if not t < T:
        raise SingularityError(f"observer gains are singular for t >= T={T} (t={t})")
    return _gains(float(t), n, m0, float(T), np.asarray(r_vec, dtype=np.float64), table)


def observability_matrix(A, C):
    n = A.shape[0]
    rows = [np.asarray(C, dtype=np.float64)]
    for _ in range(n - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def to_observer_form(sys):
    """Return (M, B_o, D_o) with xi = M x in observer canonical form."""
    n = sys.n
    O_src = observability_matrix(sys.A, sys.C)
    cond = np.linalg.cond(O_src)
    if not cond < OBSERVABILITY_COND_LIMIT:
        raise StructuralError(
            f"(A, C) is not observable: observability matrix condition number {cond:.3g}"
        )
    D_o = sys.a_coeffs[::-1].copy()
    A_t = shift_matrix(n)
    A_t[:, 0] += D_o
    e1 = np.zeros(n)
    e1[0] = 1.0
    O_tgt = observability_matrix(A_t, e1)
    M = np.linalg.solve(O_tgt, O_src)
    B_o = M @ sys.B
    return M, B_o, D_o


def observer_rhs(xi_hat, u, y, t, params, table, script_B, script_D, gains=None):
    """Right-hand side of the observer.

    ``gains`` overrides the time-varying gains, which is how callers apply a
    terminal policy at and after ``T``.
    """
    if gains is None:
        gains = observer_gains(t, params.n, params.m0, params.T, params.r_vec, table)
    dxi = np.empty_like(xi_hat)
    dxi[:-1] = xi_hat[1:]
    dxi[-1] = 0.0
    return dxi + script_B * u + script_D * y + gains * (y - xi_hat[0])


def output_feedback_u(x_hat, t, cp, sys, measured_x1=None, mu_max=None):
    """State-feedback law evaluated on the estimate ``x_hat``.

    If ``measured_x1`` is given it replaces the first estimated state.
    """
    x_hat = np.array(x_hat, dtype=np.float64).reshape(-1)
    if measured_x1 is not None:
        x_hat[0] = measured_x1
    return state_feedback_u(x_hat, t, cp, sys, mu_max)


@njit(cache=True)
def _output_feedback_rhs(X, t, t_p, r, k, a, b, acoef, mu_max, Minv, C, B_o, D_o,
                         live, m0, T, rvec, table, g_frozen, eta, measured, z, phi, gamma):
    # X = (x, xi_err) with xi_err = xi - xi_hat; integrating the error itself
    # keeps its relative accuracy once it is far below the size of x
    n = acoef.size
    xh = np.empty(n)
    y = eta
    for i in range(n):
        y += C[i] * X[i]
        acc = X[i]
        for j in range(n):
            acc -= Minv[i, j] * X[n + j]
        xh[i] = acc
    if measured:
        xh[0] = y
    status, u, _ = _law(xh, t_p - t, r, k, a, b, acoef, mu_max, z, phi, gamma)
    g = _gains(t, n, m0, T, rvec, table) if live else g_frozen
    innov = X[n] + eta  # y - xi_hat_1
    out = np.empty(2 * n)
    acc = u
    for i in range(n):
        acc += acoef[i] * X[i]
        nxt = X[n + i + 1] if i < n - 1 else 0.0
        out[n + i] = nxt - D_o[i] * eta - g[i] * innov
        if i < n - 1:
            out[i] = X[i + 1]
    out[n - 1] = acc
    return status, out


@njit(cache=True)
def _rk4_output_feedback(X, t, h, t_p, r, k, a, b, acoef, mu_max, Minv, C, B_o, D_o,
                         live, m0, T, rvec, table, g_frozen, eta, measured, z, phi, gamma):
    s1, k1 = _output_feedback_rhs(X, t, t_p, r, k, a, b, acoef, mu_max, Minv, C, B_o, D_o,
                                  live, m0, T, rvec, table, g_frozen, eta, measured, z, phi, gamma)
    s2, k2 = _output_feedback_rhs(X + 0.5 * h * k1, t + 0.5 * h, t_p, r, k, a, b, acoef, mu_max,
                                  Minv, C, B_o, D_o, live, m0, T, rvec, table, g_frozen, eta,
                                  measured, z, phi, gamma)
    s3, k3 = _output_feedback_rhs(X + 0.5 * h * k2, t + 0.5 * h, t_p, r, k, a, b, acoef, mu_max,
                                  Minv, C, B_o, D_o, live, m0, T, rvec, table, g_frozen, eta,
                                  measured, z, phi, gamma)
    s4, k4 = _output_feedback_rhs(X + h * k3, t + h, t_p, r, k, a, b, acoef, mu_max,
                                  Minv, C, B_o, D_o, live, m0, T, rvec, table, g_frozen, eta,
                                  measured, z, phi, gamma)
    status = max(max(s1, s2), max(s3, s4))
    return status, X + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
