"""Fixed-step closed-loop simulation with scheduled switching near the blow-up times.

The time-varying gains are singular at ``t_p`` (controller) and ``T``
(observer), so integration of the singular law stops at ``t_p - epsilon_stop``
and a time-invariant law takes over.  Both instants are grid points; the
last 1% of each horizon is integrated with the step divided by
``refine_factor``.  Each RK4 step is entirely on one side of a switch.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DivergedError, NumericError
from .observer import ObserverParams, _rk4_output_feedback, observer_gains, pbar_table, to_observer_form
from .smc import SmcParams, _dbar, linear_surface, switching
from .synthesis import (
    CanonicalSystem, ControllerParams, _closed_loop_rhs, _law, _rk4_undisturbed, _zero_disturbance,
    shift_matrix,
)

DIVERGENCE_LIMIT = 1e12
MODES = ("state_feedback", "output_feedback", "smc")

CONTROLLER_SWITCH = "controller_switch"
OBSERVER_SWITCH = "observer_switch"


@dataclass(frozen=True)
class SimSettings:
    """Integration settings; ``None`` fields take defaults relative to ``t_p``.

    Defaults: dt = 1e-4 t_p, epsilon_stop = 1e-3 t_p, t_end = 1.5 t_p,
    observer_epsilon = epsilon_stop * T / t_p.
    """

    dt: Optional[float] = None
    epsilon_stop: Optional[float] = None
    refine_factor: int = 16
    t_end: Optional[float] = None
    mu_max: Optional[float] = None
    observer_epsilon: Optional[float] = None

    def resolve(self, t_p, T=None):
        dt = 1e-4 * t_p if self.dt is None else float(self.dt)
        eps = 1e-3 * t_p if self.epsilon_stop is None else float(self.epsilon_stop)
        t_end = 1.5 * t_p if self.t_end is None else float(self.t_end)
        obs_eps = self.observer_epsilon
        if obs_eps is None and T is not None:
            obs_eps = eps * T / t_p
        out = SimSettings(dt, eps, int(self.refine_factor), t_end, self.mu_max, obs_eps)
        out.validate(t_p)
        return out

    def validate(self, t_p):
        if not (self.dt and self.dt > 0):
            raise ConfigurationError(f"must be positive, got {self.dt}", "sim.dt")
        if self.refine_factor < 1:
            raise ConfigurationError(f"must be >= 1, got {self.refine_factor}", "sim.refine_factor")
        if not (self.epsilon_stop and self.epsilon_stop > 0):
            raise ConfigurationError(f"must be positive, got {self.epsilon_stop}", "sim.epsilon_stop")
        if self.epsilon_stop < 10 * self.dt / self.refine_factor:
            raise ConfigurationError(
                "must be at least 10 refined steps (10 * dt / refine_factor)", "sim.epsilon_stop"
            )
        if self.t_end < t_p:
            raise ConfigurationError(f"must be >= t_p={t_p}, got {self.t_end}", "sim.t_end")
        if self.mu_max is not None and not self.mu_max > 0:
            raise ConfigurationError(f"must be positive, got {self.mu_max}", "sim.mu_max")


@dataclass
class SimResult:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_hat: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    events: List[Tuple[float, str]] = field(default_factory=list)
    # estimation error x - x_hat as integrated (more accurate than the difference)
    x_err: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def state_norm(self):
        return np.linalg.norm(self.x, axis=1)

    @property
    def err_norm(self):
        if self.x_err is not None:
            return np.linalg.norm(self.x_err, axis=1)
        if self.x_hat is None:
            return None
        return np.linalg.norm(self.x - self.x_hat, axis=1)

    def event_time(self, label):
        for t, name in self.events:
            if name == label:
                return t
        return None

    def index_at(self, t):
        return int(np.argmin(np.abs(self.t - t)))


@dataclass
class Metrics:
    settling_time: Optional[float]  # None: not settled
    max_abs_u: float
    terminal_state_norm: float
    terminal_error_norm: Optional[float] = None


def settling_time(t, norms, tol):
    """First grid time after which ``norms`` stays below ``tol`` (None if never)."""
    above = np.nonzero(norms >= tol)[0]
    if above.size == 0:
        return float(t[0])
    last = above[-1]
    if last + 1 >= len(t):
        return None
    return float(t[last + 1])


def metrics(result, tol):
    ts = settling_time(result.t, result.state_norm, tol)
    t_sw = result.event_time(CONTROLLER_SWITCH)
    # without a singular phase the last grid point is the terminal one
    term = float(result.state_norm[-1 if t_sw is None else result.index_at(t_sw)])
    t_obs = result.event_time(OBSERVER_SWITCH)
    err = None
    if t_obs is not None and result.x_hat is not None:
        err = float(result.err_norm[result.index_at(t_obs)])
    return Metrics(ts, float(np.max(np.abs(result.u))), term, err)


def _zero_noise(t):
    return 0.0


@dataclass
class ClosedLoop:
    """Everything needed to run one closed loop."""

    system: CanonicalSystem
    mode: str
    controller: ControllerParams
    settings: SimSettings
    x0: np.ndarray
    observer: Optional[ObserverParams] = None
    smc: Optional[SmcParams] = None
    xhat0: Optional[np.ndarray] = None
    noise: Callable[[float], float] = _zero_noise
    measured_output: bool = False

    def validate(self):
        n = self.system.n
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}", "mode")
        self.controller.check_order(n)
        if self.mode == "output_feedback":
            if self.observer is None:
                raise ConfigurationError("output_feedback needs observer parameters", "observer")
            if self.observer.n != n:
                raise ConfigurationError(f"r_vec must have n={n} entries", "observer.r_vec")
            if self.observer.T > self.controller.t_p:
                raise ConfigurationError("observer T must not exceed controller t_p", "observer.T")
        if self.mode == "smc":
            if self.smc is None:
                raise ConfigurationError("smc mode needs smc parameters", "smc")
            self.smc.check_order(n)
            if self.system.disturbance_bound is None:
                raise ConfigurationError("smc mode needs a disturbance bound", "plant.disturbance_bound")


def _grid(t_end, dt, windows, breakpoints):
    """Piecewise-uniform grid; intervals inside a refine window use the fine step."""
    pts = sorted({0.0, t_end, *[b for b in breakpoints if 0.0 < b < t_end]})
    chunks = [np.array([0.0])]
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        h = dt
        for w_lo, w_hi, factor in windows:
            if w_lo <= mid <= w_hi:
                h = dt / factor
        steps = max(1, math.ceil((hi - lo) / h - 1e-9))
        seg = lo + (hi - lo) * np.arange(1, steps + 1) / steps
        seg[-1] = hi
        chunks.append(seg)
    return np.concatenate(chunks)


def _rk4(f, t, X, h):
    k1 = f(t, X)
    k2 = f(t + 0.5 * h, X + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, X + (0.5 * h) * k2)
    k4 = f(t + h, X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


class _Law:
    """Preallocated state-feedback evaluation for one set of gains."""

    def __init__(self, cp, acoef, n, mu_max):
        self.t_p = cp.gain.t_p
        self.args = (cp.r, cp.k, cp.shape.a, cp.shape.b, acoef,
                     -1.0 if mu_max is None else float(mu_max))
        self.z = np.empty(n)
        self.phi = np.empty(n)
        self.gamma = np.empty(n)
        self.phidot = 0.0

    def __call__(self, x, t):
        status, u, self.phidot = _law(x, self.t_p - t, *self.args, self.z, self.phi, self.gamma)
        if status:
            raise NumericError(f"non-finite value in recursion level {status} at t={t}", status)
        return u

    def closed_loop(self, x, t, dist):
        status, dx = _closed_loop_rhs(
            x, self.t_p - t, *self.args, dist, self.z, self.phi, self.gamma
        )
        if status:
            raise NumericError(f"non-finite value in recursion level {status} at t={t}", status)
        return dx

    def step_output_feedback(self, X, t, h, obs_args, live, eta, measured):
        status, Xn = _rk4_output_feedback(
            X, t, h, self.t_p, *self.args, *obs_args[:4], live, *obs_args[4:], eta, measured,
            self.z, self.phi, self.gamma,
        )
        if status:
            raise NumericError(f"non-finite value in recursion level {status} near t={t}", status)
        return Xn

    def step(self, x, t, h):
        status, xn = _rk4_undisturbed(
            x, t, h, self.t_p, *self.args, self.z, self.phi, self.gamma
        )
        if status:
            raise NumericError(f"non-finite value in recursion level {status} near t={t}", status)
        return xn


def simulate(scenario, validate=True):
    """Integrate a closed loop; accepts a :class:`ClosedLoop` or anything with ``build()``.

    ``validate=False`` skips the gain admissibility checks, which is only
    useful for demonstrating what happens without them.
    """
    loop = scenario.build() if hasattr(scenario, "build") else scenario
    if validate:
        loop.validate()
    sys = loop.system
    n = sys.n
    cp = loop.controller
    t_p = cp.t_p
    obs = loop.observer if loop.mode == "output_feedback" else None
    st = loop.settings.resolve(t_p, None if obs is None else obs.T)

    singular = cp.r == 1
    t_sw = t_p - st.epsilon_stop if singular else math.inf
    windows, breakpoints, events = [], [], []
    if singular:
        windows.append((0.99 * t_p, t_sw, st.refine_factor))
        breakpoints += [0.99 * t_p, t_sw]
        events.append((t_sw, CONTROLLER_SWITCH))
    if obs is not None:
        T_sw = obs.T - st.observer_epsilon
        windows.append((0.99 * obs.T, T_sw, st.refine_factor))
        breakpoints += [0.99 * obs.T, T_sw]
        events.append((T_sw, OBSERVER_SWITCH))
    events.sort()
    grid = _grid(st.t_end, st.dt, windows, breakpoints)

    acoef = sys.a_coeffs
    zeros = np.zeros(n)
    pre = _Law(cp, acoef if loop.mode != "smc" else zeros, n, st.mu_max)
    post = _Law(cp.asymptotic(), acoef, n, None)

    if loop.mode == "smc":
        sp = loop.smc
        width = sp.boundary_layer
        l = np.asarray(sp.l_coeffs)

        def control(x, t, before):
            if before:
                pre(x, t)
                s = pre.z[-1]
                return -_dbar(x, sys) * switching(s, width) - pre.phidot - pre.gamma[-1], s
            s = linear_surface(x, sp)
            return -_dbar(x, sys) * switching(s, width) - float(l @ x[1:]), s
    else:

        def control(x, t, before):
            return (pre(x, t) if before else post(x, t)), None

    X0 = np.asarray(loop.x0, dtype=np.float64).reshape(-1)
    if X0.size != n:
        raise ConfigurationError(f"must have n={n} entries", "initial_state")

    if obs is not None:
        M, B_o, D_o = to_observer_form(sys)
        Minv = np.linalg.inv(M)
        table = pbar_table(n, obs.m0, obs.T)
        gains_frozen = observer_gains(T_sw, n, obs.m0, obs.T, obs.r_vec, table)
        # the frozen gains are stiff; substeps keep RK4 inside its stability region
        frozen = shift_matrix(n)
        frozen[:, 0] -= gains_frozen
        rho_frozen = float(np.abs(np.linalg.eigvals(frozen)).max())
        xhat0 = np.zeros(n) if loop.xhat0 is None else np.asarray(loop.xhat0, dtype=np.float64)
        # the observer is integrated through its error xi - xi_hat
        X0 = np.concatenate([X0, M @ (X0 - xhat0)])
        C = sys.c_coeffs
        measured = loop.measured_output

        obs_args = (Minv, np.ascontiguousarray(C), np.ascontiguousarray(B_o),
                    np.ascontiguousarray(D_o, dtype=np.float64), obs.m0, obs.T,
                    np.asarray(obs.r_vec, dtype=np.float64), table, gains_frozen)

        def error(X):
            return Minv @ X[n:]

        def estimate(X):
            return X[:n] - error(X)

        def make_rhs(before, obs_before, eta):
            def f(t, X):
                x = X[:n]
                xi_err = X[n:]
                xh = x - Minv @ xi_err
                y = float(C @ x) + eta
                if measured:
                    xh[0] = y
                u, _ = control(xh, t, before)
                g = (observer_gains(t, n, obs.m0, obs.T, obs.r_vec, table)
                     if obs_before else gains_frozen)
                d = sys.disturbance(x, t)
                out = np.empty(2 * n)
                out[:n - 1] = x[1:]
                out[n - 1] = acoef @ x + u + d
                out[n:2 * n - 1] = xi_err[1:]
                out[2 * n - 1] = 0.0
                out[n:] += B_o * d - D_o * eta - g * (xi_err[0] + eta)
                return out
            return f

        def record_u(X, t, before, eta):
            xh = estimate(X)
            if measured:
                xh[0] = float(C @ X[:n]) + eta
            return control(xh, t, before)
    else:
        T_sw = None
        rho_frozen = 0.0

        disturbed = sys.disturbance is not _zero_disturbance

        def make_rhs(before, obs_before, eta):
            if loop.mode == "state_feedback":
                law = pre if before else post
                if disturbed:
                    return lambda t, X: law.closed_loop(X, t, sys.disturbance(X, t))
                return lambda t, X: law.closed_loop(X, t, 0.0)

            def f(t, X):
                u, _ = control(X, t, before)
                out = np.empty(n)
                out[:-1] = X[1:]
                out[-1] = acoef @ X + u + sys.disturbance(X, t)
                return out
            return f

        def record_u(X, t, before, eta):
            return control(X, t, before)

    N = grid.size
    xs = np.empty((N, n))
    us = np.empty(N)
    xhs = np.empty((N, n)) if obs is not None else None
    errs = np.empty((N, n)) if obs is not None else None
    ss = np.empty(N) if loop.mode == "smc" else None

    def partial(k):
        return SimResult(
            grid[:k].copy(), xs[:k].copy(), us[:k].copy(),
            None if xhs is None else xhs[:k].copy(),
            None if ss is None else ss[:k].copy(),
            [e for e in events if e[0] <= grid[max(k - 1, 0)]],
            None if errs is None else errs[:k].copy(),
        )

    undisturbed = sys.disturbance is _zero_disturbance
    fast = loop.mode == "state_feedback" and undisturbed
    fast_obs = loop.mode == "output_feedback" and undisturbed
    X = X0
    for k in range(N):
        t = grid[k]
        eta = float(loop.noise(t))
        # the sample at a switch instant uses the law in force up to it
        u, s = record_u(X, t, t <= t_sw, eta)
        xs[k] = X[:n]
        us[k] = u
        if xhs is not None:
            errs[k] = error(X)
            xhs[k] = X[:n] - errs[k]
        if ss is not None:
            ss[k] = s
        if k == N - 1:
            break
        h = grid[k + 1] - t
        live = T_sw is not None and t < T_sw
        sub = 1 if live or T_sw is None else max(1, math.ceil(h * rho_frozen / 2.0))
        try:
            if fast:
                Xn = (pre if t < t_sw else post).step(X, t, h)
            elif fast_obs:
                law = pre if t < t_sw else post
                Xn = X
                for j in range(sub):
                    Xn = law.step_output_feedback(
                        Xn, t + j * h / sub, h / sub, obs_args, live, eta, measured)
            else:
                f = make_rhs(t < t_sw, live, eta)
                Xn = X
                for j in range(sub):
                    Xn = _rk4(f, t + j * h / sub, Xn, h / sub)
        except NumericError as exc:
            raise DivergedError(str(exc), last_time=float(t), result=partial(k + 1)) from exc
        # NaN fails both comparisons
        if not (Xn @ Xn < math.inf and Xn[:n] @ Xn[:n] <= DIVERGENCE_LIMIT**2):
            raise DivergedError(
                f"state diverged after t={t:.6g}", last_time=float(t), result=partial(k + 1)
            )
        X = Xn

    return SimResult(grid, xs, us, xhs, ss, events, errs)


def with_settings(loop, **changes):
    """Copy of ``loop`` with some integration settings replaced."""
    return replace(loop, settings=replace(loop.settings, **changes))
