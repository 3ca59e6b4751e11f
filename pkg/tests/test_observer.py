import numpy as np
import pytest

from ptcontrol.errors import ParameterError, SingularityError, StructuralError
from ptcontrol.observer import (
    ObserverParams, error_matrix, hurwitz_check, observer_gains, observer_rhs,
    output_feedback_u, pbar_table, routh_hurwitz, to_observer_form,
)
from ptcontrol.scalarmath import ShapeParams, TimeGain
from ptcontrol.scenario import bundled_scenario
from ptcontrol.sim import OBSERVER_SWITCH, simulate
from ptcontrol.synthesis import CanonicalSystem, ControllerParams, shift_matrix, state_feedback_u


# -- coefficient table and gains -----------------------------------------------------------


@pytest.mark.parametrize("n,m0,T", [(1, 1, 1.0), (2, 3, 4.0), (4, 2, 0.7), (6, 5, 3.0)])
def test_pbar_triangular_with_unit_diagonal(n, m0, T):
    P = pbar_table(n, m0, T)
    assert np.array_equal(np.diag(P), np.ones(n))
    assert not np.triu(P, 1).any()


def test_pbar_examples():
    assert pbar_table(2, 3, 4.0)[1, 0] == -5 / 4
    assert pbar_table(1, 7, 2.0).tolist() == [[1.0]]


def test_example2_gains_at_start():
    g = observer_gains(0.0, 2, 3, 4.0, (1.0, 1.0), pbar_table(2, 3, 4.0))
    assert g == pytest.approx([3.5, 3.5], abs=1e-15)


@pytest.mark.parametrize("t", [0.0, 1.0, 2.0, 3.0])
def test_example2_gain_closed_forms(t):
    m0, T, r1, r2 = 3, 4.0, 1.0, 1.0
    mu1 = T / (T - t)
    g1 = r1 + 2 * (m0 + 2) / T * mu1
    g2 = r2 + r1 * (m0 + 2) / T * mu1 + (m0 + 1) * (m0 + 2) / T**2 * mu1**2
    g = observer_gains(t, 2, m0, T, (r1, r2), pbar_table(2, m0, T))
    assert abs(g[0] - g1) <= 1e-10 * g1 and abs(g[1] - g2) <= 1e-10 * g2


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_gains_make_error_transform_exact(n):
    # with P_ij = pbar_ij mu1^(n+m0+i-j), w = P e must obey w' = (J - r e1^T) w
    # whenever e' = (J - g e1^T) e, i.e. P' + P (J - g e1^T) = (J - r e1^T) P
    rng = np.random.default_rng(n)
    for _ in range(5):
        m0, T = int(rng.integers(1, 5)), rng.uniform(0.5, 5.0)
        r = np.poly(-rng.uniform(0.5, 2.0, n))[1:]  # Hurwitz by construction
        table = pbar_table(n, m0, T)
        t = rng.uniform(0, 0.9 * T)
        mu1, dmu1 = T / (T - t), T / (T - t) ** 2
        i, j = np.indices((n, n))
        e = n + m0 + i - j
        P = table * mu1**e
        dP = table * e * mu1 ** (e - 1) * dmu1
        g = observer_gains(t, n, m0, T, r, table)
        J = shift_matrix(n)
        lhs = dP + P @ (J - np.outer(g, np.eye(n)[0]))
        rhs = error_matrix(r) @ P
        scale = max(np.abs(dP).max(), np.abs(P).max() * max(1.0, np.abs(g).max()))
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_gains_singular_at_horizon():
    with pytest.raises(SingularityError):
        observer_gains(4.0, 2, 3, 4.0, (1, 1), pbar_table(2, 3, 4.0))


# -- Hurwitz test ----------------------------------------------------------------------------


def test_hurwitz_examples():
    assert hurwitz_check((1.0, 1.0))
    assert not hurwitz_check((-1.0, 1.0))  # s^2 - s + 1
    assert hurwitz_check((2.0,)) and not hurwitz_check((-1.0,))
    assert not hurwitz_check((0.0, 1.0))  # roots on the axis
    assert not routh_hurwitz([])


def test_hurwitz_agrees_with_eigenvalues():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 100:
        n = int(rng.integers(1, 7))
        r = rng.uniform(-1, 4, n)
        worst = np.linalg.eigvals(error_matrix(r)).real.max()
        if abs(worst) < 1e-6:
            continue
        assert hurwitz_check(r) == (worst < 0)
        checked += 1


@pytest.mark.parametrize("kwargs", [dict(T=0.0, m0=3, r_vec=(1, 1)), dict(T=4.0, m0=0, r_vec=(1, 1)),
                                    dict(T=4.0, m0=1.5, r_vec=(1, 1)), dict(T=4.0, m0=3, r_vec=()),
                                    dict(T=4.0, m0=3, r_vec=(-1, 1))])
def test_observer_params_validation(kwargs):
    with pytest.raises(ParameterError):
        ObserverParams(**kwargs)


# -- observer canonical form -------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 4])
def test_chain_is_already_in_observer_form(n):
    M, B_o, D_o = to_observer_form(CanonicalSystem.chain(n))
    assert np.array_equal(M, np.eye(n))
    assert np.array_equal(B_o, np.eye(n)[-1]) and not D_o.any()


def test_random_third_order_structure():
    rng = np.random.default_rng(11)
    for _ in range(10):
        sys = CanonicalSystem(3, rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3))
        M, B_o, D_o = to_observer_form(sys)
        Minv = np.linalg.inv(M)
        A_t = shift_matrix(3)
        A_t[:, 0] += D_o
        assert np.abs(M @ sys.A @ Minv - A_t).max() <= 1e-10
        assert np.abs(sys.C @ Minv - np.eye(3)[0]).max() <= 1e-10
        assert np.abs(M @ sys.B - B_o).max() <= 1e-10
        # the transfer function is unchanged
        s = 0.3 + 1.1j
        tf_src = sys.C @ np.linalg.solve(s * np.eye(3) - sys.A, sys.B)
        tf_tgt = np.linalg.solve(s * np.eye(3) - A_t, B_o)[0]
        assert abs(tf_src - tf_tgt) <= 1e-10 * max(1.0, abs(tf_src))


def test_unobservable_pair_rejected():
    # numerator 1 + s cancels the pole at -1 of s^2 - 1
    with pytest.raises(StructuralError):
        to_observer_form(CanonicalSystem(2, [1.0, 0.0], [1.0, 1.0]))


# -- observer dynamics --------------------------------------------------------------------------

EX2 = ObserverParams(4.0, 3, (1.0, 1.0))


def test_example2_initial_injection():
    table = pbar_table(2, 3, 4.0)
    B_o, D_o = np.array([0.0, 1.0]), np.zeros(2)
    d = observer_rhs(np.zeros(2), 0.0, 4.0, 0.0, EX2, table, B_o, D_o)
    assert d == pytest.approx([14.0, 14.0], abs=1e-14)


def test_exact_estimate_reproduces_plant():
    rng = np.random.default_rng(5)
    sys = CanonicalSystem(3, rng.uniform(-1, 1, 3), rng.uniform(0.5, 1, 3))
    M, B_o, D_o = to_observer_form(sys)
    params = ObserverParams(2.0, 2, (3.0, 3.0, 1.0))
    table = pbar_table(3, 2, 2.0)
    for _ in range(5):
        x, u, t = rng.normal(size=3), rng.normal(), rng.uniform(0, 1.9)
        xi = M @ x
        d = observer_rhs(xi, u, sys.output(x), t, params, table, B_o, D_o)
        assert np.abs(d - M @ sys.rhs(x, u, t)).max() <= 1e-12 * max(1.0, np.abs(d).max())


def test_scalar_tracking_matches_variation_of_constants():
    # n = 1, y constant: e = y - xi_hat obeys e' = -(r + (1 + m0)/(T - t)) e
    T, m0, r, y, h = 2.0, 2, 0.7, 1.5, 1e-3
    params = ObserverParams(T, m0, (r,))
    table = pbar_table(1, m0, T)
    zero = np.zeros(1)
    f = lambda t, v: observer_rhs(v, 0.0, y, t, params, table, zero, zero)
    xi, t = np.zeros(1), 0.0
    for _ in range(int(0.9 * T / h)):
        k1 = f(t, xi)
        k2 = f(t + h / 2, xi + h / 2 * k1)
        k3 = f(t + h / 2, xi + h / 2 * k2)
        k4 = f(t + h, xi + h * k3)
        xi, t = xi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), t + h
    exact = y * np.exp(-r * t) * ((T - t) / T) ** (m0 + 1)
    assert abs((y - xi[0]) - exact) <= 1e-9


def test_output_feedback_identities():
    sys = CanonicalSystem.chain(2)
    cp = ControllerParams(ShapeParams(1, 1), 5.0, 1, TimeGain(6.0))
    x = np.array([0.4, -0.2])
    assert output_feedback_u(x, 1.0, cp, sys) == state_feedback_u(x, 1.0, cp, sys)
    assert output_feedback_u(np.zeros(2), 0.0, cp, sys) == 0.0
    mixed = output_feedback_u(x, 1.0, cp, sys, measured_x1=0.9)
    assert mixed == state_feedback_u([0.9, -0.2], 1.0, cp, sys)
    assert x.tolist() == [0.4, -0.2]


# -- closed loop properties (Example 2) ---------------------------------------------------------


@pytest.fixture(scope="module")
def example2():
    return simulate(bundled_scenario("example2"))


def test_estimation_error_vanishes_at_horizon(example2):
    r = example2
    before = r.t < 4.0
    assert np.all(np.isfinite(r.err_norm[before]))
    i = r.index_at(4.0 - 1e-3)
    assert r.err_norm[i] <= 1e-3


def test_error_envelope_shape(example2):
    # |xi_err| mu1^(m0+1) stays below the largest value seen in the first 10% of [0, T]
    r, T, m0 = example2, 4.0, 3
    sel = r.t <= T - 1e-3
    t, err = r.t[sel], r.err_norm[sel]
    ratio = err * (T / (T - t)) ** (m0 + 1)
    bound = ratio[t <= 0.1 * T].max()
    worst = int(np.argmax(ratio))
    assert ratio[worst] <= bound, f"ratio {ratio[worst]:.3g} at t={t[worst]:.3g} exceeds {bound:.3g}"


def test_injection_bounded_and_decaying(example2):
    r = example2
    table = pbar_table(2, 3, 4.0)
    t_obs = r.event_time(OBSERVER_SWITCH)
    idx = np.nonzero(r.t < t_obs)[0]
    inj = np.array([np.abs(observer_gains(r.t[i], 2, 3, 4.0, (1, 1), table) * r.x_err[i, 0]).max()
                    for i in idx])
    assert np.all(np.isfinite(inj))
    assert inj[-1] <= 1e-2


def test_separation(example2):
    r = example2
    assert np.linalg.norm(r.x[r.index_at(6.0 - 1e-3)]) <= 1e-2
