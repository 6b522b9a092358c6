import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from stratscore import covmodel as cm
from stratscore import signaling as sg
from stratscore.covmodel import independent_model
from stratscore.errors import AssumptionViolated, GridTooCoarse, UnsupportedDimension
from stratscore.examples import three_equilibria_1d, three_equilibria_2d, example1, nonmonotone

from helpers import (
    central_difference,
    oracle_best_response,
    oracle_receiver_loss,
    random_ab_model,
    random_general_model,
)

EX1_ROOT = brentq(lambda b: b**3 + b - 1, 0, 1, xtol=1e-15)


def test_residual_examples():
    m = example1()
    assert abs(sg.signaling_residual(m, [0.68233])[0]) <= 1e-4
    assert sg.signaling_residual(m, [0.0])[0] == pytest.approx(-1.0)
    fixed = independent_model([4.0, 1.0], [[2.0, 1.0], [1.0, 2.0]], np.zeros((2, 2)), 9.0)
    np.testing.assert_allclose(sg.signaling_residual(fixed, cm.beta(fixed)[0]), 0.0, atol=1e-14)


def test_residual_is_best_response_gap():
    rng = np.random.default_rng(4)
    for _ in range(20):
        m = random_general_model(rng, 3).replace(v=rng.standard_normal(3))
        b = rng.standard_normal(3)
        r = sg.signaling_residual(m, b)
        expected = cm.feature_var(m, b) @ (b - oracle_best_response(m, b))
        np.testing.assert_allclose(r, expected, atol=1e-10)


def test_jacobian_matches_finite_difference():
    rng = np.random.default_rng(8)
    for _ in range(10):
        m = random_general_model(rng, 3).replace(v=rng.standard_normal(3))
        b = rng.standard_normal(3)
        J = np.array([central_difference(lambda z: sg.signaling_residual(m, z)[i], b) for i in range(3)])
        np.testing.assert_allclose(sg.signaling_jacobian(m, b), J, rtol=1e-6, atol=1e-7)


def test_potential_example1():
    f, g = sg.potential_value_and_gradient(example1(), [0.5])
    assert f == pytest.approx(0.25 + 0.0625 / 2 - 1.0)
    assert g[0] == pytest.approx(2 * 0.125 + 2 * 0.5 - 2)
    _, g = sg.potential_value_and_gradient(example1(), [EX1_ROOT])
    assert abs(g[0]) < 1e-12


def test_potential_requires_assumptions():
    with pytest.raises(AssumptionViolated):
        sg.potential_value_and_gradient(three_equilibria_1d(), [0.0])
    with pytest.raises(AssumptionViolated):
        sg.solve_signaling(example1().replace(v=[0.5]))


def test_potential_gradient_is_twice_residual_and_matches_fd():
    rng = np.random.default_rng(12)
    for _ in range(10):
        m = random_ab_model(rng, 3, relaxed=True)
        for _ in range(100):
            z = rng.standard_normal(3) * 2
            f, g = sg.potential_value_and_gradient(m, z)
            np.testing.assert_allclose(g, 2 * sg.signaling_residual(m, z), rtol=1e-8, atol=1e-12)
            fd = central_difference(lambda y: sg.potential_value_and_gradient(m, y)[0], z)
            assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_solve_examples():
    c = sg.solve_signaling(example1())
    assert c.b[0] == pytest.approx(EX1_ROOT, abs=1e-12)
    assert c.residual_norm <= 1e-10
    c = sg.solve_signaling(nonmonotone())
    np.testing.assert_allclose(c.b, [1.1951, -0.0971], atol=1e-3)
    fixed = independent_model([4.0, 1.0], [[2.0, 1.0], [1.0, 2.0]], np.zeros((2, 2)), 9.0)
    np.testing.assert_array_equal(sg.solve_signaling(fixed).b, cm.beta(fixed)[0])


def test_coefficients_invariants():
    rng = np.random.default_rng(6)
    for _ in range(20):
        m = random_ab_model(rng, 3, relaxed=True)
        c = sg.solve_signaling(m)
        assert c.b0 == pytest.approx(m.mu_theta - c.b @ (m.mu_eta + c.b * m.mu_gamma), abs=1e-10)
        assert 0 <= c.residual_norm <= 1e-10
        np.testing.assert_allclose(cm.reg_theta_given_features(m, c.b), c.b, atol=1e-8)
        assert c.receiver_loss == pytest.approx(oracle_receiver_loss(m, c.b), rel=1e-10)


def test_uniqueness_from_random_starts():
    rng = np.random.default_rng(21)
    for _ in range(100):
        m = random_ab_model(rng, int(rng.integers(1, 4)))
        ref = sg.solve_signaling(m).b
        for _ in range(20):
            b = sg.solve_signaling(m, x0=rng.standard_normal(m.k) * 3).b
            assert np.max(np.abs(b - ref)) <= 1e-6


def test_receiver_loss_examples():
    m = nonmonotone()
    assert sg.receiver_loss(m, sg.solve_signaling(m).b) == pytest.approx(4.3167, abs=1e-3)
    assert sg.receiver_loss(m, np.zeros(2)) == pytest.approx(9.0)
    fixed = independent_model([4.0, 1.0], [[2.0, 1.0], [1.0, 2.0]], np.zeros((2, 2)), 9.0)
    bt = cm.beta(fixed)[0]
    assert sg.receiver_loss(fixed, bt) == pytest.approx(9.0 - bt @ fixed.S_et)


def test_receiver_loss_general_matches_oracle():
    rng = np.random.default_rng(31)
    for _ in range(30):
        m = random_general_model(rng, 3)
        b = rng.standard_normal(3)
        assert sg.receiver_loss(m, b) == pytest.approx(oracle_receiver_loss(m, b), rel=1e-10)


def test_counterexample_more_gamma_variance_lowers_loss():
    before = sg.solve_signaling(nonmonotone(1.0))
    after = sg.solve_signaling(nonmonotone(2.0))
    np.testing.assert_allclose(after.b, [1.1950, -0.0966], atol=1e-3)
    assert before.receiver_loss == pytest.approx(4.3167, abs=1e-3)
    assert after.receiver_loss == pytest.approx(4.3165, abs=1e-3)
    assert after.receiver_loss < before.receiver_loss


# ---------------------------------------------------------------------------
# general solver and closed forms


def _numpy_cubic_roots(m):
    a, b, c, d = sg.cubic_coefficients_1d(m)
    r = np.roots([a, b, c, d])
    return np.sort(r[np.abs(r.imag) < 1e-9].real)[::-1]


def test_three_equilibria_roots_1d():
    eq = sg.solve_signaling_general(three_equilibria_1d())
    np.testing.assert_allclose(eq.slopes()[:, 0], [1.09, -0.21, -0.88], atol=0.01)
    eq = sg.solve_signaling_general(three_equilibria_1d(-1.0))
    np.testing.assert_allclose(eq.slopes()[:, 0], [0.88, 0.21, -1.09], atol=0.01)
    for s in eq.solutions:
        assert s.residual_norm <= 1e-8


def test_three_equilibria_roots_2d():
    with pytest.warns(GridTooCoarse):
        eq = sg.solve_signaling_general(three_equilibria_2d())
    got = {tuple(np.round(b, 2)) for b in eq.slopes()}
    assert len(eq) == 3
    for target in [(0.60, -0.48), (0.09, 0.66), (0.42, 0.13)]:
        assert min(np.max(np.abs(np.array(g) - target)) for g in got) <= 0.01
    b = eq.slopes()
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.max(np.abs(b[i] - b[j])) > 1e-6


def test_cubic_1d_examples():
    eq = sg.solve_signaling_cubic_1d(example1())
    assert len(eq) == 1
    assert eq.solutions[0].b[0] == pytest.approx(0.68233, abs=1e-5)
    zeta, beta = 1.0, 1.0
    assert eq.discriminant == pytest.approx(-4 * zeta**3 - 27 * beta**2 * zeta**2)
    assert eq.discriminant < 0
    flat = independent_model([0.7], [[2.0]], [[0.0]], 1.0)
    assert sg.solve_signaling_cubic_1d(flat).solutions[0].b[0] == pytest.approx(0.35)
    with pytest.raises(UnsupportedDimension):
        sg.solve_signaling_cubic_1d(nonmonotone())


def test_cubic_matches_numpy_roots_and_general_solver():
    rng = np.random.default_rng(41)
    for _ in range(40):
        m = random_general_model(rng, 1).replace(v=rng.standard_normal(1))
        closed = sg.solve_signaling_cubic_1d(m).slopes()[:, 0]
        np.testing.assert_allclose(closed, _numpy_cubic_roots(m), atol=1e-7)
        general = sg.solve_signaling_general(m).slopes()[:, 0]
        assert closed.size == general.size
        np.testing.assert_allclose(np.sort(closed), np.sort(general), atol=1e-6)


def test_general_agrees_with_convex_path():
    rng = np.random.default_rng(51)
    for _ in range(10):
        m = random_ab_model(rng, 2, relaxed=True)
        eq = sg.solve_signaling_general(m)
        assert len(eq) == 1
        np.testing.assert_allclose(eq.solutions[0].b, sg.solve_signaling(m).b, atol=1e-8)


def test_general_dimension_guard():
    m = random_ab_model(np.random.default_rng(0), 7)
    with pytest.raises(UnsupportedDimension):
        sg.solve_signaling_general(m)


def test_homogeneous_diagonal():
    m = independent_model([0.0, 0.0], np.zeros((2, 2)), np.eye(2), 1.0, Sigma_gamma_theta=[0.04, 0.09])
    got = {tuple(np.round(c.b, 12)) for c in sg.homogeneous_intrinsic_equilibria(m).solutions}
    assert got == {(0.0, 0.0), (0.2, 0.0), (0.0, 0.3), (0.2, 0.3)}
    for c in sg.homogeneous_intrinsic_equilibria(m).solutions:
        assert c.residual_norm <= 1e-14


def test_homogeneous_nonpositive_is_trivial_only():
    m = independent_model([0.0, 0.0], np.zeros((2, 2)), np.eye(2), 1.0, Sigma_gamma_theta=[-0.1, 0.0])
    eq = sg.homogeneous_intrinsic_equilibria(m)
    assert len(eq) == 1 and not np.any(eq.solutions[0].b)


def test_homogeneous_correlated_matches_brute_force():
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    m = independent_model([0.0, 0.0], np.zeros((2, 2)), S, 1.0, Sigma_gamma_theta=[0.3, 0.3])
    expected = {(0.0, 0.0)}
    # subsets {1}, {2}, {1,2}: reg(theta | gamma_J) = S_JJ^{-1} S_gt_J
    expected.add((np.sqrt(0.3), 0.0))
    expected.add((0.0, np.sqrt(0.3)))
    both = np.linalg.solve(S, [0.3, 0.3])
    expected.add(tuple(np.sqrt(both)))
    got = {tuple(np.round(c.b, 10)) for c in sg.homogeneous_intrinsic_equilibria(m).solutions}
    assert got == {tuple(np.round(e, 10)) for e in expected}


def test_homogeneous_sign_flips_are_equilibria():
    m = independent_model([0.0, 0.0], np.zeros((2, 2)), np.eye(2), 1.0, Sigma_gamma_theta=[0.04, 0.09])
    eq = sg.homogeneous_intrinsic_equilibria(m, include_sign_flips=True)
    assert len(eq) == 1 + 2 + 2 + 4
    for c in eq.solutions:
        assert c.residual_norm <= 1e-14


# ---------------------------------------------------------------------------
# information loss sweep


def test_info_loss_sweep_example1():
    t = sg.info_loss_sweep(example1(), [1.0, 1.5, 2.0])
    losses = t.column("loss")
    assert losses[0] < losses[1] < losses[2]
    for s, b in zip(t.column("s"), t.column("b_1")):
        a, bb, c, d = 1.0, 0.0, 1.0 / s**2, -1.0 / s**2
        assert b == pytest.approx(brentq(lambda x: a * x**3 + c * x + d, 0, 1, xtol=1e-15), abs=1e-10)


def test_info_loss_single_point():
    m = nonmonotone()
    t = sg.info_loss_sweep(m, [1.0])
    c = sg.solve_signaling(m)
    assert len(t) == 1
    np.testing.assert_allclose([t.column("b_1")[0], t.column("b_2")[0]], c.b)
    assert t.column("loss")[0] == pytest.approx(c.receiver_loss)
    assert t.columns[:6] == ("s", "b_1", "b_2", "b0", "loss", "residual_norm")


def test_info_loss_derivative_matches_fd():
    rng = np.random.default_rng(61)
    for _ in range(10):
        m = random_ab_model(rng, 3, relaxed=True)
        table = sg.info_loss_sweep(m, [0.5, 1.0, 2.0])
        for row in table.rows:
            s = row[0]
            t = s * s
            h = 1e-4 * t
            up = sg.solve_signaling(m.scale_gamma_variance(t + h)).b
            dn = sg.solve_signaling(m.scale_gamma_variance(t - h)).b
            fd = (up - dn) / (2 * h)
            implicit = np.array([row[table.columns.index(f"db_dt_{i+1}")] for i in range(3)])
            assert np.max(np.abs(implicit - fd)) <= 1e-4 * max(1e-3, np.max(np.abs(fd)))


def test_info_loss_rejects_bad_grid():
    with pytest.raises(ValueError):
        sg.info_loss_sweep(example1(), [1.0, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_loss_strictly_increasing_in_stakes(k, seed):
    m = random_ab_model(np.random.default_rng(seed), k)
    losses = sg.info_loss_sweep(m, [0.5, 1.0, 1.5, 2.0, 3.0]).column("loss")
    assert all(b - a > 1e-12 for a, b in zip(losses, losses[1:]))
