import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from auv_ftc.errors import RankDeficientError, SingularAttitudeError, WeightError
from auv_ftc.linearization import (
    augment,
    augmented_weight,
    check_observation,
    default_observation,
    discretize,
    input_matrix,
    linearize,
    state_jacobian,
    state_jacobian_fd,
)
from auv_ftc.oracles import jacobian_relative_errors
from auv_ftc.vehicle import VehicleParams, fault_coefficients

P = VehicleParams()


def test_jacobian_at_rest_frozen_blocks():
    # at rest only linear damping, restoring stiffness and J(0)=I survive
    Ac = state_jacobian(np.zeros(6), np.zeros(6), P)
    Minv = np.diag(1 / np.diag(P.mass_matrix))
    np.testing.assert_allclose(Ac[:6, :6], -Minv @ np.diag(P.linear_damping))
    wb = P.dry_mass * P.gravity * P.restoring_arm_z
    np.testing.assert_allclose(Ac[3, 9], -wb / 0.28)
    np.testing.assert_allclose(Ac[4, 10], -wb / 0.28)
    np.testing.assert_allclose(Ac[6:, :6], np.eye(6))
    np.testing.assert_allclose(Ac[6:, 6:], 0)


def test_jacobian_matches_finite_differences():
    assert jacobian_relative_errors(5, seed=3).max() <= 1e-5


def test_batched_jacobian_matches_single():
    rng = np.random.default_rng(1)
    nu = rng.uniform(-1, 1, (4, 6))
    eta = rng.uniform(-0.8, 0.8, (4, 6))
    batch = state_jacobian(nu, eta, P)
    for i in range(4):
        np.testing.assert_allclose(batch[i], state_jacobian(nu[i], eta[i], P))


def test_fd_rejects_singular_pitch():
    with pytest.raises(SingularAttitudeError):
        state_jacobian_fd(np.zeros(6), [0, 0, 0, 0, np.pi / 2, 0], P)


def test_input_matrix_zero_columns_for_failed():
    B = input_matrix(P, fault_coefficients({1, 3}))
    assert not B[:, [0, 2]].any()
    assert not B[6:].any()
    np.testing.assert_allclose(B[:6, 1], P.mass_matrix_inv @ P.allocation[:, 1])


def test_linearize_methods_agree():
    nu, eta = np.full(6, 0.1), np.array([1, 2, 3, 0.1, 0.2, 0.3])
    f = fault_coefficients({2})
    A1, B1 = linearize(nu, eta, f, P)
    A2, B2 = linearize(nu, eta, f, P, "fd")
    np.testing.assert_allclose(A1, A2, atol=1e-6)
    np.testing.assert_array_equal(B1, B2)
    with pytest.raises(ValueError):
        linearize(nu, eta, f, P, "spline")


def test_discretize_euler():
    m = discretize(np.array([[0, 1], [-2, -3.0]]), np.array([[0], [1.0]]), 0.1, k=4)
    np.testing.assert_allclose(m.A, [[1, 0.1], [-0.2, 0.7]])
    np.testing.assert_allclose(m.B, [[0], [0.1]])
    assert m.k == 4
    with pytest.raises(ValueError):
        discretize(np.eye(2), np.eye(2), -1)


def test_augmented_structure():
    m = discretize(*linearize(np.zeros(6), np.zeros(6), fault_coefficients(()), P), 0.01)
    H = default_observation()
    aug = augment(m, H, np.eye(6))
    assert aug.n == 18
    np.testing.assert_array_equal(aug.A_tilde[12:, :12], -H)
    np.testing.assert_array_equal(aug.A_tilde[12:, 12:], np.eye(6))
    np.testing.assert_array_equal(aug.B_tilde[12:], 0)
    np.testing.assert_array_equal(aug.B_r[12:], np.eye(6))
    np.testing.assert_array_equal(aug.H_tilde, np.hstack([H, np.zeros((6, 6))]))


def test_augmented_weight_penalises_output_plus_integral():
    H = default_observation()
    Qt = augmented_weight(H, np.diag([1, 2, 3, 4, 5, 6.0]))
    x = np.zeros(18)
    x[6], x[12] = 1.0, 2.0
    # (H x + z)' Q (H x + z) with first output 1 + 2
    assert x @ Qt @ x == pytest.approx(9.0)
    Qs = augmented_weight(H, np.eye(12))
    assert Qs[12:].sum() == 0
    with pytest.raises(ValueError):
        augmented_weight(H, np.eye(5))


def test_observation_checks():
    check_observation(default_observation())
    with pytest.raises(RankDeficientError):
        check_observation(np.zeros((6, 12)))
    m = discretize(np.eye(12), np.zeros((12, 8)), 0.1)
    with pytest.raises(WeightError):
        augment(m, default_observation(), -np.eye(6))


# --- worked examples --------------------------------------------------------

def test_scalar_discretization_and_zero_interval():
    m = discretize(np.array([[-1.0]]), np.array([[1.0]]), 0.1)
    assert m.A[0, 0] == pytest.approx(0.9)
    z = discretize(np.ones((12, 12)), np.ones((12, 8)), 0.0)
    np.testing.assert_array_equal(z.A, np.eye(12))
    np.testing.assert_array_equal(z.B, 0)


def test_sampled_model_marginally_stable_along_helix():
    # positions are pure integrators, so eigenvalue 1 is structural
    from auv_ftc.harness import HelixReference, reference_velocity
    h = HelixReference()
    worst = 0.0
    for t in np.linspace(0, 120, 25):
        eta = h.pose(t)
        A = np.eye(12) + 0.01 * state_jacobian(reference_velocity(t, h), eta, P)
        worst = max(worst, np.abs(np.linalg.eigvals(A)).max())
    assert worst <= 1.0 + 1e-9


def test_integral_channel_recursion():
    m = discretize(np.zeros((12, 12)), np.zeros((12, 8)), 0.1)
    aug = augment(m, default_observation(), np.eye(6))
    x = np.concatenate([np.zeros(6), np.arange(1.0, 7.0), np.full(6, 0.5)])
    r = np.full(6, 2.0)
    nxt = aug.A_tilde @ x + aug.B_r @ r
    np.testing.assert_allclose(nxt[12:], 0.5 + (r - np.arange(1.0, 7.0)))


def test_one_step_linear_prediction_is_second_order():
    from auv_ftc.vehicle import BodyState, step_nonlinear
    nu0 = np.array([0.3, 0.1, -0.1, 0.05, 0.02, -0.04])
    eta0 = np.array([1.0, 0.5, 0.2, 0.05, -0.03, 0.6])
    f = fault_coefficients({1, 3})
    u = np.linspace(-10, 10, 8)
    dt = 0.01
    Ac, Bc = linearize(nu0, eta0, f, P)
    base = step_nonlinear(BodyState(nu0, eta0), u, f, dt, params=P).as_vector()
    d = np.random.default_rng(0).normal(size=12)
    errs = []
    for eps in (1e-2, 1e-3):
        x = np.concatenate([nu0, eta0]) + eps * d
        true = step_nonlinear(BodyState(x[:6], x[6:]), u, f, dt, params=P).as_vector()
        lin = base + (np.eye(12) + dt * Ac) @ (eps * d)
        errs.append(np.linalg.norm(true - lin))
    assert 50 < errs[0] / errs[1] < 200


def test_b_columns_zero_for_every_model():
    from auv_ftc.harness import pair_fault_space
    for f in pair_fault_space():
        B = input_matrix(P, f)
        assert not B[:, [i - 1 for i in f.failed]].any()


@settings(max_examples=50)
@given(arrays(float, (6, 6), elements=st.floats(-3, 3)))
def test_augmented_weight_symmetric_psd(G):
    Qt = augmented_weight(default_observation(), G @ G.T)
    np.testing.assert_allclose(Qt, Qt.T, atol=1e-12)
    assert np.linalg.eigvalsh(Qt).min() >= -1e-9 * max(1.0, np.abs(Qt).max())
