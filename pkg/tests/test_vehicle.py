import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from auv_ftc.errors import NonFiniteError, SaturationError, SingularAttitudeError
from auv_ftc.vehicle import (
    KGF,
    BodyState,
    FaultModel,
    Thruster,
    VehicleParams,
    build_allocation_matrix,
    coriolis_matrix,
    fault_coefficients,
    healthy,
    kinematic_transform,
    kinematic_transform_many,
    restoring_vector,
    rigid_body_accel,
    rotation_matrix,
    saturate,
    step_nonlinear,
    thrust_to_wrench,
)

S45 = math.sqrt(0.5)
P_DEFAULT = VehicleParams()


def test_kgf_constant():
    assert KGF == 9.80665


def test_mass_matrix_frozen():
    # rigid body plus negated added-mass derivatives
    np.testing.assert_allclose(np.diag(VehicleParams().mass_matrix),
                               [17.0, 24.2, 26.07, 0.28, 0.28, 0.28])


def test_allocation_column_t1_frozen():
    # r = (0.156, 0.111, 0.085), d = (c45, -s45, 0); moment r x d worked by hand
    T = VehicleParams().allocation
    np.testing.assert_allclose(T[:, 0], [S45, -S45, 0.0, 0.085 * S45, 0.085 * S45,
                                         -(0.156 + 0.111) * S45], atol=1e-15)


def test_allocation_vertical_columns_pure_heave_and_moments():
    T = VehicleParams().allocation
    np.testing.assert_allclose(T[:3, 4:], np.tile([[0], [0], [-1]], 4))
    # diagonal vertical pairs cancel each other's roll and pitch
    np.testing.assert_allclose(T[3:5, 4] + T[3:5, 7], 0, atol=1e-15)
    np.testing.assert_allclose(T[3:5, 5] + T[3:5, 6], 0, atol=1e-15)


def test_equal_horizontal_thrust_is_pure_surge_plus_pitch():
    T = VehicleParams().allocation
    w = T @ np.array([10, 10, 10, 10, 0, 0, 0, 0.0])
    np.testing.assert_allclose(w, [40 * S45, 0, 0, 0, 4 * 10 * 0.085 * S45, 0], atol=1e-12)


def test_first_euler_step_frozen():
    u = np.array([10, 10, 10, 10, 0, 0, 0, 0.0])
    s = step_nonlinear(BodyState.zero(), u, healthy(), 0.1)
    expected_acc = [40 * S45 / 17.0, 0, 0, 0, 3.4 * S45 / 0.28, 0]
    np.testing.assert_allclose(s.nu, 0.1 * np.array(expected_acc), atol=1e-12)
    np.testing.assert_array_equal(s.eta, np.zeros(6))


def test_second_step_moves_pose():
    u = np.array([10, 10, 10, 10, 0, 0, 0, 0.0])
    s1 = step_nonlinear(BodyState.zero(), u, healthy(), 0.1)
    s2 = step_nonlinear(s1, u, healthy(), 0.1)
    np.testing.assert_allclose(s2.eta[[0, 4]], 0.1 * s1.nu[[0, 4]])


def test_fault_coefficients_model_two():
    f = fault_coefficients({1, 3}, 1)
    np.testing.assert_array_equal(f.gamma, [0, 1, 0, 1, 1, 1, 1, 1])
    assert f.label == "T1T3"
    assert not f.gamma.flags.writeable


@pytest.mark.parametrize("bad", [{0}, {9}, {-1}])
def test_fault_coefficients_rejects_bad_index(bad):
    with pytest.raises(ValueError):
        fault_coefficients(bad)


def test_fault_model_rejects_nonzero_failed_gamma():
    with pytest.raises(ValueError):
        FaultModel(0, {1}, np.ones(8))
    with pytest.raises(ValueError):
        FaultModel(0, set(), np.full(8, 1.5))


def test_failed_thruster_contributes_nothing():
    T = VehicleParams().allocation
    f = fault_coefficients({2, 4})
    u = np.zeros(8)
    u[[1, 3]] = 30.0
    np.testing.assert_array_equal(thrust_to_wrench(u, f, T), np.zeros(6))


def test_rotation_identity_and_yaw():
    np.testing.assert_allclose(rotation_matrix(0, 0, 0), np.eye(3))
    np.testing.assert_allclose(rotation_matrix(0, 0, math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_kinematic_singularity():
    with pytest.raises(SingularAttitudeError):
        kinematic_transform([0, 0, 0, 0, math.pi / 2 - 1e-6, 0])
    with pytest.raises(SingularAttitudeError):
        BodyState(np.zeros(6), [0, 0, 0, 0, math.pi / 2, 0])
    with pytest.raises(NonFiniteError):
        kinematic_transform_many(np.array([[0, 0, 0, 0, np.nan, 0]]))


def test_coriolis_skew_symmetric():
    C = coriolis_matrix(np.array([0.3, -0.2, 0.1, 0.05, -0.4, 0.2]), VehicleParams())
    np.testing.assert_allclose(C, -C.T)


def test_restoring_righting_moment():
    p = VehicleParams()
    g = restoring_vector(np.array([0, 0, 0, 0.1, -0.2, 0.3]), p)
    wb = p.dry_mass * p.gravity * p.restoring_arm_z
    np.testing.assert_allclose(g, [0, 0, 0, wb * math.cos(-0.2) * math.sin(0.1), wb * math.sin(-0.2), 0])


def test_saturation_policies():
    u = np.array([80.0, -20, 0, 0, 0, 0, 0, 10])
    np.testing.assert_array_equal(saturate(u, 40, "clamp")[:2], [40, -20])
    np.testing.assert_allclose(saturate(u, 40, "scale"), u / 2)
    with pytest.raises(SaturationError):
        saturate(u, 40, "error")
    with pytest.raises(ValueError):
        saturate(u, 40, "bogus")


def test_step_rejects_nonpositive_dt_and_nan():
    with pytest.raises(ValueError):
        step_nonlinear(BodyState.zero(), np.zeros(8), healthy(), 0.0)
    with pytest.raises(NonFiniteError):
        step_nonlinear(BodyState.zero(), np.full(8, np.nan), healthy(), 0.1, saturation="clamp")


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(dry_mass=-1)
    with pytest.raises(ValueError):
        VehicleParams(added_mass_linear=(1.0, 0, 0))
    with pytest.raises(ValueError):
        VehicleParams(thrusters=VehicleParams().thrusters[:7])
    with pytest.raises(ValueError):
        Thruster((0, 0, 0), (0, 0, 0))


def test_custom_thruster_list_builds_allocation():
    p = VehicleParams()
    np.testing.assert_array_equal(build_allocation_matrix(p), p.allocation)


# --- worked examples --------------------------------------------------------

def test_kinematics_at_zero_attitude_is_identity():
    np.testing.assert_array_equal(kinematic_transform(np.zeros(6)), np.eye(6))


def test_zero_thrust_zero_wrench():
    np.testing.assert_array_equal(thrust_to_wrench(np.zeros(8), healthy(), P_DEFAULT.allocation), 0)


def test_vertical_thruster_at_origin_column():
    th = list(P_DEFAULT.thrusters)
    th[4] = Thruster((0, 0, 0), (0, 0, -1))
    col = build_allocation_matrix(VehicleParams(thrusters=tuple(th)))[:, 4]
    np.testing.assert_array_equal(col, [0, 0, -1, 0, 0, 0])


def test_force_parts_unit_norm():
    np.testing.assert_allclose(np.linalg.norm(P_DEFAULT.allocation[:3], axis=0), 1.0)


def test_equilibrium_has_zero_acceleration():
    np.testing.assert_array_equal(rigid_body_accel(BodyState.zero(), np.zeros(6), P_DEFAULT), 0)
    s = step_nonlinear(BodyState.zero(), np.zeros(8), healthy(), 0.01, np.zeros(6))
    assert s == BodyState.zero()


def test_pure_heave_acceleration():
    acc = rigid_body_accel(BodyState.zero(), [0, 0, 5.0, 0, 0, 0], P_DEFAULT)
    np.testing.assert_allclose(acc, [0, 0, 5.0 / (11.5 + 14.57), 0, 0, 0], atol=1e-15)


def test_roll_restoring_moment_opposes_roll():
    for phi in (0.2, -0.2):
        acc = rigid_body_accel(BodyState(np.zeros(6), [0, 0, 0, phi, 0, 0]), np.zeros(6), P_DEFAULT)
        assert np.sign(acc[3]) == -np.sign(phi)


def test_pure_yaw_rate_kinematics():
    s = step_nonlinear(BodyState([0, 0, 0, 0, 0, 0.3], np.zeros(6)), np.zeros(8), healthy(), 0.01)
    np.testing.assert_array_equal(s.eta[:3], 0)
    assert s.eta[5] == pytest.approx(0.003)


def test_total_failure_and_healthy_gamma():
    np.testing.assert_array_equal(fault_coefficients(range(1, 9)).gamma, 0)
    h = healthy()
    assert h.failed == frozenset() and h.label == "healthy"
    np.testing.assert_array_equal(h.gamma, 1)


def _simulate(dt, T=2.0):
    s = BodyState([0.3, -0.2, 0.1, 0.2, -0.1, 0.3], [0, 0, 0, 0.1, 0.05, 0.2])
    u = np.array([5.0, -3, 2, 1, 4, -2, 1, 0])
    for _ in range(int(round(T / dt))):
        s = step_nonlinear(s, u, healthy(), dt)
    return s.as_vector()


def test_forward_euler_first_order():
    ref = _simulate(1e-4)
    errs = [np.linalg.norm(_simulate(dt) - ref) for dt in (1e-2, 1e-3)]
    # a decade of dt buys about a decade of error (measured against dt/10 of the finest)
    assert 5 < errs[0] / errs[1] < 20


def test_trajectory_ignores_failed_thruster_commands():
    f = fault_coefficients({2, 4})
    a = b = BodyState.zero()
    u = np.linspace(-20, 20, 8)
    v = u.copy()
    v[[1, 3]] = [33.0, -17.0]
    for _ in range(50):
        a = step_nonlinear(a, u, f, 0.01)
        b = step_nonlinear(b, v, f, 0.01)
    assert a == b


@settings(max_examples=40, deadline=None)
@given(arrays(float, 6, elements=st.floats(-1, 1)))
def test_energy_never_increases_without_thrust(nu0):
    # kinetic energy 1/2 nu' M nu with centre of gravity on the centre of buoyancy
    p = VehicleParams(restoring_arm_z=0.0)
    M = p.mass_matrix
    s = BodyState(nu0, np.zeros(6))
    e = 0.5 * nu0 @ M @ nu0
    for _ in range(200):
        s = step_nonlinear(s, np.zeros(8), healthy(), 0.01, params=p)
        e_next = 0.5 * s.nu @ M @ s.nu
        assert e_next <= e + 1e-12
        e = e_next
