import time

import numpy as np
import pytest

from auv_ftc.errors import WeightError
from auv_ftc.linearization import AugmentedModel
from auv_ftc.lqt import CostWeights, GainSchedule, backward_sweep, control_law, sweep_arrays
from auv_ftc.oracles import dense_optimum, lqt_oracle_errors, random_instance, sweep_rollout


def test_one_step_scalar_frozen():
    # J = 1/2 u^2 R + 1/2 P (x0 + u + r)^2  ->  u* = -P (x0 + r) / (R + P) = -1
    A = np.ones((1, 1, 1))
    B = np.ones((1, 1, 1))
    Br = np.ones((1, 1))
    S, Tau, K, Kv = sweep_arrays(A, B, Br, np.zeros((1, 1)), np.array([[2.0]]), np.eye(1),
                                 np.array([[0.5]]))
    sched = GainSchedule(S, Tau, K, Kv, Br, 1)
    assert control_law(sched, 0, [1.0], [0.5])[0] == pytest.approx(-1.0, abs=1e-15)


def test_sweep_matches_dense_oracle():
    errs = lqt_oracle_errors(10, seed=7)
    assert errs.max() <= 1e-8


def test_sweep_controls_match_dense_controls():
    inst = random_instance(np.random.default_rng(11), 4, 5)
    U1, _ = sweep_rollout(inst)
    U2, _ = dense_optimum(inst)
    np.testing.assert_allclose(U1, U2, atol=1e-8)


def test_riccati_matrices_symmetric_psd():
    inst = random_instance(np.random.default_rng(2), 4, 5)
    S, *_ = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, inst.r)
    for Sk in S:
        np.testing.assert_allclose(Sk, Sk.T, atol=1e-10)
        assert np.linalg.eigvalsh(Sk).min() >= -1e-9


def test_batched_inputs_match_individual():
    rng = np.random.default_rng(5)
    inst = random_instance(rng, 3, 4)
    B2 = np.stack([inst.B, rng.normal(size=inst.B.shape)])
    S, Tau, K, Kv = sweep_arrays(inst.A, B2, inst.Br, inst.Qt, inst.P, inst.R, inst.r)
    for i in range(2):
        Si, Ti, Ki, Kvi = sweep_arrays(inst.A, B2[i], inst.Br, inst.Qt, inst.P, inst.R, inst.r)
        np.testing.assert_allclose(S[i], Si)
        np.testing.assert_allclose(K[i], Ki)


def test_backward_sweep_reuses_single_model():
    n, m, p = 3, 2, 1
    H = np.array([[1.0, 0, 0]])
    At = np.eye(n + p)
    At[n:, :n] = -H
    Bt = np.zeros((n + p, m))
    Bt[:2] = np.eye(2)
    Br = np.zeros((n + p, p))
    Br[n:] = 1
    L = np.hstack([H, np.eye(p)])
    model = AugmentedModel(At, Bt, Br, np.hstack([H, np.zeros((p, p))]), L.T @ L)
    w = CostWeights(np.eye(1), np.eye(2))
    sched = backward_sweep(model, w, np.zeros((6, 1)), N=5)
    assert sched.horizon == 5 and sched.K.shape == (5, 2, 4)
    with pytest.raises(ValueError):
        backward_sweep(model, CostWeights(np.eye(1), np.eye(3)), np.zeros((6, 1)), N=5)
    with pytest.raises(IndexError):
        control_law(sched, 5, np.zeros(4), [0.0])


def test_cost_weight_validation():
    with pytest.raises(WeightError):
        CostWeights(np.array([[1.0, 2], [0, 1]]), np.eye(2))
    with pytest.raises(WeightError):
        CostWeights(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(WeightError):
        CostWeights(np.eye(2), np.eye(2), P=-np.eye(2))
    w = CostWeights.diagonal([1, 2], 0.5, n_inputs=3)
    np.testing.assert_array_equal(np.diag(w.R), [0.5] * 3)


def test_oracle_runtime_budget():
    t0 = time.perf_counter()
    lqt_oracle_errors(25, seed=0)
    assert time.perf_counter() - t0 < 5.0


# --- worked examples --------------------------------------------------------

def _scalar(Qt=1.0, P=1.0, N=1, r=0.0):
    A = np.ones((N, 1, 1))
    B = np.ones((N, 1, 1))
    Br = np.ones((1, 1))
    return sweep_arrays(A, B, Br, np.array([[Qt]]), np.array([[P]]), np.eye(1), np.full((N, 1), r))


def test_scalar_riccati_frozen():
    S, Tau, K, Kv = _scalar()
    assert K[0, 0, 0] == pytest.approx(0.5)
    assert S[0, 0, 0] == pytest.approx(1.5)


def test_zero_weights_give_zero_gains():
    S, Tau, K, Kv = _scalar(Qt=0.0, P=0.0, N=4)
    assert not S.any() and not Tau.any() and not K.any()


def test_regulation_reduces_to_state_feedback():
    inst = random_instance(np.random.default_rng(4), 4, 5)
    r = np.zeros_like(inst.r)
    S, Tau, K, Kv = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, r)
    assert not Tau.any()
    sched = GainSchedule(S, Tau, K, Kv, inst.Br, inst.horizon)
    x = np.arange(1.0, inst.A.shape[1] + 1)
    np.testing.assert_allclose(control_law(sched, 0, x, r[0]), -K[0] @ x)
    np.testing.assert_array_equal(control_law(sched, 0, np.zeros_like(x), r[0]), 0)


def test_regulation_matches_textbook_lqr_recursion():
    # S = Q + A'SA - A'SB (R + B'SB)^-1 B'SA, written out independently
    inst = random_instance(np.random.default_rng(8), 4, 5)
    S_ref = inst.P
    gains = []
    for k in reversed(range(inst.horizon)):
        A, B = inst.A[k], inst.B[k]
        G = np.linalg.solve(inst.R + B.T @ S_ref @ B, B.T @ S_ref @ A)
        gains.append(G)
        S_ref = inst.Qt + A.T @ S_ref @ A - A.T @ S_ref @ B @ G
    gains.reverse()
    S, _, K, _ = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, np.zeros_like(inst.r))
    np.testing.assert_allclose(K, np.stack(gains), atol=1e-10)
    np.testing.assert_allclose(S[0], S_ref, atol=1e-10)


def test_two_state_three_step_oracle():
    rng = np.random.default_rng(21)
    while True:
        inst = random_instance(rng, 2, 3)
        if inst.A.shape[1:] == (2, 2) and inst.B.shape[2] == 1 and inst.horizon == 3:
            break
    _, J_sweep = sweep_rollout(inst)
    _, J_dense = dense_optimum(inst)
    assert abs(J_sweep - J_dense) <= 1e-8 * abs(J_dense)


def test_sweep_is_deterministic():
    inst = random_instance(np.random.default_rng(3), 4, 5)
    a = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, inst.r)
    b = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, inst.r)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()
