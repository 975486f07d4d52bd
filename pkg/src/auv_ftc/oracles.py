"""Independent reference computations used to check the fast code paths.

The tracking sweep is compared with a dense quadratic program over the
stacked inputs; the analytic Jacobian with central differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linearization import state_jacobian, state_jacobian_fd
from .lqt import control_law, GainSchedule, sweep_arrays
from .vehicle import VehicleParams


@dataclass(frozen=True)
class LQTInstance:
    A: np.ndarray   # (N, n, n)
    B: np.ndarray   # (N, n, m)
    Br: np.ndarray  # (n, p)
    Qt: np.ndarray
    P: np.ndarray
    R: np.ndarray
    r: np.ndarray   # (N, p)
    x0: np.ndarray

    @property
    def horizon(self) -> int:
        return self.A.shape[0]


def random_instance(rng: np.random.Generator, max_state: int = 4, max_horizon: int = 5) -> LQTInstance:
    n = int(rng.integers(1, max_state + 1))
    m = int(rng.integers(1, n + 1))
    p = int(rng.integers(1, n + 1))
    N = int(rng.integers(1, max_horizon + 1))
    A = rng.normal(size=(N, n, n)) / np.sqrt(n) + np.eye(n)
    B = rng.normal(size=(N, n, m))
    Br = rng.normal(size=(n, p))
    G = rng.normal(size=(n, n))
    Qt = G @ G.T / n
    G = rng.normal(size=(n, n))
    P = G @ G.T / n
    G = rng.normal(size=(m, m))
    R = G @ G.T / m + 0.1 * np.eye(m)
    return LQTInstance(A, B, Br, Qt, P, R, rng.normal(size=(N, p)), rng.normal(size=n))


def tracking_cost(inst: LQTInstance, U: np.ndarray) -> float:
    """``1/2 x_N' P x_N + 1/2 sum (x_k' Qt x_k + u_k' R u_k)`` along the rollout."""
    x = inst.x0.copy()
    J = 0.0
    for k in range(inst.horizon):
        u = U[k]
        J += 0.5 * (x @ inst.Qt @ x + u @ inst.R @ u)
        x = inst.A[k] @ x + inst.B[k] @ u + inst.Br @ inst.r[k]
    return J + 0.5 * x @ inst.P @ x


def dense_optimum(inst: LQTInstance) -> tuple[np.ndarray, float]:
    """Minimise the tracking cost over all stacked inputs at once.

    Writes ``x_k = c_k + G_k U`` and solves the normal equations of the
    resulting quadratic in ``U``.
    """
    N = inst.horizon
    n, m = inst.B.shape[1:]
    c = [inst.x0]
    G = [np.zeros((n, N * m))]
    for k in range(N):
        Gk = inst.A[k] @ G[k]
        Gk[:, k * m:(k + 1) * m] += inst.B[k]
        G.append(Gk)
        c.append(inst.A[k] @ c[k] + inst.Br @ inst.r[k])
    H = np.kron(np.eye(N), inst.R)
    g = np.zeros(N * m)
    for k in range(N + 1):
        W = inst.P if k == N else inst.Qt
        H += G[k].T @ W @ G[k]
        g += G[k].T @ W @ c[k]
    U = np.linalg.solve(H, -g).reshape(N, m)
    return U, tracking_cost(inst, U)


def sweep_rollout(inst: LQTInstance) -> tuple[np.ndarray, float]:
    """Inputs and cost of the closed-loop rollout of the backward sweep."""
    N = inst.horizon
    S, Tau, K, Kv = sweep_arrays(inst.A, inst.B, inst.Br, inst.Qt, inst.P, inst.R, inst.r)
    sched = GainSchedule(S, Tau, K, Kv, inst.Br, N)
    x = inst.x0.copy()
    U = np.empty((N, inst.B.shape[2]))
    for k in range(N):
        U[k] = control_law(sched, k, x, inst.r[k])
        x = inst.A[k] @ x + inst.B[k] @ U[k] + inst.Br @ inst.r[k]
    return U, tracking_cost(inst, U)


def lqt_oracle_errors(n_instances: int = 25, seed: int = 0) -> np.ndarray:
    """Relative cost gap between sweep rollout and dense optimum per instance."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_instances)
    for i in range(n_instances):
        inst = random_instance(rng)
        _, J_sweep = sweep_rollout(inst)
        _, J_dense = dense_optimum(inst)
        out[i] = abs(J_sweep - J_dense) / max(abs(J_dense), 1e-12)
    return out


def random_reference_point(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    nu = rng.uniform(-1.0, 1.0, 6)
    eta = np.concatenate([rng.uniform(-5.0, 5.0, 3),
                          rng.uniform(-1.2, 1.2, 2), rng.uniform(-np.pi, np.pi, 1)])
    return nu, eta


def jacobian_relative_errors(n_points: int = 10, seed: int = 0,
                             params: VehicleParams | None = None,
                             floor: float = 1e-6) -> np.ndarray:
    """Largest componentwise relative error, analytic vs central differences.

    Entries are compared relative to ``max(|fd|, floor * max|fd|)`` so that
    structurally zero entries do not divide by round-off.
    """
    params = params or VehicleParams()
    rng = np.random.default_rng(seed)
    out = np.empty(n_points)
    for i in range(n_points):
        nu, eta = random_reference_point(rng)
        a = state_jacobian(nu, eta, params)
        f = state_jacobian_fd(nu, eta, params)
        scale = np.maximum(np.abs(f), floor * np.abs(f).max())
        out[i] = float(np.max(np.abs(a - f) / scale))
    return out
