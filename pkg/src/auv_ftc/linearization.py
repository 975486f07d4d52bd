"""Discrete linear time-varying model along a reference, and its integral augmentation.

State ordering is ``x = [nu; eta]`` (12), the augmented state appends the
accumulated output error ``z`` (6):

    x_tilde[k+1] = A_tilde x_tilde[k] + B_tilde u[k] + B_r r[k]
    A_tilde = [[A, 0], [-H, I]],  B_tilde = [[B], [0]],  B_r = [[0], [I]]
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientError, WeightError
from .vehicle import (
    FaultModel,
    VehicleParams,
    _nu_dot,
    _skew,
    check_attitude,
    euler_rate_matrix,
    kinematic_transform_many,
    rotation_matrix,
)

N_STATE = 12
N_OUT = 6


@dataclass(frozen=True, eq=False)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    dt: float
    k: int = 0


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    B_r: np.ndarray
    H_tilde: np.ndarray
    Q_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.A_tilde.shape[0]


def _axis_rotations(phi, theta, psi):
    """Elementary rotations about x, y, z, each ``(..., 3, 3)``."""
    shape = np.shape(phi) + (3, 3)
    Rx, Ry, Rz = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    c, s = np.cos(phi), np.sin(phi)
    Rx[..., 0, 0] = 1.0
    Rx[..., 1, 1], Rx[..., 1, 2], Rx[..., 2, 1], Rx[..., 2, 2] = c, -s, s, c
    c, s = np.cos(theta), np.sin(theta)
    Ry[..., 1, 1] = 1.0
    Ry[..., 0, 0], Ry[..., 0, 2], Ry[..., 2, 0], Ry[..., 2, 2] = c, s, -s, c
    c, s = np.cos(psi), np.sin(psi)
    Rz[..., 2, 2] = 1.0
    Rz[..., 0, 0], Rz[..., 0, 1], Rz[..., 1, 0], Rz[..., 1, 1] = c, -s, s, c
    return Rx, Ry, Rz


def _mv(A, v):
    return (A @ v[..., None])[..., 0]


def _kinematic_jacobian(nu_t: np.ndarray, eta_t: np.ndarray) -> np.ndarray:
    """d(J(eta) nu_t)/d eta evaluated at ``eta_t`` (``(..., 6, 6)``)."""
    phi, theta, psi = eta_t[..., 3], eta_t[..., 4], eta_t[..., 5]
    v1, v2 = nu_t[..., :3], nu_t[..., 3:]
    Rx, Ry, Rz = _axis_rotations(phi, theta, psi)
    RzRy = Rz @ Ry
    R = RzRy @ Rx
    zero = np.zeros(np.shape(phi))
    out = np.zeros(np.shape(phi) + (6, 6))
    # e_i x w written out for the three unit axes
    out[..., :3, 3] = _mv(R, np.stack([zero, -v1[..., 2], v1[..., 1]], axis=-1))
    w = _mv(Rx, v1)
    out[..., :3, 4] = _mv(RzRy, np.stack([w[..., 2], zero, -w[..., 0]], axis=-1))
    w = _mv(R, v1)
    out[..., :3, 5] = np.stack([-w[..., 1], w[..., 0], zero], axis=-1)

    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth, tth = np.cos(theta), np.sin(theta), np.tan(theta)
    q, r = v2[..., 1], v2[..., 2]
    c2 = cth * cth
    out[..., 3, 3] = (cphi * q - sphi * r) * tth
    out[..., 4, 3] = -sphi * q - cphi * r
    out[..., 5, 3] = (cphi * q - sphi * r) / cth
    out[..., 3, 4] = (sphi * q + cphi * r) / c2
    out[..., 5, 4] = (sphi * q + cphi * r) * sth / c2
    return out


def _coriolis_jacobian(nu: np.ndarray, params: VehicleParams) -> np.ndarray:
    M = params.mass_matrix
    M1, M2 = M[:3, :3], M[3:, 3:]
    v1, v2 = nu[..., :3], nu[..., 3:]
    a1, a2 = v1 @ M1.T, v2 @ M2.T
    Sa1 = _skew(a1)
    Jc = np.zeros(nu.shape[:-1] + (6, 6))
    Jc[..., :3, :3] = _skew(v2) @ M1
    Jc[..., :3, 3:] = -Sa1
    Jc[..., 3:, :3] = _skew(v1) @ M1 - Sa1
    Jc[..., 3:, 3:] = _skew(v2) @ M2 - _skew(a2)
    return Jc


def _damping_jacobian(nu: np.ndarray, params: VehicleParams) -> np.ndarray:
    d = params.linear_damping_array + 2.0 * params.quadratic_damping_array * np.abs(nu)
    out = np.zeros(nu.shape + (6,))
    idx = np.arange(6)
    out[..., idx, idx] = d
    return out


def _restoring_jacobian(eta: np.ndarray, params: VehicleParams) -> np.ndarray:
    phi, theta = eta[..., 3], eta[..., 4]
    wb = params.weight * params.restoring_arm_z
    G = np.zeros(eta.shape + (6,))
    G[..., 3, 3] = wb * np.cos(theta) * np.cos(phi)
    G[..., 3, 4] = -wb * np.sin(theta) * np.sin(phi)
    G[..., 4, 4] = wb * np.cos(theta)
    return G


def input_matrix(params: VehicleParams, fault: FaultModel | None = None) -> np.ndarray:
    """Continuous input matrix ``[M^-1; 0] T Gamma`` (12x8)."""
    Bc = np.zeros((N_STATE, params.allocation.shape[1]))
    Bc[:6] = params.mass_matrix_inv @ params.allocation
    if fault is not None:
        Bc = Bc * fault.gamma
    return Bc


def state_jacobian(ref_nu, ref_eta, params: VehicleParams) -> np.ndarray:
    """Analytic continuous-time state matrix at the reference point.

    Inputs may carry matching leading batch axes; the result is
    ``(..., 12, 12)``.
    """
    nu = np.asarray(ref_nu, dtype=float)
    eta = np.asarray(ref_eta, dtype=float)
    Minv = params.mass_matrix_inv
    Ac = np.zeros(nu.shape[:-1] + (N_STATE, N_STATE))
    Ac[..., :6, :6] = -Minv @ (_coriolis_jacobian(nu, params) + _damping_jacobian(nu, params))
    Ac[..., :6, 6:] = -Minv @ _restoring_jacobian(eta, params)
    Ac[..., 6:, :6] = kinematic_transform_many(eta)
    Ac[..., 6:, 6:] = _kinematic_jacobian(nu, eta)
    return Ac


def _continuous_rhs(x: np.ndarray, params: VehicleParams) -> np.ndarray:
    nu, eta = x[:6], x[6:]
    J = np.zeros((6, 6))
    J[:3, :3] = rotation_matrix(*eta[3:])
    J[3:, 3:] = euler_rate_matrix(eta[3], eta[4])
    return np.concatenate([_nu_dot(nu, eta, np.zeros(6), params), J @ nu])


def state_jacobian_fd(ref_nu, ref_eta, params: VehicleParams, rel_step: float = 1e-5) -> np.ndarray:
    """Central-difference state matrix; fallback for non-analytic models.

    The default step sits near the cube root of machine epsilon, where
    truncation and round-off error balance.
    """
    x0 = np.concatenate([np.asarray(ref_nu, float), np.asarray(ref_eta, float)])
    check_attitude(x0[10])
    Ac = np.empty((N_STATE, N_STATE))
    for j in range(N_STATE):
        h = rel_step * max(1.0, abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        Ac[:, j] = (_continuous_rhs(xp, params) - _continuous_rhs(xm, params)) / (2 * h)
    return Ac


def linearize(ref_nu, ref_eta, fault: FaultModel, params: VehicleParams,
              method: str = "analytic") -> tuple[np.ndarray, np.ndarray]:
    """Continuous Jacobians ``(A_c, B_c)`` of the vehicle model at a reference point.

    ``method`` is "analytic" or "fd" (central finite differences).
    """
    if method == "analytic":
        Ac = state_jacobian(ref_nu, ref_eta, params)
    elif method == "fd":
        Ac = state_jacobian_fd(ref_nu, ref_eta, params)
    else:
        raise ValueError(f"unknown linearization method {method!r}")
    return Ac, input_matrix(params, fault)


def discretize(A_c: np.ndarray, B_c: np.ndarray, dt: float, k: int = 0) -> LinearModel:
    """Forward-Euler sampling: ``A = I + dt A_c``, ``B = dt B_c``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    A_c = np.asarray(A_c, dtype=float)
    A = np.eye(A_c.shape[0]) + dt * A_c
    return LinearModel(A, dt * np.asarray(B_c, dtype=float), dt, k)


def default_observation() -> np.ndarray:
    """Pose-only measurement ``H = [0 I6]``."""
    H = np.zeros((N_OUT, N_STATE))
    H[:, 6:] = np.eye(N_OUT)
    return H


def check_observation(H: np.ndarray) -> None:
    H = np.asarray(H, dtype=float)
    if np.linalg.matrix_rank(H) < H.shape[0]:
        raise RankDeficientError(f"observation matrix {H.shape} is not full row rank")


def augmented_weight(H: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Augmented state weight.

    A square output weight Q (p x p, p = rows of H) gives
    ``[[H'QH, H'Q], [QH, Q]]``; a state weight (n x n) gives ``diag(Q, 0)``.
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    p, n = H.shape
    if Q.shape == (p, p):
        L = np.hstack([H, np.eye(p)])
        return L.T @ Q @ L
    if Q.shape == (n, n):
        Qt = np.zeros((n + p, n + p))
        Qt[:n, :n] = Q
        return Qt
    raise ValueError(f"weight of shape {Q.shape} fits neither the output ({p}) nor state ({n}) size")


def augment_matrices(A: np.ndarray, B: np.ndarray, H: np.ndarray):
    """Block matrices ``(A_tilde, B_tilde, B_r, H_tilde)`` without validation.

    ``A`` and ``B`` may carry leading batch dimensions.
    """
    p, n = H.shape
    batch = A.shape[:-2]
    At = np.zeros(batch + (n + p, n + p))
    At[..., :n, :n] = A
    At[..., n:, :n] = -H
    At[..., n:, n:] = np.eye(p)
    Bt = np.zeros(B.shape[:-2] + (n + p, B.shape[-1]))
    Bt[..., :n, :] = B
    Br = np.zeros((n + p, p))
    Br[n:] = np.eye(p)
    Ht = np.hstack([H, np.zeros((p, p))])
    return At, Bt, Br, Ht


def augment(model: LinearModel, H: np.ndarray, Q: np.ndarray, R: np.ndarray | None = None) -> AugmentedModel:
    """Integral-augmented model used by the tracking controller and filters."""
    H = np.asarray(H, dtype=float)
    check_observation(H)
    Q = np.asarray(Q, dtype=float)
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-12:
        raise WeightError("Q must be symmetric positive semidefinite")
    if R is not None:
        R = np.asarray(R, dtype=float)
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise WeightError("R must be symmetric positive definite")
    At, Bt, Br, Ht = augment_matrices(model.A, model.B, H)
    return AugmentedModel(At, Bt, Br, Ht, augmented_weight(H, Q))
