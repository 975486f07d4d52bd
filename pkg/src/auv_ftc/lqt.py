"""Finite-horizon discrete linear-quadratic tracking.

The tracker minimises

    1/2 x_N' P x_N + 1/2 sum_k (x_k' Qt x_k + u_k' R u_k)

subject to ``x[k+1] = A_k x_k + B_k u_k + Br r_k``.  Writing the costate as
``lambda_k = S_k x_k - Tau_k`` closes the two-point boundary problem with the
backward recursions

    K_k  = (R + B' S_{k+1} B)^-1 B' S_{k+1} A
    Kv_k = (R + B' S_{k+1} B)^-1 B'
    S_k  = Qt + A' S_{k+1} (A - B K_k)
    Tau_k = (A - B K_k)' (Tau_{k+1} - S_{k+1} Br r_k)

with ``S_N = P``, ``Tau_N = 0``, and the control law

    u_k = Kv_k Tau_{k+1} - K_k x_k - Kv_k S_{k+1} Br r_k
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SingularMatrixError, WeightError
from .linearization import AugmentedModel

PSD_TOL = 1e-9


def _is_symmetric(X, tol=1e-10):
    return np.allclose(X, np.swapaxes(X, -1, -2), atol=tol * max(1.0, float(np.abs(X).max(initial=0.0))))


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Terminal weight ``P`` (None -> the augmented stage weight), stage weight
    ``Q`` and input weight ``R``."""

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if not _is_symmetric(Q) or np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise WeightError("Q must be symmetric positive semidefinite")
        if not _is_symmetric(R):
            raise WeightError("R must be symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise WeightError("R must be positive definite") from None
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.P is not None:
            P = np.asarray(self.P, dtype=float)
            if not _is_symmetric(P) or np.linalg.eigvalsh(P).min() < -PSD_TOL * max(1.0, np.abs(P).max()):
                raise WeightError("P must be symmetric positive semidefinite")
            object.__setattr__(self, "P", P)

    @classmethod
    def diagonal(cls, q: Sequence[float], r: float | Sequence[float], n_inputs: int = 8) -> "CostWeights":
        r = np.broadcast_to(np.asarray(r, dtype=float), (n_inputs,))
        return cls(np.diag(np.asarray(q, dtype=float)), np.diag(r))


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Output of one backward sweep.

    Arrays may carry a leading batch axis (one entry per fault hypothesis);
    the unbatched layout is ``S (N+1, n, n)``, ``Tau (N+1, n)``,
    ``K (N, m, n)``, ``Kv (N, m, n)``.
    """

    S: np.ndarray
    Tau: np.ndarray
    K: np.ndarray
    Kv: np.ndarray
    Br: np.ndarray
    horizon: int
    fault_id: int | None = None

    def __post_init__(self):
        N = self.horizon
        if self.S.shape[-3] != N + 1 or self.Tau.shape[-2] != N + 1:
            raise ValueError("S and Tau need N+1 entries")
        if self.K.shape[-3] != N or self.Kv.shape[-3] != N:
            raise ValueError("K and Kv need N entries")


def sweep_arrays(A: np.ndarray, B: np.ndarray, Br: np.ndarray, Qt: np.ndarray, P: np.ndarray,
                 R: np.ndarray, r: np.ndarray, check: bool = True):
    """Backward recursion on raw arrays.

    ``A`` is ``(N, n, n)``; ``B`` is ``(..., N, n, m)`` where the leading axes
    index independent problems sharing A; ``r`` is ``(N, p)`` (only r_0..r_{N-1}
    enter).  Returns ``S, Tau, K, Kv`` with the batch axes of ``B`` leading.
    """
    N, n, _ = A.shape
    m = B.shape[-1]
    batch = B.shape[:-3]
    S = np.empty(batch + (N + 1, n, n))
    Tau = np.empty(batch + (N + 1, n))
    K = np.empty(batch + (N, m, n))
    Kv = np.empty(batch + (N, m, n))
    S[..., N, :, :] = P
    Tau[..., N, :] = 0.0
    c = r[:N] @ Br.T  # (N, n) reference injection Br r_k
    for k in range(N - 1, -1, -1):
        Ak = A[k]
        Bk = B[..., k, :, :]
        Sn = S[..., k + 1, :, :]
        BtS = np.swapaxes(Bk, -1, -2) @ Sn
        G = R + BtS @ Bk
        try:
            # columns [B'S A | B'] solved together
            sol = np.linalg.solve(G, np.concatenate([BtS @ Ak, np.swapaxes(Bk, -1, -2)], axis=-1))
        except np.linalg.LinAlgError:
            raise SingularMatrixError(f"R + B'SB singular at step {k}") from None
        Kk, Kvk = sol[..., :n], sol[..., n:]
        Acl = Ak - Bk @ Kk
        Sk = Qt + Ak.T @ Sn @ Acl
        Sk = 0.5 * (Sk + np.swapaxes(Sk, -1, -2))
        S[..., k, :, :] = Sk
        K[..., k, :, :] = Kk
        Kv[..., k, :, :] = Kvk
        Tau[..., k, :] = (np.swapaxes(Acl, -1, -2)
                          @ (Tau[..., k + 1, :] - Sn @ c[k])[..., None])[..., 0]
    if not np.all(np.isfinite(S)):
        raise SingularMatrixError("Riccati recursion produced non-finite values")
    if check:
        ev = np.linalg.eigvalsh(S)
        scale = np.maximum(1.0, np.abs(ev).max(axis=-1, keepdims=True))
        if np.any(ev < -PSD_TOL * scale):
            raise WeightError("Riccati matrix lost positive semidefiniteness")
    return S, Tau, K, Kv


def backward_sweep(models: Sequence[AugmentedModel], weights: CostWeights,
                   ref: Sequence[Sequence[float]], N: int | None = None,
                   fault_id: int | None = None) -> GainSchedule:
    """Backward Riccati and feedforward sweep over a horizon of ``N`` steps.

    ``models[k]`` supplies the augmented matrices at step ``k``; a single
    model is reused for every step.  The stage weight is the model's
    ``Q_tilde``; ``weights.Q`` is the output weight it was built from and
    ``weights.P`` defaults to ``Q_tilde``.
    """
    if isinstance(models, AugmentedModel):
        models = [models]
    models = list(models)
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if N is None:
        N = len(models) if len(models) > 1 else len(ref) - 1
    if N < 1:
        raise ValueError("horizon must be at least one step")
    if len(models) == 1:
        models = models * N
    if len(models) < N:
        raise ValueError(f"need {N} models, got {len(models)}")
    if len(ref) < N:
        raise ValueError(f"need at least {N} reference samples, got {len(ref)}")
    A = np.stack([m.A_tilde for m in models[:N]])
    B = np.stack([m.B_tilde for m in models[:N]])
    Qt = models[0].Q_tilde
    P = Qt if weights.P is None else weights.P
    if weights.R.shape != (B.shape[-1],) * 2:
        raise ValueError("R does not match the number of inputs")
    S, Tau, K, Kv = sweep_arrays(A, B, models[0].B_r, Qt, P, weights.R, ref[:N])
    return GainSchedule(S, Tau, K, Kv, models[0].B_r, N, fault_id)


def control_law(schedule: GainSchedule, k: int, x_tilde: Sequence[float], r_k: Sequence[float]) -> np.ndarray:
    """Tracking control ``Kv Tau_{k+1} - K x - Kv S_{k+1} Br r_k`` at step ``k``."""
    if not 0 <= k < schedule.horizon:
        raise IndexError(f"step {k} outside horizon 0..{schedule.horizon - 1}")
    x = np.asarray(x_tilde, dtype=float)
    r = np.asarray(r_k, dtype=float)
    Kv = schedule.Kv[..., k, :, :]
    ff = schedule.Tau[..., k + 1, :] - (schedule.S[..., k + 1, :, :] @ (schedule.Br @ r))
    return (Kv @ ff[..., None])[..., 0] - (schedule.K[..., k, :, :] @ x[..., None])[..., 0]
