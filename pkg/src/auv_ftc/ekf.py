"""Model-conditional Kalman filters, one per fault hypothesis."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NonFiniteError, SingularCovarianceError
from .linearization import AugmentedModel, state_jacobian
from .supervisor import log_likelihood
from .vehicle import FaultModel, VehicleParams, _nu_dot, kinematic_transform_many


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """One entry of the filter bank.

    ``x_hat`` and ``P_cov`` live in the augmented coordinates used by the
    tracker; ``last_innovation``/``last_innovation_cov`` are set by the most
    recent update and consumed by the supervisor.
    """

    fault: FaultModel
    x_hat: np.ndarray
    P_cov: np.ndarray
    last_innovation: np.ndarray | None = None
    last_innovation_cov: np.ndarray | None = None
    posterior: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.posterior <= 1.0:
            raise ValueError("posterior must lie in [0, 1]")

    @classmethod
    def initial(cls, fault: FaultModel, n: int, p0: float = 1e-2, posterior: float = 0.0,
                x0=None) -> "Hypothesis":
        x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        return cls(fault, x, p0 * np.eye(n), None, None, posterior)


def augmented_process_cov(Q_proc: np.ndarray, R_meas: np.ndarray) -> np.ndarray:
    """Process noise of the augmented state, ``N diag(Q_proc, R_meas) N'``.

    The integral channel is driven by the negated measurement noise, so with
    ``N = diag(I, -I)`` the result is block diagonal.
    """
    n, p = Q_proc.shape[0], R_meas.shape[0]
    out = np.zeros((n + p, n + p))
    out[:n, :n] = Q_proc
    out[n:, n:] = R_meas
    return out


def _mv(A, v):
    return (A @ v[..., None])[..., 0]


def predict_arrays(x, P, F, process_cov, drive=None):
    """``x' = F x + drive`` (or ``x' = drive`` with F only used for P when
    ``drive`` is already the propagated mean), ``P' = F P F' + Q``.

    All arrays may carry leading batch axes.
    """
    x_next = _mv(F, x) if drive is None else drive
    P = F @ P @ np.swapaxes(F, -1, -2) + process_cov
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(P))):
        raise NonFiniteError("filter prediction is not finite")
    return x_next, P


def update_arrays(x, P, H, z, R):
    """Joseph-form measurement update; returns ``x, P, innovation, Pz, chol(Pz)``.

    Leading batch axes on ``x``/``P`` are allowed; ``H`` and ``R`` are shared.
    """
    innov = np.asarray(z, dtype=float) - x @ H.T
    PHt = P @ H.T
    Pz = H @ PHt + R
    Pz = 0.5 * (Pz + np.swapaxes(Pz, -1, -2))
    try:
        L = np.linalg.cholesky(Pz)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("innovation covariance is not positive definite") from None
    # gain F = P H' Pz^-1, from Pz F' = H P
    gain = np.swapaxes(np.linalg.solve(Pz, np.swapaxes(PHt, -1, -2)), -1, -2)
    x_new = x + _mv(gain, innov)
    IKH = np.eye(P.shape[-1]) - gain @ H
    P_new = IKH @ P @ np.swapaxes(IKH, -1, -2) + gain @ R @ np.swapaxes(gain, -1, -2)
    P_new = 0.5 * (P_new + np.swapaxes(P_new, -1, -2))
    return x_new, P_new, innov, Pz, L


def ekf_predict(h: Hypothesis, model: AugmentedModel, u, process_cov: np.ndarray,
                r=None, transition=None) -> Hypothesis:
    """Time update.

    ``r`` (reference at this step) feeds the integral channel. Without a
    ``transition`` the mean and covariance follow the linear model
    ``A_tilde x + B_tilde u``. A ``transition(x, u, r) -> (x_next, F)`` (see
    :class:`NonlinearTransition`) propagates the mean through the nonlinear
    dynamics and the covariance through its Jacobian ``F`` at the estimate.
    """
    u = np.asarray(u, dtype=float)
    if transition is None:
        drive = model.A_tilde @ h.x_hat + model.B_tilde @ u
        if r is not None:
            drive = drive + model.B_r @ np.asarray(r, dtype=float)
        F = model.A_tilde
    else:
        drive, F = transition(h.x_hat, u, r)
    try:
        x, P = predict_arrays(h.x_hat, h.P_cov, F, process_cov, drive)
    except NonFiniteError:
        raise NonFiniteError(f"prediction for model {h.fault.label} is not finite") from None
    return replace(h, x_hat=x, P_cov=P)


def ekf_update(h: Hypothesis, model: AugmentedModel, z, R_meas: np.ndarray) -> Hypothesis:
    """Measurement update in Joseph form; stores innovation and its covariance."""
    try:
        x, P, innov, Pz, _ = update_arrays(h.x_hat, h.P_cov, model.H_tilde, z, R_meas)
    except SingularCovarianceError:
        raise SingularCovarianceError(
            f"innovation covariance of model {h.fault.label} is not positive definite"
        ) from None
    return replace(h, x_hat=x, P_cov=P, last_innovation=innov, last_innovation_cov=Pz)


class NonlinearTransition:
    """Euler step of the vehicle model on the augmented state, with Jacobian.

    The velocity/pose block is advanced exactly as the plant integrator does
    (without noise); the integral block accumulates ``r - H x``.  ``gamma``
    may be one effectiveness vector or a stack of them, in which case the
    state argument carries the matching leading axis.
    """

    def __init__(self, params: VehicleParams, fault, dt: float, H: np.ndarray):
        gamma = fault.gamma if isinstance(fault, FaultModel) else np.asarray(fault, dtype=float)
        self.params, self.dt = params, dt
        self.H = np.asarray(H, dtype=float)
        self.TG = params.allocation * gamma[..., None, :]
        p, n = self.H.shape
        self.n, self.p = n, p
        self._F = np.eye(n + p)
        self._F[n:, :n] = -self.H

    def __call__(self, x, u, r=None):
        n, dt = self.n, self.dt
        nu, eta = x[..., :6], x[..., 6:n]
        J = kinematic_transform_many(eta)
        out = np.empty(np.shape(x))
        wrench = _mv(self.TG, np.asarray(u, dtype=float))
        out[..., :6] = nu + dt * _nu_dot(nu, eta, wrench, self.params)
        out[..., 6:n] = eta + dt * _mv(J, nu)
        out[..., n:] = x[..., n:] - x[..., :n] @ self.H.T
        if r is not None:
            out[..., n:] += np.asarray(r, dtype=float)
        F = np.broadcast_to(self._F, np.shape(x)[:-1] + self._F.shape).copy()
        F[..., :n, :n] += dt * state_jacobian(nu, eta, self.params)
        return out, F


@dataclass(eq=False)
class FilterBank:
    """All hypotheses' filters as stacked arrays, advanced together.

    Equivalent to calling :func:`ekf_predict`/:func:`ekf_update` on each
    :class:`Hypothesis` in turn; used by the closed loop for speed.
    """

    faults: tuple
    x: np.ndarray
    P: np.ndarray
    innovation: np.ndarray | None = None
    innovation_cov: np.ndarray | None = None

    @classmethod
    def from_hypotheses(cls, hyps) -> "FilterBank":
        hyps = list(hyps)
        return cls(tuple(h.fault for h in hyps), np.stack([h.x_hat for h in hyps]).astype(float),
                   np.stack([h.P_cov for h in hyps]).astype(float))

    def hypotheses(self, posterior=None) -> list[Hypothesis]:
        post = np.zeros(len(self.faults)) if posterior is None else posterior
        out = []
        for i, f in enumerate(self.faults):
            innov = None if self.innovation is None else self.innovation[i].copy()
            Pz = None if self.innovation_cov is None else self.innovation_cov[i].copy()
            out.append(Hypothesis(f, self.x[i].copy(), self.P[i].copy(), innov, Pz, float(post[i])))
        return out

    def predict(self, model: AugmentedModel, u, process_cov, r=None, transition=None) -> None:
        """``model.B_tilde`` is ``(M, n, m)`` when no ``transition`` is given."""
        u = np.asarray(u, dtype=float)
        if transition is None:
            drive = self.x @ model.A_tilde.T + _mv(model.B_tilde, u)
            if r is not None:
                drive = drive + model.B_r @ np.asarray(r, dtype=float)
            F = model.A_tilde
        else:
            drive, F = transition(self.x, u, r)
        self.x, self.P = predict_arrays(self.x, self.P, F, process_cov, drive)

    def update(self, H, z, R_meas) -> np.ndarray:
        """Update every filter with ``z``; returns the innovation log-likelihoods."""
        self.x, self.P, innov, Pz, _ = update_arrays(self.x, self.P, H, z, R_meas)
        self.innovation, self.innovation_cov = innov, Pz
        return log_likelihood(innov, Pz)
