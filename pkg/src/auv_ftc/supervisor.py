"""Posterior weighting of fault hypotheses and control blending.

Posterior vectors are plain 1-D arrays of probabilities that sum to one.
"""
from __future__ import annotations

import numpy as np

from .errors import SingularCovarianceError, ZeroMassError


def log_likelihood(innovation, innov_cov):
    """``-1/2 log|Pz| - 1/2 z' Pz^-1 z`` (the Gaussian normaliser is dropped).

    Stacked innovations ``(M, p)`` with covariances ``(M, p, p)`` give an
    array of M values; a single pair gives a float.
    """
    z = np.asarray(innovation, dtype=float)
    Pz = np.asarray(innov_cov, dtype=float)
    single = z.ndim <= 1
    z = np.atleast_1d(z)
    Pz = np.atleast_2d(Pz)
    try:
        L = np.linalg.cholesky(Pz)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("innovation covariance is not positive definite") from None
    w = np.linalg.solve(L, z[..., None])[..., 0]
    out = -np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(-1) - 0.5 * (w * w).sum(-1)
    return float(out) if single else out


def likelihood(innovation, innov_cov) -> float:
    """``|Pz|^-1/2 exp(-1/2 ||z||^2_{Pz^-1})``; equals 1 for a zero innovation with Pz = I."""
    return float(np.exp(log_likelihood(innovation, innov_cov)))


def posterior_update(prior, likelihoods=None, *, log_likelihoods=None) -> np.ndarray:
    """Bayes update of the model probabilities.

    Pass either raw ``likelihoods`` or ``log_likelihoods``; the product is
    formed in log space with the maximum subtracted, so a common scale on the
    likelihoods cancels exactly.
    """
    prior = np.asarray(prior, dtype=float)
    if (likelihoods is None) == (log_likelihoods is None):
        raise TypeError("give exactly one of likelihoods / log_likelihoods")
    if log_likelihoods is None:
        lik = np.asarray(likelihoods, dtype=float)
        if np.any(lik < 0):
            raise ValueError("likelihoods must be non-negative")
        with np.errstate(divide="ignore"):
            ll = np.log(lik)
    else:
        ll = np.asarray(log_likelihoods, dtype=float)
    if ll.shape != prior.shape:
        raise ValueError(f"{ll.size} likelihoods for {prior.size} models")
    with np.errstate(divide="ignore"):
        logp = np.log(prior) + ll
    top = logp.max()
    if not np.isfinite(top):
        raise ZeroMassError("all posterior mass vanished (filter bank divergence)")
    w = np.exp(logp - top)
    return w / w.sum()


def apply_floor(posterior, eps: float) -> np.ndarray:
    """Anti-lock-in floor.

    When the dominant weight exceeds ``1 - eps`` it is reset to ``1 - eps``
    and every other weight to ``eps / M``; the result is renormalised.
    """
    p = np.asarray(posterior, dtype=float)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    M = p.size
    i = int(np.argmax(p))
    if p[i] <= 1.0 - eps:
        return p.copy()
    out = np.full(M, eps / M)
    out[i] = 1.0 - eps
    return out / out.sum()


def blend_controls(controls, posterior) -> np.ndarray:
    """Posterior-weighted sum of the per-model controls (rows of ``controls``)."""
    U = np.asarray(controls, dtype=float)
    p = np.asarray(posterior, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
        if U.shape[0] != p.size:
            raise ValueError(f"{U.shape[0]} controls for {p.size} weights")
        return (p @ U)[0]
    if U.shape[0] != p.size:
        raise ValueError(f"{U.shape[0]} controls for {p.size} weights")
    return p @ U
