"""Soft thresholding and its smooth arctan surrogate.

The soft-thresholding operator

    zeta(theta, alpha) = (theta - alpha) 1{theta > alpha}
                       + (theta + alpha) 1{theta < -alpha}

maps the dead zone [-alpha, alpha] to exactly zero.  It is not
differentiable at +-alpha, so optimization runs on the surrogate

    h_eta(theta, alpha) = ((1 + (2/pi) arctan(m/eta)) m
                         + (1 - (2/pi) arctan(p/eta)) p) / 2

with m = theta - alpha and p = theta + alpha.  As eta -> 0 the surrogate
converges to zeta uniformly, with |h_eta - zeta| <= eta + O(eta^3); at
eta = 0 these functions delegate to the exact operator.

First and second derivatives in theta, with u = m/eta and v = p/eta:

    h'  = 1 + (arctan u - arctan v)/pi + (u/(1+u^2) - v/(1+v^2))/pi
    h'' = (2/(pi*eta)) * (1/(1+u^2)^2 - 1/(1+v^2)^2)

Far from both kinks (|u| and |v| above 1e8) the exact limits are
substituted: h equals zeta, h' equals the 0/1 slope of zeta, h'' equals 0.
Clamping both tails jointly keeps the substitution error below 1e-8 * eta;
the two arctan tails carry cancelling eta/pi terms, so clamping only one
of them would lose an eta-sized contribution.

All functions broadcast over numpy arrays and return scalars for scalar
input.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

_FAR = 1.0e8


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if not np.isfinite(alpha).all() or (alpha <= 0).any():
        raise ValidationError("threshold alpha must be positive and finite")
    return alpha


def _check_eta(eta: float, positive: bool) -> float:
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0:
        raise ValidationError(f"eta must be nonnegative and finite, got {eta}")
    if positive and eta == 0:
        raise ValidationError("eta = 0: the exact operator is not differentiable")
    return eta


def _maybe_scalar(x: np.ndarray, scalar: bool):
    return float(x[()]) if scalar else x


def soft_threshold(theta, alpha):
    """zeta(theta, alpha): shrink by alpha, truncate the dead zone to 0."""
    alpha = _check_alpha(alpha)
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0 and alpha.ndim == 0
    out = np.where(
        theta > alpha,
        theta - alpha,
        np.where(theta < -alpha, theta + alpha, 0.0),
    )
    return _maybe_scalar(out, scalar)


def smooth_threshold(theta, alpha, eta):
    """Smooth surrogate h_eta; exact soft threshold when eta = 0."""
    alpha = _check_alpha(alpha)
    eta = _check_eta(eta, positive=False)
    if eta == 0.0:
        return soft_threshold(theta, alpha)
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0 and alpha.ndim == 0
    m = theta - alpha
    p = theta + alpha
    u = m / eta
    v = p / eta
    far = (np.abs(u) > _FAR) & (np.abs(v) > _FAR)
    uc = np.clip(u, -_FAR, _FAR)
    vc = np.clip(v, -_FAR, _FAR)
    h = 0.5 * ((1.0 + (2.0 / np.pi) * np.arctan(uc)) * m
               + (1.0 - (2.0 / np.pi) * np.arctan(vc)) * p)
    exact = np.where(theta > alpha, m, np.where(theta < -alpha, p, 0.0))
    out = np.where(far, exact, h)
    return _maybe_scalar(out, scalar)


def smooth_threshold_d1(theta, alpha, eta):
    """d h_eta / d theta; requires eta > 0."""
    alpha = _check_alpha(alpha)
    eta = _check_eta(eta, positive=True)
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0 and alpha.ndim == 0
    u = (theta - alpha) / eta
    v = (theta + alpha) / eta
    far = (np.abs(u) > _FAR) & (np.abs(v) > _FAR)
    uc = np.clip(u, -_FAR, _FAR)
    vc = np.clip(v, -_FAR, _FAR)
    d1 = (1.0
          + (np.arctan(uc) - np.arctan(vc)) / np.pi
          + (uc / (1.0 + uc * uc) - vc / (1.0 + vc * vc)) / np.pi)
    limit = np.where(np.abs(theta) > alpha, 1.0, 0.0)
    out = np.where(far, limit, d1)
    return _maybe_scalar(out, scalar)


def smooth_threshold_d2(theta, alpha, eta):
    """d^2 h_eta / d theta^2; requires eta > 0."""
    alpha = _check_alpha(alpha)
    eta = _check_eta(eta, positive=True)
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0 and alpha.ndim == 0
    u = (theta - alpha) / eta
    v = (theta + alpha) / eta
    far = (np.abs(u) > _FAR) & (np.abs(v) > _FAR)
    uc = np.clip(u, -_FAR, _FAR)
    vc = np.clip(v, -_FAR, _FAR)
    d2 = (2.0 / (np.pi * eta)) * (1.0 / (1.0 + uc * uc) ** 2
                                  - 1.0 / (1.0 + vc * vc) ** 2)
    out = np.where(far, 0.0, d2)
    return _maybe_scalar(out, scalar)
