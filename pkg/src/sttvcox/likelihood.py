"""Smoothed, ridge-penalized log partial likelihood and its derivatives.

The objective maximized over the p x q spline coefficient matrix gamma is

    PL(gamma) = sum_{i: event} [ g(Z_i, T_i) - log sum_{l in R_i} exp(g(Z_l, T_i)) ]
                - rho * sum_j sum_{i=1..n} (B(T_i)' gamma_j)^2

where g(z, t) = sum_j z_j * h_eta(B(t)' gamma_j, alpha_j), R_i is the risk
set {l : T_l >= T_i}, and h_eta is the smooth soft-threshold surrogate.
When thresholds are disabled, h is the identity map and the objective is
the classical ridge-penalized time-varying spline Cox likelihood.

The ridge term runs over all n observations, events and censored alike.
Inner log-sum-exp terms subtract the risk-set maximum before
exponentiating, so the value stays finite for coefficient norms far beyond
anything an optimizer visits.

Derivatives are exact.  With per-event weights w_l over the risk set,
weighted mean Ebar_j of Z_.j, weighted covariance V_jk of (Z_.j, Z_.k),
and h', h'' evaluated at theta_j(T_i) = B(T_i)' gamma_j:

    grad block j    = sum_events (Z_ij - Ebar_j) h'_j B(T_i)  -  2 rho P gamma_j
    hess block j,k  = sum_events [ (Z_ij - Ebar_j) h''_j 1{j=k}
                                   - V_jk h'_j h'_k ] B(T_i) B(T_i)'
                      - 2 rho P 1{j=k}

with P = sum_i B(T_i) B(T_i)' the penalty Gram matrix.  The score
covariance (the meat of the sandwich variance) is the plain event sum

    Sigma block j,k = sum_events V_jk h'_j h'_k B(T_i) B(T_i)'.

Stacked vectors and matrices order coefficient block j at entries
j*q .. (j+1)*q - 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import NumericError, ValidationError
from .splines import SplineBasis, eval_basis_grid
from .threshold import smooth_threshold, smooth_threshold_d1, smooth_threshold_d2

logger = logging.getLogger(__name__)

# cap on the event-block x subject matrix built per chunk (float64 count)
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class CoefficientBlock:
    """Spline coefficients with their thresholding state.

    ``gamma`` holds one row per covariate.  ``thresholds`` is the vector of
    per-covariate soft-threshold levels; ``None`` disables thresholding
    entirely (identity h, the non-thresholded variant).  ``eta`` is the
    surrogate smoothing scale.
    """

    gamma: np.ndarray
    thresholds: np.ndarray | None
    eta: float

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim != 2:
            raise ValidationError("gamma must be a (p, q) matrix")
        if not np.isfinite(gamma).all():
            raise ValidationError("gamma entries must be finite")
        object.__setattr__(self, "gamma", gamma)
        if self.thresholds is not None:
            al = np.asarray(self.thresholds, dtype=float).ravel()
            if al.shape[0] != gamma.shape[0]:
                raise ValidationError(
                    f"{al.shape[0]} thresholds for {gamma.shape[0]} coefficient rows"
                )
            if not np.isfinite(al).all() or (al <= 0).any():
                raise ValidationError("thresholds must be positive and finite")
            object.__setattr__(self, "thresholds", al)
        eta = float(self.eta)
        if not np.isfinite(eta) or eta < 0:
            raise ValidationError(f"eta must be nonnegative and finite, got {eta}")
        object.__setattr__(self, "eta", eta)

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def q(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class LikelihoodWorkspace:
    """Per-dataset caches shared by repeated objective evaluations."""

    basis: SplineBasis
    rho: float
    basis_at_times: np.ndarray   # (n, q), row i = B(T_i) in storage order
    penalty_gram: np.ndarray     # (q, q), sum_i B(T_i) B(T_i)'
    event_rows: np.ndarray       # (m,) storage indices of events
    risk_starts: np.ndarray      # (m,) first storage index of each risk set


def make_workspace(ds: SurvivalDataset, basis: SplineBasis, rho: float) -> LikelihoodWorkspace:
    rho = float(rho)
    if not np.isfinite(rho) or rho < 0:
        raise ValidationError(f"rho must be nonnegative and finite, got {rho}")
    if ds.tau > basis.tau:
        raise ValidationError(
            f"dataset horizon {ds.tau} exceeds basis horizon {basis.tau}"
        )
    B = eval_basis_grid(basis, ds.time)
    events = ds.event_rows
    starts = np.searchsorted(ds.time, ds.time[events], side="left")
    return LikelihoodWorkspace(
        basis=basis,
        rho=rho,
        basis_at_times=B,
        penalty_gram=B.T @ B,
        event_rows=events,
        risk_starts=starts.astype(np.intp),
    )


def _check_dims(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace) -> None:
    if cb.p != ds.p:
        raise ValidationError(f"gamma has {cb.p} rows for {ds.p} covariates")
    if cb.q != ws.basis.q:
        raise ValidationError(f"gamma has {cb.q} columns for basis dimension {ws.basis.q}")
    if ws.basis_at_times.shape[0] != ds.n:
        raise ValidationError("workspace was built from a different dataset")


def _surrogate(cb: CoefficientBlock, theta: np.ndarray, order: int):
    """h, h', h'' at theta (any shape broadcasting rows over covariates)."""
    if cb.thresholds is None:
        h = theta
        h1 = np.ones_like(theta) if order >= 1 else None
        h2 = np.zeros_like(theta) if order >= 2 else None
        return h, h1, h2
    al = cb.thresholds
    h = smooth_threshold(theta, al, cb.eta)
    h1 = smooth_threshold_d1(theta, al, cb.eta) if order >= 1 else None
    h2 = smooth_threshold_d2(theta, al, cb.eta) if order >= 2 else None
    return h, h1, h2


def linear_predictor(cb: CoefficientBlock, z, Bt) -> float:
    """g(z, t) = sum_j z_j h_eta(B(t)' gamma_j, alpha_j) for one subject."""
    z = np.asarray(z, dtype=float).ravel()
    Bt = np.asarray(Bt, dtype=float).ravel()
    if z.shape[0] != cb.p:
        raise ValidationError(f"covariate vector of length {z.shape[0]}, expected {cb.p}")
    if Bt.shape[0] != cb.q:
        raise ValidationError(f"basis vector of length {Bt.shape[0]}, expected {cb.q}")
    theta = cb.gamma @ Bt
    h, _, _ = _surrogate(cb, theta, order=0)
    return float(z @ h)


def _scan(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace, order: int):
    """One pass over events: per-event risk totals up to the given order.

    Returns own_g, logS0 (both (m,)), and for order >= 1 also Ebar (m, p),
    h1 (m, p); for order >= 2 also V (m, p, p), h2 (m, p).
    """
    _check_dims(cb, ds, ws)
    if cb.thresholds is not None and order >= 1 and cb.eta == 0.0:
        raise ValidationError("derivatives need eta > 0 (exact operator is kinked)")

    Z = ds.covariates
    n = ds.n
    events = ws.event_rows
    m = events.shape[0]
    B_ev = ws.basis_at_times[events]
    theta = B_ev @ cb.gamma.T                       # (m, p)
    h, h1, h2 = _surrogate(cb, theta, order)

    own_g = np.zeros(m)
    logS0 = np.zeros(m)
    Ebar = np.zeros((m, cb.p)) if order >= 1 else None
    V = np.zeros((m, cb.p, cb.p)) if order >= 2 else None

    chunk = max(1, _CHUNK_BUDGET // max(n, 1))
    for s in range(0, m, chunk):
        e_end = min(s + chunk, m)
        G = h[s:e_end] @ Z.T                        # (c, n) predictors at event times
        if not np.isfinite(G).all():
            bad = np.argwhere(~np.isfinite(G))[0]
            raise NumericError(
                f"non-finite linear predictor at observation {int(bad[1])} "
                f"(event {int(s + bad[0])})"
            )
        for e in range(s, e_end):
            row = G[e - s]
            r = ws.risk_starts[e]
            own_g[e] = row[events[e]]
            gr = row[r:]
            mx = gr.max()
            w = np.exp(gr - mx)
            s0 = w.sum()
            logS0[e] = mx + np.log(s0)
            if order >= 1:
                Zr = Z[r:]
                eb = (w @ Zr) / s0
                Ebar[e] = eb
                if order >= 2:
                    s2 = Zr.T @ (w[:, None] * Zr)
                    V[e] = s2 / s0 - np.outer(eb, eb)
    return own_g, logS0, Ebar, h1, V, h2, B_ev


def _penalty(cb: CoefficientBlock, ws: LikelihoodWorkspace) -> float:
    return float(np.einsum("ja,ab,jb->", cb.gamma, ws.penalty_gram, cb.gamma))


def penalized_loglik(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace) -> float:
    """Value of the smoothed penalized log partial likelihood."""
    own_g, logS0, *_ = _scan(cb, ds, ws, order=0)
    return float(own_g.sum() - logS0.sum() - ws.rho * _penalty(cb, ws))


def gradient(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace) -> np.ndarray:
    """Exact gradient, stacked (p*q,), block j at entries j*q .. (j+1)*q - 1."""
    _, _, Ebar, h1, _, _, B_ev = _scan(cb, ds, ws, order=1)
    Z_ev = ds.covariates[ws.event_rows]
    C = (Z_ev - Ebar) * h1                          # (m, p)
    blocks = C.T @ B_ev - 2.0 * ws.rho * (cb.gamma @ ws.penalty_gram)
    return blocks.reshape(-1)


def _einsum_blocks(M: np.ndarray, B_ev: np.ndarray, p: int, q: int) -> np.ndarray:
    """sum_e M[e, j, k] * B_e B_e' assembled into a (p q, p q) matrix."""
    out = np.einsum("ejk,ea,eb->jakb", M, B_ev, B_ev, optimize=True)
    return out.reshape(p * q, p * q)


def hessian(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace) -> np.ndarray:
    """Exact Hessian, (p*q, p*q), symmetric."""
    _, _, Ebar, h1, V, h2, B_ev = _scan(cb, ds, ws, order=2)
    p, q = cb.p, cb.q
    m = ws.event_rows.shape[0]
    Z_ev = ds.covariates[ws.event_rows]
    M = -V * h1[:, :, None] * h1[:, None, :]
    diag = (Z_ev - Ebar) * h2
    M[:, np.arange(p), np.arange(p)] += diag
    H = _einsum_blocks(M, B_ev, p, q) if m else np.zeros((p * q, p * q))
    H -= 2.0 * ws.rho * np.kron(np.eye(p), ws.penalty_gram)
    return H


def score_covariance(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace) -> np.ndarray:
    """Event sum of risk-set score covariances (sandwich meat), (p*q, p*q).

    Block (j, k) is sum over events of V_jk h'_j h'_k B(T_i) B(T_i)'.
    No 1/n normalization is applied; the variance formula downstream
    consumes this raw sum directly.
    """
    _, _, _, h1, V, _, B_ev = _scan(cb, ds, ws, order=2)
    p, q = cb.p, cb.q
    if ws.event_rows.shape[0] == 0:
        return np.zeros((p * q, p * q))
    S = V * h1[:, :, None] * h1[:, None, :]
    return _einsum_blocks(S, B_ev, p, q)


def value_and_derivatives(cb: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace):
    """(value, gradient, hessian) sharing a single event scan."""
    own_g, logS0, Ebar, h1, V, h2, B_ev = _scan(cb, ds, ws, order=2)
    p, q = cb.p, cb.q
    m = ws.event_rows.shape[0]
    value = float(own_g.sum() - logS0.sum() - ws.rho * _penalty(cb, ws))
    Z_ev = ds.covariates[ws.event_rows]
    C = (Z_ev - Ebar) * h1 if m else np.zeros((0, p))
    grad = (C.T @ B_ev if m else np.zeros((p, q)))
    grad = (grad - 2.0 * ws.rho * (cb.gamma @ ws.penalty_gram)).reshape(-1)
    if m:
        M = -V * h1[:, :, None] * h1[:, None, :]
        M[:, np.arange(p), np.arange(p)] += (Z_ev - Ebar) * h2
        H = _einsum_blocks(M, B_ev, p, q)
    else:
        H = np.zeros((p * q, p * q))
    H -= 2.0 * ws.rho * np.kron(np.eye(p), ws.penalty_gram)
    return value, grad, H
