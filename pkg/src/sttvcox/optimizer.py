"""Damped Newton maximization of the penalized objective.

Two variants share the machinery.  The thresholded fit ("sttv") warm
starts at the constant Cox estimates a_j, sets each threshold to
alpha_scale * |a_j| (floored at 1e-3 so a zero warm start cannot produce a
zero threshold), and maximizes the smoothed objective.  The plain
time-varying fit ("regtv") disables thresholding and maximizes the same
ridge-penalized spline likelihood, which is the standard penalized spline
Cox model.

Newton directions come from the negative Hessian with a Levenberg-style
diagonal shift (lambda doubling from 1e-6 whenever the factorization fails),
followed by Armijo backtracking.  Iteration stops when the gradient
max-norm drops below tol_grad, or when the objective stalls (relative
change below 1e-10 on three consecutive iterations); only the gradient
criterion sets ``converged``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .coxph import CoxFit, fit_coxph, initial_gamma
from .dataset import SurvivalDataset
from .errors import ConvergenceError, NumericError, SeparationError, ValidationError
from .inference import CurveEstimate, sparse_ci, wald_ci
from .likelihood import (
    CoefficientBlock,
    LikelihoodWorkspace,
    make_workspace,
    score_covariance,
    value_and_derivatives,
)
from .splines import SplineBasis, eval_basis_grid, make_basis
from .threshold import soft_threshold

logger = logging.getLogger(__name__)

VARIANTS = ("sttv", "regtv")

_ALPHA_FLOOR = 1e-3
_ARMIJO = 1e-4
_MAX_HALVINGS = 30
_STALL_REL = 1e-10
_STALL_RUNS = 3
_COND_WARN = 1e10
_COND_ERROR = 1e14
# The surrogate objective is not concave, so the shifted matrix -H + lam*I
# may need lam beyond |min eig(H)|; tenfold growth over 40 attempts covers
# any magnitude the likelihood can produce before overflowing.
_LAM_MIN = 1e-6
_MAX_DAMPING_ATTEMPTS = 40


@dataclass(frozen=True)
class FitConfig:
    """Tuning scalars for one fit.

    ``rho=None`` resolves to 1/n^2 at fit time.  ``alpha_override`` values
    are used verbatim (no floor); the floor applies only to thresholds
    derived from the warm start.  ``multistart`` > 1 adds jittered warm
    starts and keeps the best objective.
    """

    K: int
    d: int = 3
    eta: float = 1e-3
    rho: float | None = None
    alpha_scale: float = 0.5
    alpha_override: tuple | None = None
    tol_grad: float = 1e-6
    max_iter: int = 500
    variant: str = "sttv"
    multistart: int = 1
    seed: int = 0

    def validate(self) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError(f"K must be an integer >= 1, got {self.K}")
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError(f"d must be an integer >= 1, got {self.d}")
        if not self.eta > 0:
            raise ValidationError(f"eta must be positive, got {self.eta}")
        if self.rho is not None and not self.rho > 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        if not self.tol_grad > 0:
            raise ValidationError(f"tol_grad must be positive, got {self.tol_grad}")
        if self.variant not in VARIANTS:
            raise ValidationError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if self.multistart < 1:
            raise ValidationError(f"multistart must be >= 1, got {self.multistart}")


@dataclass(frozen=True)
class FittedModel:
    """Optimized coefficients plus everything inference needs.

    ``sandwich`` is H^-1 Sigma H^-1 with H the negative Hessian and Sigma
    the raw score covariance, both at the optimum.  ``loglik_path`` is
    non-decreasing; ``converged`` means the final gradient max-norm beat
    tol_grad (a stall stop returns converged=False).
    """

    config: FitConfig
    basis: SplineBasis
    gamma_hat: np.ndarray
    alphas: np.ndarray | None
    neg_hessian_inv: np.ndarray
    score_cov: np.ndarray
    sandwich: np.ndarray
    loglik_path: np.ndarray
    converged: bool
    warm_start: CoxFit | None
    n: int
    p: int
    tau: float
    rho: float
    n_iter: int
    final_grad_norm: float
    stop_reason: str
    covariate_names: tuple[str, ...] | None = None

    @property
    def q(self) -> int:
        return self.basis.q


def _newton(cb0: CoefficientBlock, ds: SurvivalDataset, ws: LikelihoodWorkspace,
            cfg: FitConfig):
    """Maximize from one starting point; returns (gamma, path, diagnostics)."""
    p, q = cb0.p, cb0.q
    gamma = cb0.gamma.copy()
    cb = replace(cb0, gamma=gamma)
    value, grad, hess = value_and_derivatives(cb, ds, ws)
    path = [value]
    eye = np.eye(p * q)
    stall = 0
    stop_reason = "max_iter"
    n_iter = 0
    for _ in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < cfg.tol_grad:
            stop_reason = "gradient"
            break
        if stall >= _STALL_RUNS:
            stop_reason = "stalled"
            break

        lam = 0.0
        accepted = False
        for _ in range(_MAX_DAMPING_ATTEMPTS):
            A = -hess + lam * eye if lam else -hess
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError:
                lam = max(10.0 * lam, _LAM_MIN)
                continue
            delta = np.linalg.solve(A, grad)
            slope = float(grad @ delta)
            if slope <= 0:
                lam = max(10.0 * lam, _LAM_MIN)
                continue
            scale = 1.0
            for _ in range(_MAX_HALVINGS + 1):
                trial = gamma + scale * delta.reshape(p, q)
                cb_trial = replace(cb, gamma=trial)
                try:
                    new_value, new_grad, new_hess = value_and_derivatives(cb_trial, ds, ws)
                except NumericError:
                    new_value = -np.inf
                if new_value >= value + _ARMIJO * scale * slope:
                    accepted = True
                    break
                scale *= 0.5
            if accepted:
                break
            lam = max(10.0 * lam, 1e-4)
        if not accepted:
            raise ConvergenceError(
                "line search failed to make progress", last_iterate=gamma, path=path
            )

        rel = abs(new_value - value) / (abs(value) + 1.0)
        stall = stall + 1 if rel < _STALL_REL else 0
        gamma, cb = trial, cb_trial
        value, grad, hess = new_value, new_grad, new_hess
        path.append(value)
        n_iter += 1
    else:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < cfg.tol_grad:
            stop_reason = "gradient"
        else:
            raise ConvergenceError(
                f"no convergence in {cfg.max_iter} iterations "
                f"(gradient max-norm {gnorm:.3e})",
                last_iterate=gamma,
                path=path,
            )

    gnorm = float(np.max(np.abs(grad)))
    return gamma, hess, value, grad, np.array(path), n_iter, gnorm, stop_reason


def fit(ds: SurvivalDataset, cfg: FitConfig) -> FittedModel:
    """Fit one variant on one dataset; see the module docstring for the recipe."""
    cfg.validate()
    if ds.n_events == 0:
        raise ValidationError("cannot fit a dataset with zero events")
    rho = cfg.rho if cfg.rho is not None else 1.0 / ds.n**2
    basis = make_basis(cfg.K, cfg.d, ds.tau)
    ws = make_workspace(ds, basis, rho)

    warm: CoxFit | None = None
    alphas: np.ndarray | None = None
    if cfg.variant == "sttv":
        try:
            warm = fit_coxph(ds)
        except SeparationError:
            if cfg.alpha_override is None:
                raise
            logger.warning(
                "warm start hit separation; starting from zero coefficients "
                "with the explicit threshold override"
            )
            gamma0 = np.zeros((ds.p, basis.q))
            alphas = np.asarray(cfg.alpha_override, dtype=float).ravel()
        else:
            gamma0 = initial_gamma(warm, basis.q)
            if cfg.alpha_override is not None:
                alphas = np.asarray(cfg.alpha_override, dtype=float).ravel()
            else:
                alphas = np.maximum(cfg.alpha_scale * np.abs(warm.beta), _ALPHA_FLOOR)
        if alphas.shape[0] != ds.p:
            raise ValidationError(
                f"{alphas.shape[0]} thresholds for {ds.p} covariates"
            )
    else:
        try:
            warm = fit_coxph(ds)
            gamma0 = initial_gamma(warm, basis.q)
        except (SeparationError, ConvergenceError):
            warm = None
            gamma0 = np.zeros((ds.p, basis.q))

    starts = [gamma0]
    if cfg.multistart > 1:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        spread = 0.1 * (1.0 + np.abs(gamma0))
        for _ in range(cfg.multistart - 1):
            starts.append(gamma0 + spread * rng.standard_normal(gamma0.shape))

    best = None
    first_error: ConvergenceError | None = None
    for g0 in starts:
        cb0 = CoefficientBlock(gamma=g0, thresholds=alphas, eta=cfg.eta)
        try:
            result = _newton(cb0, ds, ws, cfg)
        except ConvergenceError as exc:
            first_error = first_error or exc
            continue
        if best is None or result[2] > best[2]:
            best = result
    if best is None:
        raise first_error

    gamma, hess, value, grad, path, n_iter, gnorm, stop_reason = best
    cb_hat = CoefficientBlock(gamma=gamma, thresholds=alphas, eta=cfg.eta)
    neg_h = -hess
    cond = np.linalg.cond(neg_h)
    if cond > _COND_ERROR:
        raise NumericError(
            f"negative Hessian condition number {cond:.2e} too large; "
            "a larger rho or a smaller K may help"
        )
    if cond > _COND_WARN:
        logger.warning("ill-conditioned negative Hessian (cond %.2e)", cond)
    neg_h_inv = np.linalg.inv(neg_h)
    sigma = score_covariance(cb_hat, ds, ws)
    sandwich = neg_h_inv @ sigma @ neg_h_inv
    sandwich = 0.5 * (sandwich + sandwich.T)

    return FittedModel(
        config=cfg,
        basis=basis,
        gamma_hat=gamma,
        alphas=alphas,
        neg_hessian_inv=neg_h_inv,
        score_cov=sigma,
        sandwich=sandwich,
        loglik_path=path,
        converged=gnorm < cfg.tol_grad,
        warm_start=warm,
        n=ds.n,
        p=ds.p,
        tau=ds.tau,
        rho=rho,
        n_iter=n_iter,
        final_grad_norm=gnorm,
        stop_reason=stop_reason,
        covariate_names=ds.covariate_names,
    )


def estimate_curves(model: FittedModel, grid, level: float = 0.95) -> CurveEstimate:
    """Evaluate effect curves with pointwise errors and intervals on a grid.

    theta_hat_j(t) = B(t)' gamma_hat_j is the spline level; the reported
    effect is its exact soft threshold for the thresholded variant and
    theta_hat itself otherwise.
    """
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValidationError("empty evaluation grid")
    Bg = eval_basis_grid(model.basis, grid)    # validates the range
    theta = model.gamma_hat @ Bg.T             # (p, G)
    q = model.basis.q
    var = np.empty_like(theta)
    for j in range(model.p):
        block = model.sandwich[j * q:(j + 1) * q, j * q:(j + 1) * q]
        var[j] = np.einsum("ga,ab,gb->g", Bg, block, Bg)
    if not np.isfinite(var).all() or (var <= 0).any():
        raise NumericError(
            "degenerate curve variance on the grid; larger rho or smaller K may help"
        )
    sig = np.sqrt(var)
    xi = 1.0 - level

    if model.alphas is not None:
        beta = soft_threshold(theta, model.alphas[:, None])
        lower, upper, fallback = sparse_ci(theta, model.alphas[:, None], sig, xi)
        zero = beta == 0.0
    else:
        beta = theta
        lower, upper = wald_ci(theta, sig, xi)
        fallback = np.zeros(theta.shape, dtype=bool)
        zero = np.zeros(theta.shape, dtype=bool)

    return CurveEstimate(
        grid=grid,
        theta_hat=theta,
        beta_hat=beta,
        sigma_hat=sig,
        ci_lower=lower,
        ci_upper=upper,
        zero_flags=zero,
        level=level,
        fallback=fallback,
        covariate_names=model.covariate_names,
    )
