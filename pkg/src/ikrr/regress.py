"""Closed-form kernel ridge regression on manifolds.

The fitted weights solve (K + n*eta*I) a = y; predictions are the
representer sums sum_i a_i K(x_i, .).  Because the kernel is diagonal
in the invariant eigenbasis, the fitted function has explicit basis
coefficients beta_l = mu_l * sum_i a_i phi_l(x_i), which makes the
excess population risk computable exactly.

The eigenbasis is orthonormal in dvol while the population risk is an
expectation under the uniform probability measure, so every risk
carries an explicit 1/vol(M) factor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericalError
from .kernels import SpectralKernel
from .spectra import EigenBasis, Manifold, eval_basis, uniform_sample, unit_ball_volume, TWO_PI

RESIDUAL_RTOL = 1e-8


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if len(self.points) != len(self.labels):
            raise ConfigurationError("points and labels must have equal length")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise sigma must be nonnegative")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class TargetFunction:
    """A function given by its coefficients on the canonical eigenbasis
    (supported on the invariant entries when built for an action)."""

    manifold: Manifold
    basis: EigenBasis
    alpha: np.ndarray
    sobolev_s: float
    sobolev_norm: float = field(default=0.0)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        norm = sobolev_norm(self.basis.lams, self.alpha, self.sobolev_s)
        if self.sobolev_norm == 0.0:
            self.sobolev_norm = norm
        elif abs(norm**2 - self.sobolev_norm**2) > 1e-12 * max(1.0, self.sobolev_norm**2):
            raise ConfigurationError("stored Sobolev norm does not match the coefficients")

    @property
    def coefficients(self) -> dict:
        return {e: float(a) for e, a in zip(self.basis.entries, self.alpha) if a != 0.0}

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return eval_basis(self.manifold, self.basis.entries, X) @ self.alpha


def sobolev_norm(lams: np.ndarray, alpha: np.ndarray, s: float) -> float:
    """H^s norm with weights max(1, lambda^s)."""
    w = np.maximum(1.0, lams**s)
    return float(math.sqrt(float(w @ (alpha**2))))


@dataclass
class KrrModel:
    kernel: SpectralKernel
    support_points: np.ndarray
    weights: np.ndarray
    eta: float
    beta_inv: np.ndarray      # fitted coefficients on the invariant basis
    residual: float
    jitter_used: bool


def fit(kernel: SpectralKernel, dataset: Dataset, eta: float) -> KrrModel:
    """Solve (K + n*eta*I) a = y by Cholesky, with one jitter retry."""
    n = len(dataset)
    if n < 1:
        raise ConfigurationError("cannot fit on an empty dataset")
    if eta <= 0:
        raise ConfigurationError("eta must be positive")
    X, y = dataset.points, dataset.labels
    K = kernel.gram(X)
    ridge = n * eta
    ynorm = np.abs(y).max() if n else 0.0
    jitter_used = False

    def solve(extra: float):
        M = K + (ridge + extra) * np.eye(n)
        c, low = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
        a = scipy.linalg.cho_solve((c, low), y, check_finite=False)
        # one step of iterative refinement keeps the residual near eps
        r = y - M @ a
        a = a + scipy.linalg.cho_solve((c, low), r, check_finite=False)
        return a, np.abs(y - M @ a).max()

    try:
        a, res = solve(0.0)
        if res > RESIDUAL_RTOL * max(ynorm, 1e-300):
            raise np.linalg.LinAlgError("residual contract violated")
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(K) / n
        try:
            a, res = solve(jitter)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Cholesky factorization failed twice: {exc}") from exc
        jitter_used = True
        if res > RESIDUAL_RTOL * max(ynorm, 1e-300):
            raise NumericalError(
                f"fit residual {res:.3e} exceeds {RESIDUAL_RTOL:.0e} * |y|_inf after jitter"
            )
    beta_inv = kernel.weights * (kernel.features(X).T @ a)
    return KrrModel(kernel, X, a, float(eta), beta_inv, float(res), jitter_used)


def predict(model: KrrModel, x) -> np.ndarray:
    """Representer prediction sum_i a_i K(x_i, x) = <beta, phi(x)>."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = model.kernel.features(X) @ model.beta_inv
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def _target_in_kernel_coordinates(model_kernel: SpectralKernel, target: TargetFunction):
    """Target coefficients in the kernel's invariant coordinates plus
    the squared mass the kernel's span cannot represent."""
    kb = model_kernel.basis.full
    index = kb.index_of()
    alpha_full = np.zeros(len(kb.entries))
    out_of_range = 0.0
    beyond = False
    for e, a in zip(target.basis.entries, target.alpha):
        if a == 0.0:
            continue
        j = index.get(e)
        if j is None:
            out_of_range += a * a
            if e.lam > kb.lambda_max:
                beyond = True
        else:
            alpha_full[j] = a
    if beyond:
        warnings.warn(
            "target has coefficients beyond the kernel's lambda_max; "
            "their energy is charged to the excess risk",
            stacklevel=3,
        )
    alpha_inv = model_kernel.basis.expansion.T @ alpha_full
    in_span = float(alpha_inv @ alpha_inv)
    projection_loss = float(alpha_full @ alpha_full) - in_span
    return alpha_inv, out_of_range + max(projection_loss, 0.0)


def excess_risk_exact(model: KrrModel, target: TargetFunction) -> float:
    """E_mu[(fhat - f*)^2] from basis coefficients, including any target
    mass outside the kernel's span."""
    alpha_inv, out_mass = _target_in_kernel_coordinates(model.kernel, target)
    diff = model.beta_inv - alpha_inv
    return (float(diff @ diff) + out_mass) / model.kernel.manifold.volume


def excess_risk_mc(model: KrrModel, target: TargetFunction, seed: int, n_test: int) -> float:
    """Monte-Carlo estimate of the excess risk over uniform test points."""
    if n_test < 1:
        raise ConfigurationError("n_test must be at least 1")
    X = uniform_sample(model.kernel.manifold, seed, n_test)
    err = predict(model, X) - target.evaluate(X)
    return float(np.mean(err**2))


def optimal_eta(
    s: float,
    theta: float,
    d_eff: int,
    quotient_volume: float,
    sigma2: float,
    n: int,
    target_norm: float,
) -> float:
    """The rate-optimal regularization parameter

    eta = ( 1/(2 kappa theta |f*|^2) * omega_d/(2 pi)^d
            * sigma^2 vol(M/G) / n )^(theta s / (theta s + d/2)),

    with s = (d/2)(kappa + 1), i.e. kappa = 2 s / d - 1.
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError("theta must lie in (0, 1]")
    if target_norm <= 0:
        raise ConfigurationError("target norm must be positive")
    kappa = 2.0 * s / d_eff - 1.0
    if kappa <= 0:
        raise ConfigurationError(f"kappa = 2s/d - 1 = {kappa:g} must be positive")
    base = (
        1.0
        / (2.0 * kappa * theta * target_norm**2)
        * unit_ball_volume(d_eff)
        / TWO_PI**d_eff
        * sigma2
        * quotient_volume
        / n
    )
    return float(base ** (theta * s / (theta * s + d_eff / 2.0)))


def rate_upper_bound(
    s: float,
    theta: float,
    d_eff: int,
    quotient_volume: float,
    sigma2: float,
    n: int,
    target_norm: float,
) -> float:
    """Expectation upper bound 32 (...)^(theta s/(theta s + d/2)) |f*|^(d/(theta s + d/2))."""
    kappa = 2.0 * s / d_eff - 1.0
    if kappa <= 0:
        raise ConfigurationError(f"kappa = 2s/d - 1 = {kappa:g} must be positive")
    base = (
        1.0
        / (kappa * theta)
        * unit_ball_volume(d_eff)
        / TWO_PI**d_eff
        * sigma2
        * quotient_volume
        / n
    )
    expo = theta * s / (theta * s + d_eff / 2.0)
    return float(32.0 * base**expo * target_norm ** (d_eff / (theta * s + d_eff / 2.0)))


def effective_estimator(target: TargetFunction, kernel: SpectralKernel, eta: float) -> TargetFunction:
    """Population ridge estimator: coefficientwise shrinkage
    beta = mu/(mu + eta) * alpha on the kernel's invariant basis."""
    if eta <= 0:
        raise ConfigurationError("eta must be positive")
    alpha_inv, _ = _target_in_kernel_coordinates(kernel, target)
    shrink = kernel.weights / (kernel.weights + eta)
    beta_inv = shrink * alpha_inv
    alpha_full = kernel.basis.expansion @ beta_inv
    return TargetFunction(
        kernel.manifold, kernel.basis.full, alpha_full, target.sobolev_s
    )
