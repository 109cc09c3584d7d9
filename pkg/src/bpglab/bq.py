"""Generic Bayesian quadrature engine.

A Gaussian process is conditioned on (possibly noisy) samples of an
integrand; because integration is linear, the posterior over any integral of
the GP is Gaussian with moments that are linear/quadratic forms in the
kernel-weight integrals.  This module implements the conditioning and the
posterior moments; the closed-form kernel-weight integrals for the policy
gradient live in :mod:`bpglab.bpg`.

Solves of (K + Sigma) use a symmetric factorization with the package jitter
ladder; the factorization is cached on the dataset and an explicit inverse is
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from bpglab.errors import ContractViolation, NumericalInconsistency
from bpglab.linalg import CholFactor

NoiseCov = Union[float, np.ndarray]


def _noise_matrix(sigma: NoiseCov, m: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(m)
    if s.ndim == 1:
        if s.shape[0] != m:
            raise ContractViolation("noise diagonal has wrong length")
        return np.diag(s)
    if s.shape != (m, m):
        raise ContractViolation("noise covariance has wrong shape")
    return s


@dataclass
class GpDataset:
    """Kernel matrix, noise covariance, observations, and prior mean at samples."""

    K: np.ndarray
    sigma: NoiseCov
    y: np.ndarray
    fbar: Optional[np.ndarray] = None
    _factor: Optional[CholFactor] = field(default=None, repr=False)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        m = self.K.shape[0]
        if self.K.shape != (m, m):
            raise ContractViolation("kernel matrix must be square")
        if self.y.shape[0] != m:
            raise ContractViolation("observations do not match kernel size")
        self.fbar = np.zeros(m) if self.fbar is None else np.asarray(self.fbar, dtype=float).ravel()
        if self.fbar.shape[0] != m:
            raise ContractViolation("prior mean vector does not match kernel size")

    @property
    def m(self) -> int:
        return self.K.shape[0]

    def factor(self) -> CholFactor:
        if self._factor is None:
            self._factor = CholFactor(self.K + _noise_matrix(self.sigma, self.m))
        return self._factor

    def apply_c(self, b: np.ndarray) -> np.ndarray:
        """(K + Sigma)^{-1} b without materializing the inverse."""
        return self.factor().solve(b)


def gp_condition(dataset: GpDataset, k_query: np.ndarray, prior_mean_query, k_qq):
    """Posterior mean and covariance of the GP at query points.

    ``k_query`` holds kernel vectors as columns (shape (M,) or (M, Q));
    ``k_qq`` is the prior covariance among the queries (scalar for Q=1).
    """
    kq = np.asarray(k_query, dtype=float)
    single = kq.ndim == 1
    if single:
        kq = kq[:, None]
    resid = dataset.y - dataset.fbar
    c_kq = dataset.apply_c(kq)
    mean = np.asarray(prior_mean_query, dtype=float) + c_kq.T @ resid
    cov = np.asarray(k_qq, dtype=float) - kq.T @ c_kq
    if single:
        return float(mean[0]), float(cov[0, 0])
    return mean, cov


@dataclass
class IntegralPrior:
    """Prior moments of the integral: mean rho0, kernel-weight integrals b, b0."""

    rho0: float
    b: np.ndarray
    b0: float

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.b0 < 0:
            raise ContractViolation("prior variance b0 must be nonnegative")


def _checked_var(raw: float, scale: float) -> float:
    tol = max(1e-10, 1e-13 * abs(scale))
    if raw < -tol:
        raise NumericalInconsistency(
            f"posterior variance {raw} is negative beyond tolerance; check K/Sigma"
        )
    return max(raw, 0.0)


def integral_posterior(prior: IntegralPrior, dataset: GpDataset) -> tuple[float, float]:
    """E[rho | D] = rho0 + b^T C (y - fbar), Var[rho | D] = b0 - b^T C b."""
    if prior.b.shape[0] != dataset.m:
        raise ContractViolation("kernel-weight vector does not match dataset size")
    cb = dataset.apply_c(prior.b)
    mean = prior.rho0 + float(cb @ (dataset.y - dataset.fbar))
    var = _checked_var(prior.b0 - float(prior.b @ cb), prior.b0)
    return mean, var


def decoupled_vector_posterior(
    K: np.ndarray,
    sigma: Union[NoiseCov, Sequence[NoiseCov]],
    Y: np.ndarray,
    b: np.ndarray,
    b0: float,
    per_component_sigma: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise posterior of a vector of independent integrals.

    All components share the kernel matrix; observations are the rows of
    ``Y`` (n, M).  With ``per_component_sigma`` the noise covariance differs
    per component and ``sigma`` is a sequence of per-component covariances
    (each scalar, diagonal, or full); otherwise one covariance is shared and
    a single factorization serves every component.  Cross-component
    covariance is identically zero, so the variances come back as a vector.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ContractViolation("Y must be (n, M)")
    n, m = Y.shape
    b = np.asarray(b, dtype=float).ravel()
    means = np.empty(n)
    variances = np.empty(n)
    if per_component_sigma:
        if len(sigma) != n:
            raise ContractViolation("need one noise covariance per component")
        for j in range(n):
            ds = GpDataset(K, sigma[j], Y[j])
            means[j], variances[j] = integral_posterior(IntegralPrior(0.0, b, b0), ds)
    else:
        ds = GpDataset(K, sigma, Y[0])
        cb = ds.apply_c(b)
        var = _checked_var(b0 - float(b @ cb), b0)
        means[:] = Y @ cb
        variances[:] = var
    return means, variances
