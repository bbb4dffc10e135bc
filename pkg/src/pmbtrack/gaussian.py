"""Gaussian density arithmetic: Kalman prediction/update, KLD, mixture moment matching.

All operations are pure functions; density objects are treated as immutable
values and are safe to share across threads and processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, NumericalError

__all__ = [
    "GaussianDensity",
    "LinearGaussianModel",
    "kalman_predict",
    "kalman_update",
    "gaussian_kld",
    "moment_match",
    "log_gaussian_pdf",
]

_SYM_RTOL = 1e-9


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    """Multivariate Gaussian with mean vector and symmetric positive-definite covariance.

    The covariance is validated at construction: it must be symmetric to
    within 1e-9 relative tolerance and admit a Cholesky factorisation.
    A failed factorisation raises :class:`NumericalError` rather than being
    silently regularised.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ContractViolationError(
                f"covariance shape {cov.shape} does not match mean of dimension {mean.size}"
            )
        scale = max(float(np.abs(cov).max()), 1.0)
        if float(np.abs(cov - cov.T).max()) > _SYM_RTOL * scale:
            raise ContractViolationError("covariance is not symmetric within 1e-9 relative tolerance")
        cov = _symmetrize(cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"covariance is not positive definite (diag={np.diag(cov)})"
            ) from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def _from_validated(cls, mean: np.ndarray, cov: np.ndarray, chol: np.ndarray) -> "GaussianDensity":
        """Internal fast path for batch-validated inputs (factor already computed)."""
        self = object.__new__(cls)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        return self

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the covariance."""
        return self._chol  # type: ignore[attr-defined]

    @property
    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def log_pdf(self, x: np.ndarray) -> float:
        return log_gaussian_pdf(x, self.mean, self.chol)

    def __repr__(self) -> str:  # compact, diagnostics-friendly
        return f"GaussianDensity(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def log_gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov_chol: np.ndarray) -> float:
    """Log of N(x; mean, L L^T) given the lower Cholesky factor L."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != mean.size:
        raise ContractViolationError(f"point of dimension {x.size} vs density of dimension {mean.size}")
    u = np.linalg.solve(cov_chol, x - mean)
    log_det = 2.0 * float(np.sum(np.log(np.diag(cov_chol))))
    return -0.5 * (x.size * math.log(2.0 * math.pi) + log_det + float(u @ u))


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    """Linear-Gaussian dynamic and measurement model (F, Q, H, R)."""

    transition: np.ndarray
    process_noise: np.ndarray
    obs: np.ndarray
    obs_noise: np.ndarray

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.transition, dtype=float))
        q = np.atleast_2d(np.asarray(self.process_noise, dtype=float))
        h = np.atleast_2d(np.asarray(self.obs, dtype=float))
        r = np.atleast_2d(np.asarray(self.obs_noise, dtype=float))
        n_x = f.shape[0]
        if f.shape != (n_x, n_x) or q.shape != (n_x, n_x):
            raise ContractViolationError("transition and process noise must be square and same size")
        if h.shape[1] != n_x:
            raise ContractViolationError("observation matrix column count must match state dimension")
        n_z = h.shape[0]
        if r.shape != (n_z, n_z):
            raise ContractViolationError("observation noise shape must match measurement dimension")
        if np.min(np.linalg.eigvalsh(_symmetrize(q))) < -1e-9:
            raise ContractViolationError("process noise must be positive semidefinite")
        try:
            np.linalg.cholesky(_symmetrize(r))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("observation noise must be positive definite") from exc
        object.__setattr__(self, "transition", f)
        object.__setattr__(self, "process_noise", _symmetrize(q))
        object.__setattr__(self, "obs", h)
        object.__setattr__(self, "obs_noise", _symmetrize(r))

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.obs.shape[0]


def kalman_predict(d: GaussianDensity, m: LinearGaussianModel) -> GaussianDensity:
    """Propagate a Gaussian through linear dynamics: mean -> F mean, cov -> F cov F^T + Q."""
    if d.dim != m.state_dim:
        raise ContractViolationError(f"density dimension {d.dim} vs model state dimension {m.state_dim}")
    f = m.transition
    mean = f @ d.mean
    cov = _symmetrize(f @ d.cov @ f.T + m.process_noise)
    return GaussianDensity(mean, cov)


def kalman_update(
    d: GaussianDensity, m: LinearGaussianModel, z: np.ndarray
) -> tuple[GaussianDensity, float]:
    """Condition a Gaussian on a linear measurement z.

    Returns the posterior density and the predictive likelihood
    N(z; H mean, H cov H^T + R). The posterior covariance is symmetrised to
    bound floating-point drift over long filter runs.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if d.dim != m.state_dim:
        raise ContractViolationError(f"density dimension {d.dim} vs model state dimension {m.state_dim}")
    if z.size != m.obs_dim:
        raise ContractViolationError(f"measurement dimension {z.size}, expected {m.obs_dim}")
    h = m.obs
    s = _symmetrize(h @ d.cov @ h.T + m.obs_noise)
    try:
        s_chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular innovation covariance (diag={np.diag(s)})") from exc
    # K = cov H^T S^{-1} via two triangular solves against the factor of S.
    pht = d.cov @ h.T
    gain = np.linalg.solve(s_chol.T, np.linalg.solve(s_chol, pht.T)).T
    innov = z - h @ d.mean
    mean = d.mean + gain @ innov
    cov = _symmetrize((np.eye(d.dim) - gain @ h) @ d.cov)
    log_lik = log_gaussian_pdf(z, h @ d.mean, s_chol)
    return GaussianDensity(mean, cov), math.exp(log_lik)


def gaussian_kld(f: GaussianDensity, q: GaussianDensity) -> float:
    """Kullback-Leibler divergence D(f || q) between Gaussians.

    0.5 * [tr(Pq^-1 Pf) - log(|Pf|/|Pq|) - n + (mq-mf)^T Pq^-1 (mq-mf)]
    """
    if f.dim != q.dim:
        raise ContractViolationError(f"dimension mismatch: {f.dim} vs {q.dim}")
    lq = q.chol
    # tr(Pq^-1 Pf) through the factor: ||Lq^-1 Lf||_F^2
    a = np.linalg.solve(lq, f.chol)
    trace_term = float(np.sum(a * a))
    u = np.linalg.solve(lq, q.mean - f.mean)
    maha = float(u @ u)
    return 0.5 * (trace_term - (f.log_det_cov - q.log_det_cov) - f.dim + maha)


def moment_match(weights, components) -> GaussianDensity:
    """Single Gaussian matching the first two moments of a weighted mixture.

    Weights must be non-negative and sum to one within 1e-9; all components
    must share the same dimension.
    """
    weights = np.asarray(weights, dtype=float).reshape(-1)
    components = list(components)
    if weights.size == 0 or not components:
        raise ContractViolationError("moment_match requires at least one component")
    if weights.size != len(components):
        raise ContractViolationError("weights and components must have equal length")
    if np.any(weights < 0):
        raise ContractViolationError("mixture weights must be non-negative")
    if abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ContractViolationError(f"mixture weights sum to {weights.sum()}, expected 1")
    dim = components[0].dim
    if any(c.dim != dim for c in components):
        raise ContractViolationError("mixture components must share one dimension")
    means = np.stack([c.mean for c in components])
    mean = weights @ means
    cov = np.zeros((dim, dim))
    for w, comp in zip(weights, components):
        if w == 0.0:
            continue
        delta = comp.mean - mean
        cov += w * (comp.cov + np.outer(delta, delta))
    return GaussianDensity(mean, _symmetrize(cov))
