"""Gaussian posterior (LMMSE) channel estimation and mutual information.

With prior vec(H) ~ CN(0, Sigma_h), stacked observation y = X^H h + z and
noise covariance Xi, the posterior mean and covariance are

    mu       = Sigma_h X (X^H Sigma_h X + Xi)^{-1} y
    Sigma|y  = Sigma_h - Sigma_h X (X^H Sigma_h X + Xi)^{-1} X^H Sigma_h

and the observation carries I(y; h) = log2 det(I + Xi^{-1} X^H Sigma_h X)
bits.  Sigma_h enters only through Kronecker-factored products, so the
full covariance is materialized solely inside posterior_covariance, whose
output is that size anyway.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import RankDeficientError, SingularInnovationError, SingularNoiseError
from .kernels import CovKernel
from .linalg import orthonormalize

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class PilotBatch:
    """Stacked received pilots y, observation matrix X, and noise covariance Xi."""

    stacked_obs: np.ndarray
    obs_matrix: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        m = self.stacked_obs.shape[0]
        if self.obs_matrix.shape[1] != m or self.noise_cov.shape != (m, m):
            raise ValueError("batch dimensions are inconsistent")

    @classmethod
    def from_pilots(cls, precoders, combiners, y, noise: float) -> "PilotBatch":
        """Assemble X = [conj(v_q) (x) W_q] and Xi = sigma^2 blkdiag(W^H W)."""
        blocks = [np.kron(np.conj(v)[:, None], w) for v, w in zip(precoders, combiners)]
        x = np.hstack(blocks)
        m = x.shape[1]
        xi = np.zeros((m, m), dtype=complex)
        col = 0
        for w in combiners:
            k = w.shape[1]
            xi[col : col + k, col : col + k] = noise * (w.conj().T @ w)
            col += k
        return cls(stacked_obs=np.asarray(y, dtype=complex).ravel(), obs_matrix=x, noise_cov=xi)


def _innovation(kernel: CovKernel, batch: PilotBatch):
    """Sigma_h X and the Hermitian innovation matrix X^H Sigma_h X + Xi."""
    sx = kernel.apply(batch.obs_matrix)
    m = batch.obs_matrix.conj().T @ sx + batch.noise_cov
    return sx, 0.5 * (m + m.conj().T)


def posterior_mean(kernel: CovKernel, batch: PilotBatch) -> np.ndarray:
    """LMMSE estimate of the vectorized channel."""
    sx, m = _innovation(kernel, batch)
    try:
        c, low = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInnovationError("X^H Sigma_h X + Xi is singular") from exc
    return sx @ scipy.linalg.cho_solve((c, low), batch.stacked_obs)


def estimator_gain(kernel: CovKernel, obs_matrix, noise_cov) -> np.ndarray:
    """Precomputed gain G with h_hat = G y, for Monte-Carlo reuse."""
    sx = kernel.apply(obs_matrix)
    m = obs_matrix.conj().T @ sx + noise_cov
    m = 0.5 * (m + m.conj().T)
    try:
        c, low = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInnovationError("X^H Sigma_h X + Xi is singular") from exc
    return scipy.linalg.cho_solve((c, low), sx.conj().T).conj().T


def posterior_covariance(kernel: CovKernel, batch: PilotBatch) -> np.ndarray:
    """Posterior covariance Sigma_h - Sigma_h X M^{-1} X^H Sigma_h."""
    sx, m = _innovation(kernel, batch)
    try:
        c, low = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInnovationError("X^H Sigma_h X + Xi is singular") from exc
    post = kernel.full() - sx @ scipy.linalg.cho_solve((c, low), sx.conj().T)
    return 0.5 * (post + post.conj().T)


def mutual_information(kernel: CovKernel, obs_matrix, noise_cov) -> float:
    """I(y; h) = log2 det(I + Xi^{-1} X^H Sigma_h X), in bits.

    Evaluated as logdet(I + L^{-1} M L^{-H}) with Xi = L L^H, which keeps
    the argument Hermitian PSD.
    """
    x = np.asarray(obs_matrix, dtype=complex)
    if x.shape[1] == 0:
        return 0.0
    m = x.conj().T @ kernel.apply(x)
    m = 0.5 * (m + m.conj().T)
    xi = np.asarray(noise_cov, dtype=complex)
    try:
        ell = np.linalg.cholesky(0.5 * (xi + xi.conj().T))
    except np.linalg.LinAlgError as exc:
        raise SingularNoiseError("noise covariance is singular") from exc
    b = scipy.linalg.solve_triangular(ell, m, lower=True)
    c = scipy.linalg.solve_triangular(ell, b.conj().T, lower=True)
    arg = np.eye(m.shape[0]) + 0.5 * (c + c.conj().T)
    sign, logdet = np.linalg.slogdet(arg)
    if sign.real <= 0:
        raise SingularNoiseError("mutual-information argument is not positive definite")
    return float(logdet) / LOG2


def white_noise_cov(n: int, noise: float) -> np.ndarray:
    return noise * np.eye(n)


def plan_mutual_information(kernel: CovKernel, plan, noise: float) -> float:
    """MI of an ObservationPlan-like object (has precoders/combiners)."""
    x = np.hstack(
        [np.kron(np.conj(v)[:, None], w) for v, w in zip(plan.precoders, plan.combiners)]
    )
    xi = _blkdiag_noise(plan.combiners, noise)
    return mutual_information(kernel, x, xi)


def _blkdiag_noise(combiners: Sequence[np.ndarray], noise: float) -> np.ndarray:
    m = sum(w.shape[1] for w in combiners)
    xi = np.zeros((m, m), dtype=complex)
    col = 0
    for w in combiners:
        k = w.shape[1]
        xi[col : col + k, col : col + k] = noise * (w.conj().T @ w)
        col += k
    return xi


def mi_orthogonality_invariance(
    kernel: CovKernel, precoders, combiners, noise: float
) -> tuple[float, float]:
    """MI with raw combiners versus orthonormalized combiners.

    Returns (MI with raw W_q and Xi = sigma^2 blkdiag(W^H W), MI with
    orthonormalized W_q and Xi = sigma^2 I); the two agree because only
    the column span of each combiner enters the information.
    """
    for w in combiners:
        if np.linalg.matrix_rank(w) < w.shape[1]:
            raise RankDeficientError("combiner is rank deficient")
    x_raw = np.hstack(
        [np.kron(np.conj(v)[:, None], w) for v, w in zip(precoders, combiners)]
    )
    mi_raw = mutual_information(kernel, x_raw, _blkdiag_noise(combiners, noise))
    orth = [orthonormalize(w) for w in combiners]
    x_orth = np.hstack(
        [np.kron(np.conj(v)[:, None], w) for v, w in zip(precoders, orth)]
    )
    mi_orth = mutual_information(kernel, x_orth, white_noise_cov(x_orth.shape[1], noise))
    return mi_raw, mi_orth
