"""Transmit/receive channel covariance kernels and their training.

The channel covariance factors as sigma_T (x) sigma_R, where sigma_T
captures correlation among transmit antennas and sigma_R among receive
antennas.  This module builds those factors from array geometry (spatial
scattering quadrature, Laplace and Bessel families), from channel samples
(statistical kernels and the per-frame adaptive update), and fits the
artificial-kernel hyperparameter eta by maximum likelihood.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import j0

from . import cmt
from .errors import (
    DegenerateGramError,
    DimensionMismatchError,
    EmptySampleSetError,
    NotPSDError,
    QuadratureUnstableError,
)
from .linalg import PSD_REL_TOL, HermitianEVD, as_matrix, herm_eig, psd_sqrt

KERNEL_FAMILIES = ("statistical", "laplace", "bessel", "identity")


@dataclass(frozen=True)
class ArrayGeometry:
    """Centered uniform linear array with spacing given in wavelengths."""

    n_antennas: int
    spacing_over_lambda: float

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be positive")
        if self.spacing_over_lambda <= 0:
            raise ValueError("spacing_over_lambda must be positive")

    def offsets(self) -> np.ndarray:
        """Centered antenna index vector [-(N-1)/2, ..., (N-1)/2]."""
        n = self.n_antennas
        return np.arange(n) - (n - 1) / 2.0

    def positions_over_lambda(self) -> np.ndarray:
        """Antenna positions along the array axis, in wavelengths."""
        return self.offsets() * self.spacing_over_lambda


@dataclass(frozen=True)
class KernelFamily:
    """Kernel family tag plus the eta hyperparameter where one applies."""

    tag: str
    eta: float | None = None

    def __post_init__(self):
        if self.tag not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.tag!r}")
        needs_eta = self.tag in ("laplace", "bessel")
        if needs_eta and (self.eta is None or self.eta <= 0):
            raise ValueError(f"family {self.tag!r} requires eta > 0")
        if not needs_eta and self.eta is not None:
            raise ValueError(f"family {self.tag!r} takes no eta")


@dataclass(frozen=True)
class CovKernel:
    """Kronecker-factored channel covariance with cached decompositions.

    The full covariance sigma_T (x) sigma_R is never materialized unless
    explicitly requested via :meth:`full`.
    """

    sigma_t: np.ndarray
    sigma_r: np.ndarray
    evd_t: HermitianEVD = field(repr=False)
    evd_r: HermitianEVD = field(repr=False)

    @classmethod
    def from_factors(cls, sigma_t, sigma_r) -> "CovKernel":
        """Build a kernel from the two Hermitian PSD factors.

        Slightly negative eigenvalues (rounding noise, indefinite Bessel
        matrices) are clipped to zero and the factor rebuilt so the cached
        decomposition reconstructs it exactly; eigenvalues below
        -1e-6 * lambda_max raise NotPSDError.
        """
        st, et = _clipped_factor(as_matrix(sigma_t))
        sr, er = _clipped_factor(as_matrix(sigma_r))
        return cls(sigma_t=st, sigma_r=sr, evd_t=et, evd_r=er)

    @classmethod
    def identity(cls, n_t: int, n_r: int) -> "CovKernel":
        return cls.from_factors(np.eye(n_t), np.eye(n_r))

    @property
    def n_t(self) -> int:
        return self.sigma_t.shape[0]

    @property
    def n_r(self) -> int:
        return self.sigma_r.shape[0]

    @property
    def alphas(self) -> np.ndarray:
        """Transmit eigenvalues, descending."""
        return self.evd_t.eigenvalues

    @property
    def betas(self) -> np.ndarray:
        """Receive eigenvalues, descending."""
        return self.evd_r.eigenvalues

    def trace_product(self) -> float:
        """tr(sigma_T) * tr(sigma_R), the mean channel energy E||h||^2."""
        return float(np.trace(self.sigma_t).real * np.trace(self.sigma_r).real)

    def full(self) -> np.ndarray:
        """Materialize sigma_T (x) sigma_R."""
        return np.kron(self.sigma_t, self.sigma_r)

    def apply(self, x) -> np.ndarray:
        """Compute (sigma_T (x) sigma_R) @ x without forming the product.

        Uses the reshape identity for the column-stacked vec convention:
        a vector v of length n_t*n_r reshaped to (n_t, n_r) row-major maps
        to sigma_T @ V @ sigma_R^T.
        """
        a = np.asarray(x, dtype=complex)
        squeeze = a.ndim == 1
        if squeeze:
            a = a[:, None]
        if a.shape[0] != self.n_t * self.n_r:
            raise DimensionMismatchError(
                f"vector length {a.shape[0]} != {self.n_t} * {self.n_r}"
            )
        t = a.reshape(self.n_t, self.n_r, a.shape[1])
        out = np.einsum("ab,bsk,rs->ark", self.sigma_t, t, self.sigma_r, optimize=True)
        out = out.reshape(self.n_t * self.n_r, a.shape[1])
        return out[:, 0] if squeeze else out


def _clipped_factor(m: np.ndarray):
    evd = herm_eig(m)
    w = evd.eigenvalues
    scale = max(float(w[0]), 0.0)
    if w[-1] >= 0.0:
        return 0.5 * (m + m.conj().T), evd
    if w[-1] < -PSD_REL_TOL * scale:
        raise NotPSDError(
            f"kernel factor eigenvalue {w[-1]:.3e} below -{PSD_REL_TOL:g} * lambda_max"
        )
    clipped = np.clip(w, 0.0, None)
    u = evd.basis
    rebuilt = (u * clipped) @ u.conj().T
    rebuilt = 0.5 * (rebuilt + rebuilt.conj().T)
    return rebuilt, HermitianEVD(basis=u, eigenvalues=clipped)


def default_scatter(phi, theta):
    """Dipole-style spatial scattering density (1.67 / 2pi) cos^4(theta)."""
    return (1.67 / (2.0 * np.pi)) * np.cos(theta) ** 4


def spatial_correlation(
    geom: ArrayGeometry,
    scatter: Callable | None = None,
    quad_points: int = 64,
) -> np.ndarray:
    """Spatial correlation matrix of a ULA under an angular density.

    Entry (m, n) is the double integral over (phi, theta) in
    [-pi/2, pi/2]^2 of f(phi, theta) * exp(j k(phi,theta)^T (r_m - r_n)),
    evaluated with tensor-product Gauss-Legendre quadrature.  The array
    lies along the y axis, so the phase term reduces to
    2*pi*(d/lambda)*(m - n)*cos(theta)*sin(phi).

    The quadrature form sum_k w_k f_k e_k e_k^H is PSD by construction
    whenever f is nonnegative.
    """
    if quad_points < 16:
        raise ValueError("need at least 16 quadrature points per axis")
    f = scatter if scatter is not None else default_scatter
    x, w = np.polynomial.legendre.leggauss(quad_points)
    half = np.pi / 2.0
    angles = half * x
    weights = half * w
    phi = angles[:, None]
    theta = angles[None, :]
    dens = np.broadcast_to(f(phi, theta), (quad_points, quad_points))
    if np.any(dens < -1e-12):
        raise ValueError("scattering density must be nonnegative")
    wgt = (weights[:, None] * weights[None, :] * dens).ravel()
    direction = (np.cos(theta) * np.sin(phi)).ravel()
    pos = geom.positions_over_lambda()
    steering = np.exp(2j * np.pi * np.outer(pos, direction))
    r = (steering * wgt) @ steering.conj().T
    defect = np.linalg.norm(r - r.conj().T)
    if defect > 1e-6 * max(np.linalg.norm(r), 1.0):
        raise QuadratureUnstableError(f"Hermiticity defect {defect:.3e}")
    return 0.5 * (r + r.conj().T)


def laplace_kernel(geom: ArrayGeometry, eta: float) -> np.ndarray:
    """Squared-exponential correlation exp(-eta^2 (d/lambda)^2 (m-n)^2)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    idx = geom.offsets()
    diff = idx[:, None] - idx[None, :]
    return np.exp(-(eta**2) * geom.spacing_over_lambda**2 * diff**2).astype(complex)


def bessel_kernel(geom: ArrayGeometry, eta: float) -> np.ndarray:
    """Isotropic-ring correlation J0(eta (d/lambda) |m-n|).

    The raw matrix may be numerically indefinite at coarse spacing; kernel
    assembly clips eigenvalues above -1e-8 * lambda_max to zero.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    idx = geom.offsets()
    dist = np.abs(idx[:, None] - idx[None, :])
    return j0(eta * geom.spacing_over_lambda * dist).astype(complex)


def assemble_kernel(r_tx, c_tx, r_rx, c_rx) -> CovKernel:
    """Combine spatial correlation and mutual coupling into a CovKernel.

    sigma_T = (C_tx^{1/2})^T R_tx^* (C_tx^{1/2})^* and
    sigma_R = C_rx^{1/2} R_rx (C_rx^{1/2})^H, matching the covariance of
    vec(H) for H = C_rx^{1/2} R_rx^{1/2} H_iid R_tx^{1/2} C_tx^{1/2}.
    """
    r_tx, c_tx, r_rx, c_rx = map(as_matrix, (r_tx, c_tx, r_rx, c_rx))
    if r_tx.shape != c_tx.shape or r_rx.shape != c_rx.shape:
        raise DimensionMismatchError("correlation/coupling shapes differ")
    ct_half = psd_sqrt(c_tx)
    cr_half = psd_sqrt(c_rx)
    sigma_t = ct_half.T @ r_tx.conj() @ ct_half.conj()
    sigma_r = cr_half @ r_rx @ cr_half.conj().T
    return CovKernel.from_factors(sigma_t, sigma_r)


def statistical_kernels(samples: Sequence[np.ndarray], normalize: bool = False) -> CovKernel:
    """Factor estimates from channel realizations H_r (each N_R x N_T).

    sigma_T averages row outer products H^T(n,:) H^*(n,:) over rows and
    realizations; sigma_R averages column outer products.  With
    ``normalize`` the factors are rescaled so tr(sigma_T) * tr(sigma_R)
    matches the mean sample energy (the raw product is biased by
    tr(sigma_T) tr(sigma_R) / (N_T N_R) unless the true factors have unit
    diagonal).
    """
    if len(samples) == 0:
        raise EmptySampleSetError("need at least one channel sample")
    mats = [as_matrix(h) for h in samples]
    n_r, n_t = mats[0].shape
    for h in mats:
        if h.shape != (n_r, n_t):
            raise DimensionMismatchError("channel samples differ in shape")
    sum_t = np.zeros((n_t, n_t), dtype=complex)
    sum_r = np.zeros((n_r, n_r), dtype=complex)
    energy = 0.0
    for h in mats:
        sum_t += h.T @ h.conj()
        sum_r += h @ h.conj().T
        energy += float(np.linalg.norm(h) ** 2)
    r = len(mats)
    sigma_t = sum_t / (r * n_r)
    sigma_r = sum_r / (r * n_t)
    if normalize:
        target = energy / r
        have = float(np.trace(sigma_t).real * np.trace(sigma_r).real)
        if have > 0 and target > 0:
            scale = math.sqrt(target / have)
            sigma_t = sigma_t * scale
            sigma_r = sigma_r * scale
    return CovKernel.from_factors(sigma_t, sigma_r)


def adaptive_update(prior: CovKernel, h_hat, frame_index: int) -> CovKernel:
    """Fold a newly estimated channel into the running factor averages.

    sigma_T <- ((t-1)/t) prior + (1/(t N_R)) H^T H^*  and analogously for
    the receive factor with N_T, where t = frame_index >= 1.  At t = 1 the
    prior weight is zero and the result is the pure single-sample
    estimate.
    """
    if frame_index < 1:
        raise ValueError("frame_index starts at 1")
    h = as_matrix(h_hat)
    if h.shape != (prior.n_r, prior.n_t):
        raise DimensionMismatchError(
            f"channel shape {h.shape} does not match kernel ({prior.n_r}, {prior.n_t})"
        )
    t = float(frame_index)
    sigma_t = ((t - 1.0) / t) * prior.sigma_t + (h.T @ h.conj()) / (t * prior.n_r)
    sigma_r = ((t - 1.0) / t) * prior.sigma_r + (h @ h.conj().T) / (t * prior.n_t)
    return CovKernel.from_factors(sigma_t, sigma_r)


@dataclass(frozen=True)
class EtaGrid:
    """Search grid for the eta hyperparameter."""

    eta_min: float = 0.05
    eta_max: float = 5.0
    steps: int = 100
    log_spaced: bool = True

    def points(self) -> np.ndarray:
        if self.eta_min <= 0 or self.eta_max < self.eta_min or self.steps < 1:
            raise ValueError("invalid eta grid")
        if self.steps == 1:
            return np.array([self.eta_min])
        if self.log_spaced:
            return np.geomspace(self.eta_min, self.eta_max, self.steps)
        return np.linspace(self.eta_min, self.eta_max, self.steps)


def family_kernel(
    family: KernelFamily, geom_t: ArrayGeometry, geom_r: ArrayGeometry, eta: float | None = None
) -> CovKernel:
    """Build the artificial kernel of a family at a given eta."""
    value = eta if eta is not None else family.eta
    if family.tag == "laplace":
        return CovKernel.from_factors(
            laplace_kernel(geom_t, value), laplace_kernel(geom_r, value)
        )
    if family.tag == "bessel":
        return CovKernel.from_factors(
            bessel_kernel(geom_t, value), bessel_kernel(geom_r, value)
        )
    if family.tag == "identity":
        return CovKernel.identity(geom_t.n_antennas, geom_r.n_antennas)
    raise ValueError(f"family {family.tag!r} has no closed-form kernel")


def eta_log_likelihoods(
    family: KernelFamily,
    geom_t: ArrayGeometry,
    geom_r: ArrayGeometry,
    observations: Sequence[tuple],
    grid: EtaGrid = EtaGrid(),
) -> tuple[np.ndarray, np.ndarray]:
    """Total Gaussian log-likelihood of pilot observations on an eta grid.

    Each observation is a triple (y, X, Xi); the per-observation term is
    -y^H M^{-1} y - ln det M - m ln pi with M = X^H Sigma(eta) X + Xi.
    Returns (etas, total log-likelihood per eta).
    """
    if family.tag not in ("laplace", "bessel"):
        raise ValueError("eta fitting applies to laplace or bessel families")
    if len(observations) == 0:
        raise ValueError("need at least one observation")
    etas = grid.points()
    total = np.zeros(etas.size)
    for i, eta in enumerate(etas):
        kern = family_kernel(family, geom_t, geom_r, eta=float(eta))
        acc = 0.0
        for y, x, xi in observations:
            y = np.asarray(y, dtype=complex).ravel()
            x = as_matrix(x)
            xi = as_matrix(xi)
            m = x.conj().T @ kern.apply(x) + xi
            m = 0.5 * (m + m.conj().T)
            sign, logdet = np.linalg.slogdet(m)
            if sign.real <= 0 or not np.isfinite(logdet):
                raise DegenerateGramError("singular X^H Sigma X + Xi")
            try:
                sol = np.linalg.solve(m, y)
            except np.linalg.LinAlgError as exc:
                raise DegenerateGramError("singular X^H Sigma X + Xi") from exc
            quad = float(np.real(np.vdot(y, sol)))
            acc += -quad - logdet - y.size * math.log(math.pi)
        total[i] = acc
    return etas, total


def fit_eta(
    family: KernelFamily,
    geom_t: ArrayGeometry,
    geom_r: ArrayGeometry,
    observations: Sequence[tuple],
    grid: EtaGrid = EtaGrid(),
) -> float:
    """Grid point maximizing the pilot log-likelihood over eta."""
    etas, ll = eta_log_likelihoods(family, geom_t, geom_r, observations, grid)
    return float(etas[int(np.argmax(ll))])


def save_kernel(directory, kernel: CovKernel, family: KernelFamily | None = None) -> None:
    """Write sigma_T/sigma_R as CMT files plus a small JSON sidecar."""
    os.makedirs(directory, exist_ok=True)
    cmt.save(os.path.join(directory, "sigma_t.cmt"), kernel.sigma_t)
    cmt.save(os.path.join(directory, "sigma_r.cmt"), kernel.sigma_r)
    meta = {"family": family.tag if family else None, "eta": family.eta if family else None}
    with open(os.path.join(directory, "kernel.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh)
        fh.write("\n")


def load_kernel(directory) -> tuple[CovKernel, dict]:
    sigma_t = cmt.load(os.path.join(directory, "sigma_t.cmt"))
    sigma_r = cmt.load(os.path.join(directory, "sigma_r.cmt"))
    meta_path = os.path.join(directory, "kernel.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="ascii") as fh:
            meta = json.load(fh)
    return CovKernel.from_factors(sigma_t, sigma_r), meta
