"""Dense complex linear-algebra primitives used throughout the package.

Everything here is a pure function of its inputs; matrices are plain
``numpy`` arrays of ``complex128``.  Eigendecompositions are returned with
eigenvalues sorted descending, with ties kept in the order produced by the
underlying LAPACK solver so that repeated runs give identical bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NonSquareError,
    NotHermitianError,
    NotPSDError,
    RankDeficientError,
)

HERMITIAN_REL_TOL = 1e-6
PSD_REL_TOL = 1e-6


def as_matrix(m) -> np.ndarray:
    """Coerce to a finite 2-d complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class HermitianEVD:
    """Eigendecomposition U diag(w) U^H with w real and non-increasing."""

    basis: np.ndarray
    eigenvalues: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.basis
        return (u * self.eigenvalues) @ u.conj().T


def herm_eig(m) -> HermitianEVD:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    The input is symmetrized as (m + m^H)/2 before decomposition.  Raises
    NotHermitianError when the asymmetry exceeds 1e-6 * ||m||_F.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NonSquareError(f"expected square matrix, got {a.shape}")
    norm = np.linalg.norm(a)
    defect = np.linalg.norm(a - a.conj().T)
    if norm > 0 and defect > HERMITIAN_REL_TOL * norm:
        raise NotHermitianError(
            f"asymmetry {defect:.3e} exceeds {HERMITIAN_REL_TOL:g} * ||m||_F"
        )
    a = 0.5 * (a + a.conj().T)
    w, u = np.linalg.eigh(a)
    # Stable descending sort: equal eigenvalues keep the solver's order.
    order = np.argsort(-w, kind="stable")
    return HermitianEVD(basis=u[:, order], eigenvalues=w[order])


def psd_sqrt(m) -> np.ndarray:
    """Hermitian square root S of a PSD matrix, S @ S == m.

    Eigenvalues in [-1e-6 * lambda_max, 0) are clipped to zero; anything
    more negative raises NotPSDError.
    """
    evd = herm_eig(m)
    w = evd.eigenvalues
    scale = max(float(w[0]), 0.0)
    if w[-1] < -PSD_REL_TOL * scale:
        raise NotPSDError(
            f"eigenvalue {w[-1]:.3e} below -{PSD_REL_TOL:g} * lambda_max"
        )
    root = np.sqrt(np.clip(w, 0.0, None))
    u = evd.basis
    s = (u * root) @ u.conj().T
    return 0.5 * (s + s.conj().T)


def clip_psd(m, rel_tol: float = 1e-8) -> np.ndarray:
    """Project a nearly-PSD Hermitian matrix onto the PSD cone.

    Negative eigenvalues within -rel_tol * lambda_max are clipped to zero;
    anything more negative raises NotPSDError (scaled by PSD_REL_TOL).
    """
    evd = herm_eig(m)
    w = evd.eigenvalues
    scale = max(float(w[0]), 0.0)
    if w[-1] < -PSD_REL_TOL * scale:
        raise NotPSDError(
            f"eigenvalue {w[-1]:.3e} below -{PSD_REL_TOL:g} * lambda_max"
        )
    if w[-1] >= 0.0:
        return 0.5 * (np.asarray(m, dtype=complex) + np.asarray(m, dtype=complex).conj().T)
    u = evd.basis
    out = (u * np.clip(w, 0.0, None)) @ u.conj().T
    return 0.5 * (out + out.conj().T)


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result equals a[i, j] * b."""
    return np.kron(as_matrix(a), as_matrix(b))


def orthonormalize(w) -> np.ndarray:
    """Orthonormal basis of the column span of ``w`` (tall, full rank).

    Returns a matrix with w'^H w' = I whose columns span the same space.
    Raises RankDeficientError when the numerical rank is below the column
    count.
    """
    a = as_matrix(w)
    rows, cols = a.shape
    if rows < cols:
        raise RankDeficientError(f"need rows >= cols, got {a.shape}")
    sv = np.linalg.svd(a, compute_uv=False)
    tol = sv[0] * max(rows, cols) * np.finfo(float).eps
    if cols > 0 and (sv.size < cols or sv[cols - 1] <= tol):
        raise RankDeficientError("columns are numerically rank deficient")
    q, r = np.linalg.qr(a)
    # Positive-diagonal convention: deterministic output, and a single
    # column maps to v / ||v|| exactly.
    d = np.diag(r).copy()
    d[np.abs(d) == 0] = 1.0
    return q[:, :cols] * (d / np.abs(d))


def sample_complex_gaussian(rows: int, cols: int, rng) -> np.ndarray:
    """Circularly-symmetric complex Gaussian matrix, unit entry variance.

    Real and imaginary parts are i.i.d. N(0, 1/2).  ``rng`` is either a
    numpy Generator or an integer seed; a given seed always yields the
    same matrix.
    """
    if rows <= 0 or cols <= 0:
        raise ValueError("rows and cols must be positive")
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    re = gen.standard_normal((rows, cols))
    im = gen.standard_normal((rows, cols))
    return (re + 1j * im) / np.sqrt(2.0)
