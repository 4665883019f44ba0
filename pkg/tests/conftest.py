"""Shared test helpers.

The sandbox kernel makes mmap-backed large allocations expensive, so the
allocator is tuned once per session to keep freed arenas on the heap.
"""

import ctypes

import numpy as np
import pytest

from icefill.kernels import CovKernel, laplace_kernel, ArrayGeometry


def _tune_allocator():
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-4, 0)  # M_MMAP_MAX = 0
        libc.mallopt(-1, 2**30)  # M_TRIM_THRESHOLD
    except OSError:
        pass


_tune_allocator()


def random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def random_psd(rng, n: int, rank: int | None = None) -> np.ndarray:
    k = rank or n
    a = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return a @ a.conj().T / k


def random_correlated_kernel(rng, n_t: int, n_r: int) -> CovKernel:
    """Unit-diagonal correlated factors at a random spacing/length scale."""
    eta = float(rng.uniform(0.5, 3.0))
    spacing = float(rng.uniform(0.08, 0.3))
    st = laplace_kernel(ArrayGeometry(n_t, spacing), eta)
    sr = laplace_kernel(ArrayGeometry(n_r, spacing), eta)
    return CovKernel.from_factors(st, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
