"""Reference designs and estimators: DFT plans, LS, water-filling, column-wise
greedy filling, and random feasible plans.

The water-filling solution is the continuous-power upper bound on plan
mutual information: with base levels sigma^2 / lambda_n over the top
N_RF * Q covariance eigenvalues, powers p_n = max(beta - sigma^2/lambda_n, 0)
share the total budget P * N_RF * Q and beta is located by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import ObservationPlan, Selection, design_2dif
from .errors import UnderdeterminedError
from .estimator import PilotBatch
from .kernels import CovKernel
from .linalg import orthonormalize, sample_complex_gaussian


@dataclass(frozen=True)
class WaterFillingSolution:
    """Water level beta, per-direction powers, and the ideal observation matrix."""

    beta: float
    powers: np.ndarray
    obs_matrix: np.ndarray


def water_fill(eigenvalues, noise: float, total_power: float, tol: float = 1e-10):
    """Bisection for the water level over base levels sigma^2 / lambda_n.

    Returns (beta, powers) with powers p_n = max(beta - sigma^2/lambda_n, 0)
    summing to total_power; zero eigenvalues receive zero power.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if total_power <= 0:
        raise ValueError("total_power must be positive")
    positive = lam > 0
    if not np.any(positive):
        raise ValueError("need at least one positive eigenvalue")
    levels = noise / lam[positive]

    def allocated(beta):
        return float(np.sum(np.clip(beta - levels, 0.0, None)))

    lo = float(np.min(levels))
    hi = float(np.max(levels)) + total_power
    # The bracket is guaranteed: allocated(lo) = 0 and allocated(hi) >= total.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < total_power:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    beta = 0.5 * (lo + hi)
    powers = np.zeros(lam.size)
    powers[positive] = np.clip(beta - levels, 0.0, None)
    return beta, powers


def design_waterfilling(
    kernel: CovKernel, pilots: int, chains: int, power: float, noise: float
) -> WaterFillingSolution:
    """Ideal observation matrix from the top N_RF * Q covariance eigenvectors.

    Columns are sqrt(p_n) * (a_i (x) b_j) for the N_RF * Q largest cell
    eigenvalues alpha_i beta_j; if the budget exceeds the grid size the
    surplus powers are zero and beta solves the reduced problem.
    """
    budget = pilots * chains
    grid = np.outer(kernel.alphas, kernel.betas)
    flat = grid.ravel()
    order = np.argsort(-flat, kind="stable")
    k = min(budget, flat.size)
    top = order[:k]
    beta, p_top = water_fill(flat[top], noise, power * budget)
    powers = np.zeros(budget)
    powers[:k] = p_top
    a = kernel.evd_t.basis
    b = kernel.evd_r.basis
    cols = []
    n_r = kernel.n_r
    for rank, cell in enumerate(top):
        i, j = divmod(int(cell), n_r)
        cols.append(math.sqrt(p_top[rank]) * np.kron(a[:, i], b[:, j]))
    return WaterFillingSolution(beta=float(beta), powers=powers, obs_matrix=np.column_stack(cols))


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix of size n."""
    grid = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(grid, grid) / n) / math.sqrt(n)


def design_dft_plan(n_t: int, n_r: int, n_rf: int, power: float) -> ObservationPlan:
    """Non-adaptive full-rank plan built from DFT columns.

    Combiners cycle through ceil(N_R / N_RF) blocks of consecutive DFT
    columns (wrapping at the edge) and the precoder advances to the next
    scaled DFT column after each full combiner cycle, so the stacked
    observation matrix spans all N_T * N_R dimensions.
    """
    f_t = dft_matrix(n_t)
    f_r = dft_matrix(n_r)
    blocks = math.ceil(n_r / n_rf)
    pilots = n_t * blocks
    precoders, combiners = [], []
    root_p = math.sqrt(power)
    for q in range(pilots):
        t_idx = q // blocks
        c_idx = q % blocks
        cols = [(c_idx * n_rf + k) % n_r for k in range(n_rf)]
        precoders.append(root_p * f_t[:, t_idx])
        combiners.append(f_r[:, cols])
    return ObservationPlan(precoders=tuple(precoders), combiners=tuple(combiners))


def estimate_ls(batch: PilotBatch) -> np.ndarray:
    """Minimum-norm least-squares estimate argmin ||y - X^H h||.

    Requires at least as many observations as unknowns and a full-row-rank
    stacked observation matrix.
    """
    a = batch.obs_matrix.conj().T
    n = batch.obs_matrix.shape[0]
    if a.shape[0] < n:
        raise UnderdeterminedError(
            f"{a.shape[0]} observations cannot determine {n} unknowns"
        )
    sol, _, rank, _ = np.linalg.lstsq(a, batch.stacked_obs, rcond=None)
    if rank < n:
        raise UnderdeterminedError(f"stacked observation rank {rank} < {n}")
    return sol


def design_if_plan(
    kernel: CovKernel, budget: int, power: float, noise: float
) -> ObservationPlan:
    """Column-wise greedy filling: one SIMO design per transmit antenna.

    Each transmit antenna n gets a share of the observation budget
    (round-robin remainder); its single-chain combiners come from the
    greedy fill of the kernel (sigma_T[n, n], sigma_R) and its precoder is
    sqrt(P) e_n.  Returned as one plan of single-column combiners.
    """
    if budget < kernel.n_t:
        raise ValueError("budget must cover at least one pilot per transmit antenna")
    base, extra = divmod(budget, kernel.n_t)
    precoders, combiners, selections = [], [], []
    for n in range(kernel.n_t):
        share = base + (1 if n < extra else 0)
        if share == 0:
            continue
        scalar = np.array([[kernel.sigma_t[n, n]]], dtype=complex)
        sub = CovKernel.from_factors(scalar, kernel.sigma_r)
        plan = design_2dif(sub, pilots=share, chains=1, power=power, noise=noise)
        e_n = np.zeros(kernel.n_t, dtype=complex)
        e_n[n] = math.sqrt(power)
        for q in range(share):
            precoders.append(e_n)
            combiners.append(plan.combiners[q])
            selections.append(Selection(n_t=n, n_r_list=plan.selections[q].n_r_list))
    return ObservationPlan(
        precoders=tuple(precoders),
        combiners=tuple(combiners),
        selections=tuple(selections),
    )


def design_random_plan(
    n_t: int, n_r: int, n_rf: int, pilots: int, power: float, rng_seed
) -> ObservationPlan:
    """Random feasible plan: sqrt(P)-sphere precoders, orthonormalized
    Gaussian combiners.  Deterministic per seed."""
    if n_rf > n_r:
        raise ValueError(f"n_rf={n_rf} exceeds n_r={n_r}")
    rng = np.random.default_rng(rng_seed)
    precoders, combiners = [], []
    for _ in range(pilots):
        g = sample_complex_gaussian(n_t, 1, rng).ravel()
        precoders.append(math.sqrt(power) * g / np.linalg.norm(g))
        combiners.append(orthonormalize(sample_complex_gaussian(n_r, n_rf, rng)))
    return ObservationPlan(precoders=tuple(precoders), combiners=tuple(combiners))
