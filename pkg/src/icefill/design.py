"""Greedy two-dimensional ice-filling (2DIF) observation-matrix design.

The posterior eigenvalues of the Kronecker-factored channel covariance
live on an N_T x N_R grid.  Observing the eigen-direction pair
(a_{n_T}, b_{n_R}) with per-pilot power P shrinks that cell's eigenvalue
as lambda <- lambda sigma^2 / (P lambda + sigma^2), which in "ice level"
units sigma^2 / lambda is an exact increase by P.  Each pilot greedily
picks one transmit index and N_RF distinct receive indices maximizing the
mutual-information increment sum_k log2(1 + P lambda / sigma^2), then the
selected cells are filled.  The precoder/combiner assignment
v = sqrt(P) conj(a), W = [b_1 ... b_{N_RF}] realizes the selection.

Eigenvalue updates happen on the real grid only; the full posterior
covariance is never re-decomposed.  If the pilot budget exceeds the number
of positive cells the greedy loop keeps refilling the least-filled
(deepest) cells, which is the natural continuation of the rule.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import cmt
from .errors import TooManyChainsError
from .kernels import CovKernel

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class Selection:
    """One pilot's eigen-index choice: a transmit row and N_RF receive columns."""

    n_t: int
    n_r_list: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.n_r_list)) != len(self.n_r_list):
            raise ValueError("receive indices must be distinct")


@dataclass(frozen=True)
class IceTable:
    """Posterior eigenvalue grid with per-pilot power and noise level.

    ``lambdas[i, j]`` is the eigenvalue attached to the eigenvector
    a_i (x) b_j; ``fill_count`` records how many times each cell has been
    selected.
    """

    lambdas: np.ndarray
    power: float
    noise: float
    fill_count: np.ndarray

    @property
    def n_t(self) -> int:
        return self.lambdas.shape[0]

    @property
    def n_r(self) -> int:
        return self.lambdas.shape[1]


def init_ice_table(kernel: CovKernel, power: float, noise: float) -> IceTable:
    """Fresh table with cell (i, j) = alpha_i * beta_j (descending factors)."""
    if power <= 0 or noise <= 0:
        raise ValueError("power and noise must be positive")
    grid = np.outer(kernel.alphas, kernel.betas)
    return IceTable(
        lambdas=grid,
        power=float(power),
        noise=float(noise),
        fill_count=np.zeros(grid.shape, dtype=int),
    )


def _row_objective(row: np.ndarray, n_rf: int, power: float, noise: float):
    """Best receive indices within one row and the resulting MI increment.

    The n_rf largest cells win; ties go to the lowest receive index (stable
    argsort on the negated row).
    """
    idx = np.argsort(-row, kind="stable")[:n_rf]
    value = float(np.sum(np.log1p(power * row[idx] / noise))) / LOG2
    return idx, value


def select_eigenpairs(table: IceTable, n_rf: int) -> Selection:
    """Maximize sum_k log2(1 + P lambda[n_t, n_r_k] / sigma^2) by linear search.

    Scans transmit rows in order and keeps the first row achieving the
    maximum (strict improvement replaces, so ties break toward the lowest
    transmit index).
    """
    if n_rf > table.n_r:
        raise TooManyChainsError(f"n_rf={n_rf} exceeds N_R={table.n_r}")
    if n_rf < 1:
        raise ValueError("n_rf must be at least 1")
    best_row = 0
    best_idx, best_val = _row_objective(table.lambdas[0], n_rf, table.power, table.noise)
    for row in range(1, table.n_t):
        idx, val = _row_objective(table.lambdas[row], n_rf, table.power, table.noise)
        if val > best_val:
            best_row, best_idx, best_val = row, idx, val
    return Selection(n_t=best_row, n_r_list=tuple(int(j) for j in best_idx))


def selection_mi_bits(table: IceTable, sel: Selection) -> float:
    """MI increment of a selection on the current table, in bits."""
    lam = table.lambdas[sel.n_t, list(sel.n_r_list)]
    return float(np.sum(np.log1p(table.power * lam / table.noise))) / LOG2


def update_ice_table(table: IceTable, sel: Selection) -> IceTable:
    """Fill the selected cells: lambda <- lambda sigma^2 / (P lambda + sigma^2).

    Equivalently the ice level sigma^2 / lambda rises by exactly P.  Cells
    at lambda = 0 stay at 0.  Returns a new table.
    """
    if sel.n_t >= table.n_t or any(j >= table.n_r for j in sel.n_r_list):
        raise ValueError("selection indices out of range")
    lam = table.lambdas.copy()
    cols = list(sel.n_r_list)
    cell = lam[sel.n_t, cols]
    lam[sel.n_t, cols] = cell * table.noise / (table.power * cell + table.noise)
    fills = table.fill_count.copy()
    fills[sel.n_t, cols] += 1
    return replace(table, lambdas=lam, fill_count=fills)


def final_ice_profile(table: IceTable) -> np.ndarray:
    """Current ice levels sigma^2 / lambda; cells at lambda = 0 map to +inf."""
    with np.errstate(divide="ignore"):
        return np.where(table.lambdas > 0, table.noise / table.lambdas, np.inf)


@dataclass(frozen=True)
class ObservationPlan:
    """Per-pilot precoders v_q (norm sqrt(P)) and combiners W_q.

    2DIF plans carry the eigen-index selections and the per-pilot MI
    increments predicted by the ice table; plans built by baseline designs
    may leave both as None.
    """

    precoders: tuple[np.ndarray, ...]
    combiners: tuple[np.ndarray, ...]
    selections: tuple[Selection, ...] | None = None
    mi_increments: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.precoders) != len(self.combiners):
            raise ValueError("precoder/combiner counts differ")

    @property
    def n_pilots(self) -> int:
        return len(self.precoders)

    @property
    def n_t(self) -> int:
        return self.precoders[0].shape[0]

    @property
    def n_r(self) -> int:
        return self.combiners[0].shape[0]

    @property
    def n_rf(self) -> int:
        return self.combiners[0].shape[1]

    def power(self) -> float:
        return float(np.linalg.norm(self.precoders[0]) ** 2)

    def observation_matrix(self) -> np.ndarray:
        """Stacked X = [X_1 ... X_Q] with X_q = conj(v_q) (x) W_q."""
        blocks = [
            np.kron(np.conj(v)[:, None], w) for v, w in zip(self.precoders, self.combiners)
        ]
        return np.hstack(blocks)

    def noise_covariance(self, noise: float) -> np.ndarray:
        """Xi = sigma^2 blkdiag(W_q^H W_q)."""
        m = self.n_pilots * self.n_rf
        xi = np.zeros((m, m), dtype=complex)
        for q, w in enumerate(self.combiners):
            s = slice(q * self.n_rf, (q + 1) * self.n_rf)
            xi[s, s] = noise * (w.conj().T @ w)
        return xi


def design_2dif(
    kernel: CovKernel, pilots: int, chains: int, power: float, noise: float
) -> ObservationPlan:
    """Run the greedy ice-filling loop and assign eigenvectors per pilot.

    Returns the plan with v_q = sqrt(P) conj(a_{n_T}) and
    W_q = [b_{n_R,1}, ..., b_{n_R,N_RF}]; deterministic given the kernel
    and parameters.
    """
    if pilots < 1:
        raise ValueError("need at least one pilot")
    table = init_ice_table(kernel, power, noise)
    a = kernel.evd_t.basis
    b = kernel.evd_r.basis
    root_p = np.sqrt(power)
    precoders, combiners, selections, increments = [], [], [], []
    for _ in range(pilots):
        sel = select_eigenpairs(table, chains)
        increments.append(selection_mi_bits(table, sel))
        precoders.append(root_p * np.conj(a[:, sel.n_t]))
        combiners.append(b[:, list(sel.n_r_list)].copy())
        selections.append(sel)
        table = update_ice_table(table, sel)
    return ObservationPlan(
        precoders=tuple(precoders),
        combiners=tuple(combiners),
        selections=tuple(selections),
        mi_increments=tuple(increments),
    )


def replay_ice_table(
    kernel: CovKernel, plan: ObservationPlan, power: float, noise: float
) -> IceTable:
    """Re-run the table updates of a selection-bearing plan."""
    if plan.selections is None:
        raise ValueError("plan carries no selections")
    table = init_ice_table(kernel, power, noise)
    for sel in plan.selections:
        table = update_ice_table(table, sel)
    return table


def save_plan(directory, plan: ObservationPlan) -> None:
    """Write one CMT file per pilot for v_q and W_q plus a selection index.

    Entries are written with full precision, so a load round-trips
    bit-identically.
    """
    os.makedirs(directory, exist_ok=True)
    for q, (v, w) in enumerate(zip(plan.precoders, plan.combiners)):
        cmt.save(os.path.join(directory, f"v_{q:03d}.cmt"), v[:, None])
        cmt.save(os.path.join(directory, f"w_{q:03d}.cmt"), w)
    if plan.selections is not None:
        lines = [
            " ".join(str(i) for i in (q, sel.n_t, *sel.n_r_list))
            for q, sel in enumerate(plan.selections)
        ]
        with open(os.path.join(directory, "selections.txt"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")


def load_plan(directory) -> ObservationPlan:
    precoders, combiners = [], []
    q = 0
    while os.path.exists(os.path.join(directory, f"v_{q:03d}.cmt")):
        precoders.append(cmt.load(os.path.join(directory, f"v_{q:03d}.cmt")).ravel())
        combiners.append(cmt.load(os.path.join(directory, f"w_{q:03d}.cmt")))
        q += 1
    if not precoders:
        raise FileNotFoundError(f"no plan files under {directory}")
    selections = None
    sel_path = os.path.join(directory, "selections.txt")
    if os.path.exists(sel_path):
        sels = []
        with open(sel_path, "r", encoding="ascii") as fh:
            for line in fh:
                parts = [int(tok) for tok in line.split()]
                if parts:
                    sels.append(Selection(n_t=parts[1], n_r_list=tuple(parts[2:])))
        selections = tuple(sels)
    return ObservationPlan(
        precoders=tuple(precoders), combiners=tuple(combiners), selections=selections
    )
