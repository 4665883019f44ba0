"""Two-stage fitting of phase-only analog combiners to ideal plans (TS-2DIF).

Stage 1 produces the ideal per-pilot observation matrices
X_q = conj(v_q) (x) W_q via the greedy ice-filling design.  Stage 2 fits a
hybrid factorization W_q ~ A_q D_q with |A_q(i, j)| = 1/sqrt(N_R) by
alternating exact minimizations of ||X_q - conj(v) (x) (A D)||_F^2:

  D-step  D = sum_n (v(n)/P) (A^H A)^{-1} A^H X_n        (exact minimizer)
  A-step  A = (1/sqrt(N_R)) exp(j angle(J)),
          J = sum_n v(n) X_n D^{-1}                      (maximizes the
          phase-alignment surrogate Tr Re{J^H A}; the true residual may
          transiently rise on this step)
  v-step  v = sqrt(P) c / ||c||, c(n) = Tr{X_n^H A D}    (exact minimizer)

X_n denotes the n-th N_R x N_RF block of the stacked target.  Residuals
are recorded after every sub-step so monotonicity of the D and v steps can
be audited.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import cmt
from .design import ObservationPlan, design_2dif
from .errors import SingularDigitalError, SingularGramError, ZeroCorrelationWarning
from .kernels import CovKernel

MAX_DIGITAL_COND = 1e12


@dataclass(frozen=True)
class HybridPlan:
    """Per-pilot analog/digital combiner factors and fitted precoders.

    ``fit_residuals`` holds the final squared Frobenius fit error per
    pilot; ``residual_traces`` holds one (iterations, 3) array per pilot
    with the residual after the D, A and v sub-steps of each iteration and
    ``initial_residuals`` the value before the first iteration.
    """

    analog: tuple[np.ndarray, ...]
    digital: tuple[np.ndarray, ...]
    precoders: tuple[np.ndarray, ...]
    fit_residuals: tuple[float, ...]
    initial_residuals: tuple[float, ...]
    residual_traces: tuple[np.ndarray, ...]

    @property
    def n_pilots(self) -> int:
        return len(self.analog)

    @property
    def combiners(self) -> tuple[np.ndarray, ...]:
        """Effective combiners W_q = A_q D_q (not orthonormal in general)."""
        return tuple(a @ d for a, d in zip(self.analog, self.digital))

    def to_observation_plan(self) -> ObservationPlan:
        return ObservationPlan(precoders=self.precoders, combiners=self.combiners)


def _blocks(x_if: np.ndarray, n_t: int):
    n_r = x_if.shape[0] // n_t
    return [x_if[n * n_r : (n + 1) * n_r] for n in range(n_t)]


def _residual(x_if: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    return float(np.linalg.norm(x_if - np.kron(np.conj(v)[:, None], w)) ** 2)


def update_digital(a: np.ndarray, v: np.ndarray, x_if: np.ndarray) -> np.ndarray:
    """Exact least-squares digital combiner for fixed analog stage and precoder."""
    power = float(np.linalg.norm(v) ** 2)
    gram = a.conj().T @ a
    rhs = sum(vn * (a.conj().T @ xn) for vn, xn in zip(v, _blocks(x_if, v.size)))
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError("analog combiner Gram matrix is singular") from exc
    return sol / power


def update_analog(d: np.ndarray, v: np.ndarray, x_if: np.ndarray) -> np.ndarray:
    """Constant-modulus analog stage aligning phases with J = sum v(n) X_n D^{-1}."""
    if np.linalg.cond(d) > MAX_DIGITAL_COND:
        raise SingularDigitalError("digital combiner is not invertible")
    d_inv = np.linalg.inv(d)
    j = sum(vn * (xn @ d_inv) for vn, xn in zip(v, _blocks(x_if, v.size)))
    n_r = x_if.shape[0] // v.size
    return np.exp(1j * np.angle(j)) / math.sqrt(n_r)


def update_precoder(a: np.ndarray, d: np.ndarray, x_if: np.ndarray, power: float) -> np.ndarray:
    """Exact norm-constrained precoder v = sqrt(P) c / ||c||.

    Falls back to sqrt(P) e_1 with a warning when the correlation vector
    is identically zero (all-zero fit target).
    """
    w = a @ d
    n_t = x_if.shape[0] // a.shape[0]
    c = np.array([np.vdot(xn, w) for xn in _blocks(x_if, n_t)])
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        warnings.warn("zero correlation vector; falling back to e1", ZeroCorrelationWarning)
        v = np.zeros(n_t, dtype=complex)
        v[0] = math.sqrt(power)
        return v
    return math.sqrt(power) * c / norm


def design_ts2dif(
    kernel: CovKernel,
    pilots: int,
    chains: int,
    power: float,
    noise: float,
    max_iters: int = 200,
    tol: float = 1e-6,
    analog_precoder: bool = False,
) -> HybridPlan:
    """Fit hybrid combiners and precoders to the ideal ice-filling plan.

    Per pilot, the D/A/v cycle repeats until the relative residual change
    drops below ``tol`` or ``max_iters`` is reached.  ``analog_precoder``
    switches the v-step to the phase-only form sqrt(P/N_T) exp(j angle(c));
    the default digital precoder is the primary path.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    ideal = design_2dif(kernel, pilots, chains, power, noise)
    n_r = kernel.n_r
    analog, digital, precoders = [], [], []
    finals, initials, traces = [], [], []
    for v_if, w_if in zip(ideal.precoders, ideal.combiners):
        x_if = np.kron(np.conj(v_if)[:, None], w_if)
        # Warm start: phases of the ideal combiner, the ideal precoder,
        # identity digital stage.
        a = np.exp(1j * np.angle(w_if)) / math.sqrt(n_r)
        v = v_if.copy()
        d = np.eye(chains, dtype=complex)
        prev = _residual(x_if, v, a @ d)
        initials.append(prev)
        rows = []
        for _ in range(max_iters):
            d = update_digital(a, v, x_if)
            r_d = _residual(x_if, v, a @ d)
            a = update_analog(d, v, x_if)
            r_a = _residual(x_if, v, a @ d)
            if analog_precoder:
                c = np.array([np.vdot(xn, a @ d) for xn in _blocks(x_if, kernel.n_t)])
                v = math.sqrt(power / kernel.n_t) * np.exp(1j * np.angle(c))
            else:
                v = update_precoder(a, d, x_if, power)
            r_v = _residual(x_if, v, a @ d)
            rows.append((r_d, r_a, r_v))
            converged = abs(prev - r_v) < tol * max(r_v, np.finfo(float).tiny)
            prev = r_v
            if converged:
                break
        analog.append(a)
        digital.append(d)
        precoders.append(v)
        finals.append(prev)
        traces.append(np.asarray(rows))
    return HybridPlan(
        analog=tuple(analog),
        digital=tuple(digital),
        precoders=tuple(precoders),
        fit_residuals=tuple(finals),
        initial_residuals=tuple(initials),
        residual_traces=tuple(traces),
    )


def save_hybrid_plan(directory, plan: HybridPlan) -> None:
    """Write per-pilot A/D/v CMT files and a residual log CSV."""
    os.makedirs(directory, exist_ok=True)
    for q in range(plan.n_pilots):
        cmt.save(os.path.join(directory, f"a_{q:03d}.cmt"), plan.analog[q])
        cmt.save(os.path.join(directory, f"d_{q:03d}.cmt"), plan.digital[q])
        cmt.save(os.path.join(directory, f"v_{q:03d}.cmt"), plan.precoders[q][:, None])
    with open(os.path.join(directory, "residuals.csv"), "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pilot", "iter", "residual"])
        for q, trace in enumerate(plan.residual_traces):
            for it, (_, _, r_v) in enumerate(trace):
                writer.writerow([q, it, repr(float(r_v))])


def load_hybrid_plan(directory) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """Read back the (analog, digital, precoder) triples of a saved plan."""
    analog, digital, precoders = [], [], []
    q = 0
    while os.path.exists(os.path.join(directory, f"a_{q:03d}.cmt")):
        analog.append(cmt.load(os.path.join(directory, f"a_{q:03d}.cmt")))
        digital.append(cmt.load(os.path.join(directory, f"d_{q:03d}.cmt")))
        precoders.append(cmt.load(os.path.join(directory, f"v_{q:03d}.cmt")).ravel())
        q += 1
    if not analog:
        raise FileNotFoundError(f"no hybrid plan files under {directory}")
    return tuple(analog), tuple(digital), tuple(precoders)
