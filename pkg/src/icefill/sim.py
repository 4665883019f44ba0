"""Monte-Carlo link evaluation: channel synthesis, pilot transmission,
NMSE sweeps, and the adaptive kernel-training frame loop.

Determinism contract: every random draw comes from a counter-keyed Philox
stream derived from (master_seed, point index, method index, trial index),
and per-trial results are accumulated in trial order, so a report is
byte-identical for any worker-thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import (
    design_dft_plan,
    design_if_plan,
    design_random_plan,
    design_waterfilling,
)
from .design import ObservationPlan, design_2dif
from .errors import DimensionMismatchError
from .estimator import (
    PilotBatch,
    estimator_gain,
    mutual_information,
    plan_mutual_information,
    posterior_mean,
    white_noise_cov,
)
from .hybrid import design_ts2dif
from .kernels import (
    ArrayGeometry,
    CovKernel,
    KernelFamily,
    adaptive_update,
    assemble_kernel,
    bessel_kernel,
    laplace_kernel,
    spatial_correlation,
)
from .linalg import as_matrix, psd_sqrt, sample_complex_gaussian

METHODS = ("2DIF", "TS2DIF", "WaterFilling", "DFT-MMSE", "LS", "IF", "Random")
SWEEP_AXES = ("snr", "pilots", "spacing")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """One simulation scenario; field defaults follow the reference setup."""

    n_t: int = 4
    n_r: int = 64
    n_rf: int = 4
    spacing_over_lambda: float = 0.125
    pilots: int = 48
    snr_db: float = 10.0
    power: float = 1.0
    kernel_family: KernelFamily = KernelFamily("statistical")
    methods: tuple[str, ...] = ("2DIF",)
    n_trials: int = 1000
    master_seed: int = 0
    label: str = ""
    coupling_tx: np.ndarray | None = None
    coupling_rx: np.ndarray | None = None
    quad_points: int = 64

    def __post_init__(self):
        if min(self.n_t, self.n_r, self.n_rf, self.pilots) < 1:
            raise ValueError("dimensions and pilot count must be positive")
        if self.n_rf > self.n_r:
            raise ValueError(f"n_rf={self.n_rf} exceeds n_r={self.n_r}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")

    def scenario_id(self) -> str:
        return self.label or f"nt{self.n_t}-nr{self.n_r}-rf{self.n_rf}"


@dataclass(frozen=True)
class ChannelModel:
    """Sampler for H = C_rx^{1/2} R_rx^{1/2} H_iid R_tx^{1/2} C_tx^{1/2}."""

    left: np.ndarray
    right: np.ndarray

    def draw(self, rng) -> np.ndarray:
        h_iid = sample_complex_gaussian(self.left.shape[0], self.right.shape[0], rng)
        return self.left @ h_iid @ self.right


def scenario_factors(config: ScenarioConfig):
    """Spatial correlation and coupling factors (R_tx, C_tx, R_rx, C_rx)."""
    geom_t = ArrayGeometry(config.n_t, config.spacing_over_lambda)
    geom_r = ArrayGeometry(config.n_r, config.spacing_over_lambda)
    family = config.kernel_family
    if family.tag == "statistical":
        r_tx = spatial_correlation(geom_t, quad_points=config.quad_points)
        r_rx = spatial_correlation(geom_r, quad_points=config.quad_points)
    elif family.tag == "laplace":
        r_tx = laplace_kernel(geom_t, family.eta)
        r_rx = laplace_kernel(geom_r, family.eta)
    elif family.tag == "bessel":
        r_tx = bessel_kernel(geom_t, family.eta)
        r_rx = bessel_kernel(geom_r, family.eta)
    else:
        r_tx = np.eye(config.n_t, dtype=complex)
        r_rx = np.eye(config.n_r, dtype=complex)
    c_tx = as_matrix(config.coupling_tx) if config.coupling_tx is not None else np.eye(config.n_t, dtype=complex)
    c_rx = as_matrix(config.coupling_rx) if config.coupling_rx is not None else np.eye(config.n_r, dtype=complex)
    return r_tx, c_tx, r_rx, c_rx


def build_scenario(config: ScenarioConfig) -> tuple[CovKernel, ChannelModel]:
    r_tx, c_tx, r_rx, c_rx = scenario_factors(config)
    kernel = assemble_kernel(r_tx, c_tx, r_rx, c_rx)
    model = ChannelModel(
        left=psd_sqrt(c_rx) @ psd_sqrt(r_rx), right=psd_sqrt(r_tx) @ psd_sqrt(c_tx)
    )
    return kernel, model


def synthesize_channel(factors, rng) -> np.ndarray:
    """One channel draw from the correlated Rayleigh model."""
    r_tx, c_tx, r_rx, c_rx = factors
    model = ChannelModel(
        left=psd_sqrt(c_rx) @ psd_sqrt(r_rx), right=psd_sqrt(r_tx) @ psd_sqrt(c_tx)
    )
    return model.draw(rng)


def vec_channel(h: np.ndarray) -> np.ndarray:
    """Column-stacked channel vector (index (j) * N_R + i holds H[i, j])."""
    return np.asarray(h).T.reshape(-1)


def unvec_channel(hvec: np.ndarray, n_t: int, n_r: int) -> np.ndarray:
    return np.asarray(hvec).reshape(n_t, n_r).T


def snr_to_noise(snr_db: float, power: float, kernel: CovKernel) -> float:
    """Noise power giving SNR = (P / sigma^2) E||h||^2."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return power * kernel.trace_product() / 10.0 ** (snr_db / 10.0)


def transmit(plan: ObservationPlan, h: np.ndarray, noise: float, rng) -> PilotBatch:
    """Send the plan's pilots through H with fresh AWGN per pilot.

    y_q = W_q^H (H v_q + z_q), z_q ~ CN(0, sigma^2 I_{N_R}); the pilot
    symbol is 1 and transmit never rescales the precoders.
    """
    h = as_matrix(h)
    if h.shape != (plan.n_r, plan.n_t):
        raise DimensionMismatchError(
            f"channel {h.shape} does not match plan ({plan.n_r}, {plan.n_t})"
        )
    ys = []
    for v, w in zip(plan.precoders, plan.combiners):
        z = math.sqrt(noise) * sample_complex_gaussian(plan.n_r, 1, rng).ravel() if noise > 0 else 0.0
        ys.append(w.conj().T @ (h @ v + z))
    y = np.concatenate(ys)
    return PilotBatch.from_pilots(plan.precoders, plan.combiners, y, noise)


def trial_rng(*key: int) -> np.random.Generator:
    """Counter-keyed generator; identical key always gives identical draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    method: str
    axis: str
    value: float
    nmse_db: float
    mi_bits: float
    trials: int
    seed: int


@dataclass(frozen=True)
class NMSEReport:
    rows: tuple[ReportRow, ...] = ()

    HEADER = "scenario,method,axis,value,nmse_db,mi_bits,trials,seed"

    def to_csv_text(self) -> str:
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.scenario},{r.method},{r.axis},{r.value!r},{r.nmse_db!r},"
                f"{r.mi_bits!r},{r.trials},{r.seed}"
            )
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="ascii") as fh:
            fh.write(self.to_csv_text())
        os.replace(tmp, path)


@dataclass
class _CompiledMethod:
    """Everything a trial worker needs, precomputed once per sweep point."""

    name: str
    gain: np.ndarray
    mi_bits: float
    # Plan transmission pieces (None for the direct water-filling matrix).
    precoder_mat: np.ndarray | None = None
    combiner_stack: np.ndarray | None = None
    obs_matrix: np.ndarray | None = None
    field_noise: float = 0.0


def _compile_method(
    method: str, config: ScenarioConfig, kernel: CovKernel, noise: float, point_index: int
) -> _CompiledMethod:
    p, q, n_rf = config.power, config.pilots, config.n_rf
    if method == "2DIF":
        plan = design_2dif(kernel, q, n_rf, p, noise)
    elif method == "TS2DIF":
        plan = design_ts2dif(kernel, q, n_rf, p, noise).to_observation_plan()
    elif method == "DFT-MMSE" or method == "LS":
        plan = design_dft_plan(config.n_t, config.n_r, n_rf, p)
    elif method == "IF":
        # Column-wise scheme: the MIMO link is treated as N_T independent
        # SIMO systems, so estimation ignores transmit cross-correlation.
        kernel_if = CovKernel.from_factors(
            np.diag(np.diag(kernel.sigma_t)), kernel.sigma_r
        )
        plan = design_if_plan(kernel, q * n_rf, p, noise)
        x = plan.observation_matrix()
        xi = plan.noise_covariance(noise)
        return _CompiledMethod(
            name=method,
            gain=estimator_gain(kernel_if, x, xi),
            mi_bits=plan_mutual_information(kernel, plan, noise),
            precoder_mat=np.column_stack(plan.precoders),
            combiner_stack=np.conj(np.stack(plan.combiners)),
            field_noise=noise,
        )
    elif method == "Random":
        plan = design_random_plan(
            config.n_t, config.n_r, n_rf, q, p,
            np.random.SeedSequence([config.master_seed, 0x5EED, point_index]),
        )
    elif method == "WaterFilling":
        wf = design_waterfilling(kernel, q, n_rf, p, noise)
        xi = white_noise_cov(wf.obs_matrix.shape[1], noise)
        return _CompiledMethod(
            name=method,
            gain=estimator_gain(kernel, wf.obs_matrix, xi),
            mi_bits=mutual_information(kernel, wf.obs_matrix, xi),
            obs_matrix=wf.obs_matrix,
            field_noise=noise,
        )
    else:
        raise ValueError(f"unknown method {method!r}")

    x = plan.observation_matrix()
    xi = plan.noise_covariance(noise)
    if method == "LS":
        gain = np.linalg.pinv(x.conj().T)
    else:
        gain = estimator_gain(kernel, x, xi)
    return _CompiledMethod(
        name=method,
        gain=gain,
        mi_bits=plan_mutual_information(kernel, plan, noise),
        precoder_mat=np.column_stack(plan.precoders),
        combiner_stack=np.conj(np.stack(plan.combiners)),
        field_noise=noise,
    )


def _trial_ratio(compiled: _CompiledMethod, model: ChannelModel, rng) -> float:
    h = model.draw(rng)
    hvec = vec_channel(h)
    if compiled.obs_matrix is not None:
        m = compiled.obs_matrix.shape[1]
        z = math.sqrt(compiled.field_noise) * sample_complex_gaussian(m, 1, rng).ravel()
        y = compiled.obs_matrix.conj().T @ hvec + z
    else:
        hv = h @ compiled.precoder_mat
        z = math.sqrt(compiled.field_noise) * sample_complex_gaussian(
            h.shape[0], compiled.precoder_mat.shape[1], rng
        )
        y = np.einsum("qrk,rq->qk", compiled.combiner_stack, hv + z).ravel()
    err = hvec - compiled.gain @ y
    return float(np.linalg.norm(err) ** 2 / np.linalg.norm(hvec) ** 2)


def _point_config(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "snr":
        return replace(config, snr_db=float(value))
    if axis == "pilots":
        return replace(config, pilots=int(value))
    if axis == "spacing":
        return replace(config, spacing_over_lambda=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(
    config: ScenarioConfig, axis: str, values, threads: int = 1
) -> NMSEReport:
    """NMSE and MI per (sweep value, method), averaged over fresh trials.

    Plans are designed once per sweep point; trials then draw independent
    channels and noise.  NMSE is the mean of per-trial ||h - h_hat||^2 /
    ||h||^2, reported in dB.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    if threads < 1:
        threads = os.cpu_count() or 1
    rows = []
    for point_index, value in enumerate(values):
        cfg = _point_config(config, axis, value)
        kernel, model = build_scenario(cfg)
        noise = snr_to_noise(cfg.snr_db, cfg.power, kernel)
        for method_index, method in enumerate(cfg.methods):
            compiled = _compile_method(method, cfg, kernel, noise, point_index)
            ratios = np.empty(cfg.n_trials)

            def run_block(bounds):
                lo, hi = bounds
                for t in range(lo, hi):
                    rng = trial_rng(cfg.master_seed, point_index, method_index, t)
                    ratios[t] = _trial_ratio(compiled, model, rng)

            if threads == 1 or cfg.n_trials < 2 * threads:
                run_block((0, cfg.n_trials))
            else:
                edges = np.linspace(0, cfg.n_trials, threads + 1).astype(int)
                blocks = list(zip(edges[:-1], edges[1:]))
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(run_block, blocks))
            nmse = float(np.mean(ratios))
            rows.append(
                ReportRow(
                    scenario=cfg.scenario_id(),
                    method=method,
                    axis=axis,
                    value=float(value),
                    nmse_db=10.0 * math.log10(nmse),
                    mi_bits=compiled.mi_bits,
                    trials=cfg.n_trials,
                    seed=cfg.master_seed,
                )
            )
    return NMSEReport(rows=tuple(rows))


@dataclass(frozen=True)
class AdaptiveTrace:
    """Per-frame channel NMSE and learned-kernel relative Frobenius error."""

    nmse: np.ndarray
    kernel_error: np.ndarray
    final_kernel: CovKernel


def run_adaptive(
    config: ScenarioConfig, frames: int, seed_prior_as_sample: bool = True
) -> AdaptiveTrace:
    """Joint channel estimation and kernel learning over i.i.d. frames.

    Each frame designs a greedy plan from the current kernel estimate,
    estimates that frame's channel, then folds the estimate into the
    running factor averages.  The initial kernels are identities; with
    ``seed_prior_as_sample`` they are retained as a frame-zero
    pseudo-sample (update called with frame_index = t + 1), which keeps
    the learned factors full rank.  With it disabled the update uses
    frame_index = t exactly, which discards the initializer at t = 1 and
    confines every later receive-factor estimate to the column span of the
    first estimated channel (rank at most N_T).
    """
    if frames < 1:
        raise ValueError("frames must be at least 1")
    truth, model = build_scenario(config)
    noise = snr_to_noise(config.snr_db, config.power, truth)
    truth_full = truth.full()
    truth_norm = np.linalg.norm(truth_full)
    hat = CovKernel.identity(config.n_t, config.n_r)
    nmse = np.empty(frames)
    kernel_error = np.empty(frames)
    for t in range(1, frames + 1):
        rng = trial_rng(config.master_seed, 0xADA, t)
        plan = design_2dif(hat, config.pilots, config.n_rf, config.power, noise)
        h = model.draw(rng)
        batch = transmit(plan, h, noise, rng)
        h_hat = posterior_mean(hat, batch)
        hvec = vec_channel(h)
        nmse[t - 1] = float(
            np.linalg.norm(hvec - h_hat) ** 2 / np.linalg.norm(hvec) ** 2
        )
        h_hat_mat = unvec_channel(h_hat, config.n_t, config.n_r)
        hat = adaptive_update(hat, h_hat_mat, t + 1 if seed_prior_as_sample else t)
        kernel_error[t - 1] = float(
            np.linalg.norm(hat.full() - truth_full) / truth_norm
        )
    return AdaptiveTrace(nmse=nmse, kernel_error=kernel_error, final_kernel=hat)
