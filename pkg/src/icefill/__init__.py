"""Observation-matrix design and LMMSE channel estimation for densely
spaced MIMO arrays: greedy two-dimensional ice filling, its two-stage
hybrid variant, classical baselines, and a deterministic Monte-Carlo NMSE
harness."""

from .baselines import (
    WaterFillingSolution,
    design_dft_plan,
    design_if_plan,
    design_random_plan,
    design_waterfilling,
    estimate_ls,
    water_fill,
)
from .design import (
    IceTable,
    ObservationPlan,
    Selection,
    design_2dif,
    final_ice_profile,
    init_ice_table,
    load_plan,
    save_plan,
    select_eigenpairs,
    update_ice_table,
)
from .estimator import (
    PilotBatch,
    mi_orthogonality_invariance,
    mutual_information,
    plan_mutual_information,
    posterior_covariance,
    posterior_mean,
)
from .hybrid import (
    HybridPlan,
    design_ts2dif,
    update_analog,
    update_digital,
    update_precoder,
)
from .kernels import (
    ArrayGeometry,
    CovKernel,
    EtaGrid,
    KernelFamily,
    adaptive_update,
    assemble_kernel,
    bessel_kernel,
    fit_eta,
    laplace_kernel,
    spatial_correlation,
    statistical_kernels,
)
from .linalg import (
    HermitianEVD,
    herm_eig,
    kron,
    orthonormalize,
    psd_sqrt,
    sample_complex_gaussian,
)
from .sim import (
    AdaptiveTrace,
    ChannelModel,
    NMSEReport,
    ScenarioConfig,
    build_scenario,
    run_adaptive,
    run_sweep,
    snr_to_noise,
    synthesize_channel,
    transmit,
)

__version__ = "0.1.0"
