"""Batch command-line front end.

Commands: design, sweep-snr, sweep-q, sweep-spacing, adaptive, fit-kernel,
export-plan.  All randomness flows from run.seed in the config; outputs
are written atomically (temp file + rename) and partial outputs are
removed on failure.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile

import numpy as np

from .config import RunSettings, parse_config
from .design import design_2dif, load_plan, save_plan
from .errors import ConfigParseError, ConfigValidationError
from .estimator import plan_mutual_information
from .hybrid import design_ts2dif, save_hybrid_plan
from .kernels import (
    ArrayGeometry,
    EtaGrid,
    KernelFamily,
    eta_log_likelihoods,
    family_kernel,
    save_kernel,
)
from .sim import (
    build_scenario,
    run_adaptive,
    run_sweep,
    snr_to_noise,
    transmit,
    trial_rng,
)

SWEEP_COMMANDS = {"sweep-snr": "snr", "sweep-q": "pilots", "sweep-spacing": "spacing"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icefill",
        description="Design pilot observation matrices and evaluate channel-estimation NMSE.",
    )
    parser.add_argument("command", choices=[
        "design", "sweep-snr", "sweep-q", "sweep-spacing", "adaptive", "fit-kernel", "export-plan",
    ])
    parser.add_argument("--config", required=True, help="scenario configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable)",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")
    return parser


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_plans(settings: RunSettings, out_dir: str, summarize: bool) -> None:
    cfg = settings.scenario
    kernel, _ = build_scenario(cfg)
    noise = snr_to_noise(cfg.snr_db, cfg.power, kernel)
    for method in cfg.methods:
        if method not in ("2DIF", "TS2DIF"):
            raise ConfigValidationError(f"plan export supports 2DIF/TS2DIF, not {method}")
        target = os.path.join(out_dir, f"plan-{method.lower()}")
        staging = tempfile.mkdtemp(dir=out_dir, prefix=".plan-tmp-")
        try:
            if method == "2DIF":
                plan = design_2dif(kernel, cfg.pilots, cfg.n_rf, cfg.power, noise)
                save_plan(staging, plan)
                mi = plan_mutual_information(kernel, plan, noise)
            else:
                hplan = design_ts2dif(kernel, cfg.pilots, cfg.n_rf, cfg.power, noise)
                save_hybrid_plan(staging, hplan)
                mi = plan_mutual_information(kernel, hplan.to_observation_plan(), noise)
            if os.path.isdir(target):
                shutil.rmtree(target)
            os.replace(staging, target)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        if summarize:
            print(f"{method}: Q={cfg.pilots} N_RF={cfg.n_rf} MI={mi:.6f} bits -> {target}")


def _cmd_sweep(settings: RunSettings, axis: str, out_dir: str, threads: int) -> None:
    if not settings.sweep_values:
        raise ConfigValidationError("sweep commands need [sweep] values in the config")
    report = run_sweep(settings.scenario, axis, settings.sweep_values, threads=threads)
    path = os.path.join(out_dir, f"sweep-{axis}.csv")
    report.save_csv(path)
    for row in report.rows:
        print(
            f"{row.method} {axis}={row.value:g}: NMSE={row.nmse_db:.3f} dB, "
            f"MI={row.mi_bits:.3f} bits ({row.trials} trials)"
        )
    print(f"wrote {path}")


def _cmd_adaptive(settings: RunSettings, out_dir: str) -> None:
    trace = run_adaptive(settings.scenario, settings.frames)
    path = os.path.join(out_dir, "adaptive.csv")
    lines = ["frame,nmse_db,kernel_error"]
    for i in range(trace.nmse.size):
        nmse_db = 10.0 * np.log10(trace.nmse[i])
        lines.append(f"{i + 1},{nmse_db!r},{trace.kernel_error[i]!r}")
    _atomic_write_text(path, "\n".join(lines) + "\n")
    save_kernel(os.path.join(out_dir, "learned-kernel"), trace.final_kernel)
    final_db = 10.0 * np.log10(trace.nmse[-1])
    print(f"adaptive: {trace.nmse.size} frames, final NMSE {final_db:.3f} dB -> {path}")


def _cmd_fit_kernel(settings: RunSettings, out_dir: str) -> None:
    cfg = settings.scenario
    family = cfg.kernel_family
    if family.tag not in ("laplace", "bessel"):
        raise ConfigValidationError("fit-kernel needs kernel.family = laplace or bessel")
    kernel, model = build_scenario(cfg)
    noise = snr_to_noise(cfg.snr_db, cfg.power, kernel)
    from .baselines import design_random_plan  # deferred: avoids cycle at import time

    observations = []
    for r in range(cfg.n_trials):
        rng = trial_rng(cfg.master_seed, 0xF17, r)
        plan = design_random_plan(
            cfg.n_t, cfg.n_r, cfg.n_rf, cfg.pilots, cfg.power,
            np.random.SeedSequence([cfg.master_seed, 0xF17F, r]),
        )
        h = model.draw(rng)
        batch = transmit(plan, h, noise, rng)
        observations.append((batch.stacked_obs, batch.obs_matrix, batch.noise_cov))
    geom_t = ArrayGeometry(cfg.n_t, cfg.spacing_over_lambda)
    geom_r = ArrayGeometry(cfg.n_r, cfg.spacing_over_lambda)
    etas, ll = eta_log_likelihoods(family, geom_t, geom_r, observations, EtaGrid())
    best = float(etas[int(np.argmax(ll))])
    path = os.path.join(out_dir, "eta-likelihood.csv")
    lines = ["eta,log_likelihood"]
    lines += [f"{e!r},{v!r}" for e, v in zip(etas, ll)]
    _atomic_write_text(path, "\n".join(lines) + "\n")
    fitted = KernelFamily(family.tag, best)
    save_kernel(
        os.path.join(out_dir, "fitted-kernel"),
        family_kernel(fitted, geom_t, geom_r),
        fitted,
    )
    print(f"eta_opt={best:.6g} (true eta={family.eta:g}) -> {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            print(f"error: bad --set {item!r}, expected SECTION.KEY=VALUE", file=sys.stderr)
            return 2
        key, val = item.split("=", 1)
        overrides[key] = val
    try:
        settings = parse_config(args.config, overrides)
        os.makedirs(args.out, exist_ok=True)
        if args.command in SWEEP_COMMANDS:
            _cmd_sweep(settings, SWEEP_COMMANDS[args.command], args.out, args.threads)
        elif args.command == "design":
            _write_plans(settings, args.out, summarize=True)
        elif args.command == "export-plan":
            _write_plans(settings, args.out, summarize=False)
        elif args.command == "adaptive":
            _cmd_adaptive(settings, args.out)
        elif args.command == "fit-kernel":
            _cmd_fit_kernel(settings, args.out)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface module errors with context, nonzero exit
        print(f"error [{args.command} @ {args.config}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
