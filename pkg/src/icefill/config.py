"""Scenario configuration files: flat INI sections with strict validation.

Sections and keys:

    [array]  n_t  n_r  n_rf  spacing_over_lambda
    [pilot]  q  p  snr_db
    [kernel] family  eta  coupling_tx  coupling_rx
    [run]    method  trials  seed  label  frames
    [sweep]  values

Missing optional keys fall back to the reference defaults (n_t=4, n_r=64,
n_rf=4, q=48, snr_db=10, spacing=0.125).  Unknown sections or keys are
errors, not warnings.  ``method`` and ``values`` accept comma-separated
lists; coupling entries are paths to CMT files, resolved relative to the
config file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from . import cmt
from .errors import ConfigParseError, ConfigValidationError
from .kernels import KernelFamily
from .sim import METHODS, ScenarioConfig

_SCHEMA = {
    "array": {"n_t", "n_r", "n_rf", "spacing_over_lambda"},
    "pilot": {"q", "p", "snr_db"},
    "kernel": {"family", "eta", "coupling_tx", "coupling_rx"},
    "run": {"method", "trials", "seed", "label", "frames"},
    "sweep": {"values"},
}

_METHOD_ALIASES = {m.lower(): m for m in METHODS}


@dataclass(frozen=True)
class RunSettings:
    """Parsed scenario plus run extras that sit outside ScenarioConfig."""

    scenario: ScenarioConfig
    sweep_values: tuple[float, ...]
    frames: int


def _parse_number(section: str, key: str, text: str, kind):
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigValidationError(f"[{section}] {key} = {text!r} is not a valid {kind.__name__}") from exc


def parse_config(path, overrides: dict[str, str] | None = None) -> RunSettings:
    """Read and validate a scenario file, applying ``section.key`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigParseError(f"{path}: parse error at line {lineno}") from exc
    except configparser.Error as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc

    values: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigValidationError(f"unknown section [{section}]")
        for key, val in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigValidationError(f"unknown key {key!r} in section [{section}]")
            values[(section, key)] = val.strip()
    for dotted, val in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigValidationError(f"override {dotted!r} must be SECTION.KEY")
        section, key = dotted.split(".", 1)
        section, key = section.strip().lower(), key.strip().lower()
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigValidationError(f"unknown override {dotted!r}")
        values[(section, key)] = val.strip()

    def get(section, key, default=None):
        return values.get((section, key), default)

    n_t = _parse_number("array", "n_t", get("array", "n_t", "4"), int)
    n_r = _parse_number("array", "n_r", get("array", "n_r", "64"), int)
    n_rf = _parse_number("array", "n_rf", get("array", "n_rf", "4"), int)
    spacing = _parse_number(
        "array", "spacing_over_lambda", get("array", "spacing_over_lambda", "0.125"), float
    )
    pilots = _parse_number("pilot", "q", get("pilot", "q", "48"), int)
    power = _parse_number("pilot", "p", get("pilot", "p", "1.0"), float)
    snr_db = _parse_number("pilot", "snr_db", get("pilot", "snr_db", "10"), float)

    family_tag = get("kernel", "family", "statistical").lower()
    eta_text = get("kernel", "eta")
    eta = _parse_number("kernel", "eta", eta_text, float) if eta_text else None
    try:
        family = KernelFamily(tag=family_tag, eta=eta)
    except ValueError as exc:
        raise ConfigValidationError(str(exc)) from exc

    base_dir = os.path.dirname(os.path.abspath(path))

    def coupling(key):
        rel = get("kernel", key)
        if not rel:
            return None
        full = rel if os.path.isabs(rel) else os.path.join(base_dir, rel)
        try:
            return cmt.load(full)
        except (OSError, ValueError) as exc:
            raise ConfigValidationError(f"[kernel] {key}: {exc}") from exc

    methods = []
    for tok in get("run", "method", "2DIF").split(","):
        name = tok.strip().lower()
        if name not in _METHOD_ALIASES:
            raise ConfigValidationError(f"unknown method {tok.strip()!r}")
        methods.append(_METHOD_ALIASES[name])
    trials = _parse_number("run", "trials", get("run", "trials", "1000"), int)
    seed = _parse_number("run", "seed", get("run", "seed", "0"), int)
    frames = _parse_number("run", "frames", get("run", "frames", "200"), int)
    label = get("run", "label", "")

    sweep_raw = get("sweep", "values", "")
    sweep_values = tuple(
        _parse_number("sweep", "values", tok.strip(), float)
        for tok in sweep_raw.split(",")
        if tok.strip()
    )

    try:
        scenario = ScenarioConfig(
            n_t=n_t,
            n_r=n_r,
            n_rf=n_rf,
            spacing_over_lambda=spacing,
            pilots=pilots,
            snr_db=snr_db,
            power=power,
            kernel_family=family,
            methods=tuple(methods),
            n_trials=trials,
            master_seed=seed,
            label=label,
            coupling_tx=coupling("coupling_tx"),
            coupling_rx=coupling("coupling_rx"),
        )
    except ValueError as exc:
        raise ConfigValidationError(str(exc)) from exc
    return RunSettings(scenario=scenario, sweep_values=sweep_values, frames=frames)
