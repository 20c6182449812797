"""Flat key = value experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are rejected. Environment variables are never consulted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .dispersion import DISPERSION_MODELS, FiberSpec
from .errors import ConfigError
from .source_model import PathImbalance, PumpPulse

SCHEMA_VERSION = 1

FS = 1e-15


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _optional_float(text: str):
    t = text.strip().lower()
    return None if t in ("", "none") else float(t)


# key -> (parser, default, description)
SCHEMA = {
    "schema_version": (int, SCHEMA_VERSION, "config schema version"),
    "seed": (int, 0, "root seed for all randomness (0 <= seed < 2**64)"),
    "workers": (int, 1, "worker processes for sweeps and bootstraps; never changes results"),
    "pump.center_wavelength_nm": (float, 726.0, "pump central wavelength, nm"),
    "pump.spectral_fwhm_nm": (float, 6.0, "pump intensity FWHM, nm"),
    "pump.repetition_rate_hz": (float, 80e6, "pulse repetition rate, Hz (bookkeeping)"),
    "pump.average_power_w": (float, 5e-3, "average power per path, W (bookkeeping)"),
    "fiber.length_m": (float, 0.20, "PM fiber length, m"),
    "fiber.birefringence": (float, 3.5e-4, "fiber birefringence dn (slow minus fast)"),
    "fiber.dispersion": (str, "fused_silica_malitson1965", "index model name"),
    "imbalance.intrinsic_delay_fs": (float, 0.0, "V-path delay from alignment, fs"),
    "imbalance.applied_compensation_fs": (float, 0.0, "delay applied to the V pump, fs"),
    "imbalance.residual_distinguishability": (float, 1.0, "overlap scale eta in (0, 1]"),
    "imbalance.relative_phase_rad": (float, 0.0, "relative phase phi, rad"),
    "calibration.delay_fs": (_optional_float, None,
                             "if set, recalibrate the pump FWHM so |gamma(delay)|^2 = overlap_sq"),
    "calibration.overlap_sq": (_optional_float, None, "target |gamma|^2 at calibration.delay_fs"),
    "grid.n_signal": (int, 512, "JSA grid points on the signal axis (>= 64)"),
    "grid.n_idler": (int, 512, "JSA grid points on the idler axis (>= 64)"),
    "tomography.brightness": (float, 1e5, "expected pairs per setting acquisition"),
    "tomography.duration_s": (float, 15.0, "acquisition time per setting, s"),
    "tomography.noiseless": (_bool, False, "round expected counts instead of Poisson sampling"),
    "tomography.restarts": (int, 5, "random restarts of the likelihood ascent"),
    "bootstrap.resamples": (int, 100, "Poisson resamples for error bars (0 disables)"),
    "sweep.delays_fs": (_float_list, [0.0, 13.0, 28.0, 41.0, 54.0, 68.0, 81.0],
                        "applied compensation delays, fs, comma separated"),
    "visibility.n_angles": (int, 37, "signal rotation samples over 0..180 deg"),
    "output.path": (str, "", "output file; empty writes to stdout"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    pump: PumpPulse = field(default_factory=PumpPulse)
    fiber: FiberSpec = field(default_factory=FiberSpec)
    imbalance: PathImbalance = field(default_factory=PathImbalance)
    calibration_delay: float | None = None      # s
    calibration_overlap_sq: float | None = None
    n_signal: int = 512
    n_idler: int = 512
    brightness: float = 1e5
    duration: float = 15.0
    noiseless: bool = False
    restarts: int = 5
    bootstrap_resamples: int = 100
    sweep_delays: tuple[float, ...] = tuple(d * FS for d in SCHEMA["sweep.delays_fs"][1])
    n_angles: int = 37
    seed: int = 0
    workers: int = 1
    output_path: str = ""

    @classmethod
    def from_values(cls, values: dict) -> "ExperimentConfig":
        v = {k: d for k, (_, d, _) in SCHEMA.items()}
        v.update(values)
        if v["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {v['schema_version']}")
        try:
            model = DISPERSION_MODELS[v["fiber.dispersion"]]
        except KeyError:
            raise ConfigError(f"unknown fiber.dispersion {v['fiber.dispersion']!r}; "
                              f"choose from {sorted(DISPERSION_MODELS)}") from None
        cal_d, cal_o = v["calibration.delay_fs"], v["calibration.overlap_sq"]
        if (cal_d is None) != (cal_o is None):
            raise ConfigError("calibration.delay_fs and calibration.overlap_sq go together")
        checks = [
            (0 <= v["seed"] < 2**64, "seed must be in [0, 2**64)"),
            (v["workers"] >= 1, "workers must be >= 1"),
            (v["grid.n_signal"] >= 64 and v["grid.n_idler"] >= 64, "grid sizes must be >= 64"),
            (v["tomography.brightness"] >= 0, "tomography.brightness must be >= 0"),
            (v["tomography.duration_s"] > 0, "tomography.duration_s must be > 0"),
            (v["tomography.restarts"] >= 0, "tomography.restarts must be >= 0"),
            (v["bootstrap.resamples"] >= 0, "bootstrap.resamples must be >= 0"),
            (v["visibility.n_angles"] >= 3, "visibility.n_angles must be >= 3"),
            (all(math.isfinite(d) for d in v["sweep.delays_fs"]) and v["sweep.delays_fs"],
             "sweep.delays_fs must be a nonempty list of finite numbers"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            return cls(
                pump=PumpPulse(v["pump.center_wavelength_nm"], v["pump.spectral_fwhm_nm"],
                               v["pump.repetition_rate_hz"], v["pump.average_power_w"]),
                fiber=FiberSpec(v["fiber.length_m"], v["fiber.birefringence"], model),
                imbalance=PathImbalance(v["imbalance.intrinsic_delay_fs"] * FS,
                                        v["imbalance.applied_compensation_fs"] * FS,
                                        v["imbalance.residual_distinguishability"],
                                        v["imbalance.relative_phase_rad"]),
                calibration_delay=None if cal_d is None else cal_d * FS,
                calibration_overlap_sq=cal_o,
                n_signal=v["grid.n_signal"],
                n_idler=v["grid.n_idler"],
                brightness=v["tomography.brightness"],
                duration=v["tomography.duration_s"],
                noiseless=v["tomography.noiseless"],
                restarts=v["tomography.restarts"],
                bootstrap_resamples=v["bootstrap.resamples"],
                sweep_delays=tuple(d * FS for d in v["sweep.delays_fs"]),
                n_angles=v["visibility.n_angles"],
                seed=v["seed"],
                workers=v["workers"],
                output_path=v["output.path"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


BUILTIN_CONFIGS = {
    "default": "",
    # tau0 = 28 fs, eta^2 = 0.8522, pump bandwidth fitted so the tangle at
    # zero applied delay is 0.7543
    "measured": """\
imbalance.intrinsic_delay_fs = 28
imbalance.residual_distinguishability = 0.9231467922275417
calibration.delay_fs = 28
calibration.overlap_sq = 0.8851208636470312
sweep.delays_fs = -40,-27,-13,0,13,28,41,54,68,81,96
""",
}


def load_config(spec: str | None) -> ExperimentConfig:
    """Config from a builtin name ('default', 'measured') or a file path."""
    if spec is None or spec in BUILTIN_CONFIGS:
        text = BUILTIN_CONFIGS[spec or "default"]
        return ExperimentConfig.from_values(parse_config_text(text, spec or "default"))
    path = Path(spec)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {spec!r}: {exc.strerror}") from None
    return ExperimentConfig.from_values(parse_config_text(text, str(path)))


def schema_table() -> str:
    lines = ["key | default | meaning", "--- | --- | ---"]
    for k, (_, d, doc) in SCHEMA.items():
        if isinstance(d, list):
            d = ",".join(f"{x:g}" for x in d)
        lines.append(f"`{k}` | `{d}` | {doc}")
    return "\n".join(lines)
