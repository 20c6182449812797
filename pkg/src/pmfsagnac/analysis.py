"""Visibility fringes and the end-to-end delay-sweep experiment."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateDataError, DomainError
from .quantum_state import KETS, as_matrix, fidelity_to_pure, phi_plus_ket, tangle
from .source_model import (PathImbalance, calibrate_pump_fwhm, compute_jsa, default_grid,
                           entangled_state, path_overlap)
from .tomography import MLEOptions, bootstrap_errors, mle_reconstruct, simulate_counts

# idler analyzer: HWP3 at 0 deg passes H, at 22.5 deg passes D
IDLER_ANALYZER = {"HV": "H", "DA": "D"}

_SZ = np.diag([1.0, -1.0]).astype(complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)


def default_angles(n: int = 37) -> np.ndarray:
    """Signal polarization rotation angles over [0, pi]."""
    return np.linspace(0.0, math.pi, n)


def signal_projector(theta: float) -> np.ndarray:
    """Projector on cos(theta)|H> + sin(theta)|V>; theta is the polarization
    rotation, i.e. twice the half-wave-plate mount angle."""
    v = np.array([math.cos(theta), math.sin(theta)], dtype=complex)
    return np.outer(v, v)


def _idler_projector(basis: str) -> np.ndarray:
    try:
        k = KETS[IDLER_ANALYZER[basis]]
    except KeyError:
        raise DomainError(f"unknown visibility basis {basis!r}; use 'HV' or 'DA'") from None
    return np.outer(k, k.conj())


@dataclass(frozen=True)
class VisibilityScan:
    basis: str
    angles: np.ndarray
    counts: np.ndarray
    offset: float
    cos_amplitude: float
    sin_amplitude: float
    visibility: float
    max_residual: float

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "theta_rad": self.angles.tolist(),
            "counts": self.counts.tolist(),
            "fit": {"offset": self.offset, "cos2theta": self.cos_amplitude,
                    "sin2theta": self.sin_amplitude, "max_residual": self.max_residual},
            "visibility": self.visibility,
        }


def fringe_counts(rho, basis: str, angles, brightness: float) -> np.ndarray:
    m = as_matrix(rho)
    pi = _idler_projector(basis)
    return np.array([brightness * np.trace(m @ np.kron(signal_projector(t), pi)).real
                     for t in np.asarray(angles, dtype=float)])


def fit_fringe(angles, counts) -> tuple[float, float, float, float]:
    """Least-squares a + b cos 2t + c sin 2t; returns (a, b, c, max |residual|)."""
    t = np.asarray(angles, dtype=float)
    y = np.asarray(counts, dtype=float)
    design = np.column_stack([np.ones_like(t), np.cos(2 * t), np.sin(2 * t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.max(np.abs(design @ coef - y))) if y.size else 0.0
    return float(coef[0]), float(coef[1]), float(coef[2]), resid


def _visibility_from_fit(a: float, b: float, c: float, scale: float) -> float:
    amp = math.hypot(b, c)
    tiny = 1e-12 * max(scale, 1e-300)
    if abs(a) <= tiny and amp <= tiny:
        raise DegenerateDataError("fringe fit is degenerate (no signal)")
    if a <= 0:
        raise DegenerateDataError("fringe fit has nonpositive mean")
    return min(max(amp / a, 0.0), 1.0)


def visibility_from_counts(angles, counts, basis: str = "HV") -> VisibilityScan:
    """Visibility of measured or simulated fringe data from the fitted extrema."""
    t = np.asarray(angles, dtype=float)
    if t.size < 3 or t.max() - t.min() < math.pi - 1e-9:
        raise DomainError("angle grid must span at least pi (one fringe period)")
    y = np.asarray(counts, dtype=float)
    a, b, c, resid = fit_fringe(t, y)
    v = _visibility_from_fit(a, b, c, float(np.max(np.abs(y))) if y.size else 0.0)
    return VisibilityScan(basis, t, y, a, b, c, v, resid)


def visibility_curve(rho, basis: str, angles=None, brightness: float = 1.0) -> VisibilityScan:
    """Predicted coincidence fringe versus signal rotation and its visibility."""
    if brightness <= 0:
        raise DomainError("brightness must be positive")
    t = default_angles() if angles is None else np.asarray(angles, dtype=float)
    return visibility_from_counts(t, fringe_counts(rho, basis, t, brightness), basis)


def analytic_visibility(rho, basis: str) -> float:
    """Visibility straight from traces of rho.

    With Pi(t) = (I + cos 2t sz + sin 2t sx)/2 the fringe is
    Tr(rho I x Pi_i)/2 + cos 2t Tr(rho sz x Pi_i)/2 + sin 2t Tr(rho sx x Pi_i)/2.
    """
    m = as_matrix(rho)
    pi = _idler_projector(basis)
    a = np.trace(m @ np.kron(np.eye(2), pi)).real
    b = np.trace(m @ np.kron(_SZ, pi)).real
    c = np.trace(m @ np.kron(_SX, pi)).real
    return _visibility_from_fit(a, b, c, 1.0)


@dataclass(frozen=True)
class SweepRow:
    delay: float                 # applied compensation, s
    true_tangle: float
    reconstructed_tangle: float
    tangle_std: float
    fidelity_phi_plus: float
    converged: bool

    def as_csv_fields(self) -> list:
        return [self.delay * 1e15, self.true_tangle, self.reconstructed_tangle,
                self.tangle_std, self.fidelity_phi_plus, int(self.converged)]


SWEEP_EXPERIMENT_HEADER = ("delay_fs", "true_tangle", "reconstructed_tangle", "tangle_std",
                           "fidelity_phi_plus", "converged")


class ExperimentError(RuntimeError):
    def __init__(self, delay: float, cause: Exception):
        self.delay = delay
        self.cause = cause
        super().__init__(f"delay {delay * 1e15:g} fs: {cause}")

    def __reduce__(self):
        return type(self), (self.delay, self.cause)


def prepare_pump(cfg):
    """Pump of the config, with its bandwidth calibrated when requested."""
    if cfg.calibration_delay is None:
        return cfg.pump
    return calibrate_pump_fwhm(cfg.pump, cfg.fiber, cfg.calibration_delay,
                               cfg.calibration_overlap_sq, cfg.n_signal, cfg.n_idler)


def _experiment_point(cfg, jsa, delay, seq: np.random.SeedSequence) -> SweepRow:
    try:
        imb = replace(cfg.imbalance, applied_compensation=delay)
        state = entangled_state(jsa, imb)
        true_t = abs(path_overlap(jsa, imb)) ** 2
        sim_seed, boot_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
        records = simulate_counts(state, cfg.brightness, sim_seed,
                                  duration=cfg.duration, noiseless=cfg.noiseless)
        opts = MLEOptions(restarts=cfg.restarts, seed=cfg.seed)
        res = mle_reconstruct(records, opts)
        std = float("nan")
        if cfg.bootstrap_resamples >= 2:
            err = bootstrap_errors(records, cfg.bootstrap_resamples, boot_seed,
                                   metrics=("tangle",), options=replace(opts, restarts=0))
            std = err["tangle"].std
        return SweepRow(delay, min(true_t, 1.0), tangle(res.rho), std,
                        fidelity_to_pure(res.rho, phi_plus_ket()), res.converged)
    except Exception as exc:  # annotate which delay failed
        raise ExperimentError(delay, exc) from exc


def run_delay_sweep_experiment(cfg) -> tuple[list[SweepRow], dict]:
    """Model -> simulated tomography -> MLE -> tangle with bootstrap error, per delay.

    Every delay gets its own seed substream, so the output depends only on
    the config and seed and not on ``cfg.workers``.
    """
    pump = prepare_pump(cfg)
    jsa = compute_jsa(pump, cfg.fiber, default_grid(pump, cfg.fiber, cfg.n_signal, cfg.n_idler))
    delays = list(cfg.sweep_delays)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(delays))
    n = len(delays)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_experiment_point, [cfg] * n, [jsa] * n, delays, seqs))
    else:
        rows = [_experiment_point(cfg, jsa, d, q) for d, q in zip(delays, seqs)]

    within = [abs(r.reconstructed_tangle - r.true_tangle) <= 3 * r.tangle_std
              for r in rows if math.isfinite(r.tangle_std)]
    peak_true = max(rows, key=lambda r: r.true_tangle)
    peak_rec = max(rows, key=lambda r: r.reconstructed_tangle)
    summary = {
        "n_delays": len(rows),
        "pump_spectral_fwhm_nm": pump.spectral_fwhm,
        "peak_delay_fs_model": peak_true.delay * 1e15,
        "peak_tangle_model": peak_true.true_tangle,
        "peak_delay_fs_reconstructed": peak_rec.delay * 1e15,
        "peak_tangle_reconstructed": peak_rec.reconstructed_tangle,
        "fraction_within_3sigma": (sum(within) / len(within)) if within else None,
        "all_converged": all(r.converged for r in rows),
        "brightness": cfg.brightness,
        "seed": cfg.seed,
    }
    return rows, summary
