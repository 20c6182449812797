"""Joint spectral amplitude and the Sagnac path-overlap model.

The pair amplitude is f(ws, wi) ~ alpha(ws + wi) * sinc(dk(ws, wi) L / 2) with
a transform-limited Gaussian pump envelope alpha. The mismatch inside the
sinc uses the pump frequency (ws + wi)/2 implied by energy conservation.

A delay tau of the VV path multiplies its amplitude by e^{i (ws + wi) tau};
the carrier part e^{i 2 wp tau} is absorbed into the settable relative
phase, so the overlap carries only the envelope term

    gamma(tau) = eta * sum |f|^2 e^{i (ws + wi - 2 wp) tau} dws dwi,

with tau = intrinsic_delay - applied_compensation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c
from scipy.optimize import brentq

from .dispersion import (FiberSpec, TWO_PI, phase_mismatch, solve_phase_matching,
                         wavelength_nm_to_omega)
from .errors import DomainError
from .quantum_state import OverlapParameters, TwoQubitState, dephased_pair_state

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class PumpPulse:
    center_wavelength: float = 726.0   # nm
    spectral_fwhm: float = 6.0         # nm, intensity FWHM
    repetition_rate: float = 80e6      # Hz
    average_power: float = 5e-3        # W, bookkeeping only

    def __post_init__(self):
        if not self.center_wavelength > 0:
            raise DomainError("pump center wavelength must be positive")
        if not self.spectral_fwhm > 0:
            raise DomainError("pump spectral FWHM must be positive")
        if not self.spectral_fwhm < self.center_wavelength / 10:
            raise DomainError("pump spectral FWHM must be below a tenth of the center wavelength")

    @property
    def omega(self) -> float:
        return float(wavelength_nm_to_omega(self.center_wavelength))

    @property
    def sum_fwhm_omega(self) -> float:
        """Intensity FWHM of the envelope in rad/s, c dl / l^2 at the center."""
        lam = self.center_wavelength * 1e-9
        return TWO_PI * c * self.spectral_fwhm * 1e-9 / lam**2

    @property
    def sum_sigma_omega(self) -> float:
        """Standard deviation of |alpha|^2 in the sum frequency."""
        return self.sum_fwhm_omega * FWHM_TO_SIGMA


def pump_envelope(pump: PumpPulse, omega_sum):
    """Gaussian amplitude in ws + wi, peak 1 at 2 wp; |alpha|^2 has the pump FWHM."""
    d = np.asarray(omega_sum, dtype=float) - 2.0 * pump.omega
    a = np.exp(-2.0 * math.log(2.0) * (d / pump.sum_fwhm_omega) ** 2)
    return complex(a) if a.ndim == 0 else a.astype(complex)


def gaussian_overlap_abs(pump: PumpPulse, tau):
    """Closed-form |gamma| of the pump-only (no phase matching) model.

    For |alpha|^2 Gaussian with standard deviation s in the sum frequency
    the overlap is exp(-s^2 tau^2 / 2) = exp(-tau^2 / (4 sigma_t^2)).
    """
    s = pump.sum_sigma_omega
    return np.exp(-0.5 * (s * np.asarray(tau, dtype=float)) ** 2)


def coherence_time(pump: PumpPulse) -> float:
    """sigma_t such that the pump-only |gamma(tau)| = exp(-tau^2 / (4 sigma_t^2))."""
    return 1.0 / (math.sqrt(2.0) * pump.sum_sigma_omega)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


class FrequencyGrid:
    """Rectangular grid of uniformly spaced signal and idler angular frequencies."""

    MIN_POINTS = 64

    def __init__(self, signal, idler):
        s = np.asarray(signal, dtype=float)
        i = np.asarray(idler, dtype=float)
        for name, ax in (("signal", s), ("idler", i)):
            if ax.ndim != 1 or ax.size < self.MIN_POINTS:
                raise DomainError(f"{name} axis needs at least {self.MIN_POINTS} points")
            d = np.diff(ax)
            if np.any(d <= 0):
                raise DomainError(f"{name} axis must be strictly increasing")
            if np.max(np.abs(d - d.mean())) > 1e-6 * d.mean():
                raise DomainError(f"{name} axis must be uniformly spaced")
        s.setflags(write=False)
        i.setflags(write=False)
        self.signal = s
        self.idler = i

    @classmethod
    def from_bounds(cls, signal_bounds, idler_bounds, n_signal=512, n_idler=512):
        return cls(np.linspace(*signal_bounds, n_signal), np.linspace(*idler_bounds, n_idler))

    @property
    def shape(self) -> tuple[int, int]:
        return self.signal.size, self.idler.size

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights dws dwi on the grid."""
        return np.outer(_trapezoid_weights(self.signal), _trapezoid_weights(self.idler))

    def refined(self, factor: int = 2) -> "FrequencyGrid":
        return FrequencyGrid.from_bounds(
            (self.signal[0], self.signal[-1]), (self.idler[0], self.idler[-1]),
            factor * (self.signal.size - 1) + 1, factor * (self.idler.size - 1) + 1)


def default_grid(pump: PumpPulse, fiber: FiberSpec, n_signal: int = 512, n_idler: int = 512,
                 sum_fwhms: float = 5.0, lobes: float = 3.0) -> FrequencyGrid:
    """Grid boxing the JSA around the phase-matched point.

    The box encloses the parallelogram |d_sum| <= sum_fwhms * FWHM and
    |dk L / 2| <= lobes * pi, using dk linearized at the solution.
    """
    sol = solve_phase_matching(fiber, pump.center_wavelength)
    ws0, wi0 = sol.signal_omega, sol.idler_omega
    h = 1e-4 * pump.sum_fwhm_omega

    def dk(ws, wi):
        return phase_mismatch(fiber, 0.5 * (ws + wi), ws, wi)

    a = (dk(ws0 + h, wi0) - dk(ws0 - h, wi0)) / (2 * h)
    b = (dk(ws0, wi0 + h) - dk(ws0, wi0 - h)) / (2 * h)
    jac = np.array([[1.0, 1.0], [a, b]])
    if abs(np.linalg.det(jac)) < 1e-3 * (abs(a) + abs(b)):
        raise DomainError("phase-matching and pump contours are nearly parallel; "
                          "pass an explicit FrequencyGrid")
    sum_half = sum_fwhms * pump.sum_fwhm_omega
    dk_half = lobes * TWO_PI / fiber.length
    corners = np.array([np.linalg.solve(jac, [p * sum_half, q * dk_half])
                        for p in (-1, 1) for q in (-1, 1)])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    w_lo, w_hi = fiber.dispersion.omega_range
    sb = np.clip([ws0 + lo[0], ws0 + hi[0]], w_lo, w_hi)
    ib = np.clip([wi0 + lo[1], wi0 + hi[1]], w_lo, w_hi)
    return FrequencyGrid.from_bounds(sb, ib, n_signal, n_idler)


@dataclass(frozen=True)
class JointSpectralAmplitude:
    grid: FrequencyGrid
    amplitude: np.ndarray
    pump_omega: float

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def norm(self) -> float:
        return float(np.sum(self.grid.weights() * self.intensity()))

    def peak(self) -> tuple[float, float]:
        """(ws, wi) of the largest |f| on the grid."""
        i, j = np.unravel_index(np.argmax(np.abs(self.amplitude)), self.amplitude.shape)
        return float(self.grid.signal[i]), float(self.grid.idler[j])

    def to_dict(self) -> dict:
        return {
            "signal_omega_rad_s": self.grid.signal.tolist(),
            "idler_omega_rad_s": self.grid.idler.tolist(),
            "pump_omega_rad_s": self.pump_omega,
            "re": self.amplitude.real.tolist(),
            "im": self.amplitude.imag.tolist(),
        }


def compute_jsa(pump: PumpPulse, fiber: FiberSpec, grid: FrequencyGrid,
                phase_matching: bool = True) -> JointSpectralAmplitude:
    """Normalized joint spectral amplitude on ``grid``.

    With ``phase_matching=False`` the sinc factor is dropped, leaving the
    pump envelope alone (used to check the overlap quadrature).
    """
    wp = pump.omega
    sums = grid.signal[:, None] + grid.idler[None, :]
    lo, hi = sums.min(), sums.max()
    reach = 3.0 * pump.sum_sigma_omega
    if lo > 2 * wp - reach or hi < 2 * wp + reach:
        raise DomainError("grid does not span +/-3 pump standard deviations in ws + wi")
    amp = pump_envelope(pump, sums)
    if phase_matching:
        ws = np.broadcast_to(grid.signal[:, None], sums.shape)
        wi = np.broadcast_to(grid.idler[None, :], sums.shape)
        dk = phase_mismatch(fiber, 0.5 * sums, ws, wi)
        amp = amp * np.sinc(dk * fiber.length / (2.0 * math.pi))
    norm = np.sum(grid.weights() * np.abs(amp) ** 2)
    if not np.isfinite(norm) or norm <= 0:
        raise DomainError("joint spectral amplitude vanishes on the grid")
    amp = amp / math.sqrt(norm)
    amp.setflags(write=False)
    return JointSpectralAmplitude(grid=grid, amplitude=amp, pump_omega=wp)


@dataclass(frozen=True)
class PathImbalance:
    """Temporal imbalance between the two Sagnac paths.

    Positive ``applied_compensation`` delays the V-polarized pump. ``eta``
    scales the overlap for non-temporal distinguishability.
    """

    intrinsic_delay: float = 0.0          # s
    applied_compensation: float = 0.0     # s
    residual_distinguishability: float = 1.0
    relative_phase: float = 0.0           # rad

    def __post_init__(self):
        if not 0.0 < self.residual_distinguishability <= 1.0:
            raise DomainError("residual_distinguishability must lie in (0, 1]")

    @property
    def delay(self) -> float:
        return self.intrinsic_delay - self.applied_compensation


def path_overlap(jsa: JointSpectralAmplitude, imbalance: PathImbalance) -> complex:
    """<phi_HH|phi_VV> for the imbalance, including the eta factor."""
    tau = imbalance.delay
    g = jsa.grid
    wp = jsa.pump_omega
    us = np.exp(1j * (g.signal - wp) * tau)
    ui = np.exp(1j * (g.idler - wp) * tau)
    dens = g.weights() * jsa.intensity()
    gamma = us @ dens @ ui
    return complex(imbalance.residual_distinguishability * gamma)


def entangled_state(jsa: JointSpectralAmplitude, imbalance: PathImbalance) -> TwoQubitState:
    gamma = path_overlap(jsa, imbalance)
    if abs(gamma) > 1.0:
        gamma /= abs(gamma)
    return dephased_pair_state(OverlapParameters(gamma=gamma, phi=imbalance.relative_phase))


@dataclass(frozen=True)
class SweepPoint:
    delay: float       # applied compensation, s
    tangle: float
    overlap: complex


def tangle_delay_sweep(pump: PumpPulse, fiber: FiberSpec, imbalance: PathImbalance,
                       delays, grid: FrequencyGrid | None = None,
                       jsa: JointSpectralAmplitude | None = None) -> list[SweepPoint]:
    """Model tangle |gamma|^2 for each applied compensation delay (s).

    ``imbalance`` supplies tau0, eta and phi; its applied compensation is
    replaced by each entry of ``delays``.
    """
    delays = np.asarray(delays, dtype=float)
    if not np.all(np.isfinite(delays)):
        raise DomainError("delays must be finite")
    if jsa is None:
        jsa = compute_jsa(pump, fiber, grid or default_grid(pump, fiber))
    out = []
    for d in delays:
        gamma = path_overlap(jsa, replace(imbalance, applied_compensation=float(d)))
        out.append(SweepPoint(delay=float(d), tangle=min(abs(gamma), 1.0) ** 2, overlap=gamma))
    return out


def calibrate_pump_fwhm(pump: PumpPulse, fiber: FiberSpec, delay: float, overlap_sq: float,
                        n_signal: int = 512, n_idler: int = 512) -> PumpPulse:
    """Pump bandwidth for which the full JSA model gives |gamma(delay)|^2 = overlap_sq.

    Starts from the closed-form Gaussian answer and refines with the
    phase-matched JSA by bracketing root search.
    """
    if not 0.0 < overlap_sq < 1.0:
        raise DomainError("overlap_sq must lie in (0, 1)")
    if delay == 0:
        raise DomainError("calibration delay must be nonzero")
    # |gamma|^2 = exp(-s^2 tau^2) for the pump-only model
    s = math.sqrt(-math.log(overlap_sq)) / abs(delay)
    lam = pump.center_wavelength * 1e-9
    fwhm0 = s / FWHM_TO_SIGMA * lam**2 / (TWO_PI * c) * 1e9

    def resid(fwhm_nm):
        p = replace(pump, spectral_fwhm=fwhm_nm)
        jsa = compute_jsa(p, fiber, default_grid(p, fiber, n_signal, n_idler))
        g = path_overlap(jsa, PathImbalance(intrinsic_delay=delay))
        return abs(g) ** 2 - overlap_sq

    lo, hi = 0.7 * fwhm0, 1.4 * fwhm0
    hi = min(hi, pump.center_wavelength / 10 * 0.999)
    fwhm = brentq(resid, lo, hi, xtol=1e-10, rtol=1e-12)
    return replace(pump, spectral_fwhm=fwhm)
