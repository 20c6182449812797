"""
Fused-silica dispersion and the birefringent SFWM phase-matching solver.

The default index model is the three-term Sellmeier fit of I. H. Malitson,
"Interspecimen comparison of the refractive index of fused silica",
J. Opt. Soc. Am. 55, 1205 (1965), valid from 0.21 um to 3.71 um at 20 C.

Units: angular frequencies in rad/s, lengths in m. Wavelengths only appear
at the API boundary (um for the index, nm for the solver).

With the pump on the slow axis and both photons on the fast axis the
phase mismatch is

    dk = 2 k(wp) - k(ws) - k(wi) + 2 dn wp / c

and energy conservation fixes wi = 2 wp - ws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c
from scipy.optimize import bisect

from .errors import DomainError, NoPhaseMatchError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DispersionModel:
    """Three-term Sellmeier model n^2 = 1 + sum B_j l^2 / (l^2 - C_j^2), l in um."""

    name: str
    strengths: tuple[float, float, float]
    resonances_um: tuple[float, float, float]
    valid_range_um: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.valid_range_um
        if not 0 < lo < hi:
            raise ValueError(f"bad validity interval {self.valid_range_um}")
        if len(self.strengths) != len(self.resonances_um):
            raise ValueError("strengths and resonances must pair up")

    @property
    def omega_range(self) -> tuple[float, float]:
        """Angular-frequency interval (rad/s) equivalent to the wavelength range."""
        lo, hi = self.valid_range_um
        return TWO_PI * c / (hi * 1e-6), TWO_PI * c / (lo * 1e-6)


FUSED_SILICA = DispersionModel(
    name="fused_silica_malitson1965",
    strengths=(0.6961663, 0.4079426, 0.8974794),
    resonances_um=(0.0684043, 0.1162414, 9.896161),
    valid_range_um=(0.21, 3.71),
)

DISPERSION_MODELS = {FUSED_SILICA.name: FUSED_SILICA, "fused_silica": FUSED_SILICA}


@dataclass(frozen=True)
class FiberSpec:
    length: float = 0.20
    birefringence: float = 3.5e-4
    dispersion: DispersionModel = field(default=FUSED_SILICA)

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError(f"fiber length must be positive, got {self.length}")
        if not abs(self.birefringence) < 1e-2:
            raise DomainError(
                f"|birefringence| must be below 1e-2, got {self.birefringence}")


@dataclass(frozen=True)
class PhaseMatchSolution:
    pump_omega: float
    signal_omega: float
    idler_omega: float
    residual_mismatch: float
    ambiguous: bool = False
    n_roots: int = 1

    @property
    def signal_wavelength_nm(self) -> float:
        return omega_to_wavelength_nm(self.signal_omega)

    @property
    def idler_wavelength_nm(self) -> float:
        return omega_to_wavelength_nm(self.idler_omega)

    @property
    def pump_wavelength_nm(self) -> float:
        return omega_to_wavelength_nm(self.pump_omega)

    @property
    def detuning_thz(self) -> float:
        """Signal-pump detuning as an ordinary frequency in THz."""
        return (self.signal_omega - self.pump_omega) / TWO_PI / 1e12

    def to_dict(self) -> dict:
        return {
            "pump_omega_rad_s": self.pump_omega,
            "signal_omega_rad_s": self.signal_omega,
            "idler_omega_rad_s": self.idler_omega,
            "residual_mismatch_per_m": self.residual_mismatch,
            "pump_wavelength_nm": self.pump_wavelength_nm,
            "signal_wavelength_nm": self.signal_wavelength_nm,
            "idler_wavelength_nm": self.idler_wavelength_nm,
            "detuning_thz": self.detuning_thz,
            "ambiguous": self.ambiguous,
            "n_roots": self.n_roots,
        }


def wavelength_nm_to_omega(wavelength_nm):
    return TWO_PI * c / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def omega_to_wavelength_nm(omega):
    w = TWO_PI * c / np.asarray(omega, dtype=float) * 1e9
    return float(w) if w.ndim == 0 else w


def _check_range(model: DispersionModel, wavelength_um: np.ndarray):
    lo, hi = model.valid_range_um
    if wavelength_um.size == 0:
        return
    bad = ~((wavelength_um >= lo) & (wavelength_um <= hi))
    if np.any(bad):
        offender = wavelength_um[bad].flat[0]
        raise DomainError(
            f"wavelength {offender:.6g} um outside the valid range "
            f"[{lo}, {hi}] um of dispersion model {model.name!r}")


def refractive_index(model: DispersionModel, wavelength_um):
    """Refractive index at vacuum wavelength(s) given in micrometres.

    Raises DomainError for any wavelength outside ``model.valid_range_um``.
    """
    lam = np.asarray(wavelength_um, dtype=float)
    _check_range(model, lam)
    lam2 = lam * lam
    n2 = np.ones_like(lam2)
    for b, r in zip(model.strengths, model.resonances_um):
        n2 = n2 + b * lam2 / (lam2 - r * r)
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def wavevector(model: DispersionModel, omega):
    """k(w) = n(w) w / c in 1/m."""
    w = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore"):
        lam_um = np.where(w > 0, TWO_PI * c / np.where(w > 0, w, 1.0) * 1e6, np.inf)
    k = refractive_index(model, lam_um) * w / c
    return float(k) if np.ndim(k) == 0 else k


def phase_mismatch(fiber: FiberSpec, omega_p, omega_s, omega_i):
    """Birefringent SFWM phase mismatch in 1/m (pump slow axis, photons fast)."""
    m = fiber.dispersion
    # ks + ki is formed first so swapping signal and idler is bit-exact
    pair = wavevector(m, omega_s) + wavevector(m, omega_i)
    return (2.0 * wavevector(m, omega_p) - pair
            + 2.0 * fiber.birefringence * np.asarray(omega_p, dtype=float) / c)


def max_detuning(model: DispersionModel, omega_p: float) -> float:
    """Largest signal detuning keeping both photons inside the index validity range."""
    w_lo, w_hi = model.omega_range
    span = min(w_hi - omega_p, omega_p - w_lo)
    if span <= 0:
        raise DomainError("pump frequency outside the dispersion validity range")
    return span * (1.0 - 1e-9)


def solve_phase_matching(fiber: FiberSpec, pump_wavelength_nm: float,
                         max_detuning_omega: float | None = None,
                         scan_points: int = 4000,
                         rtol: float = 1e-12) -> PhaseMatchSolution:
    """Signal/idler pair satisfying energy conservation and dk = 0.

    The signal frequency is scanned over (wp, wp + max_detuning] for sign
    changes of dk(ws, 2wp - ws); the root with the smallest detuning is
    refined by bisection. When more than one bracket is found the solution
    is flagged ``ambiguous``.
    """
    wp = float(wavelength_nm_to_omega(pump_wavelength_nm))
    model = fiber.dispersion
    # the pump itself must be inside the index model
    refractive_index(model, pump_wavelength_nm * 1e-3)
    limit = max_detuning(model, wp)
    if max_detuning_omega is not None:
        if max_detuning_omega <= 0:
            raise DomainError("max_detuning_omega must be positive")
        limit = min(limit, max_detuning_omega)

    def mismatch(ws):
        return phase_mismatch(fiber, wp, ws, 2.0 * wp - ws)

    detunings = np.linspace(0.0, limit, scan_points + 1)[1:]
    values = mismatch(wp + detunings)
    sign = np.sign(values)
    brackets = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    # a root landing exactly on a scan point shows up in two adjacent brackets
    roots = [j for j in brackets if not (j > 0 and sign[j] == 0)]
    if not roots:
        raise NoPhaseMatchError(
            f"no phase-matched solution for pump {pump_wavelength_nm} nm within a "
            f"{limit / TWO_PI / 1e12:.3g} THz detuning window")
    j = roots[0]
    lo, hi = wp + detunings[j], wp + detunings[j + 1]
    if values[j] == 0:
        ws = lo
    else:
        ws = bisect(mismatch, lo, hi, xtol=1e-300, rtol=rtol, maxiter=400)
    wi = 2.0 * wp - ws
    return PhaseMatchSolution(
        pump_omega=wp,
        signal_omega=ws,
        idler_omega=wi,
        residual_mismatch=float(phase_mismatch(fiber, wp, ws, wi)),
        ambiguous=len(roots) > 1,
        n_roots=len(roots),
    )
