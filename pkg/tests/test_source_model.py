import math

import numpy as np
import pytest
from scipy.constants import c

from pmfsagnac.dispersion import FiberSpec, solve_phase_matching
from pmfsagnac.errors import DomainError
from pmfsagnac.quantum_state import bell_phi_plus, linear_entropy, tangle
from pmfsagnac.source_model import (FrequencyGrid, PathImbalance, PumpPulse, calibrate_pump_fwhm,
                                    coherence_time, compute_jsa, default_grid, entangled_state,
                                    gaussian_overlap_abs, path_overlap, pump_envelope,
                                    tangle_delay_sweep)

FS = 1e-15
PUMP = PumpPulse()
FIBER = FiberSpec()
ETA = math.sqrt(0.8522)


@pytest.fixture(scope="module")
def jsa():
    return compute_jsa(PUMP, FIBER, default_grid(PUMP, FIBER))


@pytest.fixture(scope="module")
def solution():
    return solve_phase_matching(FIBER, PUMP.center_wavelength)


def test_pump_envelope_peak_and_half_width():
    wp = PUMP.omega
    assert pump_envelope(PUMP, 2 * wp) == 1.0
    half = PUMP.sum_fwhm_omega / 2
    assert abs(pump_envelope(PUMP, 2 * wp + half)) ** 2 == pytest.approx(0.5, abs=1e-12)
    assert abs(pump_envelope(PUMP, 2 * wp - half)) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_pump_bandwidth_in_frequency():
    dnu = c * 6e-9 / (726e-9) ** 2
    assert PUMP.sum_fwhm_omega / (2 * math.pi) == pytest.approx(dnu, rel=1e-12)
    assert dnu == pytest.approx(3.42e12, rel=5e-3)


def test_pump_validation():
    with pytest.raises(DomainError):
        PumpPulse(spectral_fwhm=80.0)
    with pytest.raises(DomainError):
        PumpPulse(center_wavelength=-1.0)


def test_grid_validation():
    with pytest.raises(DomainError):
        FrequencyGrid(np.linspace(0, 1, 32), np.linspace(0, 1, 64))
    with pytest.raises(DomainError):
        FrequencyGrid(np.linspace(1, 0, 64), np.linspace(0, 1, 64))


def test_jsa_normalized_and_finite(jsa):
    assert jsa.norm() == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.isfinite(jsa.amplitude))
    assert jsa.grid.shape == (512, 512)


def test_jsa_peak_at_phase_matching(jsa, solution):
    ws, wi = jsa.peak()
    ds = jsa.grid.signal[1] - jsa.grid.signal[0]
    di = jsa.grid.idler[1] - jsa.grid.idler[0]
    assert abs(ws - solution.signal_omega) <= ds
    assert abs(wi - solution.idler_omega) <= di
    lam_s = 2 * math.pi * c / ws * 1e9
    lam_i = 2 * math.pi * c / wi * 1e9
    assert 629 <= lam_s <= 639 and 845 <= lam_i <= 855


def test_jsa_outside_dispersion_range_rejected():
    wp = PUMP.omega
    w_hi = FIBER.dispersion.omega_range[1]
    grid = FrequencyGrid(np.linspace(w_hi * 0.99, w_hi * 1.05, 64),
                         np.linspace(2 * wp - w_hi * 1.05, 2 * wp - w_hi * 0.99, 64))
    with pytest.raises(DomainError):
        compute_jsa(PUMP, FIBER, grid)


def _antidiagonal_fwhm(length):
    fiber = FiberSpec(length=length)
    sol = solve_phase_matching(fiber, PUMP.center_wavelength)
    d = 3e10
    k = np.arange(-512, 513)
    grid = FrequencyGrid(sol.signal_omega + d * k, sol.idler_omega + d * k)
    f2 = np.abs(compute_jsa(PUMP, fiber, grid).amplitude) ** 2
    # ws + wi is constant along the anti-diagonal, so only the sinc varies
    prof = f2[k + 512, 512 - k]
    x = d * k
    half = prof.max() / 2
    top = np.argmax(prof)
    above = prof >= half
    lo = top
    while above[lo - 1]:
        lo -= 1
    hi = top
    while above[hi + 1]:
        hi += 1
    left = np.interp(half, [prof[lo - 1], prof[lo]], [x[lo - 1], x[lo]])
    right = np.interp(half, [prof[hi + 1], prof[hi]], [x[hi + 1], x[hi]])
    return right - left


def test_phase_matching_width_scales_inverse_length():
    ratio = _antidiagonal_fwhm(0.1) / _antidiagonal_fwhm(0.2)
    assert ratio == pytest.approx(2.0, rel=0.05)


def _pump_only_jsa():
    # narrow signal axis, idler axis wide enough that every line ws + wi = const
    # within 12 sigma crosses the whole signal span
    sol = solve_phase_matching(FIBER, PUMP.center_wavelength)
    s = PUMP.sum_sigma_omega
    half_s = 0.05 * s
    half_i = half_s + 12 * s
    grid = FrequencyGrid(np.linspace(sol.signal_omega - half_s, sol.signal_omega + half_s, 512),
                         np.linspace(sol.idler_omega - half_i, sol.idler_omega + half_i, 512))
    return compute_jsa(PUMP, FIBER, grid, phase_matching=False)


@pytest.mark.parametrize("tau_fs", [0, 5, 13, 28, 41, 68, 100, 200, 300, -50])
def test_pump_only_overlap_matches_gaussian_closed_form(tau_fs):
    j = _pump_only_jsa()
    tau = tau_fs * FS
    got = abs(path_overlap(j, PathImbalance(intrinsic_delay=tau)))
    # independent closed form: characteristic function of a Gaussian of std s
    s = PUMP.sum_sigma_omega
    assert got == pytest.approx(math.exp(-0.5 * (s * tau) ** 2), abs=1e-6)
    assert got == pytest.approx(float(gaussian_overlap_abs(PUMP, tau)), abs=1e-6)
    sig_t = coherence_time(PUMP)
    assert got == pytest.approx(math.exp(-tau**2 / (4 * sig_t**2)), abs=1e-6)


def test_overlap_identity_and_eta(jsa):
    assert path_overlap(jsa, PathImbalance(28 * FS, 28 * FS)) == pytest.approx(1.0, abs=1e-12)
    g = path_overlap(jsa, PathImbalance(residual_distinguishability=0.7))
    assert g == pytest.approx(0.7, abs=1e-12)


def test_overlap_modulus_even_in_delay(jsa):
    for tau in (7, 28, 90):
        a = path_overlap(jsa, PathImbalance(intrinsic_delay=tau * FS))
        b = path_overlap(jsa, PathImbalance(intrinsic_delay=-tau * FS))
        assert abs(a) == pytest.approx(abs(b), abs=1e-14)


def test_overlap_nonincreasing_in_delay(jsa):
    # beyond ~550 fs |gamma| sits at the ~5e-7 quadrature floor
    taus = np.linspace(0, 500, 501) * FS
    mags = [abs(path_overlap(jsa, PathImbalance(intrinsic_delay=t))) for t in taus]
    assert np.all(np.diff(mags) <= 1e-15)


def test_grid_refinement_stability(jsa):
    fine = compute_jsa(PUMP, FIBER, jsa.grid.refined(2))
    for tau in np.linspace(-100, 100, 9) * FS:
        imb = PathImbalance(intrinsic_delay=tau)
        assert abs(path_overlap(fine, imb)) == pytest.approx(abs(path_overlap(jsa, imb)), abs=1e-6)


def test_entangled_state_perfect_compensation(jsa):
    r = entangled_state(jsa, PathImbalance(30 * FS, 30 * FS))
    assert np.allclose(r.matrix, bell_phi_plus().matrix, atol=1e-12)


@pytest.mark.parametrize("tau_fs,eta,phi", [(0, 1.0, 0.0), (28, ETA, 0.0), (-60, 0.5, 1.3),
                                            (150, 0.9, -2.0)])
def test_entangled_state_consistent_with_metrics(jsa, tau_fs, eta, phi):
    imb = PathImbalance(intrinsic_delay=tau_fs * FS, residual_distinguishability=eta,
                        relative_phase=phi)
    g = path_overlap(jsa, imb)
    r = entangled_state(jsa, imb)
    assert tangle(r) == pytest.approx(abs(g) ** 2, abs=1e-9)
    assert linear_entropy(r) == pytest.approx(2 / 3 * (1 - abs(g) ** 2), abs=1e-9)


def test_eta_alone_sets_tangle(jsa):
    r = entangled_state(jsa, PathImbalance(residual_distinguishability=ETA))
    assert tangle(r) == pytest.approx(0.8522, abs=1e-12)


def test_sweep_peak_and_symmetry():
    imb = PathImbalance(intrinsic_delay=28 * FS, residual_distinguishability=ETA)
    delays = np.arange(-40, 101, 1.0) * FS
    pts = tangle_delay_sweep(PUMP, FIBER, imb, delays)
    t = np.array([p.tangle for p in pts])
    k = int(np.argmax(t))
    assert pts[k].delay == pytest.approx(28 * FS)
    assert t[k] == pytest.approx(0.8522, abs=1e-12)
    assert np.all(np.diff(t[:k + 1]) > 0) and np.all(np.diff(t[k:]) < 0)
    for d in (13, 41, 68):
        pair = tangle_delay_sweep(PUMP, FIBER, imb, [(28 + d) * FS, (28 - d) * FS])
        assert pair[0].tangle == pytest.approx(pair[1].tangle, abs=1e-8)


def test_sweep_vanishes_far_away(jsa):
    imb = PathImbalance(intrinsic_delay=28 * FS, residual_distinguishability=ETA)
    pts = tangle_delay_sweep(PUMP, FIBER, imb, [-10e-12, 10e-12], jsa=jsa)
    assert all(p.tangle < 1e-6 for p in pts)


def test_sweep_rejects_nonfinite():
    with pytest.raises(DomainError):
        tangle_delay_sweep(PUMP, FIBER, PathImbalance(), [0.0, float("nan")])


def test_calibration_reproduces_both_tangles():
    target = 0.7543 / 0.8522
    cal = calibrate_pump_fwhm(PUMP, FIBER, 28 * FS, target)
    # closed-form Gaussian coherence width for the same constraint
    sig_t = 28 * FS / math.sqrt(-2 * math.log(target))
    assert coherence_time(cal) == pytest.approx(sig_t, rel=0.05)
    imb = PathImbalance(intrinsic_delay=28 * FS, residual_distinguishability=ETA)
    pts = tangle_delay_sweep(cal, FIBER, imb, [0.0, 28 * FS])
    assert pts[0].tangle == pytest.approx(0.7543, abs=1e-6)
    assert pts[1].tangle == pytest.approx(0.8522, abs=1e-12)
