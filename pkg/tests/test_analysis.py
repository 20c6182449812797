import math
from dataclasses import replace

import numpy as np
import pytest

from pmfsagnac.analysis import (analytic_visibility, default_angles, fit_fringe,
                                run_delay_sweep_experiment, visibility_curve,
                                visibility_from_counts)
from pmfsagnac.config import (BUILTIN_CONFIGS, SCHEMA, ExperimentConfig, load_config,
                              parse_config_text, schema_table)
from pmfsagnac.errors import ConfigError, DegenerateDataError, DomainError
from pmfsagnac.quantum_state import (OverlapParameters, TwoQubitState, bell_phi_plus,
                                     dephased_pair_state, maximally_mixed, random_hs_state)
from pmfsagnac.tomography import mle_reconstruct, simulate_counts

FS = 1e-15


def dephased(g, phi=0.0):
    return dephased_pair_state(OverlapParameters(g, phi))


@pytest.mark.parametrize("basis", ["HV", "DA"])
def test_bell_state_full_visibility(basis):
    scan = visibility_curve(bell_phi_plus(), basis)
    assert scan.visibility == pytest.approx(1.0, abs=1e-9)
    assert scan.max_residual < 1e-10 * scan.counts.max()


def test_hv_fringe_shape_for_bell_state():
    # C(t) = N cos^2(t) / 2 with the idler on H
    t = default_angles(19)
    scan = visibility_curve(bell_phi_plus(), "HV", t, brightness=2.0)
    assert np.allclose(scan.counts, np.cos(t) ** 2, atol=1e-12)


@pytest.mark.parametrize("g", [0.0, 0.3, 0.7, math.sqrt(0.8522), 1.0])
def test_dephased_visibilities(g):
    r = dephased(g)
    assert visibility_curve(r, "HV").visibility == pytest.approx(1.0, abs=1e-9)
    assert visibility_curve(r, "DA").visibility == pytest.approx(g, abs=1e-9)
    assert analytic_visibility(r, "DA") == pytest.approx(g, abs=1e-9)


def test_phase_reduces_da_visibility():
    # phi rotates the D/A fringe out of the real plane: V_DA = g |cos phi|
    r = dephased(0.9, 1.0)
    assert analytic_visibility(r, "DA") == pytest.approx(0.9 * abs(math.cos(1.0)), abs=1e-9)


def test_mixed_state_no_fringe():
    assert visibility_curve(maximally_mixed(), "HV").visibility == pytest.approx(0.0, abs=1e-12)


def test_visibility_invariant_to_brightness():
    r = random_hs_state(np.random.default_rng(1))
    v = [visibility_curve(r, "DA", brightness=b).visibility for b in (1.0, 37.0, 1e6)]
    assert v[1] == pytest.approx(v[0], abs=1e-12) and v[2] == pytest.approx(v[0], abs=1e-12)


def test_fit_pipeline_agrees_with_traces():
    rng = np.random.default_rng(8)
    for _ in range(10):
        r = random_hs_state(rng)
        for b in ("HV", "DA"):
            v = visibility_curve(r, b).visibility
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(analytic_visibility(r, b), abs=1e-9)


def test_fit_recovers_coefficients():
    t = np.linspace(0, math.pi, 50)
    a, b, c, res = fit_fringe(t, 3 + 0.5 * np.cos(2 * t) - 1.2 * np.sin(2 * t))
    assert (a, b, c) == pytest.approx((3, 0.5, -1.2), abs=1e-12)
    assert res < 1e-12


def test_degenerate_fringe_rejected():
    t = default_angles()
    with pytest.raises(DegenerateDataError):
        visibility_from_counts(t, np.zeros_like(t))


def test_short_angle_span_rejected():
    with pytest.raises(DomainError):
        visibility_from_counts(np.linspace(0, 1, 10), np.ones(10))


def test_unknown_basis_rejected():
    with pytest.raises(DomainError):
        analytic_visibility(bell_phi_plus(), "LR")


def test_visibility_of_reconstructed_state():
    r = dephased(0.95)
    rec = mle_reconstruct(simulate_counts(r, 1e5, 2)).rho
    assert visibility_curve(rec, "DA").visibility == pytest.approx(
        analytic_visibility(rec, "DA"), abs=1e-9)
    assert analytic_visibility(rec, "DA") == pytest.approx(0.95, abs=0.02)


def test_config_defaults_match_schema():
    cfg = load_config("default")
    assert cfg == ExperimentConfig.from_values({})
    assert cfg.pump.center_wavelength == 726.0
    assert cfg.fiber.length == 0.2 and cfg.fiber.birefringence == 3.5e-4
    assert cfg.sweep_delays[2] == pytest.approx(28 * FS)


def test_measured_config():
    cfg = load_config("measured")
    assert cfg.imbalance.intrinsic_delay == pytest.approx(28 * FS)
    assert cfg.imbalance.residual_distinguishability ** 2 == pytest.approx(0.8522, abs=1e-12)
    assert cfg.calibration_overlap_sq == pytest.approx(0.7543 / 0.8522, abs=1e-12)


def test_config_parsing():
    v = parse_config_text("seed = 4  # comment\n\n fiber.length_m=0.1\n"
                          "tomography.noiseless = yes\nsweep.delays_fs = 1, 2,3\n")
    assert v == {"seed": 4, "fiber.length_m": 0.1, "tomography.noiseless": True,
                 "sweep.delays_fs": [1.0, 2.0, 3.0]}


@pytest.mark.parametrize("text,match", [
    ("pump.colour = red\n", "unknown key"),
    ("seed 3\n", "expected 'key = value'"),
    ("seed = three\n", "bad value"),
    ("seed = 1\nseed = 2\n", "duplicate"),
])
def test_config_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


@pytest.mark.parametrize("text", [
    "schema_version = 2", "fiber.length_m = 0", "fiber.dispersion = water",
    "calibration.delay_fs = 28", "grid.n_signal = 10", "workers = 0",
    "imbalance.residual_distinguishability = 1.5",
])
def test_config_value_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_values(parse_config_text(text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "nope.cfg"))


def test_schema_table_lists_every_key():
    table = schema_table()
    assert all(f"`{k}`" in table for k in SCHEMA)
    assert set(BUILTIN_CONFIGS) == {"default", "measured"}


def _small_cfg(**kw):
    base = ExperimentConfig.from_values(parse_config_text(
        "grid.n_signal = 128\ngrid.n_idler = 128\ntomography.restarts = 0\n"
        "bootstrap.resamples = 0\ntomography.noiseless = true\ntomography.brightness = 1e7\n"))
    return replace(base, **kw)


def test_small_experiment_tracks_model():
    cfg = _small_cfg(sweep_delays=(0.0, 20 * FS, 60 * FS))
    rows, summary = run_delay_sweep_experiment(cfg)
    assert rows[0].true_tangle == pytest.approx(1.0, abs=1e-9)
    assert all(r.reconstructed_tangle == pytest.approx(r.true_tangle, abs=1e-3) for r in rows)
    assert summary["peak_delay_fs_model"] == 0.0
    assert summary["all_converged"]


def test_experiment_delay_doubling_relabels_axis():
    a, _ = run_delay_sweep_experiment(_small_cfg(sweep_delays=(10 * FS, 30 * FS)))
    b, _ = run_delay_sweep_experiment(_small_cfg(sweep_delays=(10 * FS, 20 * FS, 30 * FS)))
    assert [r.true_tangle for r in a] == [b[0].true_tangle, b[2].true_tangle]


def test_experiment_bootstrap_column_and_worker_invariance():
    cfg = replace(_small_cfg(sweep_delays=(0.0, 40 * FS)), noiseless=False, brightness=1e5,
                  bootstrap_resamples=4)
    a, sa = run_delay_sweep_experiment(cfg)
    b, sb = run_delay_sweep_experiment(replace(cfg, workers=2))
    assert a == b and sa["fraction_within_3sigma"] == sb["fraction_within_3sigma"]
    assert all(r.tangle_std > 0 for r in a)


def test_state_passes_through_json():
    r = dephased(0.8, 0.2)
    assert analytic_visibility(TwoQubitState.from_json(r.to_json()), "DA") == pytest.approx(
        analytic_visibility(r, "DA"), abs=1e-15)
