"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (SWEEP_EXPERIMENT_HEADER, ExperimentError, analytic_visibility,
                       default_angles, prepare_pump, run_delay_sweep_experiment,
                       visibility_curve)
from .config import SCHEMA_VERSION, ExperimentConfig, load_config
from .dispersion import solve_phase_matching
from .errors import ConfigError, DegenerateDataError, DomainError, InvalidStateError
from .quantum_state import TwoQubitState
from .source_model import compute_jsa, default_grid, entangled_state, tangle_delay_sweep
from .tomography import (MLEOptions, bootstrap_errors, mle_reconstruct, records_from_csv,
                         records_to_csv, report_dict, simulate_counts)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SWEEP_HEADER = ("delay_fs", "tangle", "overlap_abs", "overlap_phase_rad")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_atomic(path: str, text: str):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, cfg: ExperimentConfig, text: str):
    out = args.out or cfg.output_path
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be in [0, 2**64)")
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_phasematch(args, cfg):
    sol = solve_phase_matching(cfg.fiber, cfg.pump.center_wavelength)
    d = sol.to_dict()
    if args.format == "json":
        return _json_text(d)
    return _csv_text(list(d), [[int(v) if isinstance(v, bool) else v for v in d.values()]])


def _model_jsa(cfg):
    pump = prepare_pump(cfg)
    return pump, compute_jsa(pump, cfg.fiber, default_grid(pump, cfg.fiber, cfg.n_signal, cfg.n_idler))


def cmd_jsa(args, cfg):
    _, jsa = _model_jsa(cfg)
    if args.format == "json":
        return _json_text(jsa.to_dict())
    g = jsa.grid
    rows = ((ws, wi, jsa.amplitude[i, j].real, jsa.amplitude[i, j].imag)
            for i, ws in enumerate(g.signal) for j, wi in enumerate(g.idler))
    return _csv_text(("signal_omega_rad_s", "idler_omega_rad_s", "re", "im"), rows)


def cmd_delay_sweep(args, cfg):
    pump, jsa = _model_jsa(cfg)
    pts = tangle_delay_sweep(pump, cfg.fiber, cfg.imbalance, cfg.sweep_delays, jsa=jsa)
    rows = [(p.delay * 1e15, p.tangle, abs(p.overlap), float(np.angle(p.overlap))) for p in pts]
    if args.format == "json":
        return _json_text([dict(zip(SWEEP_HEADER, r)) for r in rows])
    return _csv_text(SWEEP_HEADER, rows)


def _model_state(cfg):
    _, jsa = _model_jsa(cfg)
    return entangled_state(jsa, cfg.imbalance)


def cmd_tomo_simulate(args, cfg):
    rho = _model_state(cfg)
    records = simulate_counts(rho, cfg.brightness, cfg.seed, cfg.duration, cfg.noiseless)
    if args.format == "json":
        return _json_text({
            "state": rho.to_dict(),
            "counts": [{"signal": r.setting.signal, "idler": r.setting.idler,
                        "coincidences": r.coincidences, "duration_s": r.duration}
                       for r in records],
        })
    return records_to_csv(records)


def cmd_tomo_reconstruct(args, cfg):
    if not args.counts:
        raise ConfigError("tomo-reconstruct needs --counts <csv>")
    try:
        text = Path(args.counts).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read counts file {args.counts!r}: {exc.strerror}") from None
    records = records_from_csv(text)
    opts = MLEOptions(restarts=cfg.restarts, seed=cfg.seed)
    res = mle_reconstruct(records, opts)
    errors = None
    if cfg.bootstrap_resamples >= 2:
        errors = bootstrap_errors(records, cfg.bootstrap_resamples, cfg.seed,
                                  options=replace(opts, restarts=0), workers=cfg.workers)
    rep = report_dict(res, errors)
    if args.format == "json":
        return _json_text(rep)
    rows = [(k, rep[k]) for k in ("tangle", "linear_entropy", "fidelity_phi_plus", "nll",
                                  "converged", "brightness_estimate")]
    for k, e in (errors or {}).items():
        rows.append((f"{k}_std", e.std))
    return _csv_text(("metric", "value"), rows)


def _load_state(path: str) -> TwoQubitState:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read state file {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"state file {path!r} is not JSON: {exc}") from None
    return TwoQubitState.from_dict(d)


def cmd_visibility(args, cfg):
    rho = _load_state(args.state) if args.state else _model_state(cfg)
    angles = default_angles(cfg.n_angles)
    scans = {b: visibility_curve(rho, b, angles, max(cfg.brightness, 1.0)) for b in ("HV", "DA")}
    if args.format == "json":
        return _json_text({
            "state": rho.to_dict(),
            "scans": {b: s.to_dict() for b, s in scans.items()},
            "visibility": {b: s.visibility for b, s in scans.items()},
            "visibility_analytic": {b: analytic_visibility(rho, b) for b in scans},
        })
    rows = [(b, t, c) for b, s in scans.items() for t, c in zip(s.angles, s.counts)]
    return _csv_text(("basis", "theta_rad", "coincidences"), rows)


def cmd_full_experiment(args, cfg):
    rows, summary = run_delay_sweep_experiment(cfg)
    if args.format == "json":
        return _json_text({"rows": [dict(zip(SWEEP_EXPERIMENT_HEADER, r.as_csv_fields()))
                                    for r in rows], "summary": summary})
    text = _csv_text(SWEEP_EXPERIMENT_HEADER, [r.as_csv_fields() for r in rows])
    out = args.out or cfg.output_path
    if out:
        write_atomic(out + ".summary.json", _json_text(summary))
    return text


COMMANDS = {
    "phasematch": (cmd_phasematch, "solve the phase-matching equations"),
    "jsa": (cmd_jsa, "export the joint spectral amplitude"),
    "delay-sweep": (cmd_delay_sweep, "model tangle versus applied delay"),
    "tomo-simulate": (cmd_tomo_simulate, "simulate 36-setting coincidence counts"),
    "tomo-reconstruct": (cmd_tomo_reconstruct, "maximum-likelihood reconstruction from counts CSV"),
    "visibility": (cmd_visibility, "H/V and D/A visibility fringes of a state"),
    "full-experiment": (cmd_full_experiment, "delay sweep through simulated tomography"),
}

DEFAULT_FORMAT = {"phasematch": "json", "jsa": "json", "delay-sweep": "csv",
                  "tomo-simulate": "csv", "tomo-reconstruct": "json", "visibility": "json",
                  "full-experiment": "csv"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmfsagnac", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version",
                    version=f"pmfsagnac {__version__} (config schema {SCHEMA_VERSION})")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default="default",
                       help="config file path or builtin name ('default', 'measured')")
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=DEFAULT_FORMAT[name])
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes; results do not depend on it")
        if name == "tomo-reconstruct":
            p.add_argument("--counts", help="counts CSV (signal,idler,coincidences,duration_s)")
        if name == "visibility":
            p.add_argument("--state", help="density-matrix or reconstruction-report JSON")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = _config(args)
        text = func(args, cfg)
        _emit(args, cfg, text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, InvalidStateError, DegenerateDataError, ExperimentError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
