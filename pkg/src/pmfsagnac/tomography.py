"""Simulated 36-setting coincidence tomography and its inversion.

Settings are ideal product projectors on {H, V, D, A, L, R} for signal and
idler. Counts are Poisson with mean brightness * Tr(rho Pi). Reconstruction
maximizes the Poisson likelihood over rho = T^dag T / Tr(T^dag T) with T
lower triangular, with the brightness profiled out in closed form.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateDataError, DomainError
from .quantum_state import (KETS, PolarizationKet, TwoQubitState, as_matrix,
                            fidelity_to_pure, linear_entropy, phi_plus_ket, tangle)

SETTING_ORDER = ("H", "V", "D", "A", "L", "R")
DEFAULT_DURATION = 15.0
COUNTS_HEADER = ("signal", "idler", "coincidences", "duration_s")


@dataclass(frozen=True)
class MeasurementSetting:
    signal: str
    idler: str

    def __post_init__(self):
        for x in (self.signal, self.idler):
            if x not in KETS:
                raise DomainError(f"unknown projection {x!r}; expected one of {SETTING_ORDER}")

    @property
    def label(self) -> str:
        return self.signal + self.idler

    @property
    def signal_projection(self) -> PolarizationKet:
        return PolarizationKet.named(self.signal)

    @property
    def idler_projection(self) -> PolarizationKet:
        return PolarizationKet.named(self.idler)

    def ket(self) -> np.ndarray:
        return np.kron(KETS[self.signal], KETS[self.idler])

    def projector(self) -> np.ndarray:
        v = self.ket()
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class CountRecord:
    setting: MeasurementSetting
    coincidences: int
    duration: float = DEFAULT_DURATION

    def __post_init__(self):
        if self.coincidences < 0:
            raise DomainError("coincidence count must be nonnegative")
        if not self.duration > 0:
            raise DomainError("duration must be positive")


@dataclass
class TomographyResult:
    rho: TwoQubitState
    neg_log_likelihood: float
    iterations: int
    converged: bool
    brightness_estimate: float
    gradient_norm: float = float("nan")


@dataclass(frozen=True)
class ErrorEstimate:
    metric: str
    mean: float
    std: float
    n: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "skipped": self.skipped}


@dataclass(frozen=True)
class MLEOptions:
    restarts: int = 5
    max_iterations: int = 10_000
    gradient_tol: float = 1e-8
    restart_scale: float = 0.1
    seed: int = 0


def settings_36() -> list[MeasurementSetting]:
    """Signal-major product of H, V, D, A, L, R (HH, HV, ..., RR)."""
    return [MeasurementSetting(s, i) for s, i in itertools.product(SETTING_ORDER, SETTING_ORDER)]


def predict_coincidences(rho, setting: MeasurementSetting, brightness: float) -> float:
    if brightness < 0:
        raise DomainError("brightness must be nonnegative")
    v = setting.ket()
    p = np.vdot(v, as_matrix(rho) @ v).real
    return brightness * max(p, 0.0)


def _substreams(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def expected_counts(rho, brightness: float, settings=None) -> np.ndarray:
    settings = settings or settings_36()
    return np.array([predict_coincidences(rho, s, brightness) for s in settings])


def simulate_counts(rho, brightness: float, seed: int,
                    duration: float = DEFAULT_DURATION, noiseless: bool = False) -> list[CountRecord]:
    """One Poisson draw per setting, each from its own Philox substream of ``seed``.

    ``noiseless`` rounds the expected values instead of sampling.
    """
    settings = settings_36()
    mu = expected_counts(rho, brightness, settings)
    if noiseless:
        counts = np.rint(mu).astype(np.int64)
    else:
        counts = [int(g.poisson(m)) for g, m in zip(_substreams(seed, len(settings)), mu)]
    return [CountRecord(s, int(n), duration) for s, n in zip(settings, counts)]


def _projector_stack(records) -> np.ndarray:
    return np.array([r.setting.projector() for r in records])


def _counts(records) -> np.ndarray:
    return np.array([r.coincidences for r in records], dtype=float)


# Hermitian basis: E_jj, (E_jk + E_kj), i(E_jk - E_kj) for j < k
def _hermitian_basis() -> np.ndarray:
    basis = []
    for j in range(4):
        e = np.zeros((4, 4), complex)
        e[j, j] = 1
        basis.append(e)
    for j, k in itertools.combinations(range(4), 2):
        e = np.zeros((4, 4), complex)
        e[j, k] = e[k, j] = 1
        basis.append(e)
        e = np.zeros((4, 4), complex)
        e[j, k] = -1j
        e[k, j] = 1j
        basis.append(e)
    return np.array(basis)


_HBASIS = _hermitian_basis()


def linear_inversion(records) -> np.ndarray:
    """Least-squares Hermitian unit-trace estimate; positivity is NOT enforced."""
    proj = _projector_stack(records)
    n = _counts(records)
    # Tr(E_b Pi_k) is real for Hermitian E_b, Pi_k
    design = np.einsum("bij,kji->kb", _HBASIS, proj).real
    if np.linalg.matrix_rank(design) < 16:
        raise DegenerateDataError("measurement settings are not informationally complete")
    coef, *_ = np.linalg.lstsq(design, n, rcond=None)
    x = np.tensordot(coef, _HBASIS, axes=1)
    tr = np.trace(x).real
    if not tr > 0:
        raise DegenerateDataError("linear inversion gives nonpositive total rate")
    x = x / tr
    return 0.5 * (x + x.conj().T)


def project_to_physical(m: np.ndarray) -> np.ndarray:
    """Closest unit-trace PSD matrix in Frobenius norm (eigenvalue simplex projection)."""
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    # Euclidean projection of the spectrum onto the probability simplex
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, 5) > css - 1)[0][-1]
    theta = (css[k] - 1) / (k + 1)
    w = np.clip(w - theta, 0.0, None)
    return (v * w) @ v.conj().T


_TRIL = np.tril_indices(4, -1)


def params_to_t(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def t_to_params(t: np.ndarray) -> np.ndarray:
    return np.concatenate([t.diagonal().real, t[_TRIL].real, t[_TRIL].imag])


def params_to_rho(x: np.ndarray) -> np.ndarray:
    t = params_to_t(x)
    g = t.conj().T @ t
    return g / np.trace(g).real


def rho_to_params(rho: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Parameters whose image is ``rho`` mixed with a little I/4 (keeps T invertible)."""
    r = (1 - floor) * rho + floor * np.eye(4) / 4
    r = 0.5 * (r + r.conj().T)
    # with J the index reversal, J r J = L L^dag gives r = U U^dag for the
    # upper-triangular U = J L J, and T = U^dag is lower triangular
    j = np.eye(4)[::-1]
    lo = np.linalg.cholesky(j @ r @ j)
    return t_to_params(j @ lo.conj().T @ j)


def poisson_nll(rho: np.ndarray, proj: np.ndarray, n: np.ndarray) -> tuple[float, float]:
    """Profiled Poisson NLL (without the log n! constant) and fitted brightness."""
    p = np.einsum("kij,ji->k", proj, rho).real
    p = np.clip(p, 1e-300, None)
    total = n.sum()
    brightness = total / p.sum()
    mu = brightness * p
    mask = n > 0
    nll = float(mu.sum() - np.sum(n[mask] * np.log(mu[mask])))
    return nll, float(brightness)


def _objective(x, kets, n, total):
    """Profiled NLL relative to the saturated model, per count, and its gradient in x.

    ``kets`` holds the measurement kets as columns, so p_k = |T v_k|^2 / |T|_F^2.
    """
    t = params_to_t(x)
    tv = t @ kets
    q = (tv.real ** 2 + tv.imag ** 2).sum(axis=0)
    tr = (t.real ** 2 + t.imag ** 2).sum()
    p = np.clip(q / tr, 1e-300, None)
    s = p.sum()
    mask = n > 0
    # with brightness N = total/s the NLL is total - sum n ln(total p / s);
    # subtracting the saturated model keeps f near 0 at the optimum
    f = np.sum(n[mask] * np.log(n[mask] * s / (total * p[mask]))) / total
    d = np.full_like(p, 1.0 / s)
    d[mask] -= n[mask] / (p[mask] * total)
    # df/dRe T + i df/dIm T = (2/tr) [ (T V) diag(d) V^dag - (d . p) T ]
    m = (2.0 / tr) * ((tv * d) @ kets.conj().T - np.dot(d, p) * t)
    grad = np.concatenate([m.diagonal().real, m[_TRIL].real, m[_TRIL].imag])
    return f, grad


def _ascend(x0, kets, n, total, opts: MLEOptions):
    # BFGS gtol bounds the max-norm; the convergence flag uses the 2-norm
    res = minimize(_objective, x0, args=(kets, n, total), jac=True, method="BFGS",
                   options={"gtol": opts.gradient_tol / 8, "maxiter": opts.max_iterations})
    x = res.x / np.linalg.norm(res.x)
    f, grad = _objective(x, kets, n, total)
    return x, f, float(np.linalg.norm(grad)), int(res.nit)


def mle_reconstruct(records, options: MLEOptions | None = None) -> TomographyResult:
    """Maximum-likelihood density matrix from coincidence counts.

    Starts from the physical projection of the linear-inversion estimate and
    adds ``options.restarts`` randomly perturbed starts; the best likelihood
    wins. ``converged`` requires the count-normalized gradient norm to fall
    below ``options.gradient_tol``.
    """
    opts = options or MLEOptions()
    records = list(records)
    n = _counts(records)
    total = n.sum()
    if total <= 0:
        raise DegenerateDataError("all coincidence counts are zero")
    proj = _projector_stack(records)
    kets = np.array([r.setting.ket() for r in records]).T
    try:
        start_rho = project_to_physical(linear_inversion(records))
    except DegenerateDataError:
        if len(records) < 16:
            raise
        start_rho = np.eye(4) / 4
    x0 = rho_to_params(start_rho)
    x0 /= np.linalg.norm(x0)
    starts = [x0]
    rng = np.random.Generator(np.random.Philox(opts.seed))
    for _ in range(opts.restarts):
        starts.append(x0 + opts.restart_scale * rng.standard_normal(16))
    best = None
    iterations = 0
    for x in starts:
        xr, f, gnorm, nit = _ascend(x, kets, n, total, opts)
        iterations += nit
        if best is None or f < best[1] - 1e-15:
            best = (xr, f, gnorm)
    x, f, gnorm = best
    rho = params_to_rho(x)
    nll, brightness = poisson_nll(rho, proj, n)
    start_nll, _ = poisson_nll(start_rho, proj, n)
    if nll > start_nll + 1e-9 * max(1.0, abs(start_nll)):
        rho = start_rho
        nll = start_nll
    return TomographyResult(
        rho=TwoQubitState(rho),
        neg_log_likelihood=nll,
        iterations=iterations,
        converged=bool(gnorm < opts.gradient_tol),
        brightness_estimate=brightness,
        gradient_norm=gnorm,
    )


def fidelity_phi_plus(rho) -> float:
    return fidelity_to_pure(rho, phi_plus_ket())


METRICS = {
    "tangle": tangle,
    "linear_entropy": linear_entropy,
    "fidelity_phi_plus": fidelity_phi_plus,
}


def resample_counts(records, rng: np.random.Generator) -> list[CountRecord]:
    return [CountRecord(r.setting, int(rng.poisson(r.coincidences)), r.duration) for r in records]


def _bootstrap_one(records, rng, metric_names, opts):
    try:
        rho = mle_reconstruct(resample_counts(records, rng), opts).rho
        return [METRICS[m](rho) for m in metric_names]
    except (ValueError, np.linalg.LinAlgError):
        return None


def bootstrap_errors(records, n_resamples: int = 100, seed: int = 0,
                     metrics=("tangle", "linear_entropy", "fidelity_phi_plus"),
                     options: MLEOptions | None = None, workers: int = 1) -> dict[str, ErrorEstimate]:
    """Poisson-resampling error bars on metrics of the MLE state.

    Each resample redraws every count as Poisson(n_k) from its own substream
    of ``seed`` and is reconstructed independently, so the result does not
    depend on ``workers`` (processes). Failed reconstructions are skipped
    and counted.
    """
    if n_resamples < 2:
        raise DomainError("n_resamples must be at least 2")
    records = list(records)
    opts = options or MLEOptions(restarts=0)
    names = tuple(metrics)
    for m in names:
        if m not in METRICS:
            raise DomainError(f"unknown metric {m!r}; choose from {sorted(METRICS)}")
    streams = _substreams(seed, n_resamples)
    args = [(records, g, names, opts) for g in streams]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bootstrap_one, *zip(*args)))
    else:
        results = [_bootstrap_one(*a) for a in args]
    good = np.array([r for r in results if r is not None], dtype=float).reshape(-1, len(names))
    skipped = len(results) - good.shape[0]
    out = {}
    for j, name in enumerate(names):
        col = good[:, j]
        std = float(np.std(col, ddof=1)) if col.size > 1 else float("nan")
        mean = float(np.mean(col)) if col.size else float("nan")
        out[name] = ErrorEstimate(name, mean, std, int(col.size), skipped)
    return out


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    for r in records:
        w.writerow([r.setting.signal, r.setting.idler, r.coincidences, repr(float(r.duration))])
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != COUNTS_HEADER:
        raise DomainError(f"counts CSV header must be {','.join(COUNTS_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not x.strip() for x in row):
            continue
        if len(row) != 4:
            raise DomainError(f"line {lineno}: expected 4 fields, got {len(row)}")
        s, i, n, d = (x.strip() for x in row)
        try:
            count = int(n)
            duration = float(d)
        except ValueError:
            raise DomainError(f"line {lineno}: bad number in {row}") from None
        out.append(CountRecord(MeasurementSetting(s, i), count, duration))
    return out


def report_dict(result: TomographyResult, errors: dict[str, ErrorEstimate] | None = None) -> dict:
    rho = result.rho
    d = rho.to_dict()
    d.update({
        "tangle": tangle(rho),
        "linear_entropy": linear_entropy(rho),
        "fidelity_phi_plus": fidelity_to_pure(rho, phi_plus_ket()),
        "nll": result.neg_log_likelihood,
        "converged": result.converged,
        "brightness_estimate": result.brightness_estimate,
        "iterations": result.iterations,
    })
    if errors:
        d["errors"] = {k: v.to_dict() for k, v in errors.items()}
    return d

