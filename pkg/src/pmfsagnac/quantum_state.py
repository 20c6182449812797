"""Two-qubit polarization states and entanglement metrics.

Basis order is fixed everywhere as |HH>, |HV>, |VH>, |VV> with the signal
qubit first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidStateError

BASIS_LABELS = ("HH", "HV", "VH", "VV")

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_FLOOR = 1e-10

_S2 = 1.0 / np.sqrt(2.0)

# single-qubit kets on (|H>, |V>); L = (H - iV)/sqrt2 and R = (H + iV)/sqrt2
KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "L": np.array([_S2, -1j * _S2], dtype=complex),
    "R": np.array([_S2, 1j * _S2], dtype=complex),
}

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)


@dataclass(frozen=True)
class PolarizationKet:
    amplitudes: tuple[complex, complex]

    def __post_init__(self):
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > 1e-12:
            raise DomainError(f"polarization ket not normalized: {self.amplitudes}")

    @classmethod
    def named(cls, label: str) -> "PolarizationKet":
        return cls(tuple(complex(a) for a in KETS[label]))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=complex)

    def projector(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class OverlapParameters:
    """Path overlap ``gamma`` and the settable relative phase ``phi``.

    ``gamma`` is <phi_HH|phi_VV>, the quantity a temporal shift of the VV
    amplitude produces directly. The |HH><VV| coherence of the state is
    e^{i phi} conj(gamma) / 2; using the opposite convention only flips the
    sign of any reconstructed phase.
    """

    gamma: complex = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if abs(self.gamma) > 1.0 + 1e-12:
            raise DomainError(f"|gamma| must not exceed 1, got {abs(self.gamma)}")


class TwoQubitState:
    """Validated 4x4 density matrix (Hermitian, unit trace, PSD up to a floor)."""

    __slots__ = ("_matrix",)

    def __init__(self, matrix, validate: bool = True):
        m = np.array(matrix, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidStateError([f"shape {m.shape} is not (4, 4)"])
        if validate:
            failures = check_density_matrix(m)
            if failures:
                raise InvalidStateError(failures)
        # symmetrize away sub-tolerance asymmetry
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        self._matrix = m

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._matrix, dtype=dtype)

    def __repr__(self):
        return f"TwoQubitState(\n{np.array2string(self._matrix, precision=4)})"

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order with the numerical floor clamped to 0."""
        w = np.linalg.eigvalsh(self._matrix)
        if w[0] < -PSD_FLOOR:
            raise InvalidStateError([f"negative eigenvalue {w[0]:.3e}"])
        return np.clip(w, 0.0, None)

    def to_dict(self) -> dict:
        return {
            "basis": list(BASIS_LABELS),
            "re": self._matrix.real.tolist(),
            "im": self._matrix.imag.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "TwoQubitState":
        basis = d.get("basis", list(BASIS_LABELS))
        if list(basis) != list(BASIS_LABELS):
            raise InvalidStateError([f"basis {basis} is not {list(BASIS_LABELS)}"])
        try:
            m = np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)
        except KeyError as exc:
            raise InvalidStateError([f"missing field {exc.args[0]!r}"]) from None
        return cls(m)

    @classmethod
    def from_json(cls, text: str) -> "TwoQubitState":
        return cls.from_dict(json.loads(text))


def check_density_matrix(m: np.ndarray) -> list[str]:
    """Names of the density-matrix invariants that ``m`` violates."""
    failures = []
    if not np.all(np.isfinite(m)):
        return ["non-finite entries"]
    herm = np.max(np.abs(m - m.conj().T))
    if herm > HERMITIAN_TOL:
        failures.append(f"not Hermitian (max asymmetry {herm:.3e})")
    tr = np.trace(m)
    if abs(tr - 1.0) > TRACE_TOL:
        failures.append(f"trace {tr.real:.12g}{tr.imag:+.3g}j is not 1")
    wmin = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if wmin < -PSD_FLOOR:
        failures.append(f"not positive semidefinite (min eigenvalue {wmin:.3e})")
    return failures


def as_matrix(rho) -> np.ndarray:
    if isinstance(rho, TwoQubitState):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def product_ket(signal: str, idler: str) -> np.ndarray:
    return np.kron(KETS[signal], KETS[idler])


def phi_plus_ket() -> np.ndarray:
    return np.array([_S2, 0.0, 0.0, _S2], dtype=complex)


def bell_phi_plus() -> TwoQubitState:
    v = phi_plus_ket()
    return TwoQubitState(np.outer(v, v.conj()))


def maximally_mixed() -> TwoQubitState:
    return TwoQubitState(np.eye(4) / 4)


def dephased_pair_state(p: OverlapParameters) -> TwoQubitState:
    """Sagnac pair state with imperfect path overlap.

    rho = 1/2 (|HH><HH| + |VV><VV| + e^{i phi} conj(gamma) |HH><VV| + h.c.)
    """
    if abs(p.gamma) > 1.0 + 1e-12:
        raise DomainError(f"|gamma| must not exceed 1, got {abs(p.gamma)}")
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[3, 3] = 0.5
    coh = 0.5 * np.exp(1j * p.phi) * np.conj(p.gamma)
    m[0, 3] = coh
    m[3, 0] = np.conj(coh)
    return TwoQubitState(m)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w[0] < -PSD_FLOOR:
        raise InvalidStateError([f"negative eigenvalue {w[0]:.3e}"])
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def concurrence(rho) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4).

    The l's are the singular values of sqrt(rho) (Y x Y) sqrt(rho)^*, which
    equal the square roots of the eigenvalues of rho (YxY) rho^* (YxY).
    """
    s = _psd_sqrt(as_matrix(rho))
    lam = np.linalg.svd(s @ _YY @ s.conj(), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1:].sum()))


def tangle(rho) -> float:
    return concurrence(rho) ** 2


def purity(rho) -> float:
    m = as_matrix(rho)
    _psd_sqrt(m)
    return float(np.real(np.trace(m @ m)))


def linear_entropy(rho) -> float:
    """Normalized linear entropy (4/3)(1 - Tr rho^2); 0 for pure, 1 for I/4."""
    return 4.0 / 3.0 * (1.0 - purity(rho))


def fidelity_to_pure(rho, psi) -> float:
    """<psi|rho|psi> for a normalized pure two-qubit ket."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise DomainError("target ket is not normalized")
    m = as_matrix(rho)
    _psd_sqrt(m)
    f = np.vdot(psi, m @ psi)
    if abs(f.imag) > 1e-10:
        raise InvalidStateError([f"fidelity has imaginary part {f.imag:.3e}"])
    return float(f.real)


def trace_distance(rho, sigma) -> float:
    d = as_matrix(rho) - as_matrix(sigma)
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def random_hs_state(rng: np.random.Generator) -> TwoQubitState:
    """Density matrix drawn from the Hilbert-Schmidt measure (Ginibre G G^dag)."""
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    m = g @ g.conj().T
    return TwoQubitState(m / np.trace(m).real)
