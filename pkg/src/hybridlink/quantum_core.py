"""Dense linear algebra for one- and two-qubit polarization/spin states.

Basis order is |00>, |01>, |10>, |11> with qubit A the left factor. Logical
encodings of the physical levels live in :data:`ENCODING`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

ATOL_STATE = 1e-10
ATOL_UNITARY = 1e-10
ATOL_KET = 1e-12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Which optical polarization basis each Pauli label stands for.
BASIS_PHYSICAL = {"Z": "circular R/L", "X": "linear H/V", "Y": "diagonal D/A"}

# Physical level -> logical index, per carrier. The atom assignment is chosen
# so that the atom-photon, atom-magnon and photon-photon states are all the
# same logical singlet (|01> - |10>)/sqrt(2).
ENCODING = {
    "photon": {"R": 0, "L": 1},
    "atom": {"|1,+1>": 0, "|1,-1>": 1},
    "magnon": {"|2,+1>": 0, "|2,-1>": 1},
}


class MeasurementSetting(NamedTuple):
    """Pair of Pauli-labelled local measurement bases."""

    basis_a: str
    basis_b: str

    @classmethod
    def parse(cls, label: str) -> "MeasurementSetting":
        label = label.strip().upper()
        if len(label) != 2 or any(c not in "XYZ" for c in label):
            raise ValueError(f"invalid measurement setting {label!r}; expected two of X, Y, Z")
        return cls(label[0], label[1])

    @property
    def label(self) -> str:
        return self.basis_a + self.basis_b

    def __str__(self) -> str:
        return self.label


SETTINGS_9 = tuple(MeasurementSetting(a, b) for a in "XYZ" for b in "XYZ")
SETTINGS_WITNESS = tuple(MeasurementSetting(a, a) for a in "XYZ")

# Outcome order used everywhere: (+,+), (+,-), (-,+), (-,-).
OUTCOMES = ("pp", "pm", "mp", "mm")
OUTCOME_SIGNS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])


def _as_setting(setting) -> MeasurementSetting:
    if isinstance(setting, MeasurementSetting):
        return setting
    if isinstance(setting, str):
        return MeasurementSetting.parse(setting)
    return MeasurementSetting(*setting)


@dataclass(frozen=True)
class TwoQubitState:
    """A validated 4x4 density matrix.

    ``carriers`` names the physical system currently holding each logical
    qubit (``"photon"``, ``"atom"``, ``"magnon"`` or generic ``"qubit"``).
    It does not affect any linear algebra.
    """

    matrix: np.ndarray
    carriers: tuple = field(default=("qubit", "qubit"))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"density matrix must be 4x4, got {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0, atol=ATOL_STATE):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > ATOL_STATE:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        min_eig = np.linalg.eigvalsh(m).min()
        if min_eig < -ATOL_STATE:
            raise ValueError(f"density matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "carriers", tuple(self.carriers))

    def with_matrix(self, matrix) -> "TwoQubitState":
        return TwoQubitState(matrix, self.carriers)

    def with_carriers(self, a: str, b: str) -> "TwoQubitState":
        return TwoQubitState(self.matrix, (a, b))


StateLike = Union[TwoQubitState, np.ndarray]


def as_matrix(rho: StateLike) -> np.ndarray:
    if isinstance(rho, TwoQubitState):
        return rho.matrix
    m = np.asarray(rho, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
    return m


def ket(*amplitudes) -> np.ndarray:
    """Normalized column vector from amplitudes."""
    v = np.asarray(amplitudes, dtype=complex).ravel()
    return v / np.linalg.norm(v)


def singlet_ket() -> np.ndarray:
    return np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def singlet() -> TwoQubitState:
    """The Bell state (|01> - |10>)/sqrt(2) as a density matrix."""
    m = np.zeros((4, 4), dtype=complex)
    m[1, 1] = m[2, 2] = 0.5
    m[1, 2] = m[2, 1] = -0.5
    return TwoQubitState(m)


def maximally_mixed() -> TwoQubitState:
    return TwoQubitState(np.eye(4, dtype=complex) / 4)


def product_state(a, b) -> TwoQubitState:
    """Pure product state from two single-qubit kets."""
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > ATOL_KET:
            raise ValueError("single-qubit ket is not normalized")
    psi = np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    return TwoQubitState(np.outer(psi, psi.conj()))


def fidelity(rho: StateLike, target=None) -> float:
    """Overlap <target|rho|target> with a pure two-qubit target.

    ``target`` defaults to the singlet. It may be given as a length-4 ket or
    as a pair of single-qubit kets (product target).
    """
    m = as_matrix(rho)
    if target is None:
        # integer ket avoids 1/sqrt(2) rounding; a pure singlet scores exactly 1
        v = np.array([0, 1, -1, 0])
        return float(np.real(v @ m @ v)) / 2
    if isinstance(target, tuple) and len(target) == 2:
        psi = np.kron(np.asarray(target[0], dtype=complex), np.asarray(target[1], dtype=complex))
    else:
        psi = np.asarray(target, dtype=complex).ravel()
    if psi.shape != (4,):
        raise ValueError("target must be a two-qubit ket")
    if abs(np.linalg.norm(psi) - 1.0) > ATOL_KET:
        raise ValueError("target ket is not normalized")
    return float(np.real(psi.conj() @ m @ psi))


def pauli_correlation(rho: StateLike, setting) -> float:
    """tr(rho sigma_a (x) sigma_b)."""
    s = _as_setting(setting)
    op = np.kron(PAULI[s.basis_a], PAULI[s.basis_b])
    return float(np.real(np.trace(as_matrix(rho) @ op)))


def local_expectation(rho: StateLike, basis: str, qubit: str) -> float:
    """Single-qubit expectation of a Pauli on qubit ``"A"`` or ``"B"``."""
    if qubit == "A":
        op = np.kron(PAULI[basis], PAULI["I"])
    elif qubit == "B":
        op = np.kron(PAULI["I"], PAULI[basis])
    else:
        raise ValueError("qubit must be 'A' or 'B'")
    return float(np.real(np.trace(as_matrix(rho) @ op)))


def eigenprojectors(basis: str) -> tuple[np.ndarray, np.ndarray]:
    """(P+, P-) for the Pauli ``basis``."""
    s = PAULI[basis]
    return (PAULI["I"] + s) / 2, (PAULI["I"] - s) / 2


def outcome_projectors(setting) -> np.ndarray:
    """Array of shape (4, 4, 4): joint projectors in :data:`OUTCOMES` order."""
    s = _as_setting(setting)
    pa = eigenprojectors(s.basis_a)
    pb = eigenprojectors(s.basis_b)
    return np.array([np.kron(pa[i], pb[j]) for i in (0, 1) for j in (0, 1)])


def outcome_probabilities(rho: StateLike, setting) -> np.ndarray:
    """Born-rule probabilities of the four sign outcomes for ``setting``."""
    m = as_matrix(rho)
    probs = np.real(np.einsum("kij,ji->k", outcome_projectors(setting), m))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def partial_transpose(rho: StateLike) -> np.ndarray:
    """Partial transpose on qubit B."""
    m = as_matrix(rho).reshape(2, 2, 2, 2)
    return m.transpose(0, 3, 2, 1).reshape(4, 4)


def min_pt_eigenvalue(rho: StateLike) -> float:
    """Smallest eigenvalue of the partial transpose; negative means entangled."""
    return float(np.linalg.eigvalsh(partial_transpose(rho)).min())


def negativity(rho: StateLike) -> float:
    ev = np.linalg.eigvalsh(partial_transpose(rho))
    return float(-ev[ev < 0].sum())


def is_unitary(u, atol=ATOL_UNITARY) -> bool:
    u = np.asarray(u, dtype=complex)
    return u.shape == (2, 2) and np.allclose(u @ u.conj().T, np.eye(2), rtol=0, atol=atol)


def apply_local_unitary(rho: StateLike, u_a, u_b) -> StateLike:
    """Conjugate ``rho`` by u_a (x) u_b.

    Returns the same kind of object that was passed in, carrying over
    ``carriers`` for :class:`TwoQubitState`.
    """
    if not is_unitary(u_a) or not is_unitary(u_b):
        raise ValueError("local operations must be 2x2 unitaries")
    u = np.kron(np.asarray(u_a, dtype=complex), np.asarray(u_b, dtype=complex))
    out = u @ as_matrix(rho) @ u.conj().T
    out = (out + out.conj().T) / 2
    if isinstance(rho, TwoQubitState):
        return rho.with_matrix(out)
    return out


def phase_gate(phi: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * phi)])


def werner(p: float) -> TwoQubitState:
    """p |psi-><psi-| + (1 - p) I/4."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    return TwoQubitState(p * singlet().matrix + (1 - p) * np.eye(4) / 4)


BELL_KETS = {
    "psi-": singlet_ket(),
    "psi+": np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    "phi+": np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2),
}


def bell_diagonal(weights) -> TwoQubitState:
    """Mixture of the four Bell states, weights ordered psi-, psi+, phi+, phi-."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("Bell weights must be four non-negative numbers summing to 1")
    m = sum(wi * np.outer(k, k.conj()) for wi, k in zip(w, BELL_KETS.values()))
    return TwoQubitState(m)


def random_state(rng: np.random.Generator, rank: int = 4) -> TwoQubitState:
    """Random density matrix from a Ginibre ensemble of the given rank."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return TwoQubitState(m / np.trace(m).real)


def random_unitary(rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def trace_distance(a: StateLike, b: StateLike) -> float:
    ev = np.linalg.eigvalsh(as_matrix(a) - as_matrix(b))
    return float(0.5 * np.abs(ev).sum())
