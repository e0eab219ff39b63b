"""Entanglement distribution steps, Larmor phase bookkeeping and magnetic dephasing.

The states here are post-selected on a detected coincidence: write/read
losses are handled by :mod:`hybridlink.event_sim`, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hybridlink.quantum_core import (
    TwoQubitState,
    apply_local_unitary,
    phase_gate,
    singlet,
)

MU_B_OVER_H = 1.3996e6  # Hz per gauss
# Both logical pairs (|1,+-1>, g_F = -1/2 and |2,+-1>, g_F = +1/2) split by mu_B * B.
ZEEMAN_COEFF = 2 * math.pi * MU_B_OVER_H  # rad / (s G)
# Differential mean-field phase between the two magnon levels; taken as zero.
MEAN_FIELD_PHASE_RATE = 0.0  # rad / s

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LinkTimings:
    t_at: float = 1e-6
    t_bec: float = 1e-6
    tau: float = 0.6e-6

    def __post_init__(self):
        for name in ("t_at", "t_bec", "tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class DephasingParams:
    """Magnetic environment of the two nodes (fields in gauss)."""

    sigma_b_at: float = 1.0e-3
    sigma_b_bec: float = 0.3e-3
    hold_b_at: float = 40e-3
    hold_b_bec: float = 100e-3
    zeeman_coeff: float = ZEEMAN_COEFF
    mean_field_rate: float = MEAN_FIELD_PHASE_RATE

    def __post_init__(self):
        if self.sigma_b_at < 0 or self.sigma_b_bec < 0:
            raise ValueError("RMS field noise must be non-negative")

    @property
    def omega_at(self) -> float:
        """RMS angular-frequency noise at the atom."""
        return self.zeeman_coeff * self.sigma_b_at

    @property
    def omega_bec(self) -> float:
        return self.zeeman_coeff * self.sigma_b_bec


def _qubit_index(qubit: str) -> int:
    if qubit in ("A", 0):
        return 0
    if qubit in ("B", 1):
        return 1
    raise ValueError(f"qubit must be 'A' or 'B', got {qubit!r}")


# -- protocol steps ---------------------------------------------------------


def source_emit() -> TwoQubitState:
    """Atom-photon Bell pair leaving the cavity."""
    return singlet().with_carriers("atom", "photon")


def store_in_memory(state: TwoQubitState) -> TwoQubitState:
    """Map the photon (qubit B) onto a magnon: L -> |2,-1>, R -> |2,+1>.

    Both levels carry the same logical index as the photon polarization they
    replace, so the matrix is untouched; only the carrier label changes.
    """
    if state.carriers[1] == "magnon":
        raise ValueError("qubit B is already stored in the memory")
    if state.carriers[1] != "photon":
        raise ValueError(f"qubit B must be a photon to be stored, got {state.carriers[1]!r}")
    return state.with_carriers(state.carriers[0], "magnon")


def readout(state: TwoQubitState) -> TwoQubitState:
    """Convert the atom and magnon qubits back to photon polarization."""
    if state.carriers != ("atom", "magnon"):
        raise ValueError(f"readout needs an (atom, magnon) pair, got {state.carriers}")
    return state.with_carriers("photon", "photon")


def ideal_pipeline() -> TwoQubitState:
    return readout(store_in_memory(source_emit()))


# -- deterministic phases ---------------------------------------------------


def larmor_phase(b_field: float, duration: float, coeff: float = ZEEMAN_COEFF) -> float:
    """Relative phase accumulated between the two logical levels."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    return coeff * b_field * duration


def apply_larmor(state, qubit: str, phase: float):
    """Phase gate diag(1, e^{i phase}) on one qubit."""
    u = phase_gate(phase)
    if _qubit_index(qubit) == 0:
        return apply_local_unitary(state, u, np.eye(2))
    return apply_local_unitary(state, np.eye(2), u)


def compensate_larmor(state, qubit: str, phase: float):
    """Undo a known Larmor phase (waveplate setting in front of the analyzer)."""
    return apply_larmor(state, qubit, -phase)


def hold_field_phases(params: DephasingParams, timings: LinkTimings) -> tuple[float, float]:
    """Static phases (atom, memory) from the hold fields and the mean-field shift."""
    phi_at = larmor_phase(params.hold_b_at, timings.t_at, params.zeeman_coeff)
    phi_bec = larmor_phase(params.hold_b_bec, timings.t_bec, params.zeeman_coeff)
    phi_bec += params.mean_field_rate * timings.t_bec
    return phi_at, phi_bec


# -- stochastic dephasing ---------------------------------------------------


def coherence_factor(sigma_phi: float) -> float:
    """Mean of exp(i phi) for phi ~ N(0, sigma_phi^2)."""
    return math.exp(-0.5 * sigma_phi**2)


def apply_dephasing(state, qubit: str, sigma_phi: float):
    """Gaussian phase-noise channel on one qubit in the logical Z basis.

    Coherences between different logical values of ``qubit`` are scaled by
    exp(-sigma_phi^2 / 2); populations are untouched.
    """
    if sigma_phi < 0:
        raise ValueError("sigma_phi must be non-negative")
    shift = 1 if _qubit_index(qubit) == 0 else 0
    idx = np.arange(4)
    bit = (idx >> shift) & 1
    mask = bit[:, None] != bit[None, :]
    m = np.array(state.matrix if isinstance(state, TwoQubitState) else state, dtype=complex)
    m[mask] *= coherence_factor(sigma_phi)
    if isinstance(state, TwoQubitState):
        return state.with_matrix(m)
    return m


def sigma_for_coherence(c: float) -> float:
    """Phase spread that leaves coherence factor ``c`` (inverse of coherence_factor)."""
    if not 0 < c <= 1:
        raise ValueError("coherence factor must lie in (0, 1]")
    return math.sqrt(-2.0 * math.log(c))


def dephased_singlet(f: float) -> TwoQubitState:
    """Singlet with phase noise on qubit A, tuned to fidelity ``f`` in [1/2, 1]."""
    if not 0.5 <= f <= 1.0:
        raise ValueError("fidelity must lie in [1/2, 1]")
    if f == 0.5:
        m = np.array(singlet().matrix)
        m[1, 2] = m[2, 1] = 0.0
        return TwoQubitState(m)
    return apply_dephasing(singlet(), "A", sigma_for_coherence(2 * f - 1))


def decay_factor(params: DephasingParams, timings: LinkTimings) -> float:
    """Remaining fraction of the excess fidelity after both storage intervals."""
    x = 0.5 * (params.omega_at * timings.t_at) ** 2 + 0.5 * (params.omega_bec * timings.t_bec) ** 2
    return math.exp(-x)


def fidelity_vs_time(f0: float, params: DephasingParams, timings: LinkTimings) -> float:
    """Singlet fidelity after Gaussian dephasing in both nodes."""
    if not 0.5 < f0 <= 1.0:
        raise ValueError("f0 must lie in (1/2, 1]")
    return 0.5 + (f0 - 0.5) * decay_factor(params, timings)


def half_time(omega: float) -> float:
    """Time for the excess fidelity to halve under RMS angular noise ``omega``."""
    if omega <= 0:
        return math.inf
    return math.sqrt(2 * LN2) / omega


def half_time_from_field(sigma_b: float, coeff: float = ZEEMAN_COEFF) -> float:
    return half_time(coeff * sigma_b)


def combined_half_time(params: DephasingParams) -> float:
    """Half-time when both nodes store for the same time t_at = t_bec = t."""
    return half_time(math.hypot(params.omega_at, params.omega_bec))


def run_protocol(
    f0: float,
    params: DephasingParams,
    timings: LinkTimings,
    compensate: bool = True,
) -> TwoQubitState:
    """Full emit/store/wait/readout sequence with noise and Larmor phases.

    Source imperfection is modelled as extra phase noise on the atom so that
    the fidelity follows :func:`fidelity_vs_time`. With ``compensate`` the
    static hold-field phases are removed at the analyzers.
    """
    state = source_emit()
    if f0 < 1.0:
        state = apply_dephasing(state, "A", sigma_for_coherence(2 * f0 - 1))
    state = store_in_memory(state)
    phi_at, phi_bec = hold_field_phases(params, timings)
    state = apply_larmor(state, "A", phi_at)
    state = apply_larmor(state, "B", phi_bec)
    state = apply_dephasing(state, "A", params.omega_at * timings.t_at)
    state = apply_dephasing(state, "B", params.omega_bec * timings.t_bec)
    state = readout(state)
    if compensate:
        state = compensate_larmor(state, "A", phi_at)
        state = compensate_larmor(state, "B", phi_bec)
    return state


def matter_matter_interval_exists(timings: LinkTimings) -> bool:
    """True if the photon is stored before the atom's second photon leaves."""
    return timings.t_at > timings.tau and timings.t_bec > timings.tau


def storage_to_transit_ratio(timings: LinkTimings) -> float:
    return timings.t_bec / timings.tau


__all__ = [
    "LinkTimings",
    "DephasingParams",
    "ZEEMAN_COEFF",
    "source_emit",
    "store_in_memory",
    "readout",
    "ideal_pipeline",
    "larmor_phase",
    "apply_larmor",
    "compensate_larmor",
    "apply_dephasing",
    "dephased_singlet",
    "fidelity_vs_time",
    "half_time",
    "half_time_from_field",
    "combined_half_time",
    "run_protocol",
    "matter_matter_interval_exists",
    "storage_to_transit_ratio",
]
