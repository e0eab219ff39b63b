"""Simulation and statistics for a single-atom / quantum-memory entanglement link."""

from hybridlink.quantum_core import (
    PAULI,
    SETTINGS_9,
    SETTINGS_WITNESS,
    MeasurementSetting,
    TwoQubitState,
    apply_local_unitary,
    fidelity,
    partial_transpose,
    pauli_correlation,
    singlet,
    singlet_ket,
)

__version__ = "0.1.0"

__all__ = [
    "PAULI",
    "SETTINGS_9",
    "SETTINGS_WITNESS",
    "MeasurementSetting",
    "TwoQubitState",
    "apply_local_unitary",
    "fidelity",
    "partial_transpose",
    "pauli_correlation",
    "singlet",
    "singlet_ket",
]
