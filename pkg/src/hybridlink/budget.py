"""Closed-form link budget: coincidence rate, acquisition time, EIT bandwidth."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

GAMMA_RB_D1 = 2 * math.pi * 5.75e6  # rad/s, natural linewidth used for the EIT window

# Thomas-Fermi radii of the condensate (m); kept for reports only.
TF_RADII = (7e-6, 25e-6, 25e-6)
OD_780_AT_N0 = 1500.0
OD_795_AT_N0 = 120.0
N0_ATOMS = 1.2e6


@dataclass(frozen=True)
class BudgetFactor:
    name: str
    factor: float
    provenance: str = ""


@dataclass(frozen=True)
class BudgetChain:
    """Ordered multiplicative efficiency factors."""

    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        factors = tuple(f if isinstance(f, BudgetFactor) else BudgetFactor(*f) for f in self.factors)
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise ValueError("budget factor names must be unique")
        for f in factors:
            if not 0.0 < f.factor <= 1.0:
                raise ValueError(f"budget factor {f.name!r} = {f.factor} outside (0, 1]")
        object.__setattr__(self, "factors", factors)

    def __iter__(self):
        return iter(self.factors)

    def __len__(self):
        return len(self.factors)

    def as_dict(self) -> dict:
        return {f.name: f.factor for f in self.factors}

    def replace(self, name: str, value: float) -> "BudgetChain":
        if name not in self.as_dict():
            raise KeyError(name)
        return BudgetChain(
            tuple(BudgetFactor(f.name, value, f.provenance) if f.name == name else f for f in self.factors)
        )


def nominal_chain() -> BudgetChain:
    """Efficiency chain of the count-rate budget for the 795 nm operating point."""
    return BudgetChain((
        BudgetFactor("pair", 0.010, "entangled photon pair per trigger, (1.0 +- 0.2)%"),
        BudgetFactor("atom_present", 0.72, "single atom loaded when the BEC is ready"),
        BudgetFactor("atom_survival", 0.81, "atom loss over 2e4 cycles"),
        BudgetFactor("eta", 0.16, "BEC write-read efficiency for single photons"),
        BudgetFactor("beam_splitter", 0.25, "50:50 non-polarizing splitter between labs"),
        BudgetFactor("transport", 0.21, "all other beam transport incl. stray light filtering"),
        BudgetFactor("det_a", 0.50, "avalanche photodiode, atom photon"),
        BudgetFactor("det_b", 0.50, "avalanche photodiode, memory photon"),
    ))


def expected_coincidence_rate(chain: BudgetChain) -> float:
    """Coincidence probability per shot: the product of all factors."""
    if len(chain) == 0:
        raise ValueError("budget chain is empty")
    return math.prod(f.factor for f in chain)


def acquisition_time(
    target_coincidences: float,
    rate_per_shot: float,
    shots_per_bec: float,
    bec_cycle_time: float,
) -> float:
    """Net wall time (s) to collect ``target_coincidences``, in whole BEC cycles."""
    for name, v in (
        ("target_coincidences", target_coincidences),
        ("rate_per_shot", rate_per_shot),
        ("shots_per_bec", shots_per_bec),
        ("bec_cycle_time", bec_cycle_time),
    ):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    # round first so 60 / 2.5e-6 / 2e4 is 1200 BECs, not 1201
    n_bec = math.ceil(round(target_coincidences / rate_per_shot / shots_per_bec, 9))
    return n_bec * bec_cycle_time


@dataclass(frozen=True)
class EITParams:
    omega_c: float = 2 * math.pi * 20e6
    gamma: float = GAMMA_RB_D1
    optical_depth: float = OD_795_AT_N0

    def __post_init__(self):
        if min(self.omega_c, self.gamma, self.optical_depth) <= 0:
            raise ValueError("EIT parameters must be positive")


def eit_window(params: EITParams = EITParams()) -> float:
    """Transparency window width Omega_c^2 / (Gamma sqrt(d)) in rad/s."""
    return params.omega_c**2 / (params.gamma * math.sqrt(params.optical_depth))


def optical_depth_scaling(od_ref: float, n_ref: float, n: float) -> float:
    """Peak optical depth at atom number ``n`` for fixed cloud geometry."""
    if min(od_ref, n_ref, n) <= 0:
        raise ValueError("optical depth and atom numbers must be positive")
    return od_ref * n / n_ref


def budget_report(chain: BudgetChain, observed_rate: float | None = None) -> dict:
    rate = expected_coincidence_rate(chain)
    report = {
        "factors": [{"name": f.name, "factor": f.factor, "provenance": f.provenance} for f in chain],
        "expected_rate_per_shot": rate,
    }
    if observed_rate is not None:
        report["observed_rate_per_shot"] = observed_rate
        report["observed_over_expected"] = observed_rate / rate
    return report


def budget_report_json(chain: BudgetChain, observed_rate: float | None = None, **extra) -> str:
    report = budget_report(chain, observed_rate)
    report.update(extra)
    return json.dumps(report, indent=2)


def budget_table(chain: BudgetChain, observed_rate: float | None = None) -> str:
    """Aligned plain-text table, one row per factor, product last."""
    width = max(len(f.name) for f in chain)
    lines = [f"{'factor':<{width}}  {'value':>8}  provenance"]
    for f in chain:
        lines.append(f"{f.name:<{width}}  {f.factor:>8.4g}  {f.provenance}")
    rate = expected_coincidence_rate(chain)
    lines.append(f"{'product':<{width}}  {rate:>8.3e}  coincidences per shot")
    if observed_rate is not None:
        lines.append(
            f"{'observed':<{width}}  {observed_rate:>8.3e}  ratio to product {observed_rate / rate:.3f}"
        )
    return "\n".join(lines) + "\n"
