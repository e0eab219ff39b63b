"""Seeded Monte Carlo of detection events on the link.

Shots are processed in fixed blocks of :data:`BLOCK_SHOTS`. Each block draws
from its own Philox stream keyed by ``(seed, stream, block index)``, so the
result does not depend on how many workers evaluate the blocks or in which
order they finish.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from hybridlink import budget
from hybridlink.protocol import DephasingParams, LinkTimings, run_protocol
from hybridlink.quantum_core import (
    OUTCOMES,
    SETTINGS_WITNESS,
    MeasurementSetting,
    TwoQubitState,
    _as_setting,
    outcome_probabilities,
)

BLOCK_SHOTS = 1 << 20

# stream ids keep the different simulations on disjoint Philox keys
_STREAM_RUN = 0
_STREAM_G2 = 1


def p2_for_g2(g2: float, mean_photon_number: float) -> float:
    """Two-photon probability giving g2(0) = 2 P(2) / <n>^2 for n in {0, 1, 2}."""
    return g2 * mean_photon_number**2 / 2.0


@dataclass(frozen=True)
class LinkConfig:
    """Per-shot probabilities and memory/source bookkeeping of the link."""

    epsilon: float = 0.14
    pair_prob: float = 0.010
    eta: float = 0.16
    bs_factor: float = 0.25
    transport: float = 0.21
    det_eff: float = 0.50
    atom_present: float = 0.72
    atom_survival_factor: float = 0.81
    p2_admixture: float = p2_for_g2(0.01, 0.14)
    shots_per_bec: int = 20000
    bec_cycle_time: float = 20.0
    n0_atoms: float = 1.2e6
    n_final_atoms: float = 0.2e6
    pa_rate_multiplier_780: float = 50.0
    unexplained_loss: float = 1.0
    dark_count_prob: float = 0.0
    eta_tracks_atom_number: bool = False

    PROBABILITIES = (
        "epsilon", "pair_prob", "eta", "bs_factor", "transport", "det_eff",
        "atom_present", "atom_survival_factor", "p2_admixture", "unexplained_loss",
        "dark_count_prob",
    )

    def __post_init__(self):
        for name in self.PROBABILITIES:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} must lie in [0, 1]")
        for name in ("shots_per_bec", "bec_cycle_time", "n0_atoms", "n_final_atoms", "pa_rate_multiplier_780"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_final_atoms >= self.n0_atoms:
            raise ValueError("n_final_atoms must be below n0_atoms")
        if 2 * self.p2_admixture > self.epsilon:
            raise ValueError("p2_admixture too large for the mean photon number epsilon")

    @classmethod
    def ideal(cls, **overrides) -> "LinkConfig":
        """Lossless link: every shot yields a coincidence."""
        base = dict(
            pair_prob=1.0, eta=1.0, bs_factor=1.0, transport=1.0, det_eff=1.0,
            atom_present=1.0, atom_survival_factor=1.0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def chain(self) -> budget.BudgetChain:
        """The per-shot efficiency chain this config samples."""
        items = [
            budget.BudgetFactor("pair", self.pair_prob, "entangled pair per trigger"),
            budget.BudgetFactor("atom_present", self.atom_present, "atom loaded"),
            budget.BudgetFactor("atom_survival", self.atom_survival_factor, "atom kept over the BEC"),
            budget.BudgetFactor("eta", self.eta, "memory write-read"),
            budget.BudgetFactor("beam_splitter", self.bs_factor, "routing between labs"),
            budget.BudgetFactor("transport", self.transport, "other beam transport"),
            budget.BudgetFactor("det_a", self.det_eff, "detector A"),
            budget.BudgetFactor("det_b", self.det_eff, "detector B"),
        ]
        if self.unexplained_loss < 1.0:
            items.append(budget.BudgetFactor("unexplained_loss", self.unexplained_loss, "fudge to observed rate"))
        return budget.BudgetChain(tuple(items))


# -- count tables -----------------------------------------------------------

CSV_COLUMNS = ("setting_a", "setting_b", "n_pp", "n_pm", "n_mp", "n_mm", "total_shots")


@dataclass
class CountTable:
    """Coincidence counts per measurement setting.

    ``counts[i]`` holds (n_pp, n_pm, n_mp, n_mm) for ``settings[i]``;
    ``total_shots`` is the number of shots of the whole run.
    """

    settings: tuple
    counts: np.ndarray
    total_shots: int
    shots_per_setting: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        self.settings = tuple(_as_setting(s) for s in self.settings)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.settings), 4)
        self.total_shots = int(self.total_shots)
        if len(set(self.settings)) != len(self.settings):
            raise ValueError("duplicate measurement settings in count table")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.counts.sum() > self.total_shots:
            raise ValueError("more coincidences than shots")

    def __getitem__(self, setting) -> np.ndarray:
        s = _as_setting(setting)
        try:
            return self.counts[self.settings.index(s)]
        except ValueError:
            raise KeyError(f"setting {s.label} not in count table") from None

    def __contains__(self, setting) -> bool:
        return _as_setting(setting) in self.settings

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountTable):
            return NotImplemented
        return (
            self.settings == other.settings
            and self.total_shots == other.total_shots
            and np.array_equal(self.counts, other.counts)
        )

    @property
    def coincidences(self) -> int:
        return int(self.counts.sum())

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def restrict(self, settings) -> "CountTable":
        settings = tuple(_as_setting(s) for s in settings)
        return CountTable(settings, np.array([self[s] for s in settings]), self.total_shots)

    def as_dict(self) -> dict:
        return {s.label: dict(zip(OUTCOMES, map(int, row))) for s, row in zip(self.settings, self.counts)}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s, row in zip(self.settings, self.counts):
            w.writerow([s.basis_a, s.basis_b, *map(int, row), self.total_shots])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "CountTable":
        """Parse from a path or from CSV text (anything containing a newline)."""
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("count table CSV has no data rows")
        missing = set(CSV_COLUMNS) - set(rows[0])
        if missing:
            raise ValueError(f"count table CSV missing columns: {sorted(missing)}")
        settings = [MeasurementSetting(r["setting_a"].strip().upper(), r["setting_b"].strip().upper()) for r in rows]
        counts = [[int(r[f"n_{o}"]) for o in OUTCOMES] for r in rows]
        totals = {int(r["total_shots"]) for r in rows}
        if len(totals) != 1:
            raise ValueError("inconsistent total_shots across rows")
        return cls(tuple(settings), np.array(counts), totals.pop())


# -- RNG plumbing -----------------------------------------------------------


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Counter-based generator for one block of one stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(shots: int):
    for b, start in enumerate(range(0, shots, BLOCK_SHOTS)):
        yield b, start, min(BLOCK_SHOTS, shots - start)


def _map_blocks(fn, shots: int, workers: int):
    jobs = list(_blocks(shots))
    if workers <= 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


# -- photoassociation -------------------------------------------------------


def photoassociation_decay(n0: float, cycles, rate: float):
    """Atom number after ``cycles`` write-read cycles, N = n0 exp(-rate cycles)."""
    if not n0 > 0:
        raise ValueError("n0 must be positive")
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return n0 * np.exp(-rate * np.asarray(cycles, dtype=float)) if np.ndim(cycles) else n0 * math.exp(-rate * cycles)


def calibrate_pa_rate(n0: float, n_final: float, cycles: float) -> float:
    """Per-cycle loss rate that takes n0 to n_final in ``cycles``."""
    if not 0 < n_final < n0:
        raise ValueError("need 0 < n_final < n0")
    if not cycles > 0:
        raise ValueError("cycles must be positive")
    return math.log(n0 / n_final) / cycles


def pa_rate(config: LinkConfig, wavelength_nm: int = 795) -> float:
    rate = calibrate_pa_rate(config.n0_atoms, config.n_final_atoms, config.shots_per_bec)
    if wavelength_nm == 780:
        return rate * config.pa_rate_multiplier_780
    if wavelength_nm != 795:
        raise ValueError("only the 795 nm and 780 nm operating points are modelled")
    return rate


def eta_per_cycle(config: LinkConfig) -> np.ndarray:
    """Write-read efficiency at each cycle of a BEC when it follows N.

    Scaled linearly with the atom number and normalized so the cycle average
    equals ``config.eta``.
    """
    c = np.arange(int(config.shots_per_bec))
    n = photoassociation_decay(config.n0_atoms, c, pa_rate(config))
    return np.clip(config.eta * n / n.mean(), 0.0, 1.0)


# -- coincidence runs -------------------------------------------------------


def _pre_detector_factors(config: LinkConfig) -> list[float]:
    f = [config.pair_prob, config.atom_present, config.atom_survival_factor]
    if not config.eta_tracks_atom_number:
        f.append(config.eta)
    f += [config.bs_factor, config.transport]
    if config.unexplained_loss < 1.0:
        f.append(config.unexplained_loss)
    return f


def simulate_run(
    state: TwoQubitState,
    config: LinkConfig,
    settings,
    shots: int,
    seed: int,
    stream: int = 0,
    workers: int = 1,
) -> CountTable:
    """Sample ``shots`` experimental shots and tally coincidences.

    Every loss is an independent Bernoulli trial per shot. Shot ``i`` is
    measured in ``settings[i % len(settings)]``; outcome signs of detected
    pairs follow the Born rule for that setting.
    """
    settings = tuple(_as_setting(s) for s in settings)
    if not settings:
        raise ValueError("at least one measurement setting is required")
    if shots <= 0:
        raise ValueError("shots must be positive")
    k = len(settings)
    cum = np.cumsum([outcome_probabilities(state, s) for s in settings], axis=1)[:, :3]
    factors = _pre_detector_factors(config)
    eta_c = eta_per_cycle(config) if config.eta_tracks_atom_number else None
    det, dark = config.det_eff, config.dark_count_prob
    stream_key = _STREAM_RUN * 1_000_003 + stream

    def run_block(b, start, n):
        rng = block_rng(seed, stream_key, b)
        idx = np.flatnonzero(rng.random(n) < factors[0])
        for f in factors[1:]:
            idx = idx[rng.random(idx.size) < f]
        if eta_c is not None:
            cyc = (start + idx) % eta_c.size
            idx = idx[rng.random(idx.size) < eta_c[cyc]]
        if dark == 0.0:
            idx = idx[rng.random(idx.size) < det]
            idx = idx[rng.random(idx.size) < det]
            sig_a = sig_b = np.ones(idx.size, dtype=bool)
        else:
            arrived = np.zeros(n, dtype=bool)
            arrived[idx] = True
            sig_a = arrived & (rng.random(n) < det)
            sig_b = arrived & (rng.random(n) < det)
            dark_a = rng.random(n) < dark
            dark_b = rng.random(n) < dark
            click = (sig_a | dark_a) & (sig_b | dark_b)
            idx = np.flatnonzero(click)
            sig_a, sig_b = sig_a[idx], sig_b[idx]
        s = (start + idx) % k
        outcome = (rng.random(idx.size)[:, None] > cum[s]).sum(axis=1)
        if dark != 0.0:
            # a dark click carries a random sign on its side
            bit_a, bit_b = outcome >> 1, outcome & 1
            rnd = rng.integers(0, 2, size=(2, idx.size))
            bit_a = np.where(sig_a, bit_a, rnd[0])
            bit_b = np.where(sig_b, bit_b, rnd[1])
            outcome = 2 * bit_a + bit_b
        return np.bincount(s * 4 + outcome, minlength=4 * k)

    parts = _map_blocks(run_block, shots, workers)
    counts = np.sum(parts, axis=0).reshape(k, 4)
    per_setting = np.array([len(range(i, shots, k)) for i in range(k)])
    return CountTable(settings, counts, shots, per_setting)


def simulate_decay_curve(
    f0: float,
    params: DephasingParams,
    config: LinkConfig,
    time_points,
    shots_per_point: int,
    seed: int,
    settings=SETTINGS_WITNESS,
    tau: float = 0.6e-6,
    workers: int = 1,
) -> list:
    """Witness-basis count tables along a list of (t_at, t_bec) storage times."""
    out = []
    for i, (t_at, t_bec) in enumerate(time_points):
        timings = LinkTimings(t_at, t_bec, tau)
        state = run_protocol(f0, params, timings)
        table = simulate_run(state, config, settings, shots_per_point, seed, stream=i, workers=workers)
        out.append(((t_at, t_bec), table))
    return out


# -- g2 -----------------------------------------------------------------------


@dataclass(frozen=True)
class HBTCounts:
    """Hanbury Brown-Twiss tallies: triggers, singles on each detector, coincidences."""

    triggers: int
    singles_1: int
    singles_2: int
    coincidences: int

    @property
    def g2(self) -> float:
        if self.singles_1 == 0 or self.singles_2 == 0:
            raise ValueError("no singles on one detector; g2 undefined")
        return self.coincidences * self.triggers / (self.singles_1 * self.singles_2)

    @property
    def std_err(self) -> float:
        """Delta-method error, dominated by the Poisson error of the coincidences."""
        rel2 = 1.0 / self.singles_1 + 1.0 / self.singles_2
        if self.coincidences > 0:
            return self.g2 * math.sqrt(1.0 / self.coincidences + rel2)
        return self.triggers / (self.singles_1 * self.singles_2)


def analytic_g2(config: LinkConfig) -> float:
    """<n(n-1)> / <n>^2 for the {0, 1, 2} photon-number model."""
    return 2.0 * config.p2_admixture / config.epsilon**2


def hbt_counts(
    config: LinkConfig,
    shots: int,
    seed: int,
    photon_statistics: str = "admixture",
    mean_photon_number: float | None = None,
    workers: int = 1,
) -> HBTCounts:
    """Simulate a 50:50 HBT measurement on the cavity output.

    ``photon_statistics="admixture"`` draws n = 2 with probability
    ``p2_admixture`` and n = 1 so that <n> = ``epsilon``; ``"poisson"`` draws
    n from a Poisson law with mean ``mean_photon_number`` (default epsilon).
    Each photon lands on either detector with probability 1/2 and is
    detected with ``det_eff``; detectors are not photon-number resolving.
    """
    if photon_statistics not in ("admixture", "poisson"):
        raise ValueError("photon_statistics must be 'admixture' or 'poisson'")
    if shots <= 0:
        raise ValueError("shots must be positive")
    mean = config.epsilon if mean_photon_number is None else mean_photon_number
    p2 = config.p2_admixture
    p1 = config.epsilon - 2 * p2
    half = config.det_eff / 2

    def run_block(b, start, n_shots):
        rng = block_rng(seed, _STREAM_G2, b)
        if photon_statistics == "admixture":
            u = rng.random(n_shots)
            n = (u < p2 + p1).astype(np.int64) + (u < p2)
        else:
            n = rng.poisson(mean, n_shots)
        nz = np.flatnonzero(n)
        n = n[nz]
        k1 = rng.binomial(n, half)
        k2 = rng.binomial(n - k1, half / (1 - half)) if half < 1 else n - k1
        c1, c2 = k1 > 0, k2 > 0
        return np.array([c1.sum(), c2.sum(), (c1 & c2).sum()], dtype=np.int64)

    s1, s2, c = np.sum(_map_blocks(run_block, shots, workers), axis=0)
    return HBTCounts(int(shots), int(s1), int(s2), int(c))


def simulate_g2(config: LinkConfig, shots: int, seed: int, **kwargs) -> float:
    """g2(0) estimated from HBT coincidence and singles rates."""
    return hbt_counts(config, shots, seed, **kwargs).g2
