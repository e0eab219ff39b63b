import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hybridlink import budget
from hybridlink.event_sim import (
    CSV_COLUMNS,
    CountTable,
    LinkConfig,
    analytic_g2,
    calibrate_pa_rate,
    eta_per_cycle,
    hbt_counts,
    p2_for_g2,
    pa_rate,
    photoassociation_decay,
    simulate_decay_curve,
    simulate_g2,
    simulate_run,
)
from hybridlink.protocol import DephasingParams
from hybridlink.quantum_core import (
    SETTINGS_9,
    SETTINGS_WITNESS,
    outcome_probabilities,
    random_state,
    singlet,
)


def test_perfect_anticorrelation_in_zz():
    t = simulate_run(singlet(), LinkConfig.ideal(), ["ZZ"], 10_000, seed=1)
    n_pp, n_pm, n_mp, n_mm = t["ZZ"]
    assert n_pp + n_mm == 0
    assert n_pm + n_mp == 10_000
    # the split between (+,-) and (-,+) is a fair coin
    assert abs(n_pm - 5000) < 4 * math.sqrt(2500)


def test_same_seed_is_byte_identical():
    cfg = LinkConfig()
    a = simulate_run(singlet(), cfg, SETTINGS_WITNESS, 3_000_000, seed=11)
    b = simulate_run(singlet(), cfg, SETTINGS_WITNESS, 3_000_000, seed=11)
    c = simulate_run(singlet(), cfg, SETTINGS_WITNESS, 3_000_000, seed=12)
    assert a.to_csv() == b.to_csv()
    assert a != c


def test_parallel_blocks_match_serial():
    cfg = LinkConfig.ideal(pair_prob=0.05)
    serial = simulate_run(random_state(np.random.default_rng(0)), cfg, SETTINGS_9, 5_000_000, seed=3)
    threaded = simulate_run(random_state(np.random.default_rng(0)), cfg, SETTINGS_9, 5_000_000, seed=3, workers=4)
    assert serial.to_csv() == threaded.to_csv()


def test_validation():
    with pytest.raises(ValueError, match="setting"):
        simulate_run(singlet(), LinkConfig(), [], 10, seed=0)
    with pytest.raises(ValueError):
        simulate_run(singlet(), LinkConfig(), ["XX"], 0, seed=0)
    with pytest.raises(ValueError, match="eta"):
        LinkConfig(eta=1.3)
    with pytest.raises(ValueError):
        LinkConfig(n_final_atoms=2e6)


def test_round_robin_allocation():
    t = simulate_run(singlet(), LinkConfig.ideal(), SETTINGS_9, 1000, seed=0)
    assert list(t.totals()) == [112] + [111] * 8
    assert t.coincidences == 1000


def test_rate_matches_budget_chain():
    cfg = LinkConfig()
    shots = 20_000_000
    t = simulate_run(singlet(), cfg, SETTINGS_WITNESS, shots, seed=5)
    p = budget.expected_coincidence_rate(cfg.chain())
    assert p == pytest.approx(budget.expected_coincidence_rate(budget.nominal_chain()))
    se = math.sqrt(shots * p * (1 - p))
    assert abs(t.coincidences - shots * p) < 3 * se


def test_unexplained_loss_factor_scales_rate():
    cfg = LinkConfig.ideal(unexplained_loss=0.2)
    t = simulate_run(singlet(), cfg, SETTINGS_WITNESS, 100_000, seed=8)
    assert abs(t.coincidences - 20_000) < 3 * math.sqrt(100_000 * 0.2 * 0.8)
    assert "unexplained_loss" in cfg.chain().as_dict()


def test_born_rule_frequencies():
    rho = random_state(np.random.default_rng(4))
    t = simulate_run(rho, LinkConfig.ideal(), SETTINGS_9, 1_000_000, seed=9)
    for s in SETTINGS_9:
        obs = t[s]
        expected = outcome_probabilities(rho, s) * obs.sum()
        p_value = stats.chisquare(obs, expected).pvalue
        assert p_value > 0.01, s


def test_dark_counts_add_random_coincidences():
    cfg = LinkConfig.ideal(pair_prob=1e-3, dark_count_prob=0.02)
    t = simulate_run(singlet(), cfg, ["ZZ"], 1_000_000, seed=2)
    signal, dark = 1e-3, 0.02
    # a delivered pair always clicks both sides; otherwise both need a dark click
    expected = 1e6 * (signal + (1 - signal) * dark**2)
    assert abs(t.coincidences - expected) < 4 * math.sqrt(expected)
    n_pp, n_pm, n_mp, n_mm = t["ZZ"]
    assert n_pp + n_mm > 0


def test_eta_tracking_keeps_average():
    cfg = LinkConfig(eta_tracks_atom_number=True)
    eta = eta_per_cycle(cfg)
    assert eta.mean() == pytest.approx(cfg.eta, rel=1e-9)
    assert eta[0] > eta[-1]
    ideal = LinkConfig.ideal(eta=0.16, eta_tracks_atom_number=True)
    t = simulate_run(singlet(), ideal, ["ZZ"], 2_000_000, seed=1)
    assert abs(t.coincidences - 320_000) < 4 * math.sqrt(320_000)


def test_csv_schema_round_trip(tmp_path):
    t = simulate_run(singlet(), LinkConfig.ideal(), SETTINGS_9, 900, seed=1)
    text = t.to_csv(tmp_path / "counts.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 10
    assert lines[1].split(",")[:2] == ["X", "X"]
    assert CountTable.from_csv(tmp_path / "counts.csv") == t
    assert CountTable.from_csv(text) == t


def test_count_table_invariants():
    with pytest.raises(ValueError):
        CountTable(("XX",), [[1, -1, 0, 0]], 10)
    with pytest.raises(ValueError, match="more coincidences"):
        CountTable(("XX",), [[5, 5, 5, 5]], 10)
    with pytest.raises(KeyError):
        CountTable(("XX",), [[1, 0, 0, 0]], 10)["ZZ"]


# -- g2 -----------------------------------------------------------------------


def test_g2_zero_without_two_photon_events():
    cfg = LinkConfig(p2_admixture=0.0)
    assert simulate_g2(cfg, 2_000_000, seed=1) == 0.0


def test_g2_admixture_matches_analytic():
    cfg = LinkConfig()
    assert analytic_g2(cfg) == pytest.approx(0.01)
    assert cfg.p2_admixture == pytest.approx(p2_for_g2(0.01, 0.14))
    h = hbt_counts(cfg, 10_000_000, seed=4)
    assert h.coincidences >= 100
    assert abs(h.g2 - 0.01) < 3 * h.std_err


def test_g2_coherent_state_is_one():
    # Poisson photon number: the two detector click streams are independent
    h = hbt_counts(LinkConfig(), 2_000_000, seed=6, photon_statistics="poisson", mean_photon_number=0.2)
    assert abs(h.g2 - 1.0) < 3 * h.std_err


def test_g2_is_deterministic():
    assert hbt_counts(LinkConfig(), 1_000_000, seed=3) == hbt_counts(LinkConfig(), 1_000_000, seed=3)


# -- photoassociation ------------------------------------------------------------


def test_photoassociation_examples():
    rate = calibrate_pa_rate(1.2e6, 0.2e6, 2e4)
    assert rate == pytest.approx(math.log(6) / 2e4, rel=1e-15)
    assert rate == pytest.approx(8.958797e-5, rel=1e-6)
    assert photoassociation_decay(1.2e6, 2e4, rate) == pytest.approx(0.2e6, rel=1e-12)
    assert photoassociation_decay(1.2e6, 0, rate) == 1.2e6
    fast = photoassociation_decay(1.2e6, 2e4, 50 * rate)
    assert fast == pytest.approx(1.2e6 * math.exp(-50 * math.log(6)), rel=1e-9)
    assert fast < 1e-30
    assert calibrate_pa_rate(5.0, 5.0 / math.e, 1) == pytest.approx(1.0)
    assert pa_rate(LinkConfig(), 780) == pytest.approx(50 * rate)


def test_photoassociation_rejects_bad_input():
    with pytest.raises(ValueError):
        calibrate_pa_rate(1.0, 2.0, 10)
    with pytest.raises(ValueError):
        photoassociation_decay(1.0, 10, -1.0)


@given(
    st.floats(1e2, 1e9),
    st.floats(0.01, 0.99),
    st.floats(1, 1e6),
)
@settings(max_examples=200, deadline=None)
def test_decay_and_calibration_are_inverse(n0, frac, cycles):
    rate = calibrate_pa_rate(n0, n0 * frac, cycles)
    assert photoassociation_decay(n0, cycles, rate) == pytest.approx(n0 * frac, rel=1e-12)


# -- decay curves -------------------------------------------------------------------


def test_decay_curve_at_zero_time_is_singlet():
    curve = simulate_decay_curve(1.0, DephasingParams(), LinkConfig.ideal(), [(0.0, 0.0)], 30_000, seed=1)
    (times, table), = curve
    assert times == (0.0, 0.0)
    for s in SETTINGS_WITNESS:
        row = table[s]
        assert row[0] + row[3] == 0


def test_decay_curve_points_use_distinct_streams():
    curve = simulate_decay_curve(0.95, DephasingParams(), LinkConfig.ideal(), [(1e-6, 1e-6)] * 2, 3000, seed=1)
    assert curve[0][1] != curve[1][1]
