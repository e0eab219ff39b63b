"""
Coincidence budget and acquisition time
=======================================

Multiplies the per-shot efficiency chain of the link, compares it with an
observed rate, and converts a target number of coincidences into hours of
BEC cycling.
"""

import math

from hybridlink import budget
from hybridlink.event_sim import LinkConfig

# The default configuration carries the nominal efficiency of every stage.
config = LinkConfig()
chain = config.chain()
print(budget.budget_table(chain, observed_rate=2.5e-6))

# Each BEC supports a fixed number of write-read shots. The observed rate,
# not the budget, sets how long one curve point takes.
t = budget.acquisition_time(60, 2.5e-6, config.shots_per_bec, config.bec_cycle_time)
print(f"60 coincidences at 2.5e-6 per shot: {t:.0f} s = {t / 3600:.1f} h")

t_best = budget.acquisition_time(60, budget.expected_coincidence_rate(chain), config.shots_per_bec,
                                 config.bec_cycle_time)
print(f"same target at the budget rate:   {t_best:.0f} s = {t_best / 3600:.1f} h")

# The gap between budget and observation can be carried as one explicit factor.
gap = 2.5e-6 / budget.expected_coincidence_rate(chain)
lossy = LinkConfig(unexplained_loss=gap)
print(f"\nunexplained loss factor {gap:.3f} -> rate {budget.expected_coincidence_rate(lossy.chain()):.2e}")

# EIT bandwidth of the memory from control Rabi frequency and optical depth.
w = budget.eit_window()
print(f"\nEIT window: {w / (2 * math.pi) / 1e6:.2f} MHz")
for od in (30, 120, 480):
    p = budget.EITParams(optical_depth=od)
    print(f"  d = {od:4d}: {budget.eit_window(p) / (2 * math.pi) / 1e6:.2f} MHz")
