"""
Heralded g2 of the retrieved photon
===================================

A Hanbury Brown-Twiss split of the single-photon arm. Two-photon events are
rare, so g2 sits far below the coherent-state value of 1.
"""

from hybridlink.event_sim import LinkConfig, analytic_g2, hbt_counts, p2_for_g2

config = LinkConfig()
print(f"two-photon probability {config.p2_admixture:.2e} gives analytic g2 = {analytic_g2(config):.4f}")

h = hbt_counts(config, 10_000_000, seed=1)
print(f"simulated: {h.coincidences} coincidences in {h.triggers} triggers, g2 = {h.g2:.4f} +/- {h.std_err:.4f}")

# Raising the two-photon admixture raises g2 in proportion.
for target in (0.005, 0.02, 0.05):
    cfg = LinkConfig(p2_admixture=p2_for_g2(target, config.epsilon))
    hs = hbt_counts(cfg, 5_000_000, seed=2)
    print(f"target {target:.3f}: simulated {hs.g2:.4f} +/- {hs.std_err:.4f}")

# A laser pulse with the same mean photon number for comparison.
coh = hbt_counts(config, 2_000_000, seed=3, photon_statistics="poisson", mean_photon_number=0.2)
print(f"coherent light: g2 = {coh.g2:.3f} +/- {coh.std_err:.3f}")
