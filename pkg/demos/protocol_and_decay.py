"""
Protocol stages and fidelity decay
==================================

Follows the logical singlet from the atom-photon source through storage in
the BEC memory and readout, then shows how magnetic field noise on the two
memories turns into a Gaussian fidelity decay.
"""

import numpy as np

from hybridlink.estimation import decay_points, fit_gaussian_decay
from hybridlink.event_sim import LinkConfig, simulate_decay_curve
from hybridlink.protocol import (
    DephasingParams,
    LinkTimings,
    combined_half_time,
    fidelity_vs_time,
    half_time_from_field,
    readout,
    run_protocol,
    source_emit,
    store_in_memory,
)
from hybridlink.quantum_core import fidelity, negativity

# Every stage holds the same logical state; only the carriers change.
state = source_emit()
print(state.carriers, fidelity(state))
state = store_in_memory(state)
print(state.carriers, fidelity(state))
state = readout(state)
print(state.carriers, fidelity(state))

# Field noise of sigma_B on a memory gives a Gaussian phase spread growing
# linearly in storage time.
for sigma_b in (1.0e-3, 0.3e-3):
    print(f"sigma_B = {sigma_b * 1e3:.1f} mG -> half-time {half_time_from_field(sigma_b) * 1e6:.1f} us")

params = DephasingParams()
print(f"both memories: {combined_half_time(params) * 1e6:.1f} us")

# Full protocol with an imperfect source (F0 = 0.95) at a few storage times.
for t in (1e-6, 50e-6, 100e-6, 200e-6):
    rho = run_protocol(0.95, params, LinkTimings(t, t))
    print(f"t = {t * 1e6:5.0f} us: F = {fidelity(rho):.3f}, negativity = {negativity(rho):.3f}"
          f" (analytic {fidelity_vs_time(0.95, params, LinkTimings(t, t)):.3f})")

# A simulated sweep with finite statistics, fitted with the Gaussian model.
times = [(t, t) for t in np.array([1, 25, 50, 75, 100, 150, 200]) * 1e-6]
curve = simulate_decay_curve(0.95, params, LinkConfig.ideal(), times, 600, seed=3)
fit = fit_gaussian_decay(decay_points(curve))
print(f"\nfit: F0 = {fit.f0:.3f} +/- {fit.f0_err:.3f}, half-time = "
      f"{fit.half_time * 1e6:.0f} +/- {fit.half_time_err * 1e6:.0f} us, chi/dof = {fit.residual_norm:.2f}")
