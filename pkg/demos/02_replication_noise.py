"""
Replication noise: how sloppy is a human replaying a generated movement?
========================================================================

An attacker cannot inject velocity samples into the mouse driver; they watch
a target cursor and track it by hand.  Tracking studies put the ratio of
average cursor speed to average tracking distance at about 8.  Working
backwards from that ratio: per-sample velocity noise of std sigma random-walks
into position error, whose mean over an L-sample movement is

    c(L) * sigma,   with  c(L) = (0.8 / L) * sum_{i=1..L} sqrt(i),

so matching the tracking-study distance pins sigma to the movement's own
average speed: sigma = v_mean / (8 * c(L)).  For L = 160 that is
sigma ~= 0.0184 * v_mean.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mouseguard import physical_noise as pn

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

###############################################################################
# The closed-form pieces.

print("E|N(0,1)|          =", pn.expected_abs_gaussian(1.0), " (~0.8)")
print("c(160)             =", pn.mean_distance_coefficient(160), " (~6.78)")
print("sigma / mean speed =", pn.NoiseModel(160).sigma_per_speed, " (~0.0184)")

###############################################################################
# Monte-Carlo check of the whole chain: simulate per-sample velocity noise,
# accumulate it into position error, compare with c(L) * sigma.

rng = np.random.default_rng(0)
sigma = 2.0
for L in (32, 160):
    simulated = pn.simulate_tracking_error(L, sigma, n_movements=10_000, rng=rng)
    predicted = pn.mean_distance_coefficient(L) * sigma
    print(f"L={L:4d}: simulated mean |error| = {simulated:7.3f}, "
          f"c(L)*sigma = {predicted:7.3f}  ({simulated/predicted:.3f}x)")

###############################################################################
# Position error grows like sqrt(i) along the movement.

L = 160
walks = np.cumsum(rng.normal(0, sigma, size=(4000, L)), axis=1)
fig, ax = plt.subplots(figsize=(7, 3.5))
ax.plot(np.abs(walks[:40]).T, color="C0", alpha=0.15, lw=0.6)
ax.plot(np.mean(np.abs(walks), axis=0), "C1", lw=2, label="mean |error|")
i = np.arange(1, L + 1)
ax.plot(pn.expected_abs_gaussian(1.0) * np.sqrt(i) * sigma, "k--", lw=1.5,
        label=r"$0.8\,\sqrt{i}\,\sigma$")
ax.set_xlabel("sample index")
ax.set_ylabel("position error (px)")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "noise_random_walk.png", dpi=120)
print(f"wrote {OUT / 'noise_random_walk.png'}")

###############################################################################
# Applying the rule to a concrete movement: faster movements are harder to
# replicate, so they receive proportionally more noise.

movement = np.zeros((160, 2))
movement[:, 0] = 300.0
for scale in (0.5, 1.0, 3.0):
    s = pn.sigma_for_movement(scale * movement)
    print(f"mean speed {300*scale:6.1f} px/s -> replication sigma {s:6.2f} px/s")

noisy = pn.apply_replication_noise(movement, pn.sigma_for_movement(movement), rng)
print("applied noise std ~", np.std(noisy - movement).round(3))
