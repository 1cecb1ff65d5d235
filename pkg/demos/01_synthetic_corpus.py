"""
Synthetic mouse-behavior corpus
===============================

Every login attempt is the same task: steer the cursor through a fixed
zig-zag of waypoints, producing 10 movements of 32 velocity samples each
(the library default is 160 samples; the demos use a desk-sized task so
everything runs in seconds).  Subjects differ in per-movement speed,
curvature, tremor, and timing wobble, so an authenticator can tell them
apart while trials of one subject still vary.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mouseguard import data_synth as ds

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

###############################################################################
# Build the task pattern and draw a corpus.

pattern = ds.TaskPattern(movement_length=32, sample_period=0.02)
corpus = ds.synthesize_corpus(pattern, n_subjects=8, trials_per_subject=30, seed=7)
print(f"{len(corpus.trials)} trials, {pattern.n_movements} movements x "
      f"{pattern.movement_length} samples, subjects {corpus.subject_ids}")

###############################################################################
# Velocities integrate back to positions, so the trajectories can be drawn.
# Two subjects, three trials each: the shapes share the waypoint skeleton but
# the speeds and wobble are personal.

fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharex=True, sharey=True)
for ax, sid in zip(axes, ("s0", "s3")):
    for trial in corpus.trials_of(sid)[:3]:
        flat = np.concatenate(list(trial.movements))  # (n_mov*L, 2)
        pos = ds.positions_from_velocities(flat, pattern.waypoints[0], pattern.sample_period)
        ax.plot(pos[:, 0], pos[:, 1], lw=0.8, alpha=0.8)
    wp = np.asarray(pattern.waypoints)
    ax.plot(wp[:, 0], wp[:, 1], "k*--", lw=0.5, ms=10, alpha=0.5)
    ax.set_title(f"subject {sid}")
fig.suptitle("three trials per subject over the shared waypoints")
fig.tight_layout()
fig.savefig(OUT / "corpus_trajectories.png", dpi=120)
print(f"wrote {OUT / 'corpus_trajectories.png'}")

###############################################################################
# Per-movement mean speeds are the personal signature.

speeds = {
    sid: np.linalg.norm(np.stack([t.movements for t in corpus.trials_of(sid)]), axis=3).mean(axis=(0, 2))
    for sid in corpus.subject_ids[:4]
}
fig, ax = plt.subplots(figsize=(7, 3.5))
for sid, profile in speeds.items():
    ax.plot(range(10), profile, marker="o", label=sid)
ax.set_xlabel("movement index")
ax.set_ylabel("mean speed (px/s)")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "corpus_speed_profiles.png", dpi=120)

###############################################################################
# The corpus round-trips through its line-oriented file format.

path = OUT / "corpus.jsonl"
ds.save_corpus(path, corpus)
assert ds.load_corpus(path) == corpus
print(f"saved and reloaded corpus from {path} ({path.stat().st_size/1e6:.1f} MB)")

###############################################################################
# Preprocessing is exactly invertible on uniform captures.

raw = [(0.0, 0.0, 0.00), (4.0, 1.0, 0.02), (9.0, 3.0, 0.04), (15.0, 6.0, 0.06)]
vel = ds.velocities_from_raw(raw)
pos = ds.positions_from_velocities(vel, raw[0][:2], 0.02)
print("velocities:", vel.tolist())
print("reintegrated positions:", pos.tolist())
