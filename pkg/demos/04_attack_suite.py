"""
Mounting the physically-constrained attack
==========================================

Ten generators, one per movement: each proposes a replacement block for its
movement that drives the frozen authenticator's valid-user probability up,
and is trained *through* fresh replication noise so it prefers regions that
survive sloppy human execution.  The attacker then plays scenario 1: pick
the movement whose attack earns the lowest true positive rate.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import mouseguard as mg
from mouseguard import adversary, data_synth as ds

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

pattern = ds.TaskPattern(movement_length=32, sample_period=0.02)
corpus = ds.synthesize_corpus(pattern, n_subjects=8, trials_per_subject=30, seed=7)
split = ds.make_split(corpus, valid_user="s0", n_attackers=3)
model = mg.train_authenticator(corpus, split, mg.AuthTrainConfig(learning_rate=2e-3, epochs=150, seed=1))
noise = mg.NoiseModel(movement_length=pattern.movement_length)
attackers = ds.attacker_trials(corpus, split)

###############################################################################
# Train the suite against the frozen authenticator.

suite = adversary.train_attack_suite(
    model, attackers, noise, adversary.AttackTrainConfig(learning_rate=1e-3, steps=200, seed=2)
)
print(f"trained {suite.n_movements} generators")

###############################################################################
# Scenario 1: per-movement TPR against the bare authenticator; the attacker
# commits to the weakest movement.

rng = np.random.default_rng(3)
selection = adversary.select_attack_scenario1(suite, model, 0.5, attackers, noise, rng, draws=20)
print("per-movement TPR:", np.round(selection.tpr_by_movement, 2))
print(f"attacker picks movement {selection.movement_index}")

clean_scores = model.score_batch(ds.trials_to_batch(attackers))
print(f"unmodified attacker trials rejected: {np.mean(clean_scores < 0.5):.2f}")
batch = adversary.adversarial_batch(suite[selection.movement_index], attackers, noise, rng, draws=20)
print(f"TPR under the chosen attack:         {adversary.tpr_from_scores(model.score_batch(batch), 0.5):.2f}")

###############################################################################
# What the attack looks like in position space: one movement of a genuine
# attacker trial is replaced by the generated block plus tracking noise.

sample = adversary.generate_adversarial_sample(
    suite[selection.movement_index], attackers[0], noise, rng
)
print(f"replication sigma for the generated movement: {sample.sigma:.2f} px/s")

fig, ax = plt.subplots(figsize=(6, 4.5))
j = sample.movement_index
base, adv = attackers[0], sample.trial()
origin = np.asarray(pattern.waypoints[0])
for trial, style, label in ((base, "C0-", "attacker's own trial"), (adv, "C3-", None)):
    flat = np.concatenate(list(trial.movements))
    pos = ds.positions_from_velocities(flat, origin, pattern.sample_period)
    ax.plot(pos[:, 0], pos[:, 1], style, lw=1.0, alpha=0.7, label=label)
L = pattern.movement_length
flat = np.concatenate(list(adv.movements))
pos = ds.positions_from_velocities(flat, origin, pattern.sample_period)
ax.plot(pos[j * L : (j + 1) * L, 0], pos[j * L : (j + 1) * L, 1], "C3-", lw=2.5,
        label=f"replaced movement {j} (+noise)")
ax.legend()
ax.set_title("adversarial sample in the position domain")
fig.tight_layout()
fig.savefig(OUT / "attack_sample.png", dpi=120)
print(f"wrote {OUT / 'attack_sample.png'}")

###############################################################################
# Dumps use the corpus format plus provenance (movement index, sigma).

adversary.save_adversarial_samples(OUT / "adversarial_samples.jsonl", [sample])
print(f"wrote {OUT / 'adversarial_samples.jsonl'}")
