"""
Training a behavioral authenticator
===================================

One authenticator per valid user: a conv + LSTM sequence classifier over the
whole trial, trained against the pooled invalid users (re-balanced every
epoch).  Threshold stays at the default 0.5 unless equal-error-rate
calibration is requested.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import mouseguard as mg
from mouseguard import data_synth as ds

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

pattern = ds.TaskPattern(movement_length=32, sample_period=0.02)
corpus = ds.synthesize_corpus(pattern, n_subjects=8, trials_per_subject=30, seed=7)
split = ds.make_split(corpus, valid_user="s0", n_attackers=3)
print(f"valid={split.valid_user} invalid={split.invalid_users} attackers={split.attacker_ids}")

###############################################################################
# Train and calibrate.

cfg = mg.AuthTrainConfig(learning_rate=2e-3, epochs=150, seed=1)
model = mg.train_authenticator(corpus, split, cfg)
threshold = mg.calibrate_threshold(model, corpus, split)
print(f"threshold: tau={threshold.tau} ({threshold.mode})")
eer = mg.calibrate_threshold(model, corpus, split, mode="eer")
print(f"eer alternative: tau={eer.tau:.3f}")

test = ds.split_trials(corpus, split, "test")
print(f"test accuracy @ tau: {mg.accuracy(model, threshold, test):.3f}")
print(f"balanced accuracy:   {mg.balanced_accuracy(model, threshold, test):.3f}")

###############################################################################
# Training curve and the score separation on the test partition.

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
ax1.plot([r["loss"] for r in model.training_curve], label="train loss")
ax1.plot([r["val_balanced_accuracy"] for r in model.training_curve], label="val balanced acc")
ax1.set_xlabel("epoch")
ax1.legend()

scores = model.score_batch(ds.trials_to_batch(test))
is_valid = np.array([t.label == ds.VALID for t in test])
ax2.hist(scores[is_valid], bins=20, alpha=0.6, label="valid user")
ax2.hist(scores[~is_valid], bins=20, alpha=0.6, label="invalid users")
ax2.axvline(threshold.tau, color="k", ls="--", lw=1)
ax2.set_xlabel("valid-user probability")
ax2.legend()
fig.tight_layout()
fig.savefig(OUT / "authenticator_training.png", dpi=120)
print(f"wrote {OUT / 'authenticator_training.png'}")

###############################################################################
# Unseen attacker subjects should be rejected like any other impostor.

attackers = ds.attacker_trials(corpus, split)
att_scores = model.score_batch(ds.trials_to_batch(attackers))
print(f"attacker trials rejected at tau: {np.mean(att_scores < threshold.tau):.3f}")
