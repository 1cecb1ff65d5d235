"""
The masked defense: basic and attack-aware selectors
====================================================

The selector scores the 10 movements of each incoming trial and keeps the
top n; everything else is replaced by background values drawn from the
training distribution before the authenticator looks at it.  Training pits
three losses against each other:

  l1  classify the reconstruction of what was kept  (minimize),
  l2  classify the reconstruction of what was dropped (maximize: the
      complement should carry nothing),
  l3  classify masked adversarial samples as invalid (minimize, weight beta;
      only the improved variant uses it).

The improved variant therefore learns to stop selecting movements that a
physically-constrained attacker can replicate.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import mouseguard as mg
from mouseguard import adversary, data_synth as ds, selector
from mouseguard.evalkit import _pipeline_accuracy

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

pattern = ds.TaskPattern(movement_length=32, sample_period=0.02)
corpus = ds.synthesize_corpus(pattern, n_subjects=8, trials_per_subject=30, seed=7)
split = ds.make_split(corpus, valid_user="s0", n_attackers=3)
auth = mg.train_authenticator(corpus, split, mg.AuthTrainConfig(learning_rate=2e-3, epochs=150, seed=1))
noise = mg.NoiseModel(movement_length=pattern.movement_length)
attackers = ds.attacker_trials(corpus, split)
train = ds.split_trials(corpus, split, "train")
test = ds.split_trials(corpus, split, "test")

# evaluation-side suite: what the attackers will actually use
eval_suite = adversary.train_attack_suite(
    auth, attackers, noise, adversary.AttackTrainConfig(learning_rate=1e-3, steps=200, seed=2)
)
# defender-side suite: trained on the defender's own invalid-user trials
defense_suite = adversary.train_attack_suite(
    auth, [t for t in train if t.label != ds.VALID], noise,
    adversary.AttackTrainConfig(learning_rate=1e-3, steps=200, seed=3),
)

###############################################################################
# Train both variants for n = 3.

cfg = selector.SelectorTrainConfig(
    n_selected=3, steps=300, lr_selector=2e-3, lr_reconstruction=1e-3, seed=4
)
basic = selector.train_basic_selector(auth, corpus, split, cfg)
improved = selector.train_improved_selector(
    auth, corpus, split, defense_suite, noise,
    selector.SelectorTrainConfig(
        n_selected=3, steps=300, lr_selector=2e-3, lr_reconstruction=1e-3, beta=1.0, seed=4
    ),
)

###############################################################################
# Which movements does each variant pick on clean test trials?

for name, bundle in (("basic", basic), ("improved", improved)):
    masks = np.stack([selector.select_mask(bundle, t) for t in test])
    print(f"{name:9s} selection frequency per movement: {masks.mean(axis=0).round(2)}")

###############################################################################
# Composite accuracy and robustness under both attack scenarios.

rng = np.random.default_rng(5)
rows = []
for name, bundle in (("basic", basic), ("improved", improved)):
    pipe = selector.make_pipeline(bundle, auth, 0.5, train, seed=6)
    acc = _pipeline_accuracy(pipe, test)
    sc1 = adversary.select_attack_scenario1(eval_suite, auth, 0.5, attackers, noise, rng, draws=20)
    batch1 = adversary.adversarial_batch(eval_suite[sc1.movement_index], attackers, noise, rng, 20)
    tpr1 = adversary.tpr_from_scores(pipe.score_batch(batch1), 0.5)
    sc2 = adversary.select_attack_scenario2(eval_suite, pipe, attackers, noise, rng, draws=20)
    batch2 = adversary.adversarial_batch(eval_suite[sc2.movement_index], attackers, noise, rng, 20)
    tpr2 = adversary.tpr_from_scores(pipe.score_batch(batch2), 0.5)
    rows.append((name, acc, tpr1, tpr2, sc1.movement_index, sc2.movement_index, sc2.eligible))
    print(f"{name:9s} acc={acc:.2f}  scenario1: attack on {sc1.movement_index} -> TPR {tpr1:.2f}  "
          f"scenario2: attack on {sc2.movement_index} (eligible {sc2.eligible}) -> TPR {tpr2:.2f}")

###############################################################################
# The whole point in one picture: masking out the attacked movement
# neutralizes the scenario-1 attack; scenario 2 must target selected
# movements, which are the hard-to-replicate ones.

fig, ax = plt.subplots(figsize=(6, 3.5))
width = 0.35
for i, (name, acc, tpr1, tpr2, *_rest) in enumerate(rows):
    ax.bar(np.arange(3) + i * width, [acc, tpr1, tpr2], width, label=name)
ax.set_xticks(np.arange(3) + width / 2)
ax.set_xticklabels(["accuracy", "TPR scenario 1", "TPR scenario 2"])
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "masked_defense.png", dpi=120)
print(f"wrote {OUT / 'masked_defense.png'}")

###############################################################################
# Beta selection: among candidates that keep 95% of the basic selector's
# validation accuracy, take the one with the best adversarial TPR.

candidates = [
    selector.BetaCandidate(beta=0.1, accuracy=0.94, adversarial_tpr=0.45),
    selector.BetaCandidate(beta=1.0, accuracy=0.92, adversarial_tpr=0.70),
    selector.BetaCandidate(beta=10.0, accuracy=0.71, adversarial_tpr=0.85),
]
beta, flagged = selector.choose_beta(candidates, basic_accuracy=0.95)
print(f"choose_beta -> beta={beta} (flagged={flagged})")
