"""Comparison defenses: adversarial training and defensive distillation.

Both retrain the standard authenticator architecture and return models that
slot into the same evaluation machinery as the plain authenticator.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import adversary, data_synth
from .authenticator import AuthenticatorModel, AuthTrainConfig, train_authenticator
from .data_synth import Corpus, DatasetSplit, Trial, VALID
from .physical_noise import NoiseModel
from .seeding import derive_seed


@dataclass(frozen=True)
class DistillationConfig:
    temperature: float = 10.0
    epochs: int = 150
    seed: int = 0
    hard_label_weight: float = 0.0

    def __post_init__(self):
        if self.temperature < 1:
            raise ValueError("distillation temperature must be >= 1")
        if not 0.0 <= self.hard_label_weight <= 1.0:
            raise ValueError("hard label weight must lie in [0, 1]")


@dataclass
class DistillationResult:
    model: AuthenticatorModel  # the student, evaluated at temperature 1
    teacher: AuthenticatorModel


def adversarial_training(
    corpus: Corpus,
    split: DatasetSplit,
    suite: adversary.AttackSuite,
    noise: NoiseModel,
    config: AuthTrainConfig,
    *,
    ratio: float = 1.0,
    bases: Sequence[Trial] | None = None,
) -> AuthenticatorModel:
    """Retrain the authenticator on a train set augmented with noised
    adversarial samples labeled invalid.

    ``ratio`` scales the number of injected samples relative to the valid
    user's training trials; movement indices are cycled so the augmentation
    covers all generators.
    """
    if suite.n_movements == 0:
        raise ValueError("attack suite is empty")
    if ratio < 0:
        raise ValueError("augmentation ratio must be >= 0")
    train = data_synth.split_trials(corpus, split, "train")
    n_valid = sum(1 for t in train if t.label == VALID)
    n_aug = int(round(ratio * n_valid))
    if n_aug == 0:
        return train_authenticator(corpus, split, config)

    if bases is None:
        bases = [t for t in train if t.label != VALID]
    bases = list(bases)
    rng = np.random.default_rng(derive_seed(config.seed, "adv-augment"))
    extra = []
    for i in range(n_aug):
        gen = suite[i % suite.n_movements]
        base = bases[int(rng.integers(0, len(bases)))]
        extra.append(adversary.generate_adversarial_sample(gen, base, noise, rng).trial())
    return train_authenticator(corpus, split, config, extra_invalid=extra)


def defensive_distillation(
    corpus: Corpus,
    split: DatasetSplit,
    auth_config: AuthTrainConfig,
    config: DistillationConfig,
) -> DistillationResult:
    """Two-round distillation: a teacher trained with a softened softmax,
    then a student trained on the teacher's temperature-T output scores.

    The student is a drop-in authenticator; its inference runs at
    temperature 1, which is where the gradient-flattening effect shows.
    """
    T = config.temperature
    teacher_cfg = dataclasses.replace(
        auth_config, epochs=config.epochs, seed=derive_seed(config.seed, "teacher")
    )
    teacher = train_authenticator(corpus, split, teacher_cfg, temperature=T)

    def soft_targets(xb: torch.Tensor, yb: torch.Tensor) -> torch.Tensor:
        teacher.net.eval()
        soft = torch.softmax(teacher.net(xb) / T, dim=1)
        if config.hard_label_weight > 0:
            hard = torch.nn.functional.one_hot(yb, num_classes=2).to(soft.dtype)
            soft = (1 - config.hard_label_weight) * soft + config.hard_label_weight * hard
        return soft

    student_cfg = dataclasses.replace(
        auth_config, epochs=config.epochs, seed=derive_seed(config.seed, "student")
    )
    student = train_authenticator(
        corpus, split, student_cfg, temperature=T, soft_target_fn=soft_targets
    )
    return DistillationResult(model=student, teacher=teacher)
