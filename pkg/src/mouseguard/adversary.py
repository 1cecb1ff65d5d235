"""White-box attack models and the two attacking scenarios.

One generator per movement index is trained against a frozen authenticator:
it emits a replacement movement that, after replication noise, drives the
composite trial's valid-user probability up.  Scenario 1 picks the movement
whose generator achieves the lowest rejection rate against the bare
authenticator; scenario 2 restricts the choice to movements the defender's
selector is guaranteed to select, evaluated against the composed defense.
"""

from __future__ import annotations

import dataclasses
import json
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import data_synth
from .authenticator import AuthenticatorModel, DecisionThreshold
from .data_synth import INVALID, Trial
from .nets import GeneratorNet, channel_stats, torch_mean_speed
from .physical_noise import NoiseModel
from .seeding import derive_seed, seed_torch


@dataclass(frozen=True)
class AttackTrainConfig:
    learning_rate: float = 1e-4
    steps: int = 300
    batch_size: int = 16
    seed: int = 0


@dataclass
class AttackGenerator:
    movement_index: int
    net: GeneratorNet
    n_movements: int
    movement_length: int
    config: AttackTrainConfig
    training_curve: list[float] = dataclasses.field(default_factory=list)

    def ideal_batch(self, batch: np.ndarray) -> np.ndarray:
        """Ideal adversarial movements (B, 2, L) for base trials (B, 2, M)."""
        self.net.eval()
        with torch.no_grad():
            out = self.net(torch.from_numpy(np.asarray(batch, dtype=np.float32)))
        return out.numpy().astype(float)

    def ideal_movement(self, base: Trial) -> np.ndarray:
        """Ideal adversarial movement for one base trial, as an (L, 2) block."""
        return self.ideal_batch(base.flat()[None])[0].T.copy()


@dataclass
class AttackSuite:
    generators: tuple[AttackGenerator, ...]

    def __post_init__(self):
        indices = [g.movement_index for g in self.generators]
        if sorted(indices) != list(range(len(self.generators))):
            raise ValueError("suite must hold one generator per movement index")
        self.generators = tuple(sorted(self.generators, key=lambda g: g.movement_index))

    @property
    def n_movements(self) -> int:
        return len(self.generators)

    def __getitem__(self, j: int) -> AttackGenerator:
        return self.generators[j]


@dataclass
class AdversarialSample:
    """An attacker trial with exactly one movement replaced."""

    base: Trial
    movement_index: int
    ideal: np.ndarray  # (L, 2) generated movement before noise
    realized: np.ndarray  # (L, 2) after replication noise
    sigma: float
    label: str = INVALID

    def trial(self) -> Trial:
        movements = self.base.movements.copy()
        movements[self.movement_index] = self.realized
        return Trial(
            subject_id=self.base.subject_id,
            trial_id=self.base.trial_id,
            movements=movements,
            label=self.label,
        )


@contextmanager
def _frozen(net: torch.nn.Module):
    states = [p.requires_grad for p in net.parameters()]
    for p in net.parameters():
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, s in zip(net.parameters(), states):
            p.requires_grad_(s)


def _replace_block(batch: torch.Tensor, block: torch.Tensor, j: int, length: int) -> torch.Tensor:
    out = batch.clone()
    out[:, :, j * length : (j + 1) * length] = block
    return out


def train_attack_generator(
    auth: AuthenticatorModel,
    base_trials: Sequence[Trial],
    movement_index: int,
    noise: NoiseModel,
    config: AttackTrainConfig,
) -> AttackGenerator:
    """Fit one generator against a frozen authenticator.

    Each step draws fresh replication noise on the generated movement before
    scoring, so the generator is pushed toward regions that stay accepted
    under imperfect physical replication.
    """
    if len(base_trials) == 0:
        raise ValueError("need at least one base trial")
    if not 0 <= movement_index < auth.n_movements:
        raise ValueError("movement index out of range")
    length = auth.movement_length
    X_base = data_synth.trials_to_batch(base_trials).astype(np.float32)

    seed_torch(derive_seed(config.seed, "attack-init", movement_index))
    net = GeneratorNet(in_features=auth.n_features, movement_length=length)
    net.set_normalization(*channel_stats(X_base))
    gen = AttackGenerator(
        movement_index=movement_index,
        net=net,
        n_movements=auth.n_movements,
        movement_length=length,
        config=config,
    )
    rng = np.random.default_rng(derive_seed(config.seed, "attack-batches", movement_index))
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    sigma_scale = noise.sigma_per_speed

    auth.net.eval()
    with _frozen(auth.net):
        for _ in range(config.steps):
            pick = rng.integers(0, len(X_base), size=min(config.batch_size, len(X_base)))
            xb = torch.from_numpy(X_base[pick])
            ideal = net(xb)
            sigma = torch_mean_speed(ideal, noise.speed_convention) * sigma_scale
            eps = torch.from_numpy(
                rng.standard_normal(ideal.shape).astype(np.float32)
            )
            realized = ideal + sigma[:, None, None] * eps
            composite = _replace_block(xb, realized, movement_index, length)
            logits = auth.net(composite)
            loss = F.cross_entropy(logits, torch.zeros(len(xb), dtype=torch.long))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            gen.training_curve.append(float(loss.detach()))
    net.eval()
    return gen


def train_attack_suite(
    auth: AuthenticatorModel,
    base_trials: Sequence[Trial],
    noise: NoiseModel,
    config: AttackTrainConfig,
) -> AttackSuite:
    """One generator per movement, all against the same frozen authenticator."""
    gens = []
    for j in range(auth.n_movements):
        cfg = dataclasses.replace(config, seed=derive_seed(config.seed, "suite", j))
        gens.append(train_attack_generator(auth, base_trials, j, noise, cfg))
    return AttackSuite(generators=tuple(gens))


def generate_adversarial_sample(
    gen: AttackGenerator,
    base: Trial,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> AdversarialSample:
    """Replace one movement of ``base`` with the generator output plus noise."""
    if not 0 <= gen.movement_index < base.movements.shape[0]:
        raise IndexError("movement index out of range for this trial")
    ideal = gen.ideal_movement(base)
    if noise.practice_factor == 0.0:
        sigma, realized = 0.0, ideal.copy()
    else:
        sigma = noise.sigma_for_movement(ideal)
        realized = ideal + rng.normal(0.0, sigma, size=ideal.shape)
    return AdversarialSample(
        base=base,
        movement_index=gen.movement_index,
        ideal=ideal,
        realized=realized,
        sigma=sigma,
    )


def adversarial_batch(
    gen: AttackGenerator,
    bases: Sequence[Trial],
    noise: NoiseModel,
    rng: np.random.Generator,
    draws: int = 1,
) -> np.ndarray:
    """(len(bases)*draws, 2, M) composites with fresh noise per draw."""
    X_base = data_synth.trials_to_batch(bases)
    ideal = gen.ideal_batch(X_base)  # (B, 2, L)
    speeds = np.sqrt(np.maximum(np.sum(ideal**2, axis=1), 1e-12)).mean(axis=1)
    if noise.speed_convention == "per_coordinate":
        speeds = np.abs(ideal).mean(axis=(1, 2))
    sigmas = speeds * noise.sigma_per_speed
    j, length = gen.movement_index, gen.movement_length
    out = np.repeat(X_base, draws, axis=0)
    ideal_rep = np.repeat(ideal, draws, axis=0)
    sig_rep = np.repeat(sigmas, draws)
    noise_draws = rng.standard_normal(ideal_rep.shape) * sig_rep[:, None, None]
    out[:, :, j * length : (j + 1) * length] = ideal_rep + noise_draws
    return out


def tpr_from_scores(scores: np.ndarray, tau: float | DecisionThreshold) -> float:
    """Fraction of adversarial scores below the acceptance threshold."""
    if len(scores) == 0:
        raise ValueError("cannot compute a true positive rate over no samples")
    tau = tau.tau if isinstance(tau, DecisionThreshold) else float(tau)
    return float(np.mean(np.asarray(scores) < tau))


def tpr_under_attack(
    scorer, tau: float | DecisionThreshold, samples: Sequence[AdversarialSample]
) -> float:
    """Fraction of adversarial samples rejected (classified invalid) at tau."""
    if len(samples) == 0:
        raise ValueError("cannot compute a true positive rate over no samples")
    batch = np.stack([s.trial().flat() for s in samples])
    return tpr_from_scores(scorer.score_batch(batch), tau)


@dataclass(frozen=True)
class AttackSelection:
    movement_index: int
    tpr_by_movement: tuple[float, ...]
    eligible: tuple[int, ...]
    fallback: bool = False


def select_attack_scenario1(
    suite: AttackSuite,
    auth: AuthenticatorModel,
    tau: float | DecisionThreshold,
    attacker_trials: Sequence[Trial],
    noise: NoiseModel,
    rng: np.random.Generator,
    draws: int = 100,
) -> AttackSelection:
    """Pick the movement whose attack gets the lowest TPR from the bare
    authenticator; ties go to the lowest index."""
    tprs = []
    for j in range(suite.n_movements):
        batch = adversarial_batch(suite[j], attacker_trials, noise, rng, draws)
        tprs.append(tpr_from_scores(auth.score_batch(batch), tau))
    j_star = int(np.argmin(tprs))
    return AttackSelection(
        movement_index=j_star,
        tpr_by_movement=tuple(tprs),
        eligible=tuple(range(suite.n_movements)),
    )


def select_attack_scenario2(
    suite: AttackSuite,
    defense,
    attacker_trials: Sequence[Trial],
    noise: NoiseModel,
    rng: np.random.Generator,
    draws: int = 100,
) -> AttackSelection:
    """Scenario 2: the feature selector is also visible to the attacker.

    A movement is eligible only if the defense's mask selected it on every
    evaluated adversarial sample, so the replacement is guaranteed to reach
    the authenticator.  Among eligible movements the one with the lowest TPR
    against the composed defense wins; with no eligible movement the choice
    falls back to the scenario-1 rule and the selection is flagged.
    """
    tprs, eligible = [], []
    for j in range(suite.n_movements):
        batch = adversarial_batch(suite[j], attacker_trials, noise, rng, draws)
        masks = defense.mask_batch(batch)
        if np.all(masks[:, j] == 1):
            eligible.append(j)
        tprs.append(tpr_from_scores(defense.score_batch(batch), defense.tau))
    if eligible:
        j_star = min(eligible, key=lambda j: (tprs[j], j))
        return AttackSelection(
            movement_index=j_star, tpr_by_movement=tuple(tprs), eligible=tuple(eligible)
        )
    sc1 = select_attack_scenario1(
        suite, defense.auth, defense.tau, attacker_trials, noise, rng.spawn(1)[0], draws
    )
    return AttackSelection(
        movement_index=sc1.movement_index,
        tpr_by_movement=tuple(tprs),
        eligible=(),
        fallback=True,
    )


# ---------------------------------------------------------------------------
# sample dumps (corpus format plus provenance)


def save_adversarial_samples(path, samples: Sequence[AdversarialSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        first = samples[0].trial() if samples else None
        manifest = {
            "record": "manifest",
            "version": 1,
            "units": "px/s",
            "kind": "adversarial",
            "n_samples": len(samples),
            "n_movements": None if first is None else first.movements.shape[0],
            "movement_length": None if first is None else first.movements.shape[1],
        }
        fh.write(json.dumps(manifest) + "\n")
        for s in samples:
            rec = {
                "record": "adversarial",
                "subject_id": s.base.subject_id,
                "trial_id": s.base.trial_id,
                "movement_index": s.movement_index,
                "sigma": s.sigma,
                "base_label": s.base.label,
                "ideal": s.ideal.tolist(),
                "base_movement": s.base.movements[s.movement_index].tolist(),
                "movements": s.trial().movements.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_adversarial_samples(path) -> list[AdversarialSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for line_no, text in enumerate(lines[1:], start=2):
        rec = json.loads(text)
        if rec.get("record") != "adversarial":
            raise data_synth.CorpusFormatError("expected an adversarial record", line_no)
        movements = np.asarray(rec["movements"], dtype=float)
        j = int(rec["movement_index"])
        base_movements = movements.copy()
        base_movements[j] = np.asarray(rec["base_movement"], dtype=float)
        base = Trial(
            subject_id=rec["subject_id"],
            trial_id=int(rec["trial_id"]),
            movements=base_movements,
            label=rec.get("base_label"),
        )
        samples.append(
            AdversarialSample(
                base=base,
                movement_index=j,
                ideal=np.asarray(rec["ideal"], dtype=float),
                realized=movements[j].copy(),
                sigma=float(rec["sigma"]),
            )
        )
    return samples
