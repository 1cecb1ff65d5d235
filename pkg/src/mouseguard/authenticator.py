"""Training and inference for the behavioral authenticator.

The authenticator is a two-class sequence classifier over a whole trial;
class 0 is the valid user.  Training balances the single valid user against
the pooled invalid users by re-subsampling the invalid side every epoch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import data_synth
from .data_synth import Corpus, DatasetSplit, Trial, VALID
from .nets import AuthenticatorNet, channel_stats
from .seeding import derive_seed, seed_torch


@dataclass(frozen=True)
class AuthTrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 150
    batch_size: int = 32
    seed: int = 0
    scale: str = "desk"
    dropout: float = 0.1
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.scale not in ("desk", "paper"):
            raise ValueError("scale must be 'desk' or 'paper'")


@dataclass(frozen=True)
class DecisionThreshold:
    """Acceptance cutoff on the valid-user probability; fixed after calibration."""

    tau: float
    mode: str = "default"

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")


@dataclass
class AuthenticatorModel:
    net: AuthenticatorNet
    config: AuthTrainConfig
    n_movements: int
    movement_length: int
    training_curve: list[dict] = field(default_factory=list)
    data_hash: str = ""

    @property
    def n_features(self) -> int:
        return 2 * self.n_movements * self.movement_length

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim == 2:
            batch = batch[None]
        if batch.shape[1] != 2 or batch.shape[2] != self.n_movements * self.movement_length:
            raise ValueError(
                "batch shape %s does not match model input (2, %d)"
                % (batch.shape[1:], self.n_movements * self.movement_length)
            )
        return batch

    def logits(self, batch: np.ndarray) -> np.ndarray:
        self.net.eval()
        with torch.no_grad():
            return self.net(torch.from_numpy(self._check_batch(batch))).numpy()

    def score_batch(self, batch: np.ndarray) -> np.ndarray:
        """Valid-user probability for each trial in a (B, 2, M) batch."""
        logits = torch.from_numpy(self.logits(batch))
        return torch.softmax(logits, dim=1)[:, 0].numpy().astype(float)

    def probabilities(self, trial: Trial) -> np.ndarray:
        """(valid, invalid) probabilities for one trial."""
        logits = torch.from_numpy(self.logits(trial.flat()[None]))
        return torch.softmax(logits, dim=1)[0].numpy().astype(float)


def score(model: AuthenticatorModel, trial: Trial) -> float:
    """Probability that ``trial`` comes from the valid user."""
    return float(model.score_batch(trial.flat()[None])[0])


def _split_arrays(trials: Sequence[Trial]) -> tuple[np.ndarray, np.ndarray]:
    X = data_synth.trials_to_batch(trials).astype(np.float32)
    y = np.array([0 if t.label == VALID else 1 for t in trials], dtype=np.int64)
    return X, y


def _data_hash(corpus: Corpus, split: DatasetSplit) -> str:
    text = "%s|%s|%s" % (corpus.seed, split.valid_user, split.train_indices)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def train_authenticator(
    corpus: Corpus,
    split: DatasetSplit,
    config: AuthTrainConfig,
    *,
    extra_invalid: Sequence[Trial] = (),
    temperature: float = 1.0,
    soft_target_fn: Callable[[torch.Tensor], torch.Tensor] | None = None,
) -> AuthenticatorModel:
    """Train a fresh authenticator on the split's train partition.

    ``extra_invalid`` joins the invalid pool (used for adversarial training);
    ``temperature`` softens the softmax during training and
    ``soft_target_fn`` replaces hard labels with caller-supplied target
    distributions (both used by defensive distillation).
    """
    train = data_synth.split_trials(corpus, split, "train")
    X_valid = np.stack([t.flat() for t in train if t.label == VALID]).astype(np.float32)
    invalid = [t for t in train if t.label != VALID] + list(extra_invalid)
    if len(X_valid) == 0 or len(invalid) == 0:
        raise ValueError("training partition must contain both classes")
    X_invalid = np.stack([t.flat() for t in invalid]).astype(np.float32)

    seed_torch(derive_seed(config.seed, "auth-init"))
    net = AuthenticatorNet(scale=config.scale, dropout=config.dropout)
    net.set_normalization(*channel_stats(np.concatenate([X_valid, X_invalid])))
    model = AuthenticatorModel(
        net=net,
        config=config,
        n_movements=corpus.pattern.n_movements,
        movement_length=corpus.pattern.movement_length,
        data_hash=_data_hash(corpus, split),
    )

    val = data_synth.split_trials(corpus, split, "val")
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(derive_seed(config.seed, "auth-batches"))
    n_valid = len(X_valid)

    for epoch in range(config.epochs):
        pick = rng.choice(len(X_invalid), size=n_valid, replace=len(X_invalid) < n_valid)
        X = np.concatenate([X_valid, X_invalid[pick]])
        y = np.concatenate([np.zeros(n_valid, np.int64), np.ones(n_valid, np.int64)])
        order = rng.permutation(len(X))
        X, y = X[order], y[order]

        net.train()
        losses = []
        for start in range(0, len(X), config.batch_size):
            xb = torch.from_numpy(X[start : start + config.batch_size])
            yb = torch.from_numpy(y[start : start + config.batch_size])
            logits = net(xb) / temperature
            if soft_target_fn is None:
                loss = F.cross_entropy(logits, yb)
            else:
                with torch.no_grad():
                    target = soft_target_fn(xb, yb)
                loss = -(target * F.log_softmax(logits, dim=1)).sum(dim=1).mean()
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
            optimizer.step()
            losses.append(float(loss.detach()))
        record = {"epoch": epoch, "loss": float(np.mean(losses))}
        if val:
            record["val_balanced_accuracy"] = balanced_accuracy(model, 0.5, val)
        model.training_curve.append(record)

    net.eval()
    return model


def calibrate_threshold(
    model: AuthenticatorModel,
    corpus: Corpus,
    split: DatasetSplit,
    mode: str = "default",
) -> DecisionThreshold:
    """Default mode returns tau = 0.5; 'eer' equalizes FPR and FNR on train."""
    if mode == "default":
        return DecisionThreshold(tau=0.5, mode="default")
    if mode != "eer":
        raise ValueError(f"unknown calibration mode {mode!r}")
    train = data_synth.split_trials(corpus, split, "train")
    scores = model.score_batch(data_synth.trials_to_batch(train))
    is_valid = np.array([t.label == VALID for t in train])
    candidates = np.unique(scores)
    best_tau, best_gap = 0.5, np.inf
    for tau in candidates:
        fnr = float(np.mean(scores[is_valid] < tau))
        fpr = float(np.mean(scores[~is_valid] >= tau))
        diff = fpr - fnr
        if abs(diff) < best_gap:
            best_tau, best_gap = float(tau), abs(diff)
        if diff <= 0:  # diff is nonincreasing in tau: first crossing is the EER
            best_tau = float(tau)
            break
    return DecisionThreshold(tau=float(np.clip(best_tau, 1e-6, 1 - 1e-6)), mode="eer")


def decisions(model: AuthenticatorModel, tau: float | DecisionThreshold, batch: np.ndarray) -> np.ndarray:
    """Boolean accept decisions (True = classified valid) for a batch."""
    tau = tau.tau if isinstance(tau, DecisionThreshold) else float(tau)
    return model.score_batch(batch) >= tau


def accuracy(
    model: AuthenticatorModel, tau: float | DecisionThreshold, trials: Sequence[Trial]
) -> float:
    """Fraction of labeled trials classified correctly at threshold tau."""
    if len(trials) == 0:
        raise ValueError("cannot compute accuracy of an empty trial set")
    if any(t.label is None for t in trials):
        raise ValueError("trials must be labeled")
    accept = decisions(model, tau, data_synth.trials_to_batch(trials))
    is_valid = np.array([t.label == VALID for t in trials])
    return float(np.mean(accept == is_valid))


def balanced_accuracy(
    model: AuthenticatorModel, tau: float | DecisionThreshold, trials: Sequence[Trial]
) -> float:
    """Mean of the per-class accuracies (insensitive to class imbalance)."""
    accept = decisions(model, tau, data_synth.trials_to_batch(trials))
    is_valid = np.array([t.label == VALID for t in trials])
    accs = []
    for cls in (True, False):
        if np.any(is_valid == cls):
            accs.append(np.mean(accept[is_valid == cls] == cls))
    return float(np.mean(accs))


def score_input_gradients(model: AuthenticatorModel, batch: np.ndarray) -> np.ndarray:
    """Gradient of the valid-class probability w.r.t. each input value."""
    x = torch.from_numpy(model._check_batch(batch)).requires_grad_(True)
    model.net.eval()
    probs = torch.softmax(model.net(x), dim=1)[:, 0]
    probs.sum().backward()
    return x.grad.numpy().astype(float)
