"""Instance-wise movement selection and the composed masked authenticator.

The feature selector scores the movements of a trial and keeps the top
``n_selected``; non-selected movements are replaced by background values
drawn from the training distribution before the authenticator sees the
trial.  Training optimizes three cross-entropies per step:

* ``l1`` - the authenticator on a reconstruction of the selected composite
  (should classify well: selected movements carry the signal);
* ``l2`` - the authenticator on a reconstruction of the complement
  (subtracted: whatever was left behind should NOT classify);
* ``l3`` - the authenticator on masked adversarial samples against their
  invalid ground truth (weighted by beta; steers the mask away from
  movements an attacker can replicate).

Selection is discrete, so training uses a temperature-annealed relaxation
with straight-through hard masks on the forward path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F_

from . import data_synth
from .adversary import AttackSuite, _frozen
from .authenticator import AuthenticatorModel
from .data_synth import Trial, VALID
from .nets import ReconstructionNet, SelectorNet, channel_stats, expand_mask, topk_mask
from .physical_noise import NoiseModel
from .seeding import derive_seed, seed_torch


@dataclass(frozen=True)
class SelectorTrainConfig:
    n_selected: int
    steps: int = 400
    batch_size: int = 32
    lr_selector: float = 5e-4
    lr_reconstruction: float = 1e-4
    alpha: float | None = None  # defaults to n_selected / n_movements
    beta: float = 0.0
    seed: int = 0
    scale: str = "desk"
    temperature_start: float = 2.0
    temperature_end: float = 0.05

    def __post_init__(self):
        if self.n_selected < 1:
            raise ValueError("must select at least one movement")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def alpha_for(self, n_movements: int) -> float:
        return self.alpha if self.alpha is not None else self.n_selected / n_movements

    def temperature_at(self, step: int) -> float:
        if self.steps <= 1:
            return self.temperature_end
        frac = step / (self.steps - 1)
        return float(
            self.temperature_start
            * (self.temperature_end / self.temperature_start) ** frac
        )


@dataclass
class SelectorBundle:
    selector: SelectorNet
    g1: ReconstructionNet
    g2: ReconstructionNet
    config: SelectorTrainConfig
    n_movements: int
    movement_length: int
    training_curve: list[dict] = field(default_factory=list)

    @property
    def n_selected(self) -> int:
        return self.config.n_selected

    @property
    def chunk_size(self) -> int:
        """Features per selected movement (both velocity channels)."""
        return 2 * self.movement_length

    def scores_batch(self, batch: np.ndarray) -> np.ndarray:
        self.selector.eval()
        with torch.no_grad():
            out = self.selector(torch.from_numpy(np.asarray(batch, dtype=np.float32)))
        return out.numpy().astype(float)


@dataclass(frozen=True)
class LossBundle:
    l1: float
    l2: float
    l3: float
    alpha: float
    beta: float

    @property
    def combined(self) -> float:
        return (1.0 - self.alpha) * self.l1 - self.alpha * self.l2 + self.beta * self.l3


# ---------------------------------------------------------------------------
# masks and bottleneck


def hard_mask_from_scores(scores: np.ndarray, n_selected: int) -> np.ndarray:
    """Top-k hot mask per row; ties broken toward the lowest index."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if n_selected >= scores.shape[1]:
        return np.ones_like(scores, dtype=np.int64)
    order = np.argsort(-scores, axis=1, kind="stable")[:, :n_selected]
    mask = np.zeros(scores.shape, dtype=np.int64)
    np.put_along_axis(mask, order, 1, axis=1)
    return mask


def select_mask(bundle: SelectorBundle, trial: Trial) -> np.ndarray:
    """Hard k-hot mask over movements for one trial (inference mode)."""
    scores = bundle.scores_batch(trial.flat()[None])[0]
    return hard_mask_from_scores(scores, bundle.n_selected)[0]


def sample_background(
    train_trials: Sequence[Trial] | np.ndarray,
    rng: np.random.Generator,
    n: int | None = None,
) -> np.ndarray:
    """Background reference values, drawn independently per feature.

    Every component is sampled from that feature's empirical distribution
    over the training trials.  Returns ``(2, M)`` or ``(n, 2, M)``.
    """
    X = (
        np.asarray(train_trials, dtype=float)
        if isinstance(train_trials, np.ndarray)
        else data_synth.trials_to_batch(train_trials)
    )
    if X.ndim != 3 or len(X) == 0:
        raise ValueError("need a nonempty (B, 2, M) training array")
    shape = (2, X.shape[2]) if n is None else (n, 2, X.shape[2])
    idx = rng.integers(0, len(X), size=shape)
    ch = np.arange(2).reshape((2, 1) if n is None else (1, 2, 1))
    t = np.arange(X.shape[2]).reshape((1, -1) if n is None else (1, 1, -1))
    return X[idx, ch, t]


def apply_bottleneck_flat(
    X: np.ndarray, masks: np.ndarray, background: np.ndarray
) -> np.ndarray:
    """Composites for flat batches: selected blocks kept, others replaced."""
    X = np.asarray(X, dtype=float)
    masks = np.asarray(masks)
    length = X.shape[-1] // masks.shape[-1]
    expanded = np.expand_dims(np.repeat(masks, length, axis=-1), axis=-2)
    return X * expanded + np.asarray(background, dtype=float) * (1 - expanded)


def apply_bottleneck(trial: Trial, mask: np.ndarray, background: np.ndarray) -> Trial:
    """Replace the non-selected movements of a trial with background blocks."""
    mask = np.asarray(mask)
    if mask.shape != (trial.movements.shape[0],):
        raise ValueError("mask length must equal the number of movements")
    bg = (
        background.movements
        if isinstance(background, Trial)
        else data_synth.flat_to_movements(np.asarray(background), trial.movements.shape[0])
    )
    if bg.shape != trial.movements.shape:
        raise ValueError("background shape must match the trial")
    movements = np.where(mask[:, None, None].astype(bool), trial.movements, bg)
    return Trial(
        subject_id=trial.subject_id,
        trial_id=trial.trial_id,
        movements=movements,
        label=trial.label,
    )


# ---------------------------------------------------------------------------
# losses


def _losses_torch(
    f_net: torch.nn.Module,
    g1: torch.nn.Module,
    g2: torch.nn.Module,
    auth_net: torch.nn.Module,
    xb: torch.Tensor,
    yb: torch.Tensor,
    eb: torch.Tensor,
    n_selected: int,
    movement_length: int,
    temperature: float,
    mask_mode: str,
    adv_xb: torch.Tensor | None = None,
    adv_eb: torch.Tensor | None = None,
):
    """The three training cross-entropies as torch scalars (graph attached)."""
    mask = topk_mask(f_net(xb), n_selected, temperature, mask_mode)
    m = expand_mask(mask, movement_length)
    selected = xb * m + eb * (1.0 - m)
    complement = xb * (1.0 - m) + eb * m
    l1 = F_.cross_entropy(auth_net(g1(selected)), yb)
    l2 = F_.cross_entropy(auth_net(g2(complement)), yb)
    if adv_xb is None:
        l3 = torch.zeros((), dtype=l1.dtype)
    else:
        adv_mask = topk_mask(f_net(adv_xb), n_selected, temperature, mask_mode)
        am = expand_mask(adv_mask, movement_length)
        adv_composite = adv_xb * am + adv_eb * (1.0 - am)
        labels = torch.ones(len(adv_xb), dtype=torch.long)
        l3 = F_.cross_entropy(auth_net(adv_composite), labels)
    return l1, l2, l3


def selector_losses(
    bundle: SelectorBundle,
    auth: AuthenticatorModel,
    X: np.ndarray,
    y: np.ndarray,
    background: np.ndarray,
    adv_X: np.ndarray | None = None,
    adv_background: np.ndarray | None = None,
    temperature: float = 0.5,
    mask_mode: str = "st",
) -> LossBundle:
    """Evaluate the loss terms on a batch without updating anything."""
    to = lambda a: torch.from_numpy(np.asarray(a, dtype=np.float32))
    auth.net.eval()
    bundle.selector.eval()
    with torch.no_grad():
        l1, l2, l3 = _losses_torch(
            bundle.selector,
            bundle.g1,
            bundle.g2,
            auth.net,
            to(X),
            torch.from_numpy(np.asarray(y, dtype=np.int64)),
            to(background),
            bundle.n_selected,
            bundle.movement_length,
            temperature,
            mask_mode,
            None if adv_X is None else to(adv_X),
            None if adv_background is None else to(adv_background),
        )
    alpha = bundle.config.alpha_for(bundle.n_movements)
    return LossBundle(
        l1=float(l1), l2=float(l2), l3=float(l3), alpha=alpha, beta=bundle.config.beta
    )


# ---------------------------------------------------------------------------
# training


def _precompute_attack_pool(
    suite: AttackSuite, bases: Sequence[Trial], noise: NoiseModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ideal movements and sigmas for every (movement, base) pair.

    Generators are frozen during selector training, so their outputs can be
    cached; only the replication noise is redrawn per use.
    """
    X_bases = data_synth.trials_to_batch(bases).astype(np.float32)
    ideals = np.stack([suite[j].ideal_batch(X_bases) for j in range(suite.n_movements)])
    speeds = np.sqrt(np.maximum((ideals**2).sum(axis=2), 1e-12)).mean(axis=-1)
    if noise.speed_convention == "per_coordinate":
        speeds = np.abs(ideals).mean(axis=(2, 3))
    return X_bases, ideals, speeds * noise.sigma_per_speed


def _train(
    auth: AuthenticatorModel,
    corpus: data_synth.Corpus,
    split: data_synth.DatasetSplit,
    config: SelectorTrainConfig,
    attack_ctx: tuple[AttackSuite, NoiseModel, Sequence[Trial]] | None,
) -> SelectorBundle:
    n_mov = corpus.pattern.n_movements
    length = corpus.pattern.movement_length
    train = data_synth.split_trials(corpus, split, "train")
    X_all = data_synth.trials_to_batch(train).astype(np.float32)
    y_all = np.array([0 if t.label == VALID else 1 for t in train], dtype=np.int64)
    valid_idx = np.flatnonzero(y_all == 0)
    invalid_idx = np.flatnonzero(y_all == 1)
    if len(valid_idx) == 0 or len(invalid_idx) == 0:
        raise ValueError("training partition must contain both classes")

    seed_torch(derive_seed(config.seed, "selector-init"))
    bundle = SelectorBundle(
        selector=SelectorNet(n_mov, scale=config.scale),
        g1=ReconstructionNet(corpus.pattern.n_features),
        g2=ReconstructionNet(corpus.pattern.n_features),
        config=config,
        n_movements=n_mov,
        movement_length=length,
    )
    stats = channel_stats(X_all)
    for net in (bundle.selector, bundle.g1, bundle.g2):
        net.set_normalization(*stats)
    opt_f = torch.optim.Adam(bundle.selector.parameters(), lr=config.lr_selector)
    opt_g1 = torch.optim.Adam(bundle.g1.parameters(), lr=config.lr_reconstruction)
    opt_g2 = torch.optim.Adam(bundle.g2.parameters(), lr=config.lr_reconstruction)

    # the adversarial branch draws from its own stream so that beta == 0
    # reproduces the basic selector bit for bit
    rng = np.random.default_rng(derive_seed(config.seed, "selector-batches"))
    rng_adv = np.random.default_rng(derive_seed(config.seed, "selector-adv"))
    if attack_ctx is not None:
        suite, noise, bases = attack_ctx
        X_bases, ideals, sigmas = _precompute_attack_pool(suite, bases, noise)

    alpha, beta = config.alpha_for(n_mov), config.beta
    half = max(1, config.batch_size // 2)
    auth.net.eval()
    bundle.selector.train()
    with _frozen(auth.net):
        for step in range(config.steps):
            temp = config.temperature_at(step)
            pick = np.concatenate(
                [
                    rng.choice(valid_idx, size=half, replace=len(valid_idx) < half),
                    rng.choice(invalid_idx, size=half, replace=len(invalid_idx) < half),
                ]
            )
            xb = torch.from_numpy(X_all[pick])
            yb = torch.from_numpy(y_all[pick])
            eb = torch.from_numpy(
                sample_background(X_all, rng, n=len(pick)).astype(np.float32)
            )

            adv_xb = adv_eb = None
            if attack_ctx is not None:
                b = rng_adv.integers(0, len(X_bases), size=config.batch_size)
                js = rng_adv.integers(0, n_mov, size=config.batch_size)
                adv = X_bases[b].copy()
                eps = rng_adv.standard_normal((config.batch_size, 2, length)).astype(
                    np.float32
                )
                blocks = ideals[js, b] + sigmas[js, b, None, None] * eps
                cols = js[:, None] * length + np.arange(length)[None, :]
                adv[np.arange(len(adv))[:, None, None], np.arange(2)[None, :, None], cols[:, None, :]] = blocks
                adv_xb = torch.from_numpy(adv)
                adv_eb = torch.from_numpy(
                    sample_background(X_all, rng_adv, n=len(adv)).astype(np.float32)
                )

            l1, l2, l3 = _losses_torch(
                bundle.selector,
                bundle.g1,
                bundle.g2,
                auth.net,
                xb,
                yb,
                eb,
                config.n_selected,
                length,
                temp,
                "st",
                adv_xb,
                adv_eb,
            )
            loss_f = (1.0 - alpha) * l1 - alpha * l2 + beta * l3

            f_params = list(bundle.selector.parameters())
            g1_params = list(bundle.g1.parameters())
            g2_params = list(bundle.g2.parameters())
            # a full selection (n_selected == n_movements) detaches F entirely
            grads_f = torch.autograd.grad(
                loss_f, f_params, retain_graph=True, allow_unused=True
            )
            grads_f = [
                g if g is not None else torch.zeros_like(p)
                for p, g in zip(f_params, grads_f)
            ]
            grads_g1 = torch.autograd.grad(l1, g1_params, retain_graph=True)
            grads_g2 = torch.autograd.grad(l2, g2_params)
            for params, grads, opt in (
                (f_params, grads_f, opt_f),
                (g1_params, grads_g1, opt_g1),
                (g2_params, grads_g2, opt_g2),
            ):
                for p, g in zip(params, grads):
                    p.grad = g
                opt.step()
                opt.zero_grad(set_to_none=True)

            bundle.training_curve.append(
                {
                    "step": step,
                    "l1": float(l1.detach()),
                    "l2": float(l2.detach()),
                    "l3": float(l3.detach()),
                }
            )

    bundle.selector.eval()
    return bundle


def train_basic_selector(
    auth: AuthenticatorModel,
    corpus: data_synth.Corpus,
    split: data_synth.DatasetSplit,
    config: SelectorTrainConfig,
) -> SelectorBundle:
    """Selector without the adversarial loop (the l3 term is absent)."""
    return _train(auth, corpus, split, dataclasses.replace(config, beta=0.0), None)


def train_improved_selector(
    auth: AuthenticatorModel,
    corpus: data_synth.Corpus,
    split: data_synth.DatasetSplit,
    suite: AttackSuite,
    noise: NoiseModel,
    config: SelectorTrainConfig,
    attack_bases: Sequence[Trial] | None = None,
) -> SelectorBundle:
    """Full training loop with per-batch adversarial samples.

    ``attack_bases`` are the trials whose movements get replaced when
    building adversarial batches; they default to the invalid-user training
    trials (the defender does not hold real attacker data).
    """
    if config.beta == 0.0:
        return _train(auth, corpus, split, config, None)
    if attack_bases is None:
        attack_bases = [
            t for t in data_synth.split_trials(corpus, split, "train") if t.label != VALID
        ]
    return _train(auth, corpus, split, config, (suite, noise, list(attack_bases)))


# ---------------------------------------------------------------------------
# beta selection


@dataclass(frozen=True)
class BetaCandidate:
    beta: float
    accuracy: float
    adversarial_tpr: float


def choose_beta(
    candidates: Sequence[BetaCandidate],
    basic_accuracy: float,
    floor: float = 0.95,
) -> tuple[float, bool]:
    """Best beta whose composed accuracy keeps >= ``floor`` of the basic
    selector's, maximizing adversarial TPR; ties prefer the smaller beta.

    Returns ``(beta, flagged)``; ``flagged`` means no candidate met the
    accuracy floor and the smallest beta was returned instead.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    eligible = [c for c in candidates if c.accuracy >= floor * basic_accuracy]
    if not eligible:
        return min(c.beta for c in candidates), True
    best = min(eligible, key=lambda c: (-c.adversarial_tpr, c.beta))
    return best.beta, False


# ---------------------------------------------------------------------------
# composed pipeline


@dataclass
class ComposedPipeline:
    """mask -> bottleneck -> authenticator -> threshold.

    Inference feeds the raw bottleneck composite to the authenticator; set
    ``reconstruct=True`` to route it through the trained reconstruction
    model first (ablation mode).  ``background`` fixes the reference values
    for reproducible decisions; pass ``rng`` to score with fresh draws.
    """

    selector: SelectorBundle
    auth: AuthenticatorModel
    tau: float
    background: np.ndarray
    reconstruct: bool = False
    train_array: np.ndarray | None = None

    def mask_batch(self, batch: np.ndarray) -> np.ndarray:
        return hard_mask_from_scores(
            self.selector.scores_batch(batch), self.selector.n_selected
        )

    def composite_batch(self, batch: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        batch = np.asarray(batch, dtype=float)
        masks = self.mask_batch(batch)
        if rng is not None:
            if self.train_array is None:
                raise ValueError("fresh backgrounds need the training array")
            bg = sample_background(self.train_array, rng, n=len(batch))
        else:
            bg = self.background[None]
        return apply_bottleneck_flat(batch, masks, bg)

    def score_batch(self, batch: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        composite = self.composite_batch(batch, rng).astype(np.float32)
        if self.reconstruct:
            self.selector.g1.eval()
            with torch.no_grad():
                composite = self.selector.g1(torch.from_numpy(composite)).numpy()
        return self.auth.score_batch(composite)

    def decide(self, trial: Trial, rng: np.random.Generator | None = None) -> str:
        accept = self.score_batch(trial.flat()[None], rng)[0] >= self.tau
        return VALID if accept else data_synth.INVALID


def make_pipeline(
    selector: SelectorBundle,
    auth: AuthenticatorModel,
    tau: float,
    train_trials: Sequence[Trial],
    seed: int = 0,
    reconstruct: bool = False,
) -> ComposedPipeline:
    """Pipeline with a fixed background reference drawn from the train set."""
    train_array = data_synth.trials_to_batch(train_trials)
    background = sample_background(
        train_array, np.random.default_rng(derive_seed(seed, "pipeline-background"))
    )
    return ComposedPipeline(
        selector=selector,
        auth=auth,
        tau=float(tau.tau) if hasattr(tau, "tau") else float(tau),
        background=background,
        reconstruct=reconstruct,
        train_array=train_array,
    )


def authenticate_with_selector(
    selector: SelectorBundle,
    auth: AuthenticatorModel,
    tau,
    trial: Trial,
    background: np.ndarray | None = None,
    train_trials: Sequence[Trial] | None = None,
    rng: np.random.Generator | None = None,
    reconstruct: bool = False,
) -> str:
    """One-shot masked authentication decision for a single trial."""
    if background is None:
        if train_trials is None or rng is None:
            raise ValueError("need either a fixed background or (train_trials, rng)")
        background = sample_background(train_trials, rng)
    pipeline = ComposedPipeline(
        selector=selector,
        auth=auth,
        tau=float(tau.tau) if hasattr(tau, "tau") else float(tau),
        background=np.asarray(background),
        reconstruct=reconstruct,
    )
    return pipeline.decide(trial)
