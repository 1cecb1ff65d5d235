import dataclasses

import numpy as np
import pytest
import torch
from torch import nn

import mouseguard as mg
from mouseguard import data_synth as ds, selector
from mouseguard.selector import _losses_torch

from conftest import DESK


class TestBackground:
    def test_degenerate_corpus_reproduces_the_trial(self, desk_corpus):
        trial = desk_corpus.trials[0]
        E = selector.sample_background([trial] * 5, np.random.default_rng(0))
        assert np.array_equal(E, trial.flat())

    def test_two_draws_differ(self, desk_corpus):
        trials = desk_corpus.trials[:50]
        a = selector.sample_background(trials, np.random.default_rng(1))
        b = selector.sample_background(trials, np.random.default_rng(2))
        assert not np.array_equal(a, b)

    def test_marginal_matches_training_distribution(self, desk_corpus):
        from scipy.stats import ks_2samp

        trials = desk_corpus.trials[:60]
        X = ds.trials_to_batch(trials)
        draws = selector.sample_background(X, np.random.default_rng(3), n=10_000)
        # one fixed feature position: its draws must follow that feature's
        # empirical training distribution
        feature = draws[:, 1, 17]
        stat = ks_2samp(feature, X[:, 1, 17]).statistic
        assert stat < 0.05

    def test_batch_shape(self, desk_corpus):
        X = ds.trials_to_batch(desk_corpus.trials[:10])
        E = selector.sample_background(X, np.random.default_rng(4), n=7)
        assert E.shape == (7, 2, X.shape[2])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            selector.sample_background(np.zeros((0, 2, 8)), np.random.default_rng(0))


class TestMask:
    def test_topk_example(self):
        scores = np.array([9, 1, 8, 0, 0, 0, 0, 0, 0, 0], dtype=float)
        mask = selector.hard_mask_from_scores(scores, 2)[0]
        assert list(np.flatnonzero(mask)) == [0, 2]

    def test_tie_breaks_to_lowest_index(self):
        scores = np.array([1.0, 5.0, 5.0, 5.0, 0.0])
        mask = selector.hard_mask_from_scores(scores, 2)[0]
        assert list(np.flatnonzero(mask)) == [1, 2]

    def test_arity_over_many_random_inputs(self, desk_basic_bundle):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=(10_000, 10))
        masks = selector.hard_mask_from_scores(scores, desk_basic_bundle.n_selected)
        assert np.all(masks.sum(axis=1) == desk_basic_bundle.n_selected)

    def test_arity_through_the_network(self, desk_basic_bundle):
        rng = np.random.default_rng(6)
        batch = rng.normal(0, 300, size=(512, 2, DESK.n_movements * DESK.movement_length))
        masks = selector.hard_mask_from_scores(
            desk_basic_bundle.scores_batch(batch), desk_basic_bundle.n_selected
        )
        assert np.all(masks.sum(axis=1) == desk_basic_bundle.n_selected)

    def test_select_mask_single_trial(self, desk_basic_bundle, desk_corpus):
        mask = selector.select_mask(desk_basic_bundle, desk_corpus.trials[0])
        assert mask.shape == (10,)
        assert mask.sum() == desk_basic_bundle.n_selected


class TestBottleneck:
    def test_full_mask_is_identity(self, desk_corpus):
        trial = desk_corpus.trials[0]
        E = selector.sample_background(desk_corpus.trials[:20], np.random.default_rng(0))
        out = selector.apply_bottleneck(trial, np.ones(10, dtype=int), E)
        assert np.array_equal(out.movements, trial.movements)

    def test_zero_mask_is_background(self, desk_corpus):
        trial = desk_corpus.trials[0]
        E = selector.sample_background(desk_corpus.trials[:20], np.random.default_rng(0))
        out = selector.apply_bottleneck(trial, np.zeros(10, dtype=int), E)
        assert np.array_equal(out.movements, ds.flat_to_movements(E, 10))

    def test_mixed_mask_per_block(self, desk_corpus):
        trial = desk_corpus.trials[0]
        E = selector.sample_background(desk_corpus.trials[:20], np.random.default_rng(0))
        mask = np.array([1, 0, 1, 0, 0, 1, 0, 0, 0, 0])
        out = selector.apply_bottleneck(trial, mask, E)
        E_blocks = ds.flat_to_movements(E, 10)
        for m in range(10):
            expected = trial.movements[m] if mask[m] else E_blocks[m]
            assert np.array_equal(out.movements[m], expected)

    def test_shape_mismatch(self, desk_corpus):
        trial = desk_corpus.trials[0]
        with pytest.raises(ValueError):
            selector.apply_bottleneck(trial, np.ones(4), trial.flat())


# ---------------------------------------------------------------------------
# loss wiring


class _FlatLinear(nn.Module):
    def __init__(self, n_in, n_out):
        super().__init__()
        self.fc = nn.Linear(n_in, n_out)

    def forward(self, x):
        return self.fc(x.flatten(1))


class _ShapedLinear(nn.Module):
    def __init__(self, n):
        super().__init__()
        self.fc = nn.Linear(n, n)

    def forward(self, x):
        return self.fc(x.flatten(1)).view(x.shape)


class _SignClassifier(nn.Module):
    """Predicts class 0 for positive-mean input with probability ~1."""

    def forward(self, x):
        m = x.mean(dim=(1, 2)) * 1000.0
        return torch.stack([m, -m], dim=1)


def test_perfect_classifier_zeroes_l1_and_l3():
    torch.manual_seed(0)
    f_net = _FlatLinear(12, 3).double()
    xb = torch.full((4, 2, 6), 2.0, dtype=torch.float64)
    eb = torch.full((4, 2, 6), 1.0, dtype=torch.float64)
    adv = torch.full((4, 2, 6), -2.0, dtype=torch.float64)
    adv_e = torch.full((4, 2, 6), -1.0, dtype=torch.float64)
    y = torch.zeros(4, dtype=torch.long)
    l1, l2, l3 = _losses_torch(
        f_net, nn.Identity(), nn.Identity(), _SignClassifier(),
        xb, y, eb, n_selected=2, movement_length=2, temperature=0.5, mask_mode="soft",
        adv_xb=adv, adv_eb=adv_e,
    )
    assert float(l1) < 1e-6
    assert float(l3) < 1e-6


def test_loss_bundle_combination_and_beta_zero(desk_basic_bundle, desk_auth, desk_corpus, desk_split):
    train = ds.split_trials(desk_corpus, desk_split, "train")
    X = ds.trials_to_batch(train[:8])
    y = np.array([0 if t.label == ds.VALID else 1 for t in train[:8]])
    E = selector.sample_background(ds.trials_to_batch(train), np.random.default_rng(0), n=8)
    lb0 = selector.selector_losses(desk_basic_bundle, desk_auth, X, y, E)
    assert lb0.l3 == 0.0
    assert lb0.combined == pytest.approx((1 - lb0.alpha) * lb0.l1 - lb0.alpha * lb0.l2)
    assert lb0.l1 >= 0 and lb0.l2 >= 0 and np.isfinite(lb0.combined)


def test_loss_linearity_in_beta(desk_auth, desk_corpus, desk_split, desk_suite, desk_noise):
    train = ds.split_trials(desk_corpus, desk_split, "train")
    X = ds.trials_to_batch(train[:8])
    y = np.array([0 if t.label == ds.VALID else 1 for t in train[:8]])
    rng = np.random.default_rng(1)
    E = selector.sample_background(ds.trials_to_batch(train), rng, n=8)
    adv = np.stack([
        mg.generate_adversarial_sample(desk_suite[j % 10], train[j], desk_noise,
                                       np.random.default_rng(j)).trial().flat()
        for j in range(8)
    ])
    adv_E = selector.sample_background(ds.trials_to_batch(train), rng, n=8)

    # identical parameters throughout: evaluate one bundle under several betas
    base_cfg = selector.SelectorTrainConfig(n_selected=3, steps=5, seed=77)
    bundle = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, base_cfg)
    lb0 = selector.selector_losses(bundle, desk_auth, X, y, E, adv, adv_E)
    for beta in (0.5, 3.0, 10.0):
        bundle.config = dataclasses.replace(base_cfg, beta=beta)
        lb = selector.selector_losses(bundle, desk_auth, X, y, E, adv, adv_E)
        assert lb.l1 == lb0.l1 and lb.l2 == lb0.l2 and lb.l3 == lb0.l3
        assert lb.combined == pytest.approx(lb0.combined + (beta - 0.0) * lb0.l3, abs=1e-12)
    bundle.config = base_cfg


def test_gradient_matches_finite_differences():
    # toy float64 pipeline with the smooth relaxation active
    torch.manual_seed(3)
    n_mov, L = 3, 2
    f_net = _FlatLinear(2 * n_mov * L, n_mov).double()
    g1 = _ShapedLinear(2 * n_mov * L).double()
    g2 = _ShapedLinear(2 * n_mov * L).double()
    auth = _FlatLinear(2 * n_mov * L, 2).double()
    rng = np.random.default_rng(4)
    xb = torch.tensor(rng.normal(size=(5, 2, n_mov * L)))
    eb = torch.tensor(rng.normal(size=(5, 2, n_mov * L)))
    adv = torch.tensor(rng.normal(size=(5, 2, n_mov * L)))
    adv_e = torch.tensor(rng.normal(size=(5, 2, n_mov * L)))
    yb = torch.tensor([0, 1, 0, 1, 0])
    alpha, beta = 0.4, 1.7

    def combined():
        l1, l2, l3 = _losses_torch(
            f_net, g1, g2, auth, xb, yb, eb,
            n_selected=2, movement_length=L, temperature=0.5, mask_mode="soft",
            adv_xb=adv, adv_eb=adv_e,
        )
        return (1 - alpha) * l1 - alpha * l2 + beta * l3

    params = list(f_net.parameters())
    analytic = torch.autograd.grad(combined(), params)

    h = 1e-6
    for p, g in zip(params, analytic):
        fd = torch.zeros_like(p)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            with torch.no_grad():
                up = combined().item()
            flat[i] = orig - h
            with torch.no_grad():
                down = combined().item()
            flat[i] = orig
            fd.view(-1)[i] = (up - down) / (2 * h)
        rel = (fd - g).norm() / max(g.norm().item(), 1e-12)
        assert rel < 1e-4


def test_bottleneck_blocks_gradients_to_nonselected_inputs(desk_basic_bundle, desk_auth, desk_corpus):
    trial = desk_corpus.trials[0]
    pipeline = selector.make_pipeline(
        desk_basic_bundle, desk_auth, 0.5, desk_corpus.trials[:40], seed=0
    )
    mask = pipeline.mask_batch(trial.flat()[None])[0]
    L = DESK.movement_length
    expanded = np.repeat(mask, L)[None, None, :] * np.ones((1, 2, 1))
    x = torch.tensor(trial.flat()[None], dtype=torch.float32, requires_grad=True)
    e = torch.tensor(pipeline.background[None], dtype=torch.float32)
    m = torch.tensor(expanded, dtype=torch.float32)
    composite = x * m + e * (1 - m)
    desk_auth.net.eval()
    score = torch.softmax(desk_auth.net(composite), dim=1)[:, 0].sum()
    score.backward()
    grad = x.grad.numpy()[0]
    for j in range(10):
        block = grad[:, j * L : (j + 1) * L]
        if mask[j]:
            assert np.any(block != 0.0)
        else:
            assert np.all(block == 0.0)


def test_beta_zero_improved_equals_basic_bitwise(desk_auth, desk_corpus, desk_split, desk_suite, desk_noise):
    cfg = selector.SelectorTrainConfig(n_selected=2, steps=25, seed=31, beta=0.0)
    basic = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)
    improved = selector.train_improved_selector(
        desk_auth, desk_corpus, desk_split, desk_suite, desk_noise, cfg
    )
    for module in ("selector", "g1", "g2"):
        a = getattr(basic, module).state_dict()
        b = getattr(improved, module).state_dict()
        assert all(torch.equal(a[k], b[k]) for k in a)


def test_selector_training_deterministic(desk_auth, desk_corpus, desk_split):
    cfg = selector.SelectorTrainConfig(n_selected=2, steps=10, seed=13)
    a = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)
    b = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)
    sa, sb = a.selector.state_dict(), b.selector.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_improved_avoids_single_vulnerable_movement(desk_auth, desk_corpus, desk_split, desk_attackers, desk_noise):
    # toy with exactly one effective attack: only one generator is trained,
    # so with a huge adversarial weight the mask should dodge that movement
    # on adversarial inputs almost always
    from mouseguard import adversary

    vulnerable = 5
    gens = tuple(
        adversary.train_attack_generator(
            desk_auth, desk_attackers, j, desk_noise,
            adversary.AttackTrainConfig(
                learning_rate=1e-3, steps=200 if j == vulnerable else 0, seed=17 + j
            ),
        )
        for j in range(10)
    )
    toy_suite = adversary.AttackSuite(generators=gens)
    cfg = selector.SelectorTrainConfig(
        n_selected=2, steps=300, lr_selector=2e-3, beta=1000.0, seed=41
    )
    bundle = selector.train_improved_selector(
        desk_auth, desk_corpus, desk_split, toy_suite, desk_noise, cfg
    )
    batch = adversary.adversarial_batch(
        toy_suite[vulnerable], desk_attackers, desk_noise, np.random.default_rng(42), draws=5
    )
    masks = selector.hard_mask_from_scores(bundle.scores_batch(batch), 2)
    assert np.mean(masks[:, vulnerable] == 0) >= 0.9


class TestChooseBeta:
    def test_single_candidate_meeting_floor(self):
        c = selector.BetaCandidate(beta=1.0, accuracy=0.96, adversarial_tpr=0.4)
        assert selector.choose_beta([c], basic_accuracy=1.0) == (1.0, False)

    def test_zero_candidate_degenerates_to_basic(self):
        c = selector.BetaCandidate(beta=0.0, accuracy=1.0, adversarial_tpr=0.1)
        assert selector.choose_beta([c], basic_accuracy=1.0) == (0.0, False)

    def test_maximizes_tpr_with_exhaustive_oracle(self):
        rng = np.random.default_rng(7)
        candidates = [
            selector.BetaCandidate(
                beta=float(b),
                accuracy=float(rng.uniform(0.85, 1.0)),
                adversarial_tpr=float(rng.uniform(0.0, 1.0)),
            )
            for b in (0.1, 0.3, 1, 3, 10)
        ]
        basic_acc = 0.95
        chosen, flagged = selector.choose_beta(candidates, basic_acc)
        eligible = [c for c in candidates if c.accuracy >= 0.95 * basic_acc]
        assert not flagged
        best_tpr = max(c.adversarial_tpr for c in eligible)
        winners = [c.beta for c in eligible if c.adversarial_tpr == best_tpr]
        assert chosen == min(winners)

    def test_flagged_fallback_when_floor_unreachable(self):
        candidates = [
            selector.BetaCandidate(beta=3.0, accuracy=0.2, adversarial_tpr=0.9),
            selector.BetaCandidate(beta=1.0, accuracy=0.3, adversarial_tpr=0.8),
        ]
        assert selector.choose_beta(candidates, basic_accuracy=1.0) == (1.0, True)

    def test_ties_prefer_smaller_beta(self):
        candidates = [
            selector.BetaCandidate(beta=3.0, accuracy=0.99, adversarial_tpr=0.5),
            selector.BetaCandidate(beta=1.0, accuracy=0.99, adversarial_tpr=0.5),
        ]
        assert selector.choose_beta(candidates, basic_accuracy=1.0)[0] == 1.0


class TestComposedPipeline:
    def test_full_mask_matches_plain_authenticator(self, desk_auth, desk_corpus, desk_split):
        cfg = selector.SelectorTrainConfig(n_selected=10, steps=5, seed=3)
        bundle = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)
        pipeline = selector.make_pipeline(bundle, desk_auth, 0.5, desk_corpus.trials[:30])
        test = ds.split_trials(desk_corpus, desk_split, "test")
        batch = ds.trials_to_batch(test)
        assert np.allclose(pipeline.score_batch(batch), desk_auth.score_batch(batch))

    def test_decision_ignores_nonselected_values(self, desk_basic_bundle, desk_auth, desk_corpus):
        # constant scores pin the mask, so non-selected blocks are inert
        class _FixedScores:
            n_selected = 3

            def scores_batch(self, batch):
                return np.tile(np.arange(10.0)[::-1], (len(batch), 1))

        bundle = dataclasses.replace(desk_basic_bundle)
        fixed = _FixedScores()
        pipeline = selector.ComposedPipeline(
            selector=fixed, auth=desk_auth, tau=0.5,
            background=selector.sample_background(desk_corpus.trials[:30], np.random.default_rng(0)),
        )
        trial = desk_corpus.trials[0]
        before = pipeline.score_batch(trial.flat()[None])[0]
        tampered = trial.movements.copy()
        tampered[9] = 1e4  # movement 9 has the lowest fixed score: never selected
        after = pipeline.score_batch(
            ds.Trial("x", 0, tampered).flat()[None]
        )[0]
        assert before == after

    def test_perturbing_selected_movement_matters_more(self, desk_improved_bundle, desk_auth, desk_corpus, desk_split):
        pipeline = selector.make_pipeline(
            desk_improved_bundle, desk_auth, 0.5, ds.split_trials(desk_corpus, desk_split, "train")
        )
        test = ds.split_trials(desk_corpus, desk_split, "test")
        sel_deltas, non_deltas = [], []
        for trial in test[:20]:
            mask = pipeline.mask_batch(trial.flat()[None])[0]
            base_score = pipeline.score_batch(trial.flat()[None])[0]
            for j, chosen in enumerate(mask):
                tampered = trial.movements.copy()
                tampered[j] = 3000.0
                score = pipeline.score_batch(ds.Trial("x", 0, tampered).flat()[None])[0]
                (sel_deltas if chosen else non_deltas).append(abs(score - base_score))
        assert np.mean(sel_deltas) > np.mean(non_deltas)

    def test_authenticate_with_selector_wrapper(self, desk_basic_bundle, desk_auth, desk_corpus, desk_split):
        test = ds.split_trials(desk_corpus, desk_split, "test")
        decision = selector.authenticate_with_selector(
            desk_basic_bundle, desk_auth, 0.5, test[0],
            train_trials=desk_corpus.trials[:30], rng=np.random.default_rng(0),
        )
        assert decision in (ds.VALID, ds.INVALID)
        with pytest.raises(ValueError):
            selector.authenticate_with_selector(desk_basic_bundle, desk_auth, 0.5, test[0])


def test_composed_accuracy_with_full_selection_matches_plain(desk_auth, desk_corpus, desk_split):
    from mouseguard.evalkit import _pipeline_accuracy

    cfg = selector.SelectorTrainConfig(n_selected=10, steps=5, seed=3)
    bundle = selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)
    pipeline = selector.make_pipeline(bundle, desk_auth, 0.5, desk_corpus.trials[:30])
    test = ds.split_trials(desk_corpus, desk_split, "test")
    assert _pipeline_accuracy(pipeline, test) == pytest.approx(
        mg.accuracy(desk_auth, 0.5, test), abs=0.02
    )
