import numpy as np
import pytest
import torch

import mouseguard as mg
from mouseguard import adversary, data_synth as ds
from mouseguard.config import CorpusConfig

torch.set_num_threads(1)

DESK = CorpusConfig(
    n_subjects=8,
    trials_per_subject=30,
    movement_length=32,
    sample_period=0.02,
)


@pytest.fixture(scope="session")
def desk_corpus() -> ds.Corpus:
    return ds.synthesize_corpus(
        DESK.pattern(), DESK.n_subjects, DESK.trials_per_subject, seed=2024,
        **DESK.profile_kwargs(),
    )


@pytest.fixture(scope="session")
def desk_split(desk_corpus) -> ds.DatasetSplit:
    return ds.make_split(desk_corpus, "s0", DESK.n_attackers)


@pytest.fixture(scope="session")
def desk_noise() -> mg.NoiseModel:
    return mg.NoiseModel(movement_length=DESK.movement_length)


@pytest.fixture(scope="session")
def desk_auth(desk_corpus, desk_split) -> mg.AuthenticatorModel:
    cfg = mg.AuthTrainConfig(learning_rate=2e-3, epochs=200, seed=11)
    return mg.train_authenticator(desk_corpus, desk_split, cfg)


@pytest.fixture(scope="session")
def desk_attackers(desk_corpus, desk_split):
    return ds.attacker_trials(desk_corpus, desk_split)


@pytest.fixture(scope="session")
def desk_suite(desk_auth, desk_attackers, desk_noise) -> adversary.AttackSuite:
    cfg = adversary.AttackTrainConfig(learning_rate=1e-3, steps=200, seed=17)
    return adversary.train_attack_suite(desk_auth, desk_attackers, desk_noise, cfg)


@pytest.fixture(scope="session")
def desk_basic_bundle(desk_auth, desk_corpus, desk_split):
    from mouseguard import selector

    cfg = selector.SelectorTrainConfig(
        n_selected=3, steps=300, lr_selector=2e-3, lr_reconstruction=1e-3, seed=23
    )
    return selector.train_basic_selector(desk_auth, desk_corpus, desk_split, cfg)


@pytest.fixture(scope="session")
def desk_improved_bundle(desk_auth, desk_corpus, desk_split, desk_suite, desk_noise):
    from mouseguard import selector

    cfg = selector.SelectorTrainConfig(
        n_selected=3, steps=300, lr_selector=2e-3, lr_reconstruction=1e-3, beta=1.0, seed=23
    )
    return selector.train_improved_selector(
        desk_auth, desk_corpus, desk_split, desk_suite, desk_noise, cfg
    )
