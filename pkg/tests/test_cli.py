import json
import time
from pathlib import Path

import pytest

from mouseguard import cli, data_synth as ds

TINY = [
    "corpus.trials_per_subject=12",
    "corpus.movement_length=16",
    "corpus.sample_period=0.02",
    "authenticator.learning_rate=2e-3",
    "authenticator.epochs=15",
    "attack.learning_rate=1e-3",
    "attack.steps=10",
    "selector.steps=10",
    "selector.lr_selector=2e-3",
    "distillation.epochs=10",
    "evaluation.noise_draws=3",
]


def _run(*argv) -> int:
    return cli.main(list(argv))


def _sets(extra=()):
    out = []
    for kv in (*TINY, *extra):
        out += ["--set", kv]
    return out


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus.jsonl"
    rc = _run("synth", "--subjects", "6", "--trials", "12", "--seed", "5",
              "--out", str(path), *_sets())
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def auth_ckpt(corpus_path, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "auth.ckpt"
    rc = _run("train-auth", "--user", "s0", "--corpus", str(corpus_path),
              "--out", str(path), *_sets())
    assert rc == 0
    return path


def test_synth_writes_loadable_corpus(corpus_path):
    corpus = ds.load_corpus(corpus_path)
    assert len(corpus.trials) == 6 * 12
    assert corpus.pattern.movement_length == 16


def test_train_auth_checkpoint_and_manifest(auth_ckpt):
    manifest = json.loads(Path(str(auth_ckpt) + ".manifest.json").read_text())
    assert manifest["kind"] == "authenticator"
    assert manifest["user"] == "s0"
    assert 0.0 < manifest["tau"] < 1.0
    assert "data_hash" in manifest


def test_train_attacks_and_selector_and_baselines(corpus_path, auth_ckpt, tmp_path):
    attacks = tmp_path / "attacks.ckpt"
    assert _run("train-attacks", "--auth", str(auth_ckpt), "--corpus", str(corpus_path),
                "--out", str(attacks), *_sets()) == 0
    manifest = json.loads(Path(str(attacks) + ".manifest.json").read_text())
    assert manifest["n_generators"] == 10

    basic = tmp_path / "basic.ckpt"
    assert _run("train-selector", "--auth", str(auth_ckpt), "--corpus", str(corpus_path),
                "--ne", "2", "--basic", "--out", str(basic), *_sets()) == 0
    improved = tmp_path / "improved.ckpt"
    assert _run("train-selector", "--auth", str(auth_ckpt), "--corpus", str(corpus_path),
                "--attacks", str(attacks), "--ne", "2", "--improved",
                "--out", str(improved), *_sets()) == 0
    m = json.loads(Path(str(improved) + ".manifest.json").read_text())
    assert m["variant"] == "improved" and m["n_selected"] == 2

    adv = tmp_path / "advtrain.ckpt"
    assert _run("train-baselines", "--which", "adv", "--auth", str(auth_ckpt),
                "--corpus", str(corpus_path), "--attacks", str(attacks),
                "--out", str(adv), *_sets()) == 0
    dist = tmp_path / "distill.ckpt"
    assert _run("train-baselines", "--which", "distill", "--auth", str(auth_ckpt),
                "--corpus", str(corpus_path), "--out", str(dist), *_sets()) == 0


def test_repro_tables_passes_quickly(tmp_path, capsys):
    start = time.monotonic()
    rc = _run("repro-tables", "--out", str(tmp_path / "repro.txt"))
    assert time.monotonic() - start < 10.0
    assert rc == 0
    text = (tmp_path / "repro.txt").read_text()
    assert "overall: PASS" in text


def test_dump_config_round_trips(tmp_path, capsys):
    assert _run("dump-config", "--set", "seed=123") == 0
    out = capsys.readouterr().out
    assert "seed = 123" in out.splitlines()
    path = tmp_path / "cfg.txt"
    path.write_text(out)
    assert _run("dump-config", "--config", str(path)) == 0
    assert capsys.readouterr().out == out


def test_unknown_config_key_fails_loudly(tmp_path):
    with pytest.raises(Exception, match="unknown config key"):
        _run("dump-config", "--set", "lrn_rate=1")
