"""Command-line entry point.

Subcommands mirror the pipeline stages: ``synth`` writes a corpus,
``train-auth`` / ``train-attacks`` / ``train-selector`` / ``train-baselines``
produce checkpoints, ``evaluate`` runs the cached experiment matrix,
``report`` re-emits its tables and plots, and ``repro-tables`` validates the
statistics pipeline against the embedded reference tables (no training).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import adversary, baselines, data_synth, evalkit, selector
from .authenticator import calibrate_threshold, train_authenticator
from .config import RunConfig, config_hash, dump_config, parse_config
from .seeding import derive_seed
from .store import load_checkpoint, save_checkpoint


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="configuration file (key = value lines)")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def _load_config(args) -> RunConfig:
    return parse_config(args.config, overrides=args.overrides)


def _cmd_synth(args) -> int:
    cfg = _load_config(args)
    n_subjects = args.subjects if args.subjects is not None else cfg.corpus.n_subjects
    trials = args.trials if args.trials is not None else cfg.corpus.trials_per_subject
    seed = args.seed if args.seed is not None else cfg.seed
    corpus = data_synth.synthesize_corpus(
        cfg.corpus.pattern(), n_subjects, trials, seed, **cfg.corpus.profile_kwargs()
    )
    data_synth.save_corpus(args.out, corpus)
    print(f"wrote {len(corpus.trials)} trials ({n_subjects} subjects) to {args.out}")
    return 0


def _split_for(cfg: RunConfig, corpus, user: str):
    return data_synth.make_split(
        corpus,
        user,
        cfg.corpus.n_attackers,
        train_fraction=cfg.split.train_fraction,
        val_fraction=cfg.split.val_fraction,
        seed=derive_seed(cfg.seed, "split"),
    )


def _cmd_train_auth(args) -> int:
    cfg = _load_config(args)
    corpus = data_synth.load_corpus(args.corpus)
    split = _split_for(cfg, corpus, args.user)
    auth_cfg = dataclasses.replace(
        cfg.authenticator, seed=derive_seed(cfg.seed, "auth-cli", args.user)
    )
    model = train_authenticator(corpus, split, auth_cfg)
    threshold = calibrate_threshold(model, corpus, split, cfg.evaluation.threshold_mode)
    save_checkpoint(
        args.out,
        {"model": model, "threshold": threshold, "split": split},
        {
            "kind": "authenticator",
            "user": args.user,
            "tau": threshold.tau,
            "seed": auth_cfg.seed,
            "data_hash": model.data_hash,
            "config": dataclasses.asdict(auth_cfg),
        },
    )
    final = model.training_curve[-1] if model.training_curve else {}
    print(f"trained authenticator for {args.user}; tau={threshold.tau} {final}")
    return 0


def _cmd_train_attacks(args) -> int:
    cfg = _load_config(args)
    corpus = data_synth.load_corpus(args.corpus)
    payload, manifest = load_checkpoint(args.auth)
    model, split = payload["model"], payload["split"]
    if args.attacker_ids:
        wanted = set(args.attacker_ids.split(","))
        bases = data_synth.label_trials(
            [t for t in corpus.trials if t.subject_id in wanted], split.valid_user
        )
        if not bases:
            raise SystemExit(f"no trials for attacker ids {sorted(wanted)}")
    else:
        bases = data_synth.attacker_trials(corpus, split)
    attack_cfg = dataclasses.replace(
        cfg.attack, seed=derive_seed(cfg.seed, "attacks-cli", manifest.get("user", ""))
    )
    suite = adversary.train_attack_suite(model, bases, cfg.noise_model(), attack_cfg)
    save_checkpoint(
        args.out,
        {"suite": suite, "auth_manifest": manifest},
        {
            "kind": "attack-suite",
            "against": manifest.get("user"),
            "n_generators": suite.n_movements,
            "base_subjects": sorted({t.subject_id for t in bases}),
            "config": dataclasses.asdict(attack_cfg),
        },
    )
    print(f"trained {suite.n_movements} attack generators -> {args.out}")
    return 0


def _cmd_train_selector(args) -> int:
    cfg = _load_config(args)
    corpus = data_synth.load_corpus(args.corpus)
    payload, manifest = load_checkpoint(args.auth)
    model, split = payload["model"], payload["split"]
    beta = 0.0 if args.basic else cfg.selector.beta
    s_cfg = selector.SelectorTrainConfig(
        n_selected=args.ne,
        steps=cfg.selector.steps,
        batch_size=cfg.selector.batch_size,
        lr_selector=cfg.selector.lr_selector,
        lr_reconstruction=cfg.selector.lr_reconstruction,
        beta=beta,
        seed=derive_seed(cfg.seed, "selector-cli", args.ne, beta),
        scale=cfg.selector.scale,
        temperature_start=cfg.selector.temperature_start,
        temperature_end=cfg.selector.temperature_end,
    )
    if args.basic:
        bundle = selector.train_basic_selector(model, corpus, split, s_cfg)
    else:
        if not args.attacks:
            raise SystemExit("--improved needs --attacks CKPT")
        suite = load_checkpoint(args.attacks)[0]["suite"]
        bundle = selector.train_improved_selector(
            model, corpus, split, suite, cfg.noise_model(), s_cfg
        )
    save_checkpoint(
        args.out,
        {"bundle": bundle, "auth_manifest": manifest},
        {
            "kind": "selector",
            "variant": "basic" if args.basic else "improved",
            "n_selected": args.ne,
            "chunk_size": bundle.chunk_size,
            "alpha": s_cfg.alpha_for(bundle.n_movements),
            "beta": beta,
            "temperature": [s_cfg.temperature_start, s_cfg.temperature_end],
            "seed": s_cfg.seed,
        },
    )
    print(f"trained {'basic' if args.basic else 'improved'} selector (n={args.ne}) -> {args.out}")
    return 0


def _cmd_train_baselines(args) -> int:
    cfg = _load_config(args)
    corpus = data_synth.load_corpus(args.corpus)
    payload, manifest = load_checkpoint(args.auth)
    split = payload["split"]
    if args.which == "adv":
        if not args.attacks:
            raise SystemExit("adversarial training needs --attacks CKPT")
        suite = load_checkpoint(args.attacks)[0]["suite"]
        auth_cfg = dataclasses.replace(
            cfg.authenticator, seed=derive_seed(cfg.seed, "adv-cli", manifest.get("user", ""))
        )
        model = baselines.adversarial_training(
            corpus, split, suite, cfg.noise_model(), auth_cfg, ratio=cfg.adv_training.ratio
        )
        meta = {"kind": "adv-training", "ratio": cfg.adv_training.ratio}
    else:
        d_cfg = dataclasses.replace(
            cfg.distillation, seed=derive_seed(cfg.seed, "distill-cli", manifest.get("user", ""))
        )
        model = baselines.defensive_distillation(corpus, split, cfg.authenticator, d_cfg).model
        meta = {"kind": "distillation", "temperature": d_cfg.temperature}
    save_checkpoint(args.out, {"model": model, "split": split}, {**meta, "against": manifest.get("user")})
    print(f"trained {args.which} baseline -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    report = evalkit.run_full_experiment(cfg, progress=print if args.verbose else None)
    print(f"config {report.config_hash}: {len(report.outcomes)} outcomes "
          f"({report.jobs_run} jobs run, {report.cache_hits} cache hits)")
    print(f"tables and plots under {report.out_dir}")
    for t in report.trends:
        print(f"  {t.name}: {'pass' if t.passed else 'FAIL'} (p={t.p_value:.4f})")
    return 0 if all(t.passed for t in report.trends) else 1


def _cmd_report(args) -> int:
    cfg = _load_config(args)
    report = evalkit.run_full_experiment(cfg, progress=print if args.verbose else None)
    if report.jobs_run:
        print(f"note: {report.jobs_run} jobs were missing from the store and were run")
    print(f"report assembled under {report.out_dir} (config {config_hash(cfg)})")
    return 0


def _cmd_repro_tables(args) -> int:
    validation = evalkit.validate_reference_statistics()
    text = evalkit.format_reference_report(validation)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if validation.ok else 1


def _cmd_dump_config(args) -> int:
    print(dump_config(_load_config(args)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mouseguard",
        description="mask-based defense toolkit for mouse-dynamics authentication",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate and save a synthetic corpus")
    _add_config_args(p)
    p.add_argument("--subjects", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-auth", help="train one authenticator")
    _add_config_args(p)
    p.add_argument("--user", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_auth)

    p = sub.add_parser("train-attacks", help="train the per-movement attack suite")
    _add_config_args(p)
    p.add_argument("--auth", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--attacker-ids", help="comma-separated subject ids (default: reserved attackers)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_attacks)

    p = sub.add_parser("train-selector", help="train a feature selector")
    _add_config_args(p)
    p.add_argument("--auth", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--attacks", help="attack-suite checkpoint (improved variant)")
    p.add_argument("--ne", type=int, required=True, help="movements to select")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--improved", action="store_true")
    group.add_argument("--basic", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_selector)

    p = sub.add_parser("train-baselines", help="train a comparison defense")
    _add_config_args(p)
    p.add_argument("--which", choices=("adv", "distill"), required=True)
    p.add_argument("--auth", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--attacks")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_baselines)

    p = sub.add_parser("evaluate", help="run the full experiment matrix")
    _add_config_args(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="re-emit tables and plots from the store")
    _add_config_args(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("repro-tables", help="validate statistics against reference tables")
    p.add_argument("--out", help="also write the report to this path")
    p.set_defaults(func=_cmd_repro_tables)

    p = sub.add_parser("dump-config", help="print the fully resolved configuration")
    _add_config_args(p)
    p.set_defaults(func=_cmd_dump_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
