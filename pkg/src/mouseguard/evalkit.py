"""Experiment orchestration, metrics, significance tests, and reporting.

``run_full_experiment`` walks the (seed x valid-user x strategy) matrix,
caching every trained model and evaluation in the artifact store so reruns
are free, then writes per-strategy result tables, a comparison matrix of
one-tailed paired t-tests, a trend report of sign tests, and ROC/bar plots.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import adversary, baselines, data_synth, reference_tables, selector
from .adversary import AttackSuite, adversarial_batch, select_attack_scenario1, select_attack_scenario2, tpr_from_scores
from .authenticator import AuthenticatorModel, accuracy, calibrate_threshold, train_authenticator
from .config import RunConfig, config_hash
from .data_synth import Corpus, DatasetSplit, VALID
from .seeding import derive_seed
from .selector import ComposedPipeline, SelectorTrainConfig, make_pipeline
from .store import ArtifactStore

NONE = "none"
BASIC = "basic_selector"
IMPROVED = "improved_selector"
ADV_TRAINING = "adv_training"
DISTILLATION = "distillation"

SELECTOR_KINDS = (BASIC, IMPROVED)
BASELINE_KINDS = (ADV_TRAINING, DISTILLATION)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ROCCurve:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    thresholds: tuple[float, ...]
    auc: float


def roc_curve(valid_scores: Sequence[float], attack_scores: Sequence[float]) -> ROCCurve:
    """Sweep the acceptance threshold over all distinct scores.

    The positive class is "attack sample rejected": at threshold tau a trial
    is rejected when its valid-user score falls below tau, so TPR is the
    fraction of attack scores below tau and FPR the fraction of valid-user
    scores wrongly below it.
    """
    valid = np.asarray(valid_scores, dtype=float)
    attack = np.asarray(attack_scores, dtype=float)
    if len(valid) == 0 or len(attack) == 0:
        raise ValueError("both score sets must be nonempty")
    taus = np.concatenate([np.unique(np.concatenate([valid, attack])), [np.inf]])
    tpr = [float(np.mean(attack < t)) for t in taus]
    fpr = [float(np.mean(valid < t)) for t in taus]
    auc = float(np.trapezoid(tpr, fpr))
    return ROCCurve(fpr=tuple(fpr), tpr=tuple(tpr), thresholds=tuple(taus), auc=auc)


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    df: int


def paired_t_test_one_tailed(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """One-tailed paired t-test of mean(a - b) > 0 with sample variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors of at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ValueError("differences have zero variance; t-test is degenerate")
    t = float(np.mean(d) / (sd / np.sqrt(len(d))))
    return TTestResult(statistic=t, p_value=float(stats.t.sf(t, len(d) - 1)), df=len(d) - 1)


@dataclass(frozen=True)
class SignTestResult:
    wins: int
    losses: int
    ties: int
    p_value: float


def sign_test(differences: Sequence[float], margin: float = 0.0) -> SignTestResult:
    """One-sided sign test that differences exceed ``margin`` more often than not."""
    d = np.asarray(differences, dtype=float)
    wins = int(np.sum(d > margin))
    losses = int(np.sum(d < margin))
    ties = len(d) - wins - losses
    n = wins + losses
    p = 1.0 if n == 0 else float(stats.binom.sf(wins - 1, n, 0.5))
    return SignTestResult(wins=wins, losses=losses, ties=ties, p_value=p)


# ---------------------------------------------------------------------------
# reference-table validation (no training involved)


@dataclass(frozen=True)
class MeanCheck:
    table: str
    row: str
    recomputed: float
    printed: float
    ok: bool


@dataclass(frozen=True)
class CellCheck:
    metric: str
    opponent: str
    n_selected: int
    printed_p: float
    recomputed_p: float
    ratio: float
    direction_ok: bool
    p_ok: bool
    source_inconsistent: bool


@dataclass
class ReferenceValidation:
    mean_checks: list[MeanCheck]
    cell_checks: list[CellCheck]
    mean_tolerance: float
    p_factor: float

    @property
    def all_means_ok(self) -> bool:
        return all(c.ok for c in self.mean_checks)

    @property
    def all_directions_ok(self) -> bool:
        return all(c.direction_ok for c in self.cell_checks)

    @property
    def all_consistent_cells_ok(self) -> bool:
        return all(c.p_ok for c in self.cell_checks if not c.source_inconsistent)

    @property
    def inconsistent_cells_bounded(self) -> bool:
        """Known source-inconsistent cells must still land within a factor 2."""
        return all(
            c.ratio <= 2.0 for c in self.cell_checks if c.source_inconsistent
        )

    @property
    def ok(self) -> bool:
        return (
            self.all_means_ok
            and self.all_directions_ok
            and self.all_consistent_cells_ok
            and self.inconsistent_cells_bounded
        )


def validate_reference_statistics(
    mean_tolerance: float = 1e-3, p_factor: float = 1.5
) -> ReferenceValidation:
    """Recompute every reference mean and comparison cell from the raw rows."""
    mean_checks = []

    def walk(table_name, mapping):
        for key, row in mapping.items():
            recomputed = float(np.mean(row.values))
            mean_checks.append(
                MeanCheck(
                    table=table_name,
                    row=str(key),
                    recomputed=recomputed,
                    printed=row.printed_mean,
                    ok=abs(recomputed - row.printed_mean) <= mean_tolerance,
                )
            )

    for name, table in reference_tables.load_reference_tables().items():
        walk(name, table)

    cell_checks = []
    for cell in reference_tables.COMPARISON_GRID:
        ours, theirs = reference_tables.comparison_vectors(cell)
        printed_dir = 1 if cell.printed_ours > cell.printed_theirs else -1
        recomputed_dir = 1 if np.mean(ours) > np.mean(theirs) else -1
        if recomputed_dir > 0:
            result = paired_t_test_one_tailed(ours, theirs)
        else:
            result = paired_t_test_one_tailed(theirs, ours)
        ratio = max(result.p_value / cell.printed_p, cell.printed_p / result.p_value)
        key = (cell.metric, cell.opponent, cell.n_selected)
        cell_checks.append(
            CellCheck(
                metric=cell.metric,
                opponent=cell.opponent,
                n_selected=cell.n_selected,
                printed_p=cell.printed_p,
                recomputed_p=result.p_value,
                ratio=ratio,
                direction_ok=printed_dir == recomputed_dir,
                p_ok=ratio <= p_factor,
                source_inconsistent=key in reference_tables.SOURCE_INCONSISTENT_CELLS,
            )
        )
    return ReferenceValidation(
        mean_checks=mean_checks,
        cell_checks=cell_checks,
        mean_tolerance=mean_tolerance,
        p_factor=p_factor,
    )


def format_reference_report(validation: ReferenceValidation) -> str:
    lines = ["reference mean reproduction (tolerance %.0e):" % validation.mean_tolerance]
    for c in validation.mean_checks:
        lines.append(
            "  %-34s row %-3s recomputed %.4f printed %.3f  %s"
            % (c.table, c.row, c.recomputed, c.printed, "ok" if c.ok else "FAIL")
        )
    lines.append("comparison cells (p within factor %.1f):" % validation.p_factor)
    for c in validation.cell_checks:
        status = "ok" if c.p_ok else ("source-inconsistent" if c.source_inconsistent else "FAIL")
        lines.append(
            "  %-13s vs %-14s n=%d  printed p=%.3e recomputed p=%.3e ratio=%.2f dir=%s  %s"
            % (
                c.metric,
                c.opponent,
                c.n_selected,
                c.printed_p,
                c.recomputed_p,
                c.ratio,
                "ok" if c.direction_ok else "FAIL",
                status,
            )
        )
    lines.append("overall: %s" % ("PASS" if validation.ok else "FAIL"))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# strategy evaluation within one (seed, user) cell


@dataclass(frozen=True)
class StrategyOutcome:
    user: str
    seed_index: int
    kind: str
    n_selected: int | None
    accuracy: float
    clean_rejection: float
    tpr_scenario1: float
    tpr_scenario2: float | None = None
    chosen_scenario1: int | None = None
    chosen_scenario2: int | None = None
    scenario2_fallback: bool | None = None


@dataclass
class _Cell:
    """Everything shared by the strategies of one (seed, user) pair."""

    cfg: RunConfig
    corpus: Corpus
    split: DatasetSplit
    seed_index: int
    user: str
    auth: AuthenticatorModel
    tau: float
    eval_suite: AttackSuite

    def __post_init__(self):
        self.noise = self.cfg.noise_model()
        self.train = data_synth.split_trials(self.corpus, self.split, "train")
        self.val = data_synth.split_trials(self.corpus, self.split, "val")
        self.test = data_synth.split_trials(self.corpus, self.split, "test")
        self.attackers = data_synth.attacker_trials(self.corpus, self.split)
        self.draws = self.cfg.evaluation.noise_draws

    def rng(self, *label) -> np.random.Generator:
        return np.random.default_rng(
            derive_seed(self.cfg.seed, "eval", self.seed_index, self.user, *label)
        )

    def model_tau(self, model: AuthenticatorModel) -> float:
        if self.cfg.evaluation.threshold_mode == "default":
            return 0.5
        return calibrate_threshold(
            model, self.corpus, self.split, self.cfg.evaluation.threshold_mode
        ).tau


def _rejection_rate(scorer, tau: float, trials) -> float:
    scores = scorer.score_batch(data_synth.trials_to_batch(trials))
    return float(np.mean(scores < tau))


def _fresh_tpr(cell: _Cell, scorer, tau: float, j: int, label: str) -> float:
    batch = adversarial_batch(
        cell.eval_suite[j], cell.attackers, cell.noise, cell.rng(label, j), cell.draws
    )
    return tpr_from_scores(scorer.score_batch(batch), tau)


def _evaluate_none(cell: _Cell) -> StrategyOutcome:
    sel = select_attack_scenario1(
        cell.eval_suite, cell.auth, cell.tau, cell.attackers, cell.noise,
        cell.rng("sc1-select", NONE), cell.draws,
    )
    return StrategyOutcome(
        user=cell.user,
        seed_index=cell.seed_index,
        kind=NONE,
        n_selected=None,
        accuracy=accuracy(cell.auth, cell.tau, cell.test),
        clean_rejection=_rejection_rate(cell.auth, cell.tau, cell.attackers),
        tpr_scenario1=_fresh_tpr(cell, cell.auth, cell.tau, sel.movement_index, "sc1-tpr/none"),
        chosen_scenario1=sel.movement_index,
    )


def _pipeline_accuracy(pipeline: ComposedPipeline, trials) -> float:
    scores = pipeline.score_batch(data_synth.trials_to_batch(trials))
    is_valid = np.array([t.label == VALID for t in trials])
    return float(np.mean((scores >= pipeline.tau) == is_valid))


def _evaluate_selector_strategy(
    cell: _Cell, bundle: selector.SelectorBundle, kind: str
) -> StrategyOutcome:
    pipeline = make_pipeline(
        bundle, cell.auth, cell.tau, cell.train,
        seed=derive_seed(cell.cfg.seed, "background", cell.seed_index, cell.user),
    )
    sel1 = select_attack_scenario1(
        cell.eval_suite, cell.auth, cell.tau, cell.attackers, cell.noise,
        cell.rng("sc1-select", kind, bundle.n_selected), cell.draws,
    )
    tpr1 = _fresh_tpr(
        cell, pipeline, cell.tau, sel1.movement_index, f"sc1-tpr/{kind}/{bundle.n_selected}"
    )
    sel2 = select_attack_scenario2(
        cell.eval_suite, pipeline, cell.attackers, cell.noise,
        cell.rng("sc2-select", kind, bundle.n_selected), cell.draws,
    )
    tpr2 = _fresh_tpr(
        cell, pipeline, cell.tau, sel2.movement_index, f"sc2-tpr/{kind}/{bundle.n_selected}"
    )
    return StrategyOutcome(
        user=cell.user,
        seed_index=cell.seed_index,
        kind=kind,
        n_selected=bundle.n_selected,
        accuracy=_pipeline_accuracy(pipeline, cell.test),
        clean_rejection=_rejection_rate(pipeline, cell.tau, cell.attackers),
        tpr_scenario1=tpr1,
        tpr_scenario2=tpr2,
        chosen_scenario1=sel1.movement_index,
        chosen_scenario2=sel2.movement_index,
        scenario2_fallback=sel2.fallback,
    )


def _evaluate_retrained(
    cell: _Cell, model: AuthenticatorModel, suite: AttackSuite, kind: str
) -> StrategyOutcome:
    tau = cell.model_tau(model)
    rng = cell.rng("sc1-select", kind)
    sel = select_attack_scenario1(
        suite, model, tau, cell.attackers, cell.noise, rng, cell.draws
    )
    batch = adversarial_batch(
        suite[sel.movement_index], cell.attackers, cell.noise,
        cell.rng("sc1-tpr", kind), cell.draws,
    )
    return StrategyOutcome(
        user=cell.user,
        seed_index=cell.seed_index,
        kind=kind,
        n_selected=None,
        accuracy=accuracy(model, tau, cell.test),
        clean_rejection=_rejection_rate(model, tau, cell.attackers),
        tpr_scenario1=tpr_from_scores(model.score_batch(batch), tau),
        chosen_scenario1=sel.movement_index,
    )


# ---------------------------------------------------------------------------
# the experiment matrix


class _Runner:
    def __init__(self, cfg: RunConfig, store: ArtifactStore | None, progress: Callable | None):
        self.cfg = cfg
        self.store = store or ArtifactStore(cfg.store_dir)
        self.progress = progress or (lambda msg: None)
        self.jobs_run = 0
        self.cache_hits = 0

    def memo(self, kind: str, params, producer):
        value, hit = self.store.memo(kind, params, producer)
        if hit:
            self.cache_hits += 1
        else:
            self.jobs_run += 1
            self.progress(f"ran {kind}")
        return value, self.store.address(kind, params)

    # -- jobs ---------------------------------------------------------------

    def corpus(self, seed_index: int) -> tuple[Corpus, str]:
        cfg = self.cfg
        seed = derive_seed(cfg.seed, "corpus", seed_index)
        params = {"corpus": dataclasses.asdict(cfg.corpus), "seed": seed}
        return self.memo(
            "corpus",
            params,
            lambda: data_synth.synthesize_corpus(
                cfg.corpus.pattern(),
                cfg.corpus.n_subjects,
                cfg.corpus.trials_per_subject,
                seed,
                **cfg.corpus.profile_kwargs(),
            ),
        )

    def split_for(self, corpus: Corpus, user: str) -> DatasetSplit:
        return data_synth.make_split(
            corpus,
            user,
            self.cfg.corpus.n_attackers,
            train_fraction=self.cfg.split.train_fraction,
            val_fraction=self.cfg.split.val_fraction,
            seed=derive_seed(self.cfg.seed, "split"),
        )

    def auth(self, corpus, corpus_addr, split, seed_index, user):
        cfg = dataclasses.replace(
            self.cfg.authenticator, seed=derive_seed(self.cfg.seed, "auth", seed_index, user)
        )
        params = {
            "parent": corpus_addr,
            "user": user,
            "split": dataclasses.asdict(self.cfg.split),
            "auth": dataclasses.asdict(cfg),
        }
        return self.memo("auth", params, lambda: train_authenticator(corpus, split, cfg))

    def suite(self, corpus, split, auth_model, auth_addr, seed_index, user, bases_kind, label):
        cfg = dataclasses.replace(
            self.cfg.attack, seed=derive_seed(self.cfg.seed, "suite", label, seed_index, user)
        )
        noise = self.cfg.noise_model()
        params = {
            "parent": auth_addr,
            "bases": bases_kind,
            "attack": dataclasses.asdict(cfg),
            "noise": dataclasses.asdict(self.cfg.noise),
        }

        def produce():
            if bases_kind == "attackers":
                bases = data_synth.attacker_trials(corpus, split)
            else:
                bases = [
                    t
                    for t in data_synth.split_trials(corpus, split, "train")
                    if t.label != VALID
                ]
            return adversary.train_attack_suite(auth_model, bases, noise, cfg)

        return self.memo("attack-suite", params, produce)

    def selector_config(self, n_selected: int, beta: float, seed_index, user, kind) -> SelectorTrainConfig:
        s = self.cfg.selector
        return SelectorTrainConfig(
            n_selected=n_selected,
            steps=s.steps,
            batch_size=s.batch_size,
            lr_selector=s.lr_selector,
            lr_reconstruction=s.lr_reconstruction,
            beta=beta,
            seed=derive_seed(self.cfg.seed, "selector", kind, n_selected, seed_index, user),
            scale=s.scale,
            temperature_start=s.temperature_start,
            temperature_end=s.temperature_end,
        )

    def selector_bundle(self, corpus, split, auth_model, auth_addr, cfg, suite=None, suite_addr=None):
        params = {
            "parent": auth_addr,
            "suite": suite_addr,
            "selector": dataclasses.asdict(cfg),
            "noise": dataclasses.asdict(self.cfg.noise) if suite_addr else None,
        }

        def produce():
            if suite is None:
                return selector.train_basic_selector(auth_model, corpus, split, cfg)
            return selector.train_improved_selector(
                auth_model, corpus, split, suite, self.cfg.noise_model(), cfg
            )

        return self.memo("selector", params, produce)

    def evaluation(self, addr_parents, label, producer):
        params = {
            "parents": addr_parents,
            "eval": dataclasses.asdict(self.cfg.evaluation),
            "label": label,
            "seed": self.cfg.seed,
        }
        value, _ = self.memo("evaluation", params, producer)
        return value


def _improved_beta(runner: _Runner, cell: _Cell, auth_addr, defense_suite, defense_addr, n_e, basic_bundle) -> float:
    """Fixed beta, or grid selection against the basic selector's accuracy."""
    s = runner.cfg.selector
    if not s.beta_grid:
        return s.beta
    basic_pipeline = make_pipeline(
        basic_bundle, cell.auth, cell.tau, cell.train,
        seed=derive_seed(runner.cfg.seed, "background", cell.seed_index, cell.user),
    )
    basic_acc = _pipeline_accuracy(basic_pipeline, cell.val)
    candidates = []
    for beta in s.beta_grid:
        cfg = runner.selector_config(n_e, beta, cell.seed_index, cell.user, "improved")
        bundle, _ = runner.selector_bundle(
            cell.corpus, cell.split, cell.auth, auth_addr, cfg, defense_suite, defense_addr
        )
        pipeline = make_pipeline(
            bundle, cell.auth, cell.tau, cell.train,
            seed=derive_seed(runner.cfg.seed, "background", cell.seed_index, cell.user),
        )
        acc = _pipeline_accuracy(pipeline, cell.val)
        sel = select_attack_scenario1(
            cell.eval_suite, cell.auth, cell.tau, cell.attackers, cell.noise,
            cell.rng("beta-tune", n_e, beta), cell.draws,
        )
        tpr = _fresh_tpr(cell, pipeline, cell.tau, sel.movement_index, f"beta-tune-tpr/{n_e}/{beta}")
        candidates.append(selector.BetaCandidate(beta=beta, accuracy=acc, adversarial_tpr=tpr))
    beta, _flagged = selector.choose_beta(candidates, basic_acc, floor=s.accuracy_floor)
    return beta


def _run_cell(runner: _Runner, seed_index: int, user: str, kinds: Sequence[str]) -> list[StrategyOutcome]:
    cfg = runner.cfg
    corpus, corpus_addr = runner.corpus(seed_index)
    split = runner.split_for(corpus, user)
    auth_model, auth_addr = runner.auth(corpus, corpus_addr, split, seed_index, user)
    eval_suite, eval_suite_addr = runner.suite(
        corpus, split, auth_model, auth_addr, seed_index, user, "attackers", "eval"
    )
    cell = _Cell(
        cfg=cfg,
        corpus=corpus,
        split=split,
        seed_index=seed_index,
        user=user,
        auth=auth_model,
        tau=0.5 if cfg.evaluation.threshold_mode == "default" else calibrate_threshold(
            auth_model, corpus, split, cfg.evaluation.threshold_mode
        ).tau,
        eval_suite=eval_suite,
    )

    needs_defense_suite = IMPROVED in kinds or ADV_TRAINING in kinds
    defense_suite = defense_addr = None
    if needs_defense_suite:
        defense_suite, defense_addr = runner.suite(
            corpus, split, auth_model, auth_addr, seed_index, user, "train_invalid", "defense"
        )

    outcomes: list[StrategyOutcome] = []
    if NONE in kinds:
        outcomes.append(
            runner.evaluation([auth_addr, eval_suite_addr], f"{NONE}/{seed_index}/{user}",
                              lambda: _evaluate_none(cell))
        )

    basic_bundles = {}
    if BASIC in kinds or (IMPROVED in kinds and cfg.selector.beta_grid):
        for n_e in cfg.matrix.n_selected_values:
            s_cfg = runner.selector_config(n_e, 0.0, seed_index, user, "basic")
            bundle, addr = runner.selector_bundle(corpus, split, auth_model, auth_addr, s_cfg)
            basic_bundles[n_e] = (bundle, addr)
            if BASIC in kinds:
                outcomes.append(
                    runner.evaluation(
                        [addr, eval_suite_addr], f"{BASIC}/{n_e}/{seed_index}/{user}",
                        lambda b=bundle: _evaluate_selector_strategy(cell, b, BASIC),
                    )
                )

    if IMPROVED in kinds:
        for n_e in cfg.matrix.n_selected_values:
            beta = cfg.selector.beta
            if cfg.selector.beta_grid:
                beta = _improved_beta(
                    runner, cell, auth_addr, defense_suite, defense_addr, n_e,
                    basic_bundles[n_e][0],
                )
            s_cfg = runner.selector_config(n_e, beta, seed_index, user, "improved")
            bundle, addr = runner.selector_bundle(
                corpus, split, auth_model, auth_addr, s_cfg, defense_suite, defense_addr
            )
            outcomes.append(
                runner.evaluation(
                    [addr, eval_suite_addr], f"{IMPROVED}/{n_e}/{seed_index}/{user}",
                    lambda b=bundle: _evaluate_selector_strategy(cell, b, IMPROVED),
                )
            )

    if ADV_TRAINING in kinds:
        auth_cfg = dataclasses.replace(
            cfg.authenticator, seed=derive_seed(cfg.seed, "adv-train", seed_index, user)
        )
        params = {
            "parent": defense_addr,
            "auth": dataclasses.asdict(auth_cfg),
            "ratio": cfg.adv_training.ratio,
        }
        model, model_addr = runner.memo(
            "adv-training", params,
            lambda: baselines.adversarial_training(
                corpus, split, defense_suite, cfg.noise_model(), auth_cfg,
                ratio=cfg.adv_training.ratio,
            ),
        )
        suite2, suite2_addr = runner.suite(
            corpus, split, model, model_addr, seed_index, user, "attackers", "eval-adv"
        )
        outcomes.append(
            runner.evaluation(
                [model_addr, suite2_addr], f"{ADV_TRAINING}/{seed_index}/{user}",
                lambda: _evaluate_retrained(cell, model, suite2, ADV_TRAINING),
            )
        )

    if DISTILLATION in kinds:
        d_cfg = dataclasses.replace(
            cfg.distillation, seed=derive_seed(cfg.seed, "distill", seed_index, user)
        )
        params = {
            "parent": auth_addr,
            "auth": dataclasses.asdict(cfg.authenticator),
            "distill": dataclasses.asdict(d_cfg),
        }
        result, student_addr = runner.memo(
            "distillation", params,
            lambda: baselines.defensive_distillation(corpus, split, cfg.authenticator, d_cfg),
        )
        student = result.model
        suite3, suite3_addr = runner.suite(
            corpus, split, student, student_addr, seed_index, user, "attackers", "eval-distill"
        )
        outcomes.append(
            runner.evaluation(
                [student_addr, suite3_addr], f"{DISTILLATION}/{seed_index}/{user}",
                lambda: _evaluate_retrained(cell, student, suite3, DISTILLATION),
            )
        )
    return outcomes


# ---------------------------------------------------------------------------
# aggregation, trends, and reporting


@dataclass
class ResultsTable:
    kind: str
    rows: list[dict]  # {"metric", "n_selected", "per_user": {user: value}, "mean"}
    users: tuple[str, ...]
    seeds: tuple[int, ...]


def results_table(outcomes: Sequence[StrategyOutcome], kind: str) -> ResultsTable:
    """Per-user rows (averaged over seeds) and their mean, per metric."""
    mine = [o for o in outcomes if o.kind == kind]
    if not mine:
        raise ValueError(f"no outcomes for strategy {kind!r}")
    users = tuple(sorted({o.user for o in mine}))
    seeds = tuple(sorted({o.seed_index for o in mine}))
    ne_values = sorted({o.n_selected for o in mine}, key=lambda v: (v is None, v))
    rows = []
    for metric in ("accuracy", "tpr_scenario1", "tpr_scenario2", "clean_rejection"):
        for n_e in ne_values:
            per_user = {}
            for user in users:
                vals = [
                    getattr(o, metric)
                    for o in mine
                    if o.user == user and o.n_selected == n_e and getattr(o, metric) is not None
                ]
                if vals:
                    per_user[user] = float(np.mean(vals))
            if len(per_user) == len(users) and per_user:
                rows.append(
                    {
                        "metric": metric,
                        "n_selected": n_e,
                        "per_user": per_user,
                        "mean": float(np.mean(list(per_user.values()))),
                    }
                )
    return ResultsTable(kind=kind, rows=rows, users=users, seeds=seeds)


@dataclass(frozen=True)
class TrendCheck:
    name: str
    wins: int
    losses: int
    ties: int
    p_value: float
    passed: bool
    detail: str = ""


def _unit_value(index, unit, kind, metric, ne_values=None):
    user, si = unit
    if ne_values is None:
        return getattr(index[(user, si, kind, None)], metric)
    vals = [getattr(index[(user, si, kind, n)], metric) for n in ne_values]
    return float(np.mean(vals))


def trend_report(
    outcomes: Sequence[StrategyOutcome],
    ne_values: Sequence[int],
    p_threshold: float = 0.1,
    collapse_margin: float = 0.3,
) -> list[TrendCheck]:
    """Sign tests over (user, seed) units for the qualitative claims."""
    index = {(o.user, o.seed_index, o.kind, o.n_selected): o for o in outcomes}
    kinds = {o.kind for o in outcomes}
    units = sorted({(o.user, o.seed_index) for o in outcomes})
    checks = []

    def add(name, diffs, margin=0.0, allow_all_ties=False):
        r = sign_test(diffs, margin)
        passed = r.p_value < p_threshold or (allow_all_ties and r.losses == 0)
        checks.append(
            TrendCheck(
                name=name, wins=r.wins, losses=r.losses, ties=r.ties,
                p_value=r.p_value, passed=passed,
                detail="median diff %.3f" % float(np.median(diffs)),
            )
        )

    if NONE in kinds:
        diffs = [
            _unit_value(index, u, NONE, "clean_rejection")
            - _unit_value(index, u, NONE, "tpr_scenario1")
            - collapse_margin
            for u in units
        ]
        add("attack_collapses_undefended_tpr_by_margin", diffs)

    if BASIC in kinds and IMPROVED in kinds:
        diffs = [
            _unit_value(index, u, IMPROVED, "tpr_scenario1", ne_values)
            - _unit_value(index, u, BASIC, "tpr_scenario1", ne_values)
            for u in units
        ]
        add("improved_selector_tpr_above_basic", diffs)

    for sel_kind in SELECTOR_KINDS:
        for base_kind in BASELINE_KINDS:
            if sel_kind in kinds and base_kind in kinds:
                diffs = [
                    _unit_value(index, u, sel_kind, "tpr_scenario1", ne_values)
                    - _unit_value(index, u, base_kind, "tpr_scenario1")
                    for u in units
                ]
                add(f"{sel_kind}_tpr_above_{base_kind}", diffs)

    for sel_kind in SELECTOR_KINDS:
        if sel_kind in kinds:
            lo, hi = min(ne_values), max(ne_values)
            diffs = [
                _unit_value(index, u, sel_kind, "accuracy", [hi])
                - _unit_value(index, u, sel_kind, "accuracy", [lo])
                for u in units
            ]
            add(f"accuracy_grows_with_selection_{sel_kind}", diffs)

    for sel_kind in SELECTOR_KINDS:
        if sel_kind in kinds:
            diffs = [
                _unit_value(index, u, sel_kind, "tpr_scenario1", ne_values)
                - _unit_value(index, u, sel_kind, "tpr_scenario2", ne_values)
                for u in units
            ]
            add(f"scenario2_attack_stronger_{sel_kind}", diffs, allow_all_ties=True)
    return checks


def comparison_matrix(outcomes: Sequence[StrategyOutcome], ne_values: Sequence[int]) -> list[dict]:
    """Improved selector vs every other strategy, per metric and n_selected.

    Vectors are per-user means over seeds; p is the one-tailed paired t-test
    in the direction of the observed means.
    """
    kinds = {o.kind for o in outcomes}
    if IMPROVED not in kinds:
        return []
    users = sorted({o.user for o in outcomes})

    def vector(kind, metric, n_e):
        vals = []
        for user in users:
            per_seed = [
                getattr(o, metric)
                for o in outcomes
                if o.kind == kind and o.user == user and o.n_selected == n_e
                and getattr(o, metric) is not None
            ]
            if not per_seed:
                return None
            vals.append(float(np.mean(per_seed)))
        return vals

    rows = []
    for metric in ("accuracy", "tpr_scenario1", "tpr_scenario2"):
        for opponent in (ADV_TRAINING, DISTILLATION, BASIC):
            if opponent not in kinds:
                continue
            for n_e in ne_values:
                ours = vector(IMPROVED, metric, n_e)
                theirs_metric = "tpr_scenario1" if (
                    opponent in BASELINE_KINDS and metric == "tpr_scenario2"
                ) else metric
                theirs = vector(opponent, theirs_metric, n_e if opponent == BASIC else None)
                if ours is None or theirs is None:
                    continue
                direction = ">" if np.mean(ours) > np.mean(theirs) else "<"
                try:
                    t = (
                        paired_t_test_one_tailed(ours, theirs)
                        if direction == ">"
                        else paired_t_test_one_tailed(theirs, ours)
                    )
                    stat, p = t.statistic, t.p_value
                except ValueError:
                    stat, p = float("nan"), float("nan")
                rows.append(
                    {
                        "metric": metric,
                        "opponent": opponent,
                        "n_selected": n_e,
                        "ours": float(np.mean(ours)),
                        "theirs": float(np.mean(theirs)),
                        "direction": direction,
                        "t": stat,
                        "p": p,
                        "n_pairs": len(ours),
                    }
                )
    return rows


# ---------------------------------------------------------------------------
# report bundle


@dataclass
class ExperimentReport:
    config_hash: str
    outcomes: list[StrategyOutcome]
    trends: list[TrendCheck]
    comparison: list[dict]
    jobs_run: int
    cache_hits: int
    out_dir: str
    table_paths: dict[str, str]


def _format_table(table: ResultsTable) -> str:
    header = ["metric", "n_selected"] + [f"user:{u}" for u in table.users] + ["mean"]
    lines = ["\t".join(header)]
    for row in table.rows:
        cells = [row["metric"], str(row["n_selected"] if row["n_selected"] is not None else "-")]
        cells += ["%.6f" % row["per_user"][u] for u in table.users]
        cells.append("%.6f" % row["mean"])
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def _format_comparison(rows: list[dict]) -> str:
    header = ["metric", "opponent", "n_selected", "ours", "theirs", "direction", "t", "p", "n_pairs"]
    lines = ["\t".join(header)]
    for r in rows:
        lines.append(
            "\t".join(
                [
                    r["metric"], r["opponent"], str(r["n_selected"]),
                    "%.6f" % r["ours"], "%.6f" % r["theirs"], r["direction"],
                    "%.4f" % r["t"], "%.6e" % r["p"], str(r["n_pairs"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _format_trends(trends: list[TrendCheck]) -> str:
    header = ["trend", "wins", "losses", "ties", "p", "passed", "detail"]
    lines = ["\t".join(header)]
    for t in trends:
        lines.append(
            "\t".join(
                [t.name, str(t.wins), str(t.losses), str(t.ties),
                 "%.6f" % t.p_value, str(t.passed), t.detail]
            )
        )
    return "\n".join(lines) + "\n"


def _roc_points(cell: _Cell, pipeline: ComposedPipeline) -> dict:
    clean_valid = [t for t in cell.test if t.label == VALID]
    valid_scores = pipeline.score_batch(data_synth.trials_to_batch(clean_valid))
    attacker_scores = pipeline.score_batch(data_synth.trials_to_batch(cell.attackers))
    sel = select_attack_scenario1(
        cell.eval_suite, cell.auth, cell.tau, cell.attackers, cell.noise,
        cell.rng("roc-select"), cell.draws,
    )
    adv = adversarial_batch(
        cell.eval_suite[sel.movement_index], cell.attackers, cell.noise,
        cell.rng("roc-tpr"), cell.draws,
    )
    adv_scores = pipeline.score_batch(adv)
    return {
        "valid": [float(s) for s in valid_scores],
        "attacker_clean": [float(s) for s in attacker_scores],
        "attacker_adversarial": [float(s) for s in adv_scores],
    }


def _emit_plots(out: Path, roc_data: dict, outcomes: Sequence[StrategyOutcome]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    (out / "plots").mkdir(parents=True, exist_ok=True)
    for flavor, key in (("clean", "attacker_clean"), ("adversarial", "attacker_adversarial")):
        fig, ax = plt.subplots(figsize=(5, 4))
        for n_e, data in sorted(roc_data.items()):
            curve = roc_curve(data["valid"], data[key])
            ax.plot(curve.fpr, curve.tpr, label=f"select {n_e} (AUC {curve.auc:.2f})")
        ax.plot([0, 1], [0, 1], "k:", lw=0.8)
        ax.set_xlabel("false positive rate (valid user rejected)")
        ax.set_ylabel("true positive rate (attacker rejected)")
        ax.set_title(f"ROC, {flavor} attacker samples")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "plots" / f"roc_{flavor}.png", dpi=120)
        plt.close(fig)
    (out / "plots" / "roc_points.json").write_text(
        json.dumps(roc_data, sort_keys=True)
    )

    kinds = sorted({(o.kind, o.n_selected) for o in outcomes})
    labels, tprs, accs = [], [], []
    for kind, n_e in kinds:
        mine = [o for o in outcomes if o.kind == kind and o.n_selected == n_e]
        labels.append(kind if n_e is None else f"{kind}:{n_e}")
        tprs.append(float(np.mean([o.tpr_scenario1 for o in mine])))
        accs.append(float(np.mean([o.accuracy for o in mine])))
    for name, values, title in (
        ("tpr_by_strategy", tprs, "scenario-1 TPR under attack"),
        ("accuracy_by_strategy", accs, "accuracy on the clean test set"),
    ):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.bar(range(len(labels)), values)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel(title)
        fig.tight_layout()
        fig.savefig(out / "plots" / f"{name}.png", dpi=120)
        plt.close(fig)
        (out / "plots" / f"{name}.json").write_text(
            json.dumps({"labels": labels, "values": values}, sort_keys=True)
        )


def run_full_experiment(
    cfg: RunConfig,
    store: ArtifactStore | None = None,
    progress: Callable | None = None,
    emit_plots: bool = True,
) -> ExperimentReport:
    """Run (or resume) the full matrix and write the report bundle."""
    runner = _Runner(cfg, store, progress)
    kinds = tuple(cfg.matrix.strategies)
    outcomes: list[StrategyOutcome] = []
    roc_data = {}
    for seed_index in range(cfg.matrix.n_seeds):
        corpus, _ = runner.corpus(seed_index)
        users = corpus.subject_ids[: cfg.matrix.n_users]
        if len(users) < cfg.matrix.n_users:
            raise ValueError("not enough non-attacker subjects for the requested users")
        for user in users:
            outcomes.extend(_run_cell(runner, seed_index, user, kinds))

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tables").mkdir(exist_ok=True)

    table_paths = {}
    for kind in kinds:
        if any(o.kind == kind for o in outcomes):
            table = results_table(outcomes, kind)
            path = out / "tables" / f"{kind}.tsv"
            path.write_text(_format_table(table))
            table_paths[kind] = str(path)

    comparison = comparison_matrix(outcomes, cfg.matrix.n_selected_values)
    if comparison:
        path = out / "tables" / "comparison_matrix.tsv"
        path.write_text(_format_comparison(comparison))
        table_paths["comparison_matrix"] = str(path)

    trends = trend_report(outcomes, cfg.matrix.n_selected_values)
    path = out / "tables" / "trends.tsv"
    path.write_text(_format_trends(trends))
    table_paths["trends"] = str(path)

    report = ExperimentReport(
        config_hash=config_hash(cfg),
        outcomes=outcomes,
        trends=trends,
        comparison=comparison,
        jobs_run=runner.jobs_run,
        cache_hits=runner.cache_hits,
        out_dir=str(out),
        table_paths=table_paths,
    )
    (out / "report.json").write_text(
        json.dumps(
            {
                "config_hash": report.config_hash,
                "outcomes": [dataclasses.asdict(o) for o in outcomes],
                "trends": [dataclasses.asdict(t) for t in trends],
                "comparison": comparison,
            },
            sort_keys=True,
            indent=1,
        )
    )

    if emit_plots and any(k in kinds for k in SELECTOR_KINDS):
        plot_kind = IMPROVED if IMPROVED in kinds else BASIC
        corpus, corpus_addr = runner.corpus(0)
        user = corpus.subject_ids[0]
        split = runner.split_for(corpus, user)
        auth_model, auth_addr = runner.auth(corpus, corpus_addr, split, 0, user)
        eval_suite, _ = runner.suite(
            corpus, split, auth_model, auth_addr, 0, user, "attackers", "eval"
        )
        cell = _Cell(
            cfg=cfg, corpus=corpus, split=split, seed_index=0, user=user,
            auth=auth_model, tau=0.5, eval_suite=eval_suite,
        )
        defense_suite = defense_addr = None
        if plot_kind == IMPROVED:
            defense_suite, defense_addr = runner.suite(
                corpus, split, auth_model, auth_addr, 0, user, "train_invalid", "defense"
            )
        for n_e in cfg.matrix.n_selected_values:
            beta = cfg.selector.beta if plot_kind == IMPROVED else 0.0
            s_cfg = runner.selector_config(
                n_e, beta, 0, user, "improved" if plot_kind == IMPROVED else "basic"
            )
            bundle, _ = runner.selector_bundle(
                corpus, split, auth_model, auth_addr, s_cfg, defense_suite, defense_addr
            )
            pipeline = make_pipeline(
                bundle, auth_model, cell.tau, cell.train,
                seed=derive_seed(cfg.seed, "background", 0, user),
            )
            roc_data[n_e] = _roc_points(cell, pipeline)
        _emit_plots(out, roc_data, outcomes)

    summary = [
        "configuration hash: %s" % report.config_hash,
        "outcomes: %d  (jobs run %d, cache hits %d)"
        % (len(outcomes), report.jobs_run, report.cache_hits),
        "trend checks:",
    ]
    summary += [
        "  %-45s %s (p=%.4f, +%d/-%d/=%d)"
        % (t.name, "pass" if t.passed else "FAIL", t.p_value, t.wins, t.losses, t.ties)
        for t in trends
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return report


def evaluate_strategy(
    cfg: RunConfig,
    kind: str,
    store: ArtifactStore | None = None,
    progress: Callable | None = None,
) -> ResultsTable:
    """Run (or load) just one strategy across the matrix and tabulate it."""
    runner = _Runner(cfg, store, progress)
    outcomes = []
    for seed_index in range(cfg.matrix.n_seeds):
        corpus, _ = runner.corpus(seed_index)
        for user in corpus.subject_ids[: cfg.matrix.n_users]:
            outcomes.extend(_run_cell(runner, seed_index, user, (kind,)))
    return results_table(outcomes, kind)
