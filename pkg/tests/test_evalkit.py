import time

import numpy as np
import pytest

from mouseguard import evalkit, reference_tables
from mouseguard.evalkit import StrategyOutcome


class TestROC:
    def test_perfect_separation_gives_unit_auc(self):
        curve = evalkit.roc_curve([0.8, 0.9, 0.95], [0.1, 0.2, 0.3])
        assert curve.auc == pytest.approx(1.0)

    def test_identical_distributions_near_half(self):
        # chance level; averaged over draws to tame the ~0.013 sampling std
        rng = np.random.default_rng(0)
        aucs = []
        for _ in range(10):
            scores = rng.uniform(size=2000)
            aucs.append(evalkit.roc_curve(scores[:1000], scores[1000:]).auc)
        assert np.mean(aucs) == pytest.approx(0.5, abs=0.02)

    def test_auc_matches_mann_whitney_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            valid = rng.normal(0.6, 0.2, size=80)
            attack = rng.normal(0.4, 0.25, size=60)
            curve = evalkit.roc_curve(valid, attack)
            # P(attack < valid) + 0.5 P(tie), by exhaustive pairwise comparison
            wins = np.mean(attack[:, None] < valid[None, :])
            ties = np.mean(attack[:, None] == valid[None, :])
            assert curve.auc == pytest.approx(wins + 0.5 * ties, abs=1e-6)

    def test_monotone_after_sorting(self):
        rng = np.random.default_rng(2)
        curve = evalkit.roc_curve(rng.uniform(size=50), rng.uniform(size=50))
        assert all(b >= a for a, b in zip(curve.fpr, curve.fpr[1:]))
        assert all(b >= a for a, b in zip(curve.tpr, curve.tpr[1:]))
        assert 0.0 <= curve.auc <= 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            evalkit.roc_curve([], [0.5])


class TestPairedTTest:
    def test_dominated_comparison_is_significant(self):
        rng = np.random.default_rng(3)
        b = rng.uniform(size=5)
        a = b + 1.0 + rng.normal(0, 1e-3, size=5)
        result = evalkit.paired_t_test_one_tailed(a, b)
        assert result.p_value < 0.01

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            evalkit.paired_t_test_one_tailed([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])

    def test_matches_independent_t_cdf(self):
        # oracle: one-sided p from an independently implemented t CDF (mpmath
        # incomplete beta), checked over random inputs
        import mpmath

        def t_sf(t, df):
            x = df / (df + t * t)
            half = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
            return float(half if t > 0 else 1 - half)

        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(3, 25))
            a = rng.normal(0.2, 1.0, size=n)
            b = rng.normal(0.0, 1.0, size=n)
            result = evalkit.paired_t_test_one_tailed(a, b)
            assert result.p_value == pytest.approx(t_sf(result.statistic, n - 1), abs=1e-6)

    def test_reproduces_reference_cell(self):
        ours = reference_tables.IMPROVED_TPR_SCENARIO1[2].values
        theirs = reference_tables.ADV_TRAINING_TPR.values
        result = evalkit.paired_t_test_one_tailed(ours, theirs)
        assert result.p_value == pytest.approx(1.266e-04, rel=0.5)


class TestSignTest:
    def test_counts_and_p(self):
        r = evalkit.sign_test([1.0, 2.0, -0.5, 3.0, 0.0])
        assert (r.wins, r.losses, r.ties) == (3, 1, 1)
        assert 0.0 < r.p_value < 1.0

    def test_margin(self):
        r = evalkit.sign_test([0.35, 0.25, 0.4], margin=0.3)
        assert (r.wins, r.losses) == (2, 1)

    def test_all_wins_small_p(self):
        assert evalkit.sign_test([1.0] * 10).p_value == pytest.approx(0.5**10, rel=1e-9)

    def test_no_information(self):
        assert evalkit.sign_test([0.0, 0.0]).p_value == 1.0


class TestReferenceValidation:
    def test_everything_reproduces_within_tolerances(self):
        start = time.monotonic()
        validation = evalkit.validate_reference_statistics()
        elapsed = time.monotonic() - start
        assert elapsed < 10.0
        assert validation.all_means_ok
        assert validation.all_directions_ok
        assert validation.all_consistent_cells_ok
        assert validation.inconsistent_cells_bounded
        assert validation.ok

    def test_specific_published_means(self):
        rows = {(c.table, c.row): c for c in evalkit.validate_reference_statistics().mean_checks}
        expect = {
            ("improved_selector_tpr_scenario1", "2"): 0.724,
            ("improved_selector_tpr_scenario1", "10"): 0.048,
            ("basic_selector_tpr_scenario1", "2"): 0.644,
            ("basic_selector_tpr_scenario1", "5"): 0.388,
            ("adv_training", "accuracy"): 0.876,
            ("adv_training", "tpr"): 0.195,
            ("distillation", "accuracy"): 0.896,
            ("distillation", "tpr"): 0.118,
            ("improved_selector_accuracy", "10"): 0.913,
            ("improved_selector_accuracy", "5"): 0.851,
            ("basic_selector_accuracy", "4"): 0.805,
            ("basic_selector_accuracy", "2"): 0.717,
        }
        for key, printed in expect.items():
            check = rows[key]
            assert check.printed == printed
            assert abs(check.recomputed - printed) <= 1e-3

    def test_only_the_known_cell_is_inconsistent(self):
        validation = evalkit.validate_reference_statistics()
        flagged = [
            (c.metric, c.opponent, c.n_selected)
            for c in validation.cell_checks
            if not c.p_ok
        ]
        assert set(flagged) <= set(reference_tables.SOURCE_INCONSISTENT_CELLS)
        assert len(validation.cell_checks) == 36

    def test_report_renders(self):
        text = evalkit.format_reference_report(evalkit.validate_reference_statistics())
        assert "PASS" in text


def _outcome(user, seed, kind, ne, acc, tpr1, tpr2=None, clean=0.9):
    return StrategyOutcome(
        user=user, seed_index=seed, kind=kind, n_selected=ne,
        accuracy=acc, clean_rejection=clean, tpr_scenario1=tpr1, tpr_scenario2=tpr2,
    )


def _synthetic_outcomes():
    rng = np.random.default_rng(0)
    outcomes = []
    for user in ("u0", "u1", "u2", "u3", "u4"):
        for seed in range(5):
            j = rng.normal(0, 0.01)
            outcomes.append(_outcome(user, seed, "none", None, 0.95 + j, 0.05 + abs(j), clean=0.9))
            outcomes.append(_outcome(user, seed, "adv_training", None, 0.88 + j, 0.2 + j))
            outcomes.append(_outcome(user, seed, "distillation", None, 0.9 + j, 0.12 + j))
            for ne in (2, 3, 4, 5):
                base_acc = 0.6 + 0.05 * ne
                outcomes.append(
                    _outcome(user, seed, "basic_selector", ne, base_acc + j, 0.6 - 0.04 * ne + j, 0.3 + j)
                )
                outcomes.append(
                    _outcome(user, seed, "improved_selector", ne, base_acc - 0.01 + j, 0.7 - 0.04 * ne + j, 0.35 + j)
                )
    return outcomes


class TestAggregation:
    def test_results_table_mean_is_mean_of_rows(self):
        outcomes = _synthetic_outcomes()
        for kind in ("none", "basic_selector", "improved_selector", "adv_training"):
            table = evalkit.results_table(outcomes, kind)
            assert table.rows
            for row in table.rows:
                assert row["mean"] == pytest.approx(
                    np.mean(list(row["per_user"].values())), abs=1e-9
                )

    def test_reference_table_means_equal_row_means(self):
        for table in reference_tables.load_reference_tables().values():
            for row in table.values():
                assert np.mean(row.values) == pytest.approx(
                    np.mean(np.asarray(row.values)), abs=1e-12
                )

    def test_trend_report_on_constructed_outcomes(self):
        trends = {t.name: t for t in evalkit.trend_report(_synthetic_outcomes(), (2, 3, 4, 5))}
        assert trends["attack_collapses_undefended_tpr_by_margin"].passed
        assert trends["improved_selector_tpr_above_basic"].passed
        assert trends["improved_selector_tpr_above_adv_training"].passed
        assert trends["basic_selector_tpr_above_distillation"].passed
        assert trends["accuracy_grows_with_selection_basic_selector"].passed
        assert trends["scenario2_attack_stronger_improved_selector"].passed

    def test_comparison_matrix_covers_the_grid(self):
        rows = evalkit.comparison_matrix(_synthetic_outcomes(), (2, 3, 4, 5))
        keys = {(r["metric"], r["opponent"], r["n_selected"]) for r in rows}
        assert len(keys) == 36  # 3 metrics x 3 opponents x 4 sizes
        for r in rows:
            assert r["direction"] in (">", "<")
            assert r["n_pairs"] == 5
