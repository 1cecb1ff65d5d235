"""Embedded reference results from the published evaluation of these defenses.

Per-user accuracy and true-positive-rate rows (18 authenticators, one per
valid user) plus the published comparison matrix of one-tailed paired
t-tests.  They carry no information about this package's own models; they
exist to validate the statistics pipeline end to end: recomputed means must
match the printed means, and recomputed t-tests must reproduce the printed
inequality directions and p-values.
"""

from __future__ import annotations

from dataclasses import dataclass

ACCURACY = "accuracy"
TPR_SCENARIO1 = "tpr_scenario1"
TPR_SCENARIO2 = "tpr_scenario2"

IMPROVED_SELECTOR = "improved_selector"
BASIC_SELECTOR = "basic_selector"
ADV_TRAINING = "adv_training"
DISTILLATION = "distillation"


@dataclass(frozen=True)
class ReferenceRow:
    values: tuple[float, ...]
    printed_mean: float


@dataclass(frozen=True)
class ComparisonCell:
    metric: str
    opponent: str
    n_selected: int
    printed_ours: float
    printed_theirs: float
    printed_p: float


def _row(printed_mean, *values):
    return ReferenceRow(values=tuple(values), printed_mean=printed_mean)


# True positive rate under attack, improved selector.  Row key is the number
# of selected movements; 10 means no selection (the bare authenticator).
IMPROVED_TPR_SCENARIO1 = {
    10: _row(0.048, 0.068, 0.035, 0.13, 0.035, 0, 0.276, 0.085, 0, 0.004, 0, 0.004, 0.087, 0, 0, 0.034, 0.013, 0, 0.087),
    2: _row(0.724, 0.817, 0.667, 0.492, 0.987, 1, 0.874, 0.908, 1, 0.511, 0.667, 0.969, 1, 0.719, 0.307, 0.015, 0.962, 0.143, 0.996),
    3: _row(0.674, 0.909, 0.667, 0.408, 0.948, 1, 0.841, 0.913, 0, 0.473, 1, 0.328, 1, 0.687, 0.903, 0.025, 0.919, 0.126, 0.978),
    4: _row(0.658, 0.908, 0.662, 0.385, 0.974, 0.667, 0.882, 0.894, 1, 0.235, 0.667, 0.333, 1, 0.835, 0.307, 0.024, 0.97, 0.134, 0.965),
    5: _row(0.463, 0.566, 0, 0.667, 0.948, 0.649, 0.118, 0.849, 0, 0.013, 1, 0.313, 1, 0.812, 0.299, 0.004, 0.004, 1, 0.096),
}

IMPROVED_TPR_SCENARIO2 = {
    2: _row(0.384, 0.258, 0.415, 0.229, 1, 0.87, 0.253, 0.499, 0.333, 0.734, 0, 0, 0.571, 0.25, 0, 0.02, 0.329, 0.143, 1),
    3: _row(0.316, 0.272, 0.088, 0.144, 0.758, 0.341, 0.212, 0.585, 0, 0.004, 0.996, 0, 0.556, 0.123, 0.157, 0.034, 0.299, 0.126, 1),
    4: _row(0.303, 0.395, 0.108, 0.177, 0.587, 0.035, 0.301, 0.497, 0.333, 0, 0.494, 0, 0.854, 0.181, 0, 0.02, 0.342, 0.134, 1),
    5: _row(0.284, 0.245, 0.233, 0.532, 0.537, 0.052, 0.118, 0.484, 0, 0.018, 0.973, 0, 0.569, 0.162, 0, 0.004, 0.307, 0.75, 0.122),
}

BASIC_TPR_SCENARIO1 = {
    10: IMPROVED_TPR_SCENARIO1[10],
    2: _row(0.644, 0.817, 0.325, 0.492, 0.987, 1, 0.874, 0.908, 0, 0.424, 0.667, 0.969, 1, 0.719, 0.299, 0.015, 0.962, 0.134, 0.996),
    3: _row(0.614, 0.909, 0.662, 0.408, 0.948, 1, 0.841, 0.913, 0, 0, 1, 0.328, 1, 0.687, 0.299, 0.025, 0.919, 0.143, 0.978),
    4: _row(0.569, 0.908, 0.654, 0.385, 0.974, 0.333, 0.882, 0.894, 0.004, 0.004, 0.667, 0.333, 1, 0.835, 0.281, 0.024, 0.97, 0.126, 0.965),
    5: _row(0.388, 0.566, 0.005, 0.667, 0.948, 0, 0.118, 0.849, 0, 0.271, 1, 0.313, 1, 0.812, 0, 0.004, 0.004, 0.333, 0.096),
}

BASIC_TPR_SCENARIO2 = {
    2: _row(0.317, 0.258, 0.039, 0.229, 1, 0.488, 0.253, 0.499, 0, 0.635, 0, 0, 0.571, 0.25, 0, 0.02, 0.329, 0.134, 1),
    3: _row(0.327, 0.272, 0.135, 0.144, 0.758, 0.607, 0.212, 0.585, 0, 0.022, 0.996, 0, 0.556, 0.123, 0, 0.034, 0.299, 0.143, 1),
    4: _row(0.285, 0.395, 0.151, 0.177, 0.587, 0, 0.301, 0.497, 0.004, 0.009, 0.494, 0, 0.854, 0.181, 0, 0.02, 0.342, 0.126, 1),
    5: _row(0.245, 0.245, 0.005, 0.532, 0.537, 0, 0.118, 0.484, 0, 0.014, 0.973, 0, 0.569, 0.162, 0, 0.004, 0.307, 0.333, 0.122),
}

ADV_TRAINING_ACCURACY = _row(0.876, 0.882, 0.863, 0.788, 0.911, 0.917, 0.894, 0.974, 0.966, 0.873, 0.788, 0.833, 0.882, 0.821, 0.923, 0.833, 0.833, 0.981, 0.807)
ADV_TRAINING_TPR = _row(0.195, 0, 0.061, 0, 0.056, 0.139, 0, 0.014, 0.058, 0, 0.122, 0.991, 0.121, 0.087, 0, 1, 0, 0.004, 0.849)

DISTILLATION_ACCURACY = _row(0.896, 0.871, 0.931, 0.831, 0.953, 0.926, 0.821, 0.931, 0.929, 0.826, 0.857, 0.894, 0.902, 0.784, 0.918, 0.933, 0.898, 1, 0.929)
DISTILLATION_TPR = _row(0.118, 0, 0, 0, 0.265, 0, 1, 0, 0.052, 0.214, 0.346, 0, 0.004, 0, 0, 0.005, 0, 0.004, 0.229)

IMPROVED_ACCURACY = {
    10: _row(0.913, 0.923, 0.911, 0.894, 0.947, 0.962, 0.965, 0.953, 0.918, 0.833, 0.863, 0.91, 0.903, 0.841, 0.922, 0.934, 0.882, 0.966, 0.913),
    2: _row(0.702, 0.613, 0.655, 0.615, 0.641, 0.685, 0.732, 0.621, 0.804, 0.681, 0.653, 0.809, 0.647, 0.549, 0.918, 0.733, 0.729, 0.878, 0.679),
    3: _row(0.751, 0.661, 0.828, 0.708, 0.781, 0.685, 0.857, 0.721, 0.893, 0.71, 0.674, 0.851, 0.647, 0.49, 0.837, 0.717, 0.797, 0.918, 0.749),
    4: _row(0.809, 0.71, 0.862, 0.677, 0.828, 0.815, 0.911, 0.855, 0.857, 0.826, 0.714, 0.872, 0.784, 0.608, 0.898, 0.8, 0.831, 0.898, 0.816),
    5: _row(0.851, 0.855, 0.897, 0.677, 0.859, 0.852, 0.946, 0.972, 0.839, 0.812, 0.735, 0.915, 0.843, 0.667, 0.898, 0.867, 0.881, 0.918, 0.886),
}

BASIC_ACCURACY = {
    10: IMPROVED_ACCURACY[10],
    2: _row(0.717, 0.613, 0.776, 0.615, 0.641, 0.685, 0.732, 0.621, 0.804, 0.638, 0.653, 0.809, 0.647, 0.745, 0.918, 0.733, 0.729, 0.796, 0.75),
    3: _row(0.764, 0.661, 0.845, 0.708, 0.781, 0.667, 0.857, 0.721, 0.786, 0.681, 0.674, 0.851, 0.647, 0.804, 0.857, 0.717, 0.797, 0.898, 0.804),
    4: _row(0.805, 0.71, 0.914, 0.677, 0.828, 0.778, 0.911, 0.855, 0.875, 0.638, 0.714, 0.872, 0.784, 0.726, 0.837, 0.8, 0.831, 0.918, 0.821),
    5: _row(0.852, 0.855, 0.914, 0.677, 0.859, 0.852, 0.946, 0.972, 0.857, 0.797, 0.735, 0.915, 0.843, 0.765, 0.837, 0.867, 0.881, 0.918, 0.839),
}

ALL_TABLES: dict[str, dict] = {
    "improved_selector_tpr_scenario1": IMPROVED_TPR_SCENARIO1,
    "improved_selector_tpr_scenario2": IMPROVED_TPR_SCENARIO2,
    "basic_selector_tpr_scenario1": BASIC_TPR_SCENARIO1,
    "basic_selector_tpr_scenario2": BASIC_TPR_SCENARIO2,
    "adv_training": {"accuracy": ADV_TRAINING_ACCURACY, "tpr": ADV_TRAINING_TPR},
    "distillation": {"accuracy": DISTILLATION_ACCURACY, "tpr": DISTILLATION_TPR},
    "improved_selector_accuracy": IMPROVED_ACCURACY,
    "basic_selector_accuracy": BASIC_ACCURACY,
}


def _cells(metric, opponent, printed):
    ours_mean = {
        (ACCURACY, 2): 0.702, (ACCURACY, 3): 0.751, (ACCURACY, 4): 0.809, (ACCURACY, 5): 0.851,
        (TPR_SCENARIO1, 2): 0.724, (TPR_SCENARIO1, 3): 0.674, (TPR_SCENARIO1, 4): 0.658, (TPR_SCENARIO1, 5): 0.463,
        (TPR_SCENARIO2, 2): 0.384, (TPR_SCENARIO2, 3): 0.316, (TPR_SCENARIO2, 4): 0.303, (TPR_SCENARIO2, 5): 0.284,
    }
    return [
        ComparisonCell(
            metric=metric,
            opponent=opponent,
            n_selected=ne,
            printed_ours=ours_mean[(metric, ne)],
            printed_theirs=theirs,
            printed_p=p,
        )
        for ne, theirs, p in printed
    ]


#: The published comparison grid: improved selector vs each other strategy,
#: one-tailed paired t-test over the 18 per-user values.
COMPARISON_GRID: tuple[ComparisonCell, ...] = tuple(
    _cells(ACCURACY, ADV_TRAINING, [(2, 0.876, 1.992e-07), (3, 0.876, 2.372e-05), (4, 0.876, 5.092e-04), (5, 0.876, 0.106)])
    + _cells(ACCURACY, DISTILLATION, [(2, 0.896, 1.260e-08), (3, 0.896, 9.243e-07), (4, 0.896, 1.749e-05), (5, 0.896, 0.005)])
    + _cells(ACCURACY, BASIC_SELECTOR, [(2, 0.717, 0.161), (3, 0.764, 0.256), (4, 0.805, 0.385), (5, 0.852, 0.468)])
    + _cells(TPR_SCENARIO1, ADV_TRAINING, [(2, 0.195, 1.266e-04), (3, 0.195, 0.001), (4, 0.195, 0.001), (5, 0.195, 0.040)])
    + _cells(TPR_SCENARIO1, DISTILLATION, [(2, 0.118, 9.750e-07), (3, 0.118, 5.431e-06), (4, 0.118, 4.768e-06), (5, 0.118, 0.005)])
    + _cells(TPR_SCENARIO1, BASIC_SELECTOR, [(2, 0.644, 0.090), (3, 0.614, 0.086), (4, 0.569, 0.070), (5, 0.388, 0.094)])
    + _cells(TPR_SCENARIO2, ADV_TRAINING, [(2, 0.195, 0.064), (3, 0.195, 0.144), (4, 0.195, 0.160), (5, 0.195, 0.243)])
    + _cells(TPR_SCENARIO2, DISTILLATION, [(2, 0.118, 0.006), (3, 0.118, 0.016), (4, 0.118, 0.018), (5, 0.118, 0.040)])
    + _cells(TPR_SCENARIO2, BASIC_SELECTOR, [(2, 0.317, 0.029), (3, 0.327, 0.279), (4, 0.285, 0.176), (5, 0.245, 0.074)])
)

#: Cells whose printed p-value is not reproducible from the table's own
#: per-user rows under any standard paired convention (the printed means and
#: inequality directions still hold).  The recomputed p for the worst such
#: cell sits within a factor of two of print.
SOURCE_INCONSISTENT_CELLS: frozenset[tuple[str, str, int]] = frozenset(
    {(ACCURACY, ADV_TRAINING, 4)}
)


def comparison_vectors(cell: ComparisonCell) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-user value vectors (ours, theirs) behind one comparison cell."""
    ours = {
        ACCURACY: IMPROVED_ACCURACY,
        TPR_SCENARIO1: IMPROVED_TPR_SCENARIO1,
        TPR_SCENARIO2: IMPROVED_TPR_SCENARIO2,
    }[cell.metric][cell.n_selected].values
    if cell.opponent == ADV_TRAINING:
        theirs = (ADV_TRAINING_ACCURACY if cell.metric == ACCURACY else ADV_TRAINING_TPR).values
    elif cell.opponent == DISTILLATION:
        theirs = (DISTILLATION_ACCURACY if cell.metric == ACCURACY else DISTILLATION_TPR).values
    else:
        theirs = {
            ACCURACY: BASIC_ACCURACY,
            TPR_SCENARIO1: BASIC_TPR_SCENARIO1,
            TPR_SCENARIO2: BASIC_TPR_SCENARIO2,
        }[cell.metric][cell.n_selected].values
    return ours, theirs


def load_reference_tables() -> dict[str, dict]:
    """All embedded per-user tables keyed by strategy/metric."""
    return ALL_TABLES
