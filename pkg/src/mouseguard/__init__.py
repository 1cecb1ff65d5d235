"""Mask-based defense toolkit for mouse-dynamics authentication.

Trains behavioral authenticators on synthetic mouse trajectories, mounts
physically-constrained white-box attacks against them, and defends with an
instance-wise movement selector (basic and attack-aware variants) compared
against adversarial training and defensive distillation.
"""

from .adversary import (
    AdversarialSample,
    AttackGenerator,
    AttackSuite,
    AttackTrainConfig,
    generate_adversarial_sample,
    select_attack_scenario1,
    select_attack_scenario2,
    tpr_under_attack,
    train_attack_generator,
    train_attack_suite,
)
from .authenticator import (
    AuthenticatorModel,
    AuthTrainConfig,
    DecisionThreshold,
    accuracy,
    balanced_accuracy,
    calibrate_threshold,
    score,
    train_authenticator,
)
from .baselines import (
    DistillationConfig,
    DistillationResult,
    adversarial_training,
    defensive_distillation,
)
from .config import RunConfig, config_hash, dump_config, parse_config
from .data_synth import (
    Corpus,
    DatasetSplit,
    SubjectProfile,
    TaskPattern,
    Trial,
    load_corpus,
    make_profiles,
    make_split,
    positions_from_velocities,
    save_corpus,
    synthesize_corpus,
    velocities_from_raw,
)
from .evalkit import (
    ROCCurve,
    paired_t_test_one_tailed,
    roc_curve,
    run_full_experiment,
    sign_test,
    trend_report,
    validate_reference_statistics,
)
from .physical_noise import (
    NoiseModel,
    accumulated_sigma,
    apply_replication_noise,
    expected_abs_gaussian,
    mean_distance_coefficient,
    sigma_for_movement,
)
from .selector import (
    BetaCandidate,
    ComposedPipeline,
    SelectorBundle,
    SelectorTrainConfig,
    apply_bottleneck,
    authenticate_with_selector,
    choose_beta,
    make_pipeline,
    sample_background,
    select_mask,
    selector_losses,
    train_basic_selector,
    train_improved_selector,
)
from .store import ArtifactStore

__version__ = "0.1.0"
