"""Run configuration: a typed tree with a flat ``key = value`` text format.

The file format is one dotted key per line (``selector.steps = 400``);
unknown keys and badly typed values are rejected with the full key path.
Environment variables prefixed ``MOUSEGUARD_`` override file values
(``MOUSEGUARD_MATRIX__N_SEEDS=3`` sets ``matrix.n_seeds``), and explicit
overrides beat both.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import AttackTrainConfig
from .authenticator import AuthTrainConfig
from .baselines import DistillationConfig
from .data_synth import DEFAULT_WAYPOINTS, TaskPattern

ENV_PREFIX = "MOUSEGUARD_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusConfig:
    n_subjects: int = 8
    trials_per_subject: int = 66
    n_attackers: int = 3
    n_movements: int = 10
    movement_length: int = 160
    sample_period: float = 0.01
    speed_spread: float = 0.45
    curvature_spread: float = 0.35
    tremor_low: float = 4.0
    tremor_high: float = 18.0
    jitter_low: float = 0.01
    jitter_high: float = 0.05

    def pattern(self) -> TaskPattern:
        return TaskPattern(
            waypoints=default_waypoints(self.n_movements),
            movement_length=self.movement_length,
            sample_period=self.sample_period,
        )

    def profile_kwargs(self) -> dict:
        return {
            "speed_spread": self.speed_spread,
            "curvature_spread": self.curvature_spread,
            "tremor_range": (self.tremor_low, self.tremor_high),
            "jitter_range": (self.jitter_low, self.jitter_high),
        }


def default_waypoints(n_movements: int) -> tuple[tuple[float, float], ...]:
    """The standard 10-movement task, or a generated zig-zag for other sizes."""
    if n_movements == len(DEFAULT_WAYPOINTS) - 1:
        return DEFAULT_WAYPOINTS
    xs = np.linspace(100.0, 900.0, n_movements + 1)
    ys = np.where(np.arange(n_movements + 1) % 2 == 0, 500.0, 120.0)
    return tuple((float(x), float(y)) for x, y in zip(xs, ys))


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.6
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.train_fraction < 1 or not 0 <= self.val_fraction < 1:
            raise ConfigError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.val_fraction >= 1:
            raise ConfigError("train + val fraction must leave room for test")


@dataclass(frozen=True)
class NoiseConfig:
    tracking_ratio: float = 8.0
    speed_convention: str = "magnitude"
    practice_factor: float = 1.0


@dataclass(frozen=True)
class SelectorSettings:
    """Selector training knobs shared across the experiment matrix.

    ``beta`` is the adversarial-loss weight used when ``beta_grid`` is empty;
    a nonempty grid switches the runner to per-job beta selection against
    the basic selector's validation accuracy.
    """

    steps: int = 400
    batch_size: int = 32
    lr_selector: float = 5e-4
    lr_reconstruction: float = 1e-4
    beta: float = 1.0
    beta_grid: tuple[float, ...] = ()
    accuracy_floor: float = 0.95
    temperature_start: float = 2.0
    temperature_end: float = 0.05
    scale: str = "desk"


@dataclass(frozen=True)
class AdvTrainingSettings:
    ratio: float = 1.0


@dataclass(frozen=True)
class EvalConfig:
    noise_draws: int = 100
    threshold_mode: str = "default"


@dataclass(frozen=True)
class MatrixConfig:
    n_users: int = 5
    n_seeds: int = 5
    n_selected_values: tuple[int, ...] = (2, 3, 4, 5)
    strategies: tuple[str, ...] = (
        "none",
        "basic_selector",
        "improved_selector",
        "adv_training",
        "distillation",
    )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    out_dir: str = "runs/out"
    store_dir: str = "runs/store"
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    authenticator: AuthTrainConfig = field(default_factory=AuthTrainConfig)
    attack: AttackTrainConfig = field(default_factory=AttackTrainConfig)
    selector: SelectorSettings = field(default_factory=SelectorSettings)
    distillation: DistillationConfig = field(default_factory=DistillationConfig)
    adv_training: AdvTrainingSettings = field(default_factory=AdvTrainingSettings)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    matrix: MatrixConfig = field(default_factory=MatrixConfig)

    def noise_model(self):
        from .physical_noise import NoiseModel

        return NoiseModel(
            movement_length=self.corpus.movement_length,
            tracking_ratio=self.noise.tracking_ratio,
            speed_convention=self.noise.speed_convention,
            practice_factor=self.noise.practice_factor,
        )


# ---------------------------------------------------------------------------
# flat key parsing


def _leaf_fields(cls, prefix="") -> dict[str, tuple]:
    """Map dotted key -> (path tuple, declared type)."""
    out = {}
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(tp):
            out.update(_leaf_fields(tp, prefix=key + "."))
        else:
            out[key] = (tuple(key.split(".")), tp)
    return out


def _parse_value(key: str, text: str, tp):
    text = text.strip()
    origin = typing.get_origin(tp)
    try:
        if origin in (tuple, list):
            args = typing.get_args(tp)
            inner = args[0] if args else str
            if text in ("", "()"):
                return ()
            return tuple(_parse_value(key, part, inner) for part in text.split(","))
        if tp is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: expected {getattr(tp, '__name__', tp)}, got {text!r}") from exc
    raise ConfigError(f"config key {key!r} has unsupported type {tp!r}")


def _build(cls, values: dict[str, object], prefix=""):
    kwargs = {}
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, values, prefix=key + ".")
        elif key in values:
            kwargs[f.name] = values[key]
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration for {cls.__name__}: {exc}") from exc


def parse_config(
    path=None,
    overrides: dict[str, str] | list[str] | None = None,
    use_env: bool = True,
) -> RunConfig:
    """Resolve a RunConfig from (file, environment, explicit overrides).

    Later sources win; an empty file yields all defaults.
    """
    schema = _leaf_fields(RunConfig)
    raw: dict[str, str] = {}

    if path is not None:
        for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            raw[key.strip()] = value

    if use_env:
        for name, value in os.environ.items():
            if name.startswith(ENV_PREFIX):
                key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
                raw[key] = value

    if overrides:
        if isinstance(overrides, dict):
            for key, value in overrides.items():
                raw[key] = str(value)
        else:
            for entry in overrides:
                if "=" not in entry:
                    raise ConfigError(f"override {entry!r} must look like key=value")
                key, _, value = entry.partition("=")
                raw[key.strip()] = value

    values = {}
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}")
        _, tp = schema[key]
        values[key] = _parse_value(key, str(text), tp)
    return _build(RunConfig, values)


def dump_config(cfg: RunConfig) -> str:
    """Deterministic flat text form; parse_config(dump_config(c)) == c."""
    lines = []

    def emit(obj, prefix=""):
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if dataclasses.is_dataclass(value):
                emit(value, prefix=key + ".")
            elif isinstance(value, tuple):
                lines.append(f"{key} = {','.join(str(v) for v in value)}")
            else:
                lines.append(f"{key} = {value}")

    emit(cfg)
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:16]
