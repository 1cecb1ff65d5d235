"""Synthetic mouse-behavior corpus: generation, preprocessing, splits, and IO.

One authentication attempt ("trial") is a fixed task of ``n_movements``
consecutive cursor movements between known waypoints.  Each movement is a
velocity sequence of exactly ``movement_length`` samples, stored as an array
of shape ``(movement_length, 2)`` in px/s.  A trial stores its movements as
one ``(n_movements, movement_length, 2)`` array.

Subjects are simulated as minimum-jerk movers whose per-movement speed
scaling, path curvature, tremor level, and timing wobble differ, so a
classifier can tell them apart while their trial-to-trial variability stays
movement dependent.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .seeding import derive_seed

VALID = "valid"
INVALID = "invalid"

#: Default login task: 10 movements over a zig-zag pattern on a 1000x600 screen.
DEFAULT_WAYPOINTS: tuple[tuple[float, float], ...] = (
    (100.0, 500.0),
    (320.0, 120.0),
    (540.0, 500.0),
    (760.0, 120.0),
    (920.0, 480.0),
    (920.0, 120.0),
    (700.0, 500.0),
    (480.0, 140.0),
    (260.0, 500.0),
    (120.0, 140.0),
    (520.0, 320.0),
)


class CaptureError(ValueError):
    """Raw capture cannot be converted (too short or broken timestamps)."""


class CorpusFormatError(ValueError):
    """A corpus file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TaskPattern:
    """The fixed login task every subject performs."""

    waypoints: tuple[tuple[float, float], ...] = DEFAULT_WAYPOINTS
    movement_length: int = 160
    sample_period: float = 0.01

    def __post_init__(self):
        if self.n_movements < 1:
            raise ValueError("pattern needs at least one movement")
        if self.movement_length < 2:
            raise ValueError("movement_length must be >= 2")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        pts = np.asarray(self.waypoints, dtype=float)
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
            raise ValueError("consecutive waypoints must be distinct")

    @property
    def n_movements(self) -> int:
        return len(self.waypoints) - 1

    @property
    def n_features(self) -> int:
        """Flattened feature count of one trial (2 channels x total samples)."""
        return 2 * self.n_movements * self.movement_length


@dataclass(frozen=True)
class SubjectProfile:
    """Parameters of one simulated subject.

    ``speed_scales`` has one entry per movement; ``tremor_amplitude`` (px/s)
    and ``timing_jitter`` are the only sources of trial-to-trial randomness.
    """

    subject_id: str
    speed_scales: tuple[float, ...]
    curvature_bias: float
    tremor_amplitude: float
    timing_jitter: float
    seed: int

    def __post_init__(self):
        if any(s <= 0 for s in self.speed_scales):
            raise ValueError("speed scales must be positive")
        if self.tremor_amplitude < 0:
            raise ValueError("tremor amplitude must be >= 0")
        if self.timing_jitter < 0:
            raise ValueError("timing jitter must be >= 0")


@dataclass
class Trial:
    subject_id: str
    trial_id: int
    movements: np.ndarray  # (n_movements, movement_length, 2) px/s
    label: str | None = None

    def __post_init__(self):
        self.movements = np.asarray(self.movements, dtype=float)
        if self.movements.ndim != 3 or self.movements.shape[2] != 2:
            raise ValueError("movements must have shape (n_movements, L, 2)")
        if not np.all(np.isfinite(self.movements)):
            raise ValueError("movement velocities must be finite")

    def __eq__(self, other):
        if not isinstance(other, Trial):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.trial_id == other.trial_id
            and self.label == other.label
            and self.movements.shape == other.movements.shape
            and np.array_equal(self.movements, other.movements)
        )

    def flat(self) -> np.ndarray:
        """Channel-major layout ``(2, n_movements * L)`` used by the models."""
        return np.ascontiguousarray(self.movements.transpose(2, 0, 1).reshape(2, -1))


def flat_to_movements(flat: np.ndarray, n_movements: int) -> np.ndarray:
    """Inverse of :meth:`Trial.flat`."""
    flat = np.asarray(flat)
    length = flat.shape[1] // n_movements
    return np.ascontiguousarray(flat.reshape(2, n_movements, length).transpose(1, 2, 0))


def trials_to_batch(trials: Sequence[Trial]) -> np.ndarray:
    """Stack trials into a ``(B, 2, n_movements * L)`` array."""
    return np.stack([t.flat() for t in trials])


@dataclass
class Corpus:
    pattern: TaskPattern
    trials: list[Trial]
    seed: int | None = None
    units: str = "px/s"

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.pattern == other.pattern
            and self.seed == other.seed
            and self.units == other.units
            and len(self.trials) == len(other.trials)
            and all(a == b for a, b in zip(self.trials, other.trials))
        )

    @property
    def subject_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.trials:
            seen.setdefault(t.subject_id, None)
        return list(seen)

    def trials_of(self, subject_id: str) -> list[Trial]:
        return [t for t in self.trials if t.subject_id == subject_id]


@dataclass(frozen=True)
class DatasetSplit:
    """Train/val/test trial indices for one valid-user authenticator."""

    valid_user: str
    invalid_users: tuple[str, ...]
    attacker_ids: tuple[str, ...]
    train_indices: tuple[int, ...]
    val_indices: tuple[int, ...]
    test_indices: tuple[int, ...]

    def __post_init__(self):
        known = {self.valid_user, *self.invalid_users}
        if known & set(self.attacker_ids):
            raise ValueError("attacker ids must be disjoint from valid/invalid users")
        parts = [set(self.train_indices), set(self.val_indices), set(self.test_indices)]
        if len(parts[0] | parts[1] | parts[2]) != sum(len(p) for p in parts):
            raise ValueError("train/val/test indices must be disjoint")


# ---------------------------------------------------------------------------
# preprocessing


def velocities_from_raw(raw: Sequence[tuple[float, float, float]]) -> np.ndarray:
    """Finite-difference velocities from raw ``(x, y, t)`` capture points.

    Returns ``(n-1, 2)``; sample ``i`` is ``(p[i+1] - p[i]) / (t[i+1] - t[i])``.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise CaptureError("raw capture must be a sequence of (x, y, t) points")
    if len(arr) < 2:
        raise CaptureError("need at least two capture points to differentiate")
    dt = np.diff(arr[:, 2])
    if np.any(dt <= 0):
        raise CaptureError("timestamps must be strictly increasing")
    return np.diff(arr[:, :2], axis=0) / dt[:, None]


def positions_from_velocities(
    velocities: np.ndarray,
    origin: tuple[float, float],
    sample_period: float,
) -> np.ndarray:
    """Cumulatively integrate velocities; returns the position after each step."""
    vel = np.asarray(velocities, dtype=float)
    if not np.all(np.isfinite(vel)):
        raise ValueError("velocities must be finite")
    return np.asarray(origin, dtype=float) + np.cumsum(vel * sample_period, axis=0)


# ---------------------------------------------------------------------------
# synthesis


def make_profiles(
    n_subjects: int,
    n_movements: int,
    seed: int,
    *,
    speed_spread: float = 0.45,
    curvature_spread: float = 0.35,
    tremor_range: tuple[float, float] = (4.0, 18.0),
    jitter_range: tuple[float, float] = (0.01, 0.05),
) -> list[SubjectProfile]:
    """Draw subject profiles; the same seed always yields the same profiles."""
    profiles = []
    for k in range(n_subjects):
        sid_seed = derive_seed(seed, "profile", k)
        rng = np.random.default_rng(sid_seed)
        scales = np.exp(rng.normal(0.0, speed_spread, size=n_movements))
        profiles.append(
            SubjectProfile(
                subject_id=f"s{k}",
                speed_scales=tuple(float(s) for s in scales),
                curvature_bias=float(rng.normal(0.0, curvature_spread)),
                tremor_amplitude=float(rng.uniform(*tremor_range)),
                timing_jitter=float(rng.uniform(*jitter_range)),
                seed=sid_seed,
            )
        )
    return profiles


def _minimum_jerk_fraction(tau: np.ndarray) -> np.ndarray:
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


def _synthesize_movement(
    start: np.ndarray,
    end: np.ndarray,
    length: int,
    sample_period: float,
    speed_scale: float,
    curvature_bias: float,
    tremor_amplitude: float,
    timing_jitter: float,
    rng: np.random.Generator,
) -> np.ndarray:
    delta = end - start
    dist = float(np.linalg.norm(delta))
    perp = np.array([-delta[1], delta[0]]) / dist

    # trial-level wobble: time-warp skews the velocity peak, the speed factor
    # scales the whole profile; both vanish when timing_jitter == 0
    warp = float(np.exp(timing_jitter * rng.standard_normal()))
    wobble = float(np.exp(timing_jitter * rng.standard_normal()))

    tau = np.linspace(0.0, 1.0, length + 1) ** warp
    along = _minimum_jerk_fraction(tau)
    lateral = curvature_bias * 0.12 * dist * np.sin(np.pi * tau)
    path = start + delta * along[:, None] + perp * lateral[:, None]

    vel = np.diff(path, axis=0) / sample_period * (speed_scale * wobble)
    if tremor_amplitude > 0:
        vel = vel + tremor_amplitude * rng.standard_normal(vel.shape)
    return vel


def synthesize_trial(
    pattern: TaskPattern,
    profile: SubjectProfile,
    trial_id: int,
    corpus_seed: int,
) -> Trial:
    """One deterministic trial; randomness is keyed on (corpus, subject, trial)."""
    rng = np.random.default_rng(derive_seed(corpus_seed, profile.subject_id, trial_id))
    pts = np.asarray(pattern.waypoints, dtype=float)
    movements = np.empty((pattern.n_movements, pattern.movement_length, 2))
    for m in range(pattern.n_movements):
        movements[m] = _synthesize_movement(
            pts[m],
            pts[m + 1],
            pattern.movement_length,
            pattern.sample_period,
            profile.speed_scales[m],
            profile.curvature_bias,
            profile.tremor_amplitude,
            profile.timing_jitter,
            rng,
        )
    return Trial(subject_id=profile.subject_id, trial_id=trial_id, movements=movements)


def synthesize_corpus(
    pattern: TaskPattern,
    n_subjects: int,
    trials_per_subject: int,
    seed: int,
    profiles: Sequence[SubjectProfile] | None = None,
    **profile_kwargs,
) -> Corpus:
    """Generate a multi-subject corpus; a pure function of its arguments."""
    if n_subjects < 5:
        raise ValueError("need at least 5 subjects (valid + invalid + attackers)")
    if trials_per_subject < 10:
        raise ValueError("need at least 10 trials per subject")
    if profiles is None:
        profiles = make_profiles(n_subjects, pattern.n_movements, seed, **profile_kwargs)
    elif len(profiles) != n_subjects:
        raise ValueError("got %d profiles for %d subjects" % (len(profiles), n_subjects))
    trials = [
        synthesize_trial(pattern, prof, k, seed)
        for prof in profiles
        for k in range(trials_per_subject)
    ]
    return Corpus(pattern=pattern, trials=trials, seed=seed)


# ---------------------------------------------------------------------------
# splits and labels


def make_split(
    corpus: Corpus,
    valid_user: str,
    n_attackers: int,
    *,
    train_fraction: float = 0.6,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> DatasetSplit:
    """Reserve the last ``n_attackers`` subjects, stratify the rest per subject."""
    subjects = corpus.subject_ids
    if len(subjects) < n_attackers + 2:
        raise ValueError("too few subjects for %d attackers" % n_attackers)
    attackers = tuple(subjects[-n_attackers:]) if n_attackers else ()
    if valid_user in attackers:
        raise ValueError("valid user %r is reserved as an attacker" % valid_user)
    if valid_user not in subjects:
        raise ValueError("unknown valid user %r" % valid_user)
    invalid = tuple(s for s in subjects if s != valid_user and s not in attackers)

    by_subject: dict[str, list[int]] = {}
    for i, t in enumerate(corpus.trials):
        by_subject.setdefault(t.subject_id, []).append(i)

    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    for s in (valid_user, *invalid):
        idx = np.array(by_subject[s])
        order = np.random.default_rng(derive_seed(seed, "split", s)).permutation(len(idx))
        idx = idx[order]
        n_train = int(round(train_fraction * len(idx)))
        n_val = int(round(val_fraction * len(idx)))
        train.extend(idx[:n_train])
        val.extend(idx[n_train : n_train + n_val])
        test.extend(idx[n_train + n_val :])
    return DatasetSplit(
        valid_user=valid_user,
        invalid_users=invalid,
        attacker_ids=attackers,
        train_indices=tuple(sorted(train)),
        val_indices=tuple(sorted(val)),
        test_indices=tuple(sorted(test)),
    )


def label_trials(trials: Iterable[Trial], valid_user: str) -> list[Trial]:
    """Copies of ``trials`` labeled valid/invalid relative to ``valid_user``."""
    return [
        dataclasses.replace(t, label=VALID if t.subject_id == valid_user else INVALID)
        for t in trials
    ]


def split_trials(corpus: Corpus, split: DatasetSplit, part: str) -> list[Trial]:
    """Labeled trials of one partition ('train', 'val' or 'test')."""
    indices = {
        "train": split.train_indices,
        "val": split.val_indices,
        "test": split.test_indices,
    }[part]
    return label_trials((corpus.trials[i] for i in indices), split.valid_user)


def attacker_trials(corpus: Corpus, split: DatasetSplit) -> list[Trial]:
    att = set(split.attacker_ids)
    return label_trials((t for t in corpus.trials if t.subject_id in att), split.valid_user)


# ---------------------------------------------------------------------------
# persistence


def save_corpus(path, corpus: Corpus) -> None:
    """Write one manifest line followed by one JSON record per trial."""
    with open(path, "w", encoding="utf-8") as fh:
        manifest = {
            "record": "manifest",
            "version": 1,
            "units": corpus.units,
            "seed": corpus.seed,
            "n_trials": len(corpus.trials),
            "pattern": {
                "waypoints": [list(p) for p in corpus.pattern.waypoints],
                "movement_length": corpus.pattern.movement_length,
                "sample_period": corpus.pattern.sample_period,
            },
        }
        fh.write(json.dumps(manifest) + "\n")
        for t in corpus.trials:
            rec = {
                "record": "trial",
                "subject_id": t.subject_id,
                "trial_id": t.trial_id,
                "movements": t.movements.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_corpus(path) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorpusFormatError("empty corpus file", 1)

    def parse(line_no: int, text: str) -> dict:
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(str(exc), line_no) from exc
        if not isinstance(rec, dict) or "record" not in rec:
            raise CorpusFormatError("expected an object with a 'record' field", line_no)
        return rec

    manifest = parse(1, lines[0])
    if manifest.get("record") != "manifest":
        raise CorpusFormatError("first record must be the manifest", 1)
    try:
        pat = manifest["pattern"]
        pattern = TaskPattern(
            waypoints=tuple(tuple(p) for p in pat["waypoints"]),
            movement_length=int(pat["movement_length"]),
            sample_period=float(pat["sample_period"]),
        )
        n_trials = int(manifest["n_trials"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"bad manifest: {exc}", 1) from exc

    trials = []
    for line_no, text in enumerate(lines[1:], start=2):
        rec = parse(line_no, text)
        if rec.get("record") != "trial":
            raise CorpusFormatError(f"unexpected record type {rec.get('record')!r}", line_no)
        try:
            movements = np.asarray(rec["movements"], dtype=float)
            trial = Trial(
                subject_id=rec["subject_id"],
                trial_id=int(rec["trial_id"]),
                movements=movements,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"bad trial record: {exc}", line_no) from exc
        if movements.shape[:2] != (pattern.n_movements, pattern.movement_length):
            raise CorpusFormatError(
                "trial shape %s does not match the manifest pattern" % (movements.shape,),
                line_no,
            )
        trials.append(trial)
    if len(trials) != n_trials:
        raise CorpusFormatError(
            f"manifest promises {n_trials} trials but file has {len(trials)} (truncated?)",
            len(lines),
        )
    return Corpus(
        pattern=pattern,
        trials=trials,
        seed=manifest.get("seed"),
        units=manifest.get("units", "px/s"),
    )
