"""Replication-noise model for physically executed adversarial movements.

A generated adversarial movement has to be replayed by a human attacker who
tracks a target cursor.  The discrepancy is modeled as i.i.d. Gaussian noise
on every velocity sample, with a standard deviation tied to the movement's
own average speed:

    sigma = mean_speed / (tracking_ratio * c(L)),   c(L) = (0.8 / L) * sum_i sqrt(i)

where the tracking ratio (speed over average position error, default 8) and
the 0.8 coefficient come from mean absolute deviation of a Gaussian,
E|N(0, s^2)| = sqrt(2/pi) * s ~= 0.8 s, accumulated over the L-step random
walk that per-sample velocity noise induces in position space.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


def expected_abs_gaussian(sigma_p: float) -> float:
    """Mean absolute value of a centered Gaussian with std ``sigma_p``."""
    if sigma_p < 0:
        raise ValueError("sigma_p must be >= 0")
    return SQRT_2_OVER_PI * sigma_p


def accumulated_sigma(i: int, sigma: float) -> float:
    """Position-error std after ``i`` steps of per-step velocity noise ``sigma``."""
    if i < 1:
        raise ValueError("sample index must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return float(np.sqrt(i) * sigma)


@lru_cache(maxsize=None)
def mean_distance_coefficient(length: int) -> float:
    """c(L): mean position error over an L-sample movement, in units of sigma."""
    if length < 1:
        raise ValueError("movement length must be >= 1")
    return float(0.8 / length * np.sum(np.sqrt(np.arange(1, length + 1))))


def mean_speed(movement: np.ndarray, convention: str = "magnitude") -> float:
    """Average speed of a ``(L, 2)`` velocity block.

    ``magnitude`` averages Euclidean speeds; ``per_coordinate`` averages the
    absolute per-axis velocities instead.
    """
    vel = np.asarray(movement, dtype=float)
    if vel.ndim != 2 or vel.shape[1] != 2 or len(vel) == 0:
        raise ValueError("movement must be a nonempty (L, 2) array")
    if convention == "magnitude":
        return float(np.mean(np.linalg.norm(vel, axis=1)))
    if convention == "per_coordinate":
        return float(np.mean(np.abs(vel)))
    raise ValueError(f"unknown speed convention {convention!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Replication-noise rule for a task with movements of a fixed length.

    ``practice_factor`` scales sigma globally (an attacker with extensive
    practice replicates more faithfully; < 1 shrinks the noise).
    """

    movement_length: int
    tracking_ratio: float = 8.0
    speed_convention: str = "magnitude"
    practice_factor: float = 1.0

    def __post_init__(self):
        if self.movement_length < 1:
            raise ValueError("movement length must be >= 1")
        if self.tracking_ratio <= 0:
            raise ValueError("tracking ratio must be positive")
        if self.practice_factor < 0:
            raise ValueError("practice factor must be >= 0")
        mean_speed(np.zeros((1, 2)), self.speed_convention)  # validate convention

    @property
    def coefficient(self) -> float:
        return mean_distance_coefficient(self.movement_length)

    @property
    def sigma_per_speed(self) -> float:
        """sigma / mean_speed; ~0.0184 for the default 160-sample movements."""
        return self.practice_factor / (self.tracking_ratio * self.coefficient)

    def sigma_for_movement(self, movement: np.ndarray) -> float:
        return sigma_for_movement(
            movement,
            tracking_ratio=self.tracking_ratio,
            speed_convention=self.speed_convention,
            practice_factor=self.practice_factor,
        )


def sigma_for_movement(
    movement: np.ndarray,
    *,
    tracking_ratio: float = 8.0,
    speed_convention: str = "magnitude",
    practice_factor: float = 1.0,
) -> float:
    """Replication-noise std for one movement, from its own average speed."""
    vel = np.asarray(movement, dtype=float)
    v_bar = mean_speed(vel, speed_convention)
    if v_bar == 0.0:
        raise ValueError("zero average speed gives no replication scale")
    length = len(vel)
    return practice_factor * v_bar / (tracking_ratio * mean_distance_coefficient(length))


def apply_replication_noise(
    movement: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Fresh i.i.d. Gaussian perturbation of every velocity component."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    vel = np.asarray(movement, dtype=float)
    if sigma == 0.0:
        return vel.copy()
    return vel + rng.normal(0.0, sigma, size=vel.shape)


def simulate_tracking_error(
    length: int,
    sigma: float,
    n_movements: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo mean absolute position error of noisy velocity tracking.

    Draws per-step velocity noise, accumulates it into position errors and
    averages |error| over samples and movements; converges to
    ``mean_distance_coefficient(length) * sigma``.
    """
    noise = rng.normal(0.0, sigma, size=(n_movements, length))
    position_error = np.cumsum(noise, axis=1)
    return float(np.mean(np.abs(position_error)))
