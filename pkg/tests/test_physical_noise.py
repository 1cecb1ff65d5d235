import numpy as np
import pytest

from mouseguard import physical_noise as pn


def test_expected_abs_gaussian_matches_closed_form():
    assert pn.expected_abs_gaussian(1.0) == pytest.approx(0.7979, abs=1e-4)
    assert pn.expected_abs_gaussian(0.0) == 0.0
    with pytest.raises(ValueError):
        pn.expected_abs_gaussian(-0.1)


def test_expected_abs_gaussian_monte_carlo_oracle():
    rng = np.random.default_rng(0)
    draws = np.abs(rng.normal(0.0, 2.5, size=1_000_000))
    assert draws.mean() == pytest.approx(pn.expected_abs_gaussian(2.5), rel=0.005)


def test_accumulated_sigma_values():
    assert pn.accumulated_sigma(4, 0.5) == pytest.approx(1.0)
    assert pn.accumulated_sigma(1, 0.37) == pytest.approx(0.37)
    with pytest.raises(ValueError):
        pn.accumulated_sigma(0, 1.0)


def test_accumulated_sigma_random_walk_oracle():
    # variance of an i-step cumulative sum of N(0, sigma^2) is i * sigma^2
    rng = np.random.default_rng(1)
    sigma, i = 0.8, 13
    walks = rng.normal(0.0, sigma, size=(100_000, i)).cumsum(axis=1)
    assert walks[:, -1].var() == pytest.approx(i * sigma**2, rel=0.02)
    assert walks[:, -1].std() == pytest.approx(pn.accumulated_sigma(i, sigma), rel=0.01)


def test_mean_distance_coefficient_values():
    assert pn.mean_distance_coefficient(160) == pytest.approx(6.777, abs=0.005)
    assert pn.mean_distance_coefficient(1) == pytest.approx(0.8)
    # direct summation: 0.2 * (1 + sqrt(2) + sqrt(3) + 2)
    assert pn.mean_distance_coefficient(4) == pytest.approx(
        0.2 * (1 + np.sqrt(2) + np.sqrt(3) + 2), abs=1e-12
    )
    assert pn.mean_distance_coefficient(4) == pytest.approx(1.2293, abs=1e-4)


def test_coefficient_monotone_and_bounded():
    values = [pn.mean_distance_coefficient(L) for L in range(1, 400)]
    assert all(b > a for a, b in zip(values, values[1:]))
    for L in (1, 2, 7, 40, 160, 399):
        assert pn.mean_distance_coefficient(L) <= 0.8 * np.sqrt(L) + 1e-12


def test_sigma_for_movement_values():
    movement = np.zeros((160, 2))
    movement[:, 0] = 100.0  # constant 100 px/s along x
    assert pn.sigma_for_movement(movement) == pytest.approx(1.844, abs=2e-3)
    assert pn.NoiseModel(160).sigma_per_speed == pytest.approx(0.0184, abs=1e-4)
    one = np.array([[8.0, 0.0]])
    assert pn.sigma_for_movement(one) == pytest.approx(8 / (8 * 0.8))
    with pytest.raises(ValueError):
        pn.sigma_for_movement(np.zeros((16, 2)))


def test_sigma_scales_linearly():
    rng = np.random.default_rng(2)
    movement = rng.normal(0, 50, size=(64, 2))
    base = pn.sigma_for_movement(movement)
    for k in (0.1, 2.0, 17.5):
        assert pn.sigma_for_movement(k * movement) == pytest.approx(k * base, rel=1e-9)


def test_speed_conventions():
    movement = np.array([[3.0, 4.0], [3.0, 4.0]])
    assert pn.mean_speed(movement, "magnitude") == pytest.approx(5.0)
    assert pn.mean_speed(movement, "per_coordinate") == pytest.approx(3.5)
    with pytest.raises(ValueError):
        pn.mean_speed(movement, "rms")


def test_apply_replication_noise():
    rng = np.random.default_rng(3)
    movement = rng.normal(0, 30, size=(32, 2))
    assert np.array_equal(pn.apply_replication_noise(movement, 0.0, rng), movement)
    sigma = 4.0
    deltas = np.stack(
        [pn.apply_replication_noise(movement, sigma, rng) - movement for _ in range(2000)]
    )
    assert deltas.var() == pytest.approx(sigma**2, rel=0.02)
    a = pn.apply_replication_noise(movement, sigma, np.random.default_rng(1))
    b = pn.apply_replication_noise(movement, sigma, np.random.default_rng(2))
    assert not np.array_equal(a, b)


def test_tracking_chain_consistency():
    # per-step velocity noise sigma accumulates into a mean |position error|
    # of c(L) * sigma; the Monte-Carlo simulation must land within 5%
    rng = np.random.default_rng(4)
    for L in (32, 160):
        sigma = 2.2
        simulated = pn.simulate_tracking_error(L, sigma, 10_000, rng)
        expected = pn.mean_distance_coefficient(L) * sigma
        assert simulated == pytest.approx(expected, rel=0.05)


def test_practice_factor_scales_sigma():
    movement = np.full((40, 2), 60.0)
    relaxed = pn.NoiseModel(40, practice_factor=0.5)
    strict = pn.NoiseModel(40)
    assert relaxed.sigma_for_movement(movement) == pytest.approx(
        0.5 * strict.sigma_for_movement(movement)
    )
