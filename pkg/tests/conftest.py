"""Shared fixtures: small frozen models and their integrated oracle paths."""

import numpy as np
import pytest

from lfpf import TimeGrid, integrate_kalman, simulate_truth_and_observations, validate_model


@pytest.fixture(scope="session")
def scalar_model():
    return validate_model([[-1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])


@pytest.fixture(scope="session")
def scalar_path(scalar_model):
    grid = TimeGrid.from_duration(0.0, 1e-3, 2.0)
    obs = simulate_truth_and_observations(scalar_model, grid, 7)
    return grid, obs, integrate_kalman(scalar_model, obs, grid)


@pytest.fixture(scope="session")
def model2():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(2, 2)) * 0.4 - 0.7 * np.eye(2)
    B = rng.normal(size=(2, 2)) * 0.5
    C = rng.normal(size=(1, 2)) * 0.7
    P0 = 0.4 * np.eye(2) + 0.05
    return validate_model(A, B, C, np.zeros(2), P0)


@pytest.fixture(scope="session")
def path2(model2):
    grid = TimeGrid.from_duration(0.0, 1e-3, 1.0)
    obs = simulate_truth_and_observations(model2, grid, 5)
    return grid, obs, integrate_kalman(model2, obs, grid)


@pytest.fixture(scope="session")
def model3():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(3, 3)) * 0.4 - 0.8 * np.eye(3)
    B = rng.normal(size=(3, 2)) * 0.6
    C = rng.normal(size=(2, 3)) * 0.6
    P0 = 0.5 * np.eye(3) + 0.1 * np.ones((3, 3))
    return validate_model(A, B, C, np.zeros(3), P0)


@pytest.fixture(scope="session")
def path3(model3):
    grid = TimeGrid.from_duration(0.0, 1e-3, 1.0)
    obs = simulate_truth_and_observations(model3, grid, 9)
    return grid, obs, integrate_kalman(model3, obs, grid)
