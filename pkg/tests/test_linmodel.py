import numpy as np
import pytest

from lfpf import DimensionMismatch, NonFinite, NotPositiveDefinite, validate_model


def test_valid_scalar_model():
    model = validate_model([[0.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    assert model.n == 1 and model.n_prime == 1 and model.m == 1
    np.testing.assert_array_equal(model.P0, [[1.0]])


def test_rectangular_b_and_c():
    model = validate_model(np.zeros((3, 3)), np.ones((3, 2)), np.ones((1, 3)),
                           np.zeros(3), np.eye(3))
    assert model.n == 3 and model.n_prime == 2 and model.m == 1


def test_indefinite_p0_rejected():
    with pytest.raises(NotPositiveDefinite):
        validate_model(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros(2),
                       [[1.0, 0.0], [0.0, -1.0]])


def test_asymmetric_p0_rejected():
    with pytest.raises(NotPositiveDefinite):
        validate_model(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros(2),
                       [[1.0, 0.5], [0.1, 1.0]])


def test_shape_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        validate_model(np.zeros((2, 2)), np.eye(2), np.ones((1, 3)), np.zeros(2), np.eye(2))
    with pytest.raises(DimensionMismatch):
        validate_model(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros(3), np.eye(2))
    with pytest.raises(DimensionMismatch):
        validate_model(np.zeros((2, 3)), np.eye(2), np.eye(2), np.zeros(2), np.eye(2))


def test_nonfinite_rejected():
    with pytest.raises(NonFinite):
        validate_model([[np.inf]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    with pytest.raises(NonFinite):
        validate_model([[0.0]], [[1.0]], [[1.0]], [np.nan], [[1.0]])


def test_p0_symmetrized_exactly():
    tiny = 1e-13
    p0 = np.array([[1.0, 0.3 + tiny], [0.3 - tiny, 1.0]])
    model = validate_model(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros(2), p0)
    np.testing.assert_array_equal(model.P0, 0.5 * (p0 + p0.T))


def test_validation_idempotent():
    model = validate_model([[-1.0, 0.2], [0.0, -0.5]], np.eye(2), np.eye(2),
                           [0.1, 0.2], 0.5 * np.eye(2))
    again = validate_model(model.A, model.B, model.C, model.mu0, model.P0)
    for a, b in ((model.A, again.A), (model.B, again.B), (model.C, again.C),
                 (model.mu0, again.mu0), (model.P0, again.P0)):
        np.testing.assert_array_equal(a, b)


def test_model_arrays_read_only():
    model = validate_model([[0.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    with pytest.raises(ValueError):
        model.A[0, 0] = 1.0
