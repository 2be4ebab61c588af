import numpy as np
import pytest

from surgebench.numerics import (
    RiccatiConvergenceError,
    discretize_zoh,
    kalman_gain,
    matrix_exponential,
    pseudoinverse,
    rk4_step,
    singular_values,
)


class TestMatrixExponential:
    def test_zero_matrix_gives_identity(self):
        assert np.allclose(matrix_exponential(np.zeros((2, 2)), 1.0), np.eye(2))

    def test_scalar_closed_form(self):
        out = matrix_exponential(np.array([[-75.0]]), 0.002)
        assert abs(out[0, 0] - np.exp(-0.15)) < 1e-10 * np.exp(-0.15)

    def test_diagonal_closed_form(self):
        out = matrix_exponential(np.diag([0.0, -75.0]), 0.002)
        assert np.allclose(out, np.diag([1.0, np.exp(-0.15)]), rtol=1e-10)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            matrix_exponential(np.ones((2, 3)), 1.0)


class TestDiscretizeZoh:
    def test_pure_integrator(self):
        phi, gamma = discretize_zoh(np.array([[0.0]]), np.array([[1.0]]), 0.002)
        assert np.allclose(phi, [[1.0]])
        assert np.allclose(gamma, [[0.002]])

    def test_plant_matrices(self):
        a = np.array([[0.0, 0.0], [0.0, -75.0]])
        b = np.array([[1.0, 1.0], [0.01, -0.04]])
        phi, gamma = discretize_zoh(a, b, 0.002)
        assert np.allclose(phi, [[1.0, 0.0], [0.0, np.exp(-0.15)]], atol=1e-12)
        scale = (1.0 - np.exp(-0.15)) / 75.0
        expected = np.array([[0.002, 0.002], [0.01 * scale, -0.04 * scale]])
        assert np.allclose(gamma, expected, rtol=1e-10)
        # spec's printed values
        assert abs(gamma[1, 0] - 1.85723e-5) < 1e-9
        assert abs(gamma[1, 1] + 7.42892e-5) < 1e-9

    def test_scalar_integral(self):
        _, gamma = discretize_zoh(np.array([[-75.0]]), np.array([[1.0]]), 0.002)
        assert abs(gamma[0, 0] - 0.00185723) < 1e-8

    def test_matches_closed_form_for_invertible_a(self):
        # Gamma = A^-1 (e^(A dt) - I) B holds whenever A is invertible.
        rng = np.random.default_rng(42)
        for _ in range(10):
            a = rng.normal(size=(2, 2))
            if abs(np.linalg.det(a)) < 0.1:
                continue
            b = rng.normal(size=(2, 2))
            dt = 0.05
            phi, gamma = discretize_zoh(a, b, dt)
            closed = np.linalg.inv(a) @ (matrix_exponential(a, dt) - np.eye(2)) @ b
            assert np.allclose(gamma, closed, atol=1e-9)
            assert np.allclose(phi, matrix_exponential(a, dt), atol=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="conform"):
            discretize_zoh(np.eye(2), np.ones((3, 1)), 0.1)
        with pytest.raises(ValueError, match="positive"):
            discretize_zoh(np.eye(2), np.ones((2, 1)), 0.0)


class TestPseudoinverse:
    def test_identity(self):
        assert np.allclose(pseudoinverse(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        assert np.allclose(pseudoinverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_rank_deficient_symmetric(self):
        m = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert np.allclose(pseudoinverse(m), m)

    def test_moore_penrose_identities(self):
        rng = np.random.default_rng(3)
        for shape in [(2, 2), (3, 2), (2, 4)]:
            m = rng.normal(size=shape)
            p = pseudoinverse(m)
            assert np.allclose(m @ p @ m, m, atol=1e-9)
            assert np.allclose(p @ m @ p, p, atol=1e-9)
            assert np.allclose((m @ p).T, m @ p, atol=1e-9)
            assert np.allclose((p @ m).T, p @ m, atol=1e-9)


class TestRk4Step:
    def test_stationary_field(self):
        x = np.array([10.0, 1.4])
        assert np.allclose(rk4_step(lambda _: np.zeros(2), x, 0.002), x)

    def test_constant_field_integrates_exactly(self):
        c = np.array([3.0, -2.0])
        x = np.array([1.0, 1.0])
        assert np.allclose(rk4_step(lambda _: c, x, 0.1), x + 0.1 * c, atol=1e-14)

    def test_linear_decay_accuracy(self):
        # x' = -75 x over dt = 0.002: local error below 1e-6.
        out = rk4_step(lambda x: -75.0 * x, np.array([1.0]), 0.002)
        assert abs(out[0] - np.exp(-0.15)) <= 1e-6

    def test_non_finite_derivative_raises(self):
        with pytest.raises(ValueError, match="non-finite"):
            rk4_step(lambda x: np.array([np.inf]), np.array([1.0]), 0.01)


class TestKalmanGain:
    def test_no_process_noise_trusts_prediction(self):
        gain = kalman_gain(np.array([[0.5]]), np.array([[1.0]]),
                           np.array([[0.0]]), np.array([[1.0]]))
        assert abs(gain[0, 0]) < 1e-9

    def test_tiny_measurement_noise_trusts_measurement(self):
        gain = kalman_gain(np.array([[1.0]]), np.array([[1.0]]),
                           np.array([[1.0]]), np.array([[1e-12]]))
        assert abs(gain[0, 0] - 1.0) < 1e-5

    def test_plant_augmented_observer_is_stable(self):
        from surgebench.plant import CANONICAL_OPERATING_POINT, linearize

        model = linearize(CANONICAL_OPERATING_POINT).discretize(0.002)
        phi_aug = np.block([[model.phi, model.gamma],
                            [np.zeros((2, 2)), np.eye(2)]])
        c_aug = np.hstack([np.eye(2), np.zeros((2, 2))])
        gain = kalman_gain(phi_aug, c_aug, np.diag([0.0, 0.0, 1.0, 1.0]),
                           1e-5 * np.eye(2))
        closed = (np.eye(4) - gain @ c_aug) @ phi_aug
        assert np.max(np.abs(np.linalg.eigvals(closed))) < 1.0

    def test_non_convergence_names_iteration_count(self):
        # Unstable mode invisible to the measurement: covariance diverges.
        with pytest.raises(RiccatiConvergenceError, match="50 iterations"):
            kalman_gain(np.array([[2.0]]), np.array([[0.0]]),
                        np.array([[1.0]]), np.array([[1.0]]), max_iter=50)


class TestSingularValues:
    def test_identity(self):
        assert np.allclose(singular_values(np.eye(2)), [1.0, 1.0])

    def test_absolute_diagonal_descending(self):
        assert np.allclose(singular_values(np.diag([3.0, -4.0])), [4.0, 3.0])

    def test_scaled_disturbance_model_at_zero_frequency(self):
        # 300/(s+75) at s = 0 has the single singular value 300/75 = 4.
        value = np.array([[0.0], [300.0 / 75.0]])
        sv = singular_values(value)
        assert abs(sv[0] - 4.0) < 1e-12

    def test_matches_conjugate_transpose(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert np.allclose(singular_values(m), singular_values(m.conj().T), atol=1e-10)
