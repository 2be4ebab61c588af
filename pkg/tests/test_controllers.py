import numpy as np
import pytest

from surgebench.controllers.feedback import (
    ConventionalController,
    LinearFeedbackController,
    derive_inverse_controller,
    local_pi_gains,
    modified_inverse_gains,
    pi_from_rules,
    realize_pi_matrix,
)
from surgebench.plant import CANONICAL_OPERATING_POINT, ControlInput, linearize
from surgebench.rational import Rational, RationalMatrix, transfer_matrix

DT = 0.002


class TestPiFromRules:
    def test_integrator_rule_volume_loop(self):
        params = pi_from_rules("integrator", k=1.0, t_r=0.05)
        assert params.kc == pytest.approx(84.0)
        assert params.tau_i == pytest.approx(0.02)
        # transfer form Kc (s + 1/tau_i)/s = 84 (s + 50)/s
        assert params.kc / params.tau_i == pytest.approx(84.0 * 50.0)

    def test_first_order_rule_density_loop(self):
        # Gp(2,2) = -0.04/(s+75): gain -0.04/75, time constant 1/75.
        params = pi_from_rules("first-order", k=-0.04 / 75.0, t_r=0.05, tau=1.0 / 75.0)
        assert params.kc == pytest.approx(-1500.0)
        assert params.tau_i == pytest.approx(1.0 / 75.0)

    def test_gain_linearity(self):
        assert pi_from_rules("integrator", k=2.0, t_r=0.05).kc == pytest.approx(42.0)

    def test_zero_gain_rejected(self):
        with pytest.raises(ValueError):
            pi_from_rules("integrator", k=0.0, t_r=0.05)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            pi_from_rules("second-order", k=1.0, t_r=0.05)


class TestRealizePiMatrix:
    def test_published_local_gains_single_step(self):
        # With the printed density gain -1505.7, one step from zero state on
        # e = (0, -0.1) moves the water channel by +150.57.
        ctrl = realize_pi_matrix(np.diag([84.0, -1505.7]),
                                 np.diag([84.0 * 50.0, -1505.7 * 75.0]), DT)
        u = ctrl.compute_control(np.array([0.0, -0.1]))
        assert u.q_i == pytest.approx(600.0)
        assert u.q_w == pytest.approx(150.0 + 150.57)

    def test_modified_inverse_gain_matrices(self):
        proportional, integral = modified_inverse_gains()
        assert np.allclose(proportional, 100.0 * np.array([[0.8, 20.0], [0.2, -20.0]]))
        assert np.allclose(integral, 100.0 * np.array([[33.04, 1500.0], [33.0, -1500.0]]))

    def test_zero_integral_gain_is_pure_proportional(self):
        ctrl = realize_pi_matrix(np.diag([84.0, -1500.0]), np.zeros((2, 2)), DT)
        e = np.array([0.5, -0.01])
        first = ctrl.compute_control(e)
        for _ in range(10):
            again = ctrl.compute_control(e)
        assert (again.q_i, again.q_w) == (first.q_i, first.q_w)

    def test_discretization_is_exact_for_integrators(self):
        ctrl = realize_pi_matrix(*local_pi_gains(), DT)
        assert np.allclose(ctrl.phi_c, np.eye(2))
        assert np.allclose(ctrl.gamma_c, DT * np.eye(2))


class TestComputeControl:
    def test_zero_error_zero_state_gives_nominal(self):
        ctrl = realize_pi_matrix(*local_pi_gains(), DT)
        u = ctrl.compute_control(np.zeros(2))
        assert (u.q_i, u.q_w) == (600.0, 150.0)

    def test_cap_rule_and_full_freeze(self):
        # command q_i = 800 -> applied (750, 0) with the integrator frozen
        ctrl = realize_pi_matrix(np.diag([84.0, -1500.0]),
                                 np.diag([4200.0, -112500.0]), DT)
        e = np.array([200.0 / 84.0, 0.0])  # proportional part alone commands +200
        u = ctrl.compute_control(e)
        assert (u.q_i, u.q_w) == (750.0, 0.0)
        assert np.allclose(ctrl.x_c, 0.0)
        for _ in range(20):
            ctrl.compute_control(e)
        assert np.allclose(ctrl.x_c, 0.0)  # sustained saturation: state constant

    def test_box_clamp_freezes_only_the_clamped_channel(self):
        ctrl = realize_pi_matrix(*local_pi_gains(), DT)
        # big positive density error drives water negative -> clamped at 0
        e = np.array([0.1, 0.2])
        u = ctrl.compute_control(e)
        assert u.q_w == 0.0
        assert u.q_i == pytest.approx(600.0 + 84.0 * 0.1)
        assert ctrl.x_c[0] == pytest.approx(DT * 0.1)  # volume channel kept integrating
        assert ctrl.x_c[1] == 0.0

    def test_integration_when_unclamped(self):
        ctrl = realize_pi_matrix(*local_pi_gains(), DT)
        e = np.array([0.01, -0.001])
        ctrl.compute_control(e)
        assert np.allclose(ctrl.x_c, DT * e)


class TestBackInitialize:
    def test_zero_error_reproduces_previous_input(self):
        ctrl = realize_pi_matrix(*local_pi_gains(), DT)
        u_prev = np.array([640.0, 180.0])
        ctrl.back_initialize(u_prev, np.zeros(2))
        u = ctrl.compute_control(np.zeros(2))
        assert abs(u.q_i - 640.0) < 1e-10
        assert abs(u.q_w - 180.0) < 1e-10

    @pytest.mark.parametrize("gains", [local_pi_gains(), modified_inverse_gains()])
    def test_round_trip_exact_for_random_pairs(self, gains):
        rng = np.random.default_rng(17)
        ctrl = realize_pi_matrix(*gains, DT)
        for _ in range(25):
            # previous inputs inside the feasible region below the q_i cap
            u_prev = np.array([rng.uniform(300, 750), rng.uniform(0, 750)])
            e_now = rng.normal(scale=[0.5, 0.02])
            ctrl.back_initialize(u_prev, e_now)
            u = ctrl.compute_control(e_now)
            assert abs(u.q_i - u_prev[0]) < 1e-10
            assert abs(u.q_w - u_prev[1]) < 1e-10


class TestDeriveInverseController:
    def plant_tf(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        return transfer_matrix(model.a, model.b, model.c)

    def test_plant_inverse_controller_structure(self):
        gc = derive_inverse_controller(self.plant_tf(), k=1.0)
        # [[0.8, 20(s+75)/s], [0.2, -20(s+75)/s]]
        assert np.allclose(gc[0, 0].num, [0.8]) and np.allclose(gc[0, 0].den, [1.0])
        assert np.allclose(gc[1, 0].num, [0.2])
        assert np.allclose(gc[0, 1].num, [1500.0, 20.0])
        assert np.allclose(gc[0, 1].den, [0.0, 1.0])
        assert np.allclose(gc[1, 1].num, [-1500.0, -20.0])
        assert np.allclose(gc[1, 1].den, [0.0, 1.0])

    def test_diagonal_integrators_invert_to_static_gain(self):
        one_over_s = Rational(np.array([1.0]), np.array([0.0, 1.0]))
        gp = RationalMatrix([[one_over_s, Rational.constant(0.0)],
                             [Rational.constant(0.0), one_over_s]])
        gc = derive_inverse_controller(gp, k=7.0)
        assert np.allclose(gc.evaluate(2.345), 7.0 * np.eye(2), atol=1e-12)

    def test_loop_shape_is_k_over_s(self):
        k = 100.0
        gp = self.plant_tf()
        gc = derive_inverse_controller(gp, k=k)
        rng = np.random.default_rng(23)
        for omega in rng.uniform(0.05, 2000.0, size=20):
            loop = gc.at_omega(omega) @ gp.at_omega(omega)
            assert np.allclose(loop, (k / (1j * omega)) * np.eye(2), atol=1e-8)


class TestConventionalController:
    def test_sim_and_plant_sides_are_independent(self):
        ctrl = ConventionalController(0, "pi", *local_pi_gains(), DT)
        r = np.array([10.0, 1.4])
        y_sim = np.array([9.9, 1.41])
        for _ in range(5):
            u = ctrl.sim_command(r, y_sim)
            ctrl.sim_commit(u)
        assert np.allclose(ctrl.plant_law.x_c, 0.0)
        assert not np.allclose(ctrl.sim_law.x_c, 0.0)

    def test_activation_gives_bumpless_first_command(self):
        ctrl = ConventionalController(1, "inverse", *modified_inverse_gains(), DT)
        r = np.array([10.0, 1.4])
        y = np.array([10.3, 1.38])
        u_prev = ControlInput(580.0, 210.0)
        ctrl.activate(r, y, u_prev)
        u = ctrl.plant_command(r, y)
        assert abs(u.q_i - 580.0) < 1e-10
        assert abs(u.q_w - 210.0) < 1e-10

    def test_reset_clears_both_sides(self):
        ctrl = ConventionalController(0, "pi", *local_pi_gains(), DT)
        r = np.array([10.0, 1.4])
        ctrl.sim_commit(ctrl.sim_command(r, np.array([9.5, 1.42])))
        ctrl.activate(r, np.array([9.8, 1.39]), ControlInput(700, 100))
        ctrl.reset()
        assert np.allclose(ctrl.sim_law.x_c, 0.0)
        assert np.allclose(ctrl.plant_law.x_c, 0.0)
