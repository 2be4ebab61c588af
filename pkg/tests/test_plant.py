import numpy as np
import pytest

from surgebench.numerics import rk4_step
from surgebench.plant import (
    CANONICAL_OPERATING_POINT,
    ActuatorUncertainty,
    ControlInput,
    DisturbanceProfile,
    OperatingPoint,
    PlantState,
    SingularDynamicsError,
    canonical_profile,
    dynamics,
    equilibrium_residual,
    linearize,
    sample_disturbance,
    step_plant,
)


class TestDynamics:
    def test_equilibrium_gives_zero(self):
        out = dynamics(PlantState(10, 1.4), ControlInput(600, 150), 750.0, 1.5)
        assert np.allclose(out, [0.0, 0.0], atol=1e-12)

    def test_feed_density_above_nominal(self):
        # Direct substitution: (0, (1.6*600 + 150 - 1.4*750)/10) = (0, 6).
        out = dynamics(PlantState(10, 1.4), ControlInput(600, 150), 750.0, 1.6)
        assert np.allclose(out, [0.0, 6.0], atol=1e-12)

    def test_no_flow_is_stationary(self):
        out = dynamics(PlantState(4.2, 1.23), ControlInput(0, 0), 0.0, 1.8)
        assert np.allclose(out, [0.0, 0.0])

    def test_empty_tank_raises(self):
        with pytest.raises(SingularDynamicsError):
            dynamics(PlantState(0.0, 1.4), ControlInput(600, 150), 750.0, 1.5)


class TestEquilibriumResidual:
    def test_canonical_point(self):
        assert np.allclose(equilibrium_residual(CANONICAL_OPERATING_POINT), [0, 0])

    def test_water_shut_off(self):
        # Brute substitution: dv = 600 - 750 = -150;
        # drho = (1.5*600 + 0 - 1.4*600)/10 = +6.0.
        op = OperatingPoint(PlantState(10, 1.4), ControlInput(600, 0))
        assert np.allclose(equilibrium_residual(op), [-150.0, 6.0], atol=1e-12)

    def test_feed_density_at_setpoint(self):
        op = OperatingPoint(PlantState(10, 1.4), ControlInput(600, 150), rho_in=1.4)
        assert np.allclose(equilibrium_residual(op), [0.0, -6.0], atol=1e-12)


class TestLinearize:
    def test_canonical_matrices(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        assert np.allclose(model.a, [[0, 0], [0, -75.0]], atol=1e-9)
        assert np.allclose(model.b, [[1, 1], [0.01, -0.04]], atol=1e-9)
        assert np.allclose(model.gd, [[0.0], [60.0]], atol=1e-9)
        assert np.allclose(model.c, np.eye(2))

    def test_matches_finite_difference_jacobian(self):
        op = CANONICAL_OPERATING_POINT
        model = linearize(op)
        h = 1e-6

        def f(v, rho, qi, qw, rhoi):
            return dynamics(PlantState(v, rho), ControlInput(qi, qw), op.q_out, rhoi)

        base = (op.state.v, op.state.rho, op.inputs.q_i, op.inputs.q_w, op.rho_in)
        fd_a = np.column_stack([
            (f(base[0] + h, *base[1:]) - f(base[0] - h, *base[1:])) / (2 * h),
            (f(base[0], base[1] + h, *base[2:]) - f(base[0], base[1] - h, *base[2:])) / (2 * h),
        ])
        fd_b = np.column_stack([
            (f(*base[:2], base[2] + h, *base[3:]) - f(*base[:2], base[2] - h, *base[3:])) / (2 * h),
            (f(*base[:3], base[3] + h, base[4]) - f(*base[:3], base[3] - h, base[4])) / (2 * h),
        ])
        fd_gd = ((f(*base[:4], base[4] + h) - f(*base[:4], base[4] - h)) / (2 * h))
        assert np.allclose(model.a, fd_a, atol=1e-4)
        assert np.allclose(model.b, fd_b, atol=1e-4)
        assert np.allclose(model.gd.ravel(), fd_gd, atol=1e-4)

    def test_rescaled_volume_equilibrium(self):
        # Same flows balance at any volume; A(2,2) = -(q_i + q_w)/v.
        op = OperatingPoint(PlantState(20, 1.4), ControlInput(600, 150))
        model = linearize(op)
        assert abs(model.a[1, 1] + 750.0 / 20.0) < 1e-12

    def test_non_equilibrium_rejected_with_residual(self):
        op = OperatingPoint(PlantState(10, 1.4), ControlInput(600, 0))
        with pytest.raises(ValueError, match="-150"):
            linearize(op)


class TestStepPlant:
    def test_gain_uncertainty_applies_to_water(self):
        # Commanded 150 with a 10% water gain error reaches the tank as 165:
        # the volume then grows by exactly 15 m^3/h.
        x = step_plant(PlantState(10, 1.4), ControlInput(600, 150), 750.0, 1.5,
                       ActuatorUncertainty(qw_gain=1.1), 0.002)
        assert abs(x.v - (10.0 + 15.0 * 0.002)) < 1e-12

    def test_identity_uncertainty_at_equilibrium(self):
        x = step_plant(PlantState(10, 1.4), ControlInput(600, 150), 750.0, 1.5,
                       ActuatorUncertainty(), 0.002)
        assert abs(x.v - 10.0) < 1e-12
        assert abs(x.rho - 1.4) < 1e-12

    def test_disturbance_step_direction_and_fine_rk4_agreement(self):
        coarse = step_plant(PlantState(10, 1.4), ControlInput(600, 150), 750.0, 1.6,
                            None, 0.002)
        assert coarse.rho > 1.4
        assert abs(coarse.v - 10.0) < 1e-12
        # dt/100 reference integration
        state = np.array([10.0, 1.4])
        field = lambda x: dynamics(PlantState(x[0], x[1]), ControlInput(600, 150), 750.0, 1.6)
        for _ in range(100):
            state = rk4_step(field, state, 0.002 / 100)
        # one coarse step carries only its own O(dt^5) truncation error
        assert abs(coarse.rho - state[1]) < 1e-6


class TestDisturbanceProfile:
    def test_single_knot_holds_everywhere(self):
        profile = DisturbanceProfile(((0.0, 1.5),), 6.0)
        for t in [0.0, 1.0, 5.999]:
            assert sample_disturbance(profile, t) == 1.5

    def test_canonical_profile_shape(self):
        profile = canonical_profile()
        values = [v for _, v in profile.knots]
        assert max(values) == 1.74
        assert min(values) == 1.35
        # the sub-setpoint dip lives exactly in [2.6, 3.2)
        for t in np.arange(2.6, 3.2, 0.05):
            assert profile.value_at(t) < 1.4
        for t in np.arange(0.0, 2.4, 0.05):
            assert profile.value_at(t) >= 1.4
        for t in np.arange(3.2, 6.0, 0.05):
            assert profile.value_at(t) >= 1.4
        times = [t for t, _ in profile.knots]
        assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))

    def test_sampling_at_max_knot(self):
        profile = canonical_profile()
        t_max = next(t for t, v in profile.knots if v == 1.74)
        assert sample_disturbance(profile, t_max) == 1.74

    def test_out_of_range_time_rejected(self):
        profile = canonical_profile()
        with pytest.raises(ValueError):
            profile.value_at(-0.1)
        with pytest.raises(ValueError):
            profile.value_at(6.5)

    def test_values_outside_physical_range_rejected(self):
        with pytest.raises(ValueError):
            DisturbanceProfile(((0.0, 2.5),), 1.0)

    def test_non_increasing_times_rejected(self):
        with pytest.raises(ValueError):
            DisturbanceProfile(((0.0, 1.5), (0.0, 1.6)), 1.0)

    def test_csv_round_trip(self):
        profile = canonical_profile()
        again = DisturbanceProfile.from_csv(profile.to_csv(), profile.duration)
        assert again.knots == profile.knots

    def test_csv_rejects_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            DisturbanceProfile.from_csv("t,rho\n0,1.5\n", 1.0)


class TestPhysicalInvariants:
    def test_volume_conservation(self):
        # v(end) - v(0) equals the time integral of the actual net inflow.
        rng = np.random.default_rng(5)
        state = PlantState(10.0, 1.4)
        dt = 0.002
        gains = ActuatorUncertainty(qi_gain=1.02, qw_gain=1.1)
        net = 0.0
        duration = 0.5
        for k in range(int(duration / dt)):
            u = ControlInput(600 + rng.uniform(-100, 100), 150 + rng.uniform(-100, 100))
            actual = gains.apply(u)
            net += (actual.q_i + actual.q_w - 750.0) * dt
            state = step_plant(state, u, 750.0, 1.5, gains, dt)
        assert abs((state.v - 10.0) - net) < 1e-6 * duration

    def test_density_stays_between_source_densities(self):
        rng = np.random.default_rng(6)
        state = PlantState(10.0, 1.4)
        for k in range(1000):
            u = ControlInput(rng.uniform(300, 1200), rng.uniform(0, 750))
            rho_in = rng.uniform(1.0, 2.0)
            state = step_plant(state, u, min(u.q_i + u.q_w, 750.0), rho_in, None, 0.002)
            assert 1.0 <= state.rho <= 2.0
            assert state.v > 0
