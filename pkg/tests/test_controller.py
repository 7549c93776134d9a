"""Controller unit tests: per-operation oracle values, the saturation
decomposition, guard/trip semantics and structural properties."""

import inspect
import math

import numpy as np
import pytest

from hydrodrive.controller import (AdaptiveState, Gains, SafetyBounds,
                                   WheelController, adaptation_rate,
                                   barrier_gradient, guard_bound,
                                   motor_torque_command, saturate,
                                   tracking_error, valve_command,
                                   wheel_torque_command)
from hydrodrive.errors import BarrierViolation

STD_GAINS = Gains()   # tracking gains 3, adaptive triples 1, model gain 100
STD_BOUNDS = SafetyBounds()  # 0.5 / 0.25 / 290 / +-0.44


class TestTrackingError:
    def test_subtraction(self):
        v_e, _ = tracking_error(0.3, 0.25, 0.854)
        assert v_e == pytest.approx(0.05, rel=1e-12)

    def test_identity(self):
        assert tracking_error(0.17, 0.17, 0.854) == (0.0, 0.0)

    def test_angular_error_scaling(self):
        _, omega_e = tracking_error(0.0854, 0.0, 0.854)
        assert omega_e == pytest.approx(0.1, rel=1e-12)


class TestBarrierGradient:
    def test_zero_at_center(self):
        assert barrier_gradient(0.0, 0.25, "x") == 0.0

    def test_velocity_example(self):
        g = barrier_gradient(0.1, 0.25, "x")
        assert g == pytest.approx(0.1 / (0.25 ** 2 - 0.1 ** 2), rel=1e-14)
        assert g == pytest.approx(1.904762, abs=1e-6)

    def test_torque_example(self):
        g = barrier_gradient(100.0, 290.0, "x")
        assert g == pytest.approx(100.0 / (290.0 ** 2 - 100.0 ** 2), rel=1e-14)
        assert g == pytest.approx(1.349528e-3, abs=1e-9)

    def test_guard_fires_before_singularity(self):
        with pytest.raises(BarrierViolation) as exc:
            barrier_gradient(0.25 * 0.9995, 0.25, "tracking_error")
        assert exc.value.cause == "tracking_error"
        # just inside the guard is fine and finite
        g = barrier_gradient(0.25 * 0.9985, 0.25, "tracking_error")
        assert math.isfinite(g)

    def test_guard_bound_checks_magnitude(self):
        guard_bound(0.49, 0.5, "v")
        with pytest.raises(BarrierViolation):
            guard_bound(-0.4996, 0.5, "v")


class TestAdaptationRate:
    def test_example_value(self):
        b1 = 0.1 / (0.25 ** 2 - 0.1 ** 2)
        r = adaptation_rate(0.5, b1, 1.0, 1.0, 1.0)
        assert r == pytest.approx(-0.5 + 0.5 * b1 * b1, rel=1e-14)
        assert r == pytest.approx(1.314059, abs=1e-6)

    def test_pure_leak_decay(self):
        assert adaptation_rate(0.7, 0.0, 1.0, 2.0, 3.0) == -2.0 * 3.0 * 0.7

    def test_fixed_point(self):
        # rate vanishes at w = weight_gain * grad^2 / (2 * leak)
        grad = 1.3
        w_star = 1.0 * grad * grad / (2.0 * 1.0)
        assert adaptation_rate(w_star, grad, 1.0, 1.0, 1.0) == pytest.approx(
            0.0, abs=1e-15)


class TestTorqueCommands:
    def test_example_value(self):
        b1 = 0.1 / (0.25 ** 2 - 0.1 ** 2)
        tau = wheel_torque_command(STD_GAINS, 0.1, 0.5, b1, 0.0)
        assert tau == pytest.approx(-0.5 * (3 * 0.1 + 0.5 * b1), rel=1e-14)
        assert tau == pytest.approx(-0.626190, abs=1e-6)

    def test_zero_error_zero_output(self):
        assert wheel_torque_command(STD_GAINS, 0.0, 0.5, 0.0, 0.0) == 0.0

    def test_opposes_error_without_model_term(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            v_e = float(rng.uniform(-0.24, 0.24))
            if v_e == 0.0:
                continue
            b1 = v_e / (0.25 ** 2 - v_e ** 2)
            w = float(rng.uniform(0.01, 5.0))
            tau = wheel_torque_command(STD_GAINS, v_e, w, b1, 0.0)
            assert math.copysign(1.0, tau) == -math.copysign(1.0, v_e)

    def test_gear_scaling(self):
        assert motor_torque_command(-0.6261904762, 17.7) == pytest.approx(
            -0.035378, abs=1e-6)
        assert motor_torque_command(0.0, 17.7) == 0.0
        assert motor_torque_command(1.23, 1.0) == 1.23


class TestValveCommand:
    def test_zero(self):
        assert valve_command(STD_GAINS, 0.0, 0.5, 0.0) == 0.0

    def test_example_value(self):
        tau_m = -0.6261904761904763 / 17.7
        b2 = tau_m / (290.0 ** 2 - tau_m ** 2)
        u = valve_command(STD_GAINS, tau_m, 0.5, b2)
        assert u == pytest.approx(-0.5 * (3 * tau_m + 0.5 * b2), rel=1e-14)
        assert u == pytest.approx(0.053067, abs=1e-6)

    def test_opposes_demand_for_small_gradient(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            tau = float(rng.uniform(-200, 200))
            if tau == 0.0:
                continue
            b2 = tau / (290.0 ** 2 - tau ** 2)
            u = valve_command(STD_GAINS, tau, 0.5, b2)
            assert math.copysign(1.0, u) == -math.copysign(1.0, tau)


class TestSaturation:
    def test_interior_identity_branch(self):
        assert saturate(0.2, 0.44, -0.44) == (0.2, 1.0, 0.0)

    def test_upper_branch(self):
        u_sat, lam1, lam2 = saturate(1.0, 0.44, -0.44)
        assert u_sat == 0.44
        assert lam1 == 0.5
        assert lam2 == pytest.approx(-0.06, rel=1e-12)
        assert lam1 * 1.0 + lam2 == pytest.approx(0.44, abs=1e-15)

    def test_lower_branch(self):
        u_sat, lam1, lam2 = saturate(-1.0, 0.44, -0.44)
        assert u_sat == -0.44
        assert lam1 == 0.5
        assert lam2 == pytest.approx(0.06, rel=1e-12)

    def test_identity_and_factor_ranges(self):
        rng = np.random.default_rng(6)
        hi, lo = 0.44, -0.44
        for u in rng.uniform(-10.0, 10.0, size=20_000):
            u = float(u)
            u_sat, lam1, lam2 = saturate(u, hi, lo)
            assert abs(u_sat - (lam1 * u + lam2)) <= 1e-12
            assert 0.0 <= lam1 <= 1.0
            assert abs(lam2) <= max(abs(lo) + 1.0, abs(hi) + 1.0)
            assert lo <= u_sat <= hi

    def test_asymmetric_bounds(self):
        u_sat, lam1, lam2 = saturate(3.0, 0.2, -0.6)
        assert u_sat == 0.2
        assert lam1 * 3.0 + lam2 == pytest.approx(0.2, abs=1e-15)
        u_sat, lam1, lam2 = saturate(-3.0, 0.2, -0.6)
        assert u_sat == -0.6


def make_controller(adaptive=None, guard=1e-3):
    return WheelController(STD_GAINS, STD_BOUNDS,
                           adaptive or AdaptiveState(0.5, 0.5),
                           radius=0.854, gear_ratio=17.7, guard_margin=guard)


class TestControllerStep:
    def test_composition_matches_chained_operations(self):
        ctrl = make_controller()
        dt = 1e-3
        v_w, v_d, g1 = 0.35, 0.25, -1.7
        out = ctrl.step(v_w, v_d, g1, dt)

        # independent re-chaining in the documented order:
        # error -> gradient -> weight update -> torque -> gear -> gradient
        # -> weight update -> valve -> saturation
        v_e, omega_e = tracking_error(v_w, v_d, 0.854)
        b1 = barrier_gradient(v_e, STD_BOUNDS.error_limit, "x")
        w_vel = 0.5 + dt * adaptation_rate(0.5, b1, 1.0, 1.0, 1.0)
        tau_w = wheel_torque_command(STD_GAINS, v_e, w_vel, b1, g1)
        tau_m = motor_torque_command(tau_w, 17.7)
        b2 = barrier_gradient(tau_m, STD_BOUNDS.torque_limit, "x")
        w_trq = 0.5 + dt * adaptation_rate(0.5, b2, 1.0, 1.0, 1.0)
        u_raw = valve_command(STD_GAINS, tau_m, w_trq, b2)
        u_sat, lam1, lam2 = saturate(u_raw, 0.44, -0.44)

        assert out.v_e == v_e
        assert out.omega_e == omega_e
        assert out.grad_vel == b1
        assert out.tau_w_cmd == tau_w
        assert out.tau_m_cmd == tau_m
        assert out.grad_trq == b2
        assert out.u_raw == u_raw
        assert (out.u_sat, out.lam1, out.lam2) == (u_sat, lam1, lam2)
        assert ctrl.adaptive == AdaptiveState(w_vel, w_trq)

    def test_equilibrium_with_weights_at_fixed_point(self):
        # with zero error the adaptive fixed point is zero weight; the
        # controller then holds everything at rest
        ctrl = WheelController(STD_GAINS, STD_BOUNDS, AdaptiveState(0.0, 0.0))
        out = ctrl.step(0.25, 0.25, 0.0, 1e-3)
        assert out.u_sat == 0.0
        assert out.tau_w_cmd == 0.0
        assert ctrl.adaptive == AdaptiveState(0.0, 0.0)

    def test_tracking_guard_trips_and_latches(self):
        ctrl = make_controller()
        # v_w stays inside the velocity guard; only the error is at its bound
        out = ctrl.step(0.1498, -0.1, 0.0, 1e-3)
        assert ctrl.status.tripped
        assert ctrl.status.cause == "tracking_error"
        assert out.u_sat == 0.0
        # latched: outputs stay zero even for safe inputs
        out2 = ctrl.step(0.25, 0.25, 0.0, 1e-3)
        assert out2.u_sat == 0.0
        assert ctrl.status.tripped
        ctrl.reset()
        assert not ctrl.status.tripped
        assert ctrl.step(0.25, 0.25, 0.0, 1e-3).u_sat == 0.0

    def test_velocity_guard_has_priority(self):
        ctrl = make_controller()
        ctrl.step(0.4996, 0.25, 0.0, 1e-3)
        assert ctrl.status.cause == "wheel_velocity"

    def test_torque_guard_trips_on_huge_demand(self):
        ctrl = make_controller()
        # large model term makes the demanded torque exceed its bound
        ctrl.step(0.35, 0.25, -60.0, 1e-3)
        assert ctrl.status.tripped
        assert ctrl.status.cause == "motor_torque_command"
        assert ctrl.status.margin_at_trip >= 1.0 - 1e-3

    def test_margins_reported(self):
        ctrl = make_controller()
        out = ctrl.step(0.3, 0.25, 0.0, 1e-3)
        assert out.margins.velocity == pytest.approx(1.0 - 0.3 / 0.5)
        assert out.margins.tracking == pytest.approx(1.0 - 0.05 / 0.25,
                                                     rel=1e-9)
        assert 0.0 < out.margins.torque <= 1.0

    def test_adaptive_positivity_under_random_driving(self):
        ctrl = make_controller(adaptive=AdaptiveState(0.1, 0.1))
        rng = np.random.default_rng(7)
        for _ in range(2000):
            v_d = float(rng.uniform(-0.25, 0.25))
            v_w = v_d + float(rng.uniform(-0.2, 0.2))
            if ctrl.status.tripped:
                ctrl.reset()
            ctrl.step(v_w, v_d, float(rng.uniform(-2, 0)), 1e-3)
            assert ctrl.adaptive.vel > 0.0
            assert ctrl.adaptive.trq > 0.0

    def test_mirrored_references_give_exact_mirror_trajectories(self):
        # with a zero model term the whole law is odd in the error
        a = make_controller(adaptive=AdaptiveState(0.1, 0.1))
        b = make_controller(adaptive=AdaptiveState(0.1, 0.1))
        rng = np.random.default_rng(8)
        for _ in range(500):
            v_d = float(rng.uniform(-0.2, 0.2))
            v_w = v_d + float(rng.uniform(-0.15, 0.15))
            oa = a.step(v_w, v_d, 0.0, 1e-3)
            ob = b.step(-v_w, -v_d, 0.0, 1e-3)
            assert oa.v_e == -ob.v_e
            assert oa.tau_w_cmd == -ob.tau_w_cmd
            assert oa.u_raw == -ob.u_raw
            assert a.adaptive == b.adaptive

    def test_no_torque_or_pressure_feedback_in_signature(self):
        params = list(inspect.signature(WheelController.step).parameters)
        assert params == ["self", "v_w", "v_d", "g1_nominal", "dt"]

    def test_dt_must_be_positive(self):
        with pytest.raises(ValueError):
            make_controller().step(0.0, 0.0, 0.0, 0.0)


class TestValidation:
    def test_gains_positive(self):
        with pytest.raises(ValueError):
            Gains(velocity_tracking_gain=0.0)
        with pytest.raises(ValueError):
            Gains(torque_adapt_leak=-1.0)

    def test_model_dominance(self):
        Gains().validate_model_dominance(100.0)
        with pytest.raises(ValueError):
            Gains().validate_model_dominance(120.0)

    def test_euler_positivity_condition(self):
        Gains().validate_step(1e-3)
        with pytest.raises(ValueError):
            Gains(velocity_adapt_rate=40.0,
                  velocity_adapt_leak=30.0).validate_step(1e-3)

    def test_bounds_construction(self):
        assert STD_BOUNDS.error_limit == 0.25
        with pytest.raises(ValueError):
            SafetyBounds(velocity_limit=0.2, reference_limit=0.25)
        with pytest.raises(ValueError):
            SafetyBounds(u_lo=0.1)
        with pytest.raises(ValueError):
            SafetyBounds(torque_limit=0.0)

    def test_adaptive_state_nonnegative(self):
        with pytest.raises(ValueError):
            WheelController(STD_GAINS, STD_BOUNDS, AdaptiveState(-0.1, 0.1))
