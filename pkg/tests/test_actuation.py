import math

import numpy as np
import pytest

from bariflex_sim.actuation import (
    MotorModel,
    MotorState,
    backdrive_threshold,
    closing_profile,
    pd_torque,
    step_motor,
)
from bariflex_sim import linkage as lk
from bariflex_sim.fixtures import load_packaged


def test_static_friction_holds():
    model = MotorModel()
    state = MotorState()
    # external torque below the Coulomb level: no motion, ever
    for _ in range(1000):
        state = step_motor(model, state, 0.0, 0.005, 1e-3)
    assert state.angle == 0.0
    assert state.velocity == 0.0


def test_newton_law_without_friction():
    model = MotorModel(coulomb_friction=0.0, viscous_friction=0.0,
                       accel_limit=1e9, speed_limit=1e9)
    state = step_motor(model, MotorState(), 0.0, 0.02, 1e-3)
    assert state.velocity == pytest.approx(0.02 * 1e-3 / model.rotor_inertia, rel=1e-12)


def test_commanded_torque_saturates():
    model = MotorModel(coulomb_friction=0.0, viscous_friction=0.0,
                       accel_limit=1e9, speed_limit=1e9)
    s1 = step_motor(model, MotorState(), 5.0, 0.0, 1e-3)
    s2 = step_motor(model, MotorState(), model.torque_limit, 0.0, 1e-3)
    assert s1.velocity == s2.velocity


def test_encoder_quantization():
    model = MotorModel()
    # 0.010 deg is below half a 14-bit count (360/16384 ~ 0.02197 deg)
    state = MotorState.at(model, math.radians(0.010))
    assert state.encoder_reading == 0.0
    count = 2.0 * math.pi / 2 ** 14
    state = MotorState.at(model, 0.6 * count)
    assert state.encoder_reading == pytest.approx(count, rel=1e-12)


def test_encoder_error_below_half_count():
    model = MotorModel()
    rng = np.random.default_rng(0)
    half = math.pi / 2 ** 14
    for angle in rng.uniform(-3.0, 3.0, 500):
        state = MotorState.at(model, angle)
        assert abs(state.encoder_reading - angle) <= half + 1e-15


def test_energy_accounting_dissipative():
    # kinetic-energy change never exceeds the work of applied torques
    model = MotorModel(accel_limit=1e9)
    rng = np.random.default_rng(1)
    state = MotorState()
    dt = 1e-3
    for _ in range(2000):
        tau_cmd = float(rng.uniform(-0.6, 0.6))
        tau_ext = float(rng.uniform(-0.2, 0.2))
        new = step_motor(model, state, tau_cmd, tau_ext, dt)
        # work of the applied torques along the realized displacement
        work = (tau_cmd + tau_ext) * (new.angle - state.angle)
        dke = 0.5 * model.rotor_inertia * (new.velocity ** 2 - state.velocity ** 2)
        assert dke <= work + 1e-12
        state = new


def test_dt_halving_convergence():
    # reference maneuver: saturated PD step toward 1 rad
    def run(dt):
        model = MotorModel()
        state = MotorState()
        t = 0.0
        while t < 0.5:
            tau = pd_torque(model, state, 1.0)
            state = step_motor(model, state, tau, 0.0, dt)
            t += dt
        return state.angle

    assert abs(run(1e-3) - run(5e-4)) < 1e-4


def test_step_deterministic():
    model = MotorModel()

    def run():
        state = MotorState()
        for i in range(500):
            state = step_motor(model, state, 0.3 * math.sin(0.01 * i), 0.05, 1e-3)
        return state

    assert run() == run()


def test_backdrive_examples():
    geom = lk.LinkageGeometry.from_fixture(load_packaged("geometry_default.cfg"))
    mid = 0.5 * (geom.crank_angle_open + geom.crank_angle_closed)
    jac = lk.transmission_jacobian(geom, mid)
    assert backdrive_threshold(MotorModel(coulomb_friction=0.0), jac) == 0.0
    assert backdrive_threshold(MotorModel(), jac) < 1.0
    assert backdrive_threshold(MotorModel(coulomb_friction=1.0), jac) > 20.0


def test_backdrive_threshold_moves_motor():
    geom = lk.LinkageGeometry.from_fixture(load_packaged("geometry_default.cfg"))
    model = MotorModel()
    mid = 0.5 * (geom.crank_angle_open + geom.crank_angle_closed)
    jac = lk.transmission_jacobian(geom, mid)
    threshold = backdrive_threshold(model, jac)

    def settles_with_force(force):
        tau_ext = force * abs(jac.tip_x_per_crank_rad) / model.gear_ratio
        state = MotorState()
        for _ in range(50):
            state = step_motor(model, state, 0.0, tau_ext, 1e-3)
        return state.angle

    assert settles_with_force(0.9 * threshold) == 0.0
    assert settles_with_force(1.1 * threshold) > 0.0


def test_closing_profile_default_travel():
    model = MotorModel()
    travel = math.radians(86.5) * model.gear_ratio
    assert closing_profile(model, travel) == pytest.approx(0.180, abs=0.005)


def test_closing_profile_limits():
    model = MotorModel()
    assert closing_profile(model, 0.0) == 0.0
    assert closing_profile(model, 1e-9) < 1e-4
    travel = math.radians(86.5) * model.gear_ratio
    slower = MotorModel(speed_limit=model.speed_limit / 2.0)
    assert closing_profile(slower, travel) > closing_profile(model, travel)


def test_closing_profile_closed_form_oracle():
    # trapezoid: t = L/v + v/a when L >= v^2/a, else triangular 2*sqrt(L/a)
    model = MotorModel()
    v, a = model.speed_limit, model.accel_limit
    long_travel = 2.0 * v * v / a
    assert closing_profile(model, long_travel) == pytest.approx(long_travel / v + v / a, rel=1e-12)
    short_travel = 0.5 * v * v / a
    assert closing_profile(model, short_travel) == pytest.approx(2.0 * math.sqrt(short_travel / a), rel=1e-12)


def test_motor_fixture_round_trip(tmp_path):
    from bariflex_sim.fixtures import dump_fixture, load_fixture

    model = MotorModel()
    path = tmp_path / "motor.cfg"
    dump_fixture(model.to_fixture(), path)
    assert MotorModel.from_fixture(load_fixture(path)) == model
