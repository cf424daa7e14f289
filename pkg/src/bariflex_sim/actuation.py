"""Direct-drive actuator: torque-commanded motor with stick-slip friction.

The gimbal motor drives the crank through a single gear-pinion stage; there
is no gearbox, so external torques at the crank back-drive the rotor as
soon as they beat Coulomb friction.  Integration is semi-implicit Euler
with a time-stepping friction law (friction balances the net torque inside
the stick regime instead of flipping sign every step, which keeps a
stationary rotor exactly stationary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .linkage import SingularTransmission, TransmissionJacobian

TWO_PI = 2.0 * math.pi

# closing-time calibration: trapezoidal profile over the default motor
# travel (86.5 deg crank x 37/24 gear) must take 0.180 s at the 1440 deg/s
# speed limit, which pins the acceleration limit
DEFAULT_SPEED_LIMIT = math.radians(1440.0)
DEFAULT_TRAVEL = math.radians(86.5) * (37.0 / 24.0)
DEFAULT_CLOSING_TIME = 0.180
DEFAULT_ACCEL_LIMIT = DEFAULT_SPEED_LIMIT / (DEFAULT_CLOSING_TIME - DEFAULT_TRAVEL / DEFAULT_SPEED_LIMIT)


@dataclass(frozen=True)
class MotorModel:
    rotor_inertia: float = 1e-4  # kg*m^2, reflected at the motor shaft
    torque_limit: float = 0.6  # N*m rated
    speed_limit: float = DEFAULT_SPEED_LIMIT  # rad/s
    coulomb_friction: float = 0.01  # N*m
    viscous_friction: float = 1e-3  # N*m*s/rad
    accel_limit: float = DEFAULT_ACCEL_LIMIT  # rad/s^2
    encoder_bits: int = 14
    gear_ratio: float = 37.0 / 24.0
    kp: float = 1.7  # N*m/rad position gain (calibrated against the press rig)
    kd: float = 0.05  # N*m*s/rad

    def __post_init__(self):
        if min(self.rotor_inertia, self.torque_limit, self.speed_limit,
               self.accel_limit, self.gear_ratio) <= 0.0:
            raise ValueError("motor parameters must be positive")
        if self.coulomb_friction < 0.0 or self.viscous_friction < 0.0:
            raise ValueError("friction must be non-negative")
        if self.encoder_bits < 1:
            raise ValueError("encoder_bits must be >= 1")

    @property
    def encoder_resolution(self) -> float:
        return TWO_PI / (1 << self.encoder_bits)

    def quantize(self, angle: float) -> float:
        res = self.encoder_resolution
        return round(angle / res) * res

    def to_fixture(self) -> dict:
        return {
            "inertia": self.rotor_inertia,
            "torque_limit": self.torque_limit,
            "speed_limit_dps": math.degrees(self.speed_limit),
            "coulomb": self.coulomb_friction,
            "viscous": self.viscous_friction,
            "accel_limit": self.accel_limit,
            "encoder_bits": self.encoder_bits,
            "gear_ratio": self.gear_ratio,
            "kp": self.kp,
            "kd": self.kd,
        }

    @classmethod
    def from_fixture(cls, data: dict) -> "MotorModel":
        return cls(
            rotor_inertia=float(data["inertia"]),
            torque_limit=float(data["torque_limit"]),
            speed_limit=math.radians(float(data["speed_limit_dps"])),
            coulomb_friction=float(data["coulomb"]),
            viscous_friction=float(data["viscous"]),
            accel_limit=float(data["accel_limit"]),
            encoder_bits=int(data["encoder_bits"]),
            gear_ratio=float(data["gear_ratio"]),
            kp=float(data["kp"]),
            kd=float(data["kd"]),
        )


@dataclass(frozen=True)
class MotorState:
    angle: float = 0.0  # rad, true shaft angle
    velocity: float = 0.0  # rad/s
    encoder_reading: float = 0.0  # rad, quantized

    @classmethod
    def at(cls, model: MotorModel, angle: float) -> "MotorState":
        return cls(angle=angle, velocity=0.0, encoder_reading=model.quantize(angle))


def step_motor(model: MotorModel, state: MotorState, commanded_torque: float,
               external_torque: float, dt: float) -> MotorState:
    """One semi-implicit Euler step with stick-slip Coulomb friction.

    The commanded torque saturates at the rated limit; the external torque
    (back-driven load, collisions) does not.  Inside the stick regime the
    friction torque exactly balances the net applied torque, so a rotor at
    rest stays at rest until |net| exceeds the Coulomb level.
    """
    if not (0.0 < dt <= 1e-2):
        raise ValueError("dt must be in (0, 1e-2] s")
    tau_cmd = max(-model.torque_limit, min(model.torque_limit, commanded_torque))
    net = tau_cmd + external_torque

    inertia = model.rotor_inertia
    # momentum candidate after applied + viscous torques (friction handled
    # impulsively, time-stepping style)
    s = inertia * state.velocity + dt * (net - model.viscous_friction * state.velocity)
    if abs(s) <= dt * model.coulomb_friction:
        velocity = 0.0
    else:
        velocity = (s - dt * model.coulomb_friction * math.copysign(1.0, s)) / inertia

    # actuator envelope
    accel = (velocity - state.velocity) / dt
    if abs(accel) > model.accel_limit:
        velocity = state.velocity + math.copysign(model.accel_limit, accel) * dt
    velocity = max(-model.speed_limit, min(model.speed_limit, velocity))

    angle = state.angle + velocity * dt
    return MotorState(angle=angle, velocity=velocity, encoder_reading=model.quantize(angle))


def pd_torque(model: MotorModel, state: MotorState, target_angle: float,
              target_velocity: float = 0.0) -> float:
    """Position controller on the encoder reading, saturated by step_motor."""
    err = target_angle - state.encoder_reading
    derr = target_velocity - state.velocity
    return model.kp * err + model.kd * derr


def backdrive_threshold(model: MotorModel, jacobian: TransmissionJacobian) -> float:
    """Minimum fingertip force that back-drives the mechanism.

    Maps rotor Coulomb friction through the gear stage and the linkage
    jacobian at the queried pose.
    """
    jx = jacobian.tip_x_per_crank_rad
    if abs(jx) < 1e-9:
        raise SingularTransmission("transmission singular: backdrive threshold unbounded")
    return model.coulomb_friction * model.gear_ratio / abs(jx)


def closing_profile(model: MotorModel, motor_travel: float) -> float:
    """Open-to-close duration under the speed and acceleration limits.

    Trapezoidal when the travel is long enough to reach the speed limit,
    triangular otherwise.
    """
    if motor_travel < 0.0:
        raise ValueError("motor_travel must be >= 0")
    if motor_travel == 0.0:
        return 0.0
    v, a = model.speed_limit, model.accel_limit
    if motor_travel >= v * v / a:
        return motor_travel / v + v / a
    return 2.0 * math.sqrt(motor_travel / a)
