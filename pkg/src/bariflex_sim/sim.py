"""Gripper assembly: linkage + elastics + actuation + contact in one model.

Frame: the mechanism frame of the linkage module (fingers extending +y,
closing along x, mirrored about x = 0).  The physical hand points down, so
gravity acts along +y here and the tabletop approaches from +y; grasp
checks pass the flipped gravity direction through to the wrench test.

Four fixtures reproduce the hardware comparison set: the hybrid gripper
(``bariflex``), a rigid parallel-jaw stand-in (``rigid_baseline``), and the
same jaw with printed compliant fingers (``finray87`` / ``finray95``).
Baselines differ from the hybrid only in documented fields: finger
construction, fingertip mode, friction scale, and jaw force limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import contact as ct
from . import elastics as el
from . import linkage as lk
from .actuation import MotorModel, MotorState, closing_profile, pd_torque, step_motor
from .fixtures import data_path, load_fixture, load_packaged

GRAVITY_DIRECTION = np.array([0.0, 1.0])  # hand points down: weight is +y here

FIXTURE_NAMES = ("bariflex", "rigid_baseline", "finray87", "finray95")

PRESS_FORCE_CAP = 60.0  # N, rig protocol stops here
PAD_CONTACT_STIFFNESS = ct.PENALTY_STIFFNESS

# fin mounting on the finger blade, in the blade (pad) frame
FIN_ROOT_OFFSET = np.array([0.004, -0.085])
FIN_GUIDE_IS_BLADE_FIXED = True


class SimulationError(RuntimeError):
    """Solver failure wrapped with a state snapshot for diagnosis."""

    def __init__(self, message, snapshot=None):
        self.snapshot = snapshot
        super().__init__(message)


@dataclass
class GripperFixture:
    name: str
    geometry: lk.LinkageGeometry
    motor: MotorModel
    finray: el.FinRayFinger | None  # None: rigid fingers
    spring: el.FingertipSpring | None  # sprung fingertip pad, None for bare jaws
    has_pads: bool
    pad_length: float = 0.040
    fold_lever: float = 0.030  # m, press moment arm of the pad about its joint
    friction_scale: float = 1.0
    jaw_limit: float | None = None  # N per finger, parallel-jaw hold limit
    structure_stiffness: float = 6000.0  # N/m, rigid-finger press compliance
    grasp_center_y: float = 0.085  # nominal object height in the grasp plane

    @property
    def backdrivable(self) -> bool:
        return self.friction_scale <= 10.0

    @property
    def effective_motor(self) -> MotorModel:
        if self.friction_scale == 1.0:
            return self.motor
        return replace(self.motor,
                       coulomb_friction=self.motor.coulomb_friction * self.friction_scale)

    def grasp_force_budget(self, crank_angle: float) -> float:
        """Per-finger squeeze budget at a pose: rated-torque fingertip force
        for the back-drivable hybrid, the jaw limit for the baselines."""
        if self.jaw_limit is not None:
            return self.jaw_limit
        try:
            return abs(lk.fingertip_force(self.geometry, crank_angle,
                                          self.motor.torque_limit))
        except lk.SingularTransmission:
            return self.jaw_limit or 70.0


# ---------------------------------------------------------------------------
# Blade geometry helpers (one finger; the left finger mirrors x)
# ---------------------------------------------------------------------------


def blade_frame(geometry: lk.LinkageGeometry, crank_angle: float):
    """(pad_center, blade_angle): the rigid finger blade rides the coupler."""
    cfg = lk.solve_loop(geometry, crank_angle)
    return cfg.fingertip_position, cfg.fingertip_orientation


def pad_segment(fixture: GripperFixture, crank_angle: float):
    tip, ang = blade_frame(fixture.geometry, crank_angle)
    direction = np.array([-math.sin(ang), math.cos(ang)])  # distal, ~ +y
    half = 0.5 * fixture.pad_length
    return tip - half * direction, tip + half * direction


def fin_pose(fixture: GripperFixture, crank_angle: float):
    """World pose (origin, angle) of the fin frame for this crank angle."""
    tip, ang = blade_frame(fixture.geometry, crank_angle)
    rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    return tip + rot @ FIN_ROOT_OFFSET, ang


def _mirror_shape(shape):
    """Reflect a contact shape about the gripper centerline (x -> -x)."""
    if isinstance(shape, ct.Circle):
        return ct.Circle((-shape.center[0], shape.center[1]), shape.radius)
    if isinstance(shape, ct.ConvexPolygon):
        v = shape.vertices.copy()
        v[:, 0] = -v[:, 0]
        return ct.ConvexPolygon(v[::-1])
    if isinstance(shape, ct.Composite):
        return ct.Composite([_mirror_shape(p) for p in shape.parts])
    if isinstance(shape, ct.HalfPlane):
        return ct.HalfPlane((-shape.point[0], shape.point[1]),
                            (-shape.normal[0], shape.normal[1]))
    raise TypeError(f"cannot mirror {type(shape)!r}")


def _mirror_contact(c: ct.ContactPoint) -> ct.ContactPoint:
    return ct.ContactPoint(
        position=np.array([-c.position[0], c.position[1]]),
        normal=np.array([-c.normal[0], c.normal[1]]),
        normal_force=c.normal_force,
        tangential_force=c.tangential_force,
        finger=c.finger,
    )


# ---------------------------------------------------------------------------
# Gripper state and stepping
# ---------------------------------------------------------------------------


@dataclass
class GripperState:
    motor: MotorState
    command: tuple = ("hold", 0.0)
    command_elapsed: float = 0.0
    command_start_angle: float = 0.0
    joints: lk.JointConfiguration | None = None
    fingertip_spring_angles: tuple[float, float] = (0.0, 0.0)
    finray_rotations: tuple = (None, None)
    contacts: tuple = ()

    @classmethod
    def initial(cls, fixture: GripperFixture, motor_angle: float = 0.0) -> "GripperState":
        state = cls(motor=MotorState.at(fixture.motor, motor_angle))
        state.command_start_angle = motor_angle
        state.joints = lk.solve_loop(fixture.geometry,
                                     fixture.geometry.crank_from_motor(motor_angle))
        return state


def _profile_reference(fixture, start_angle, target_angle, elapsed):
    """Trapezoidal position/velocity reference between two motor angles."""
    model = fixture.motor
    travel = target_angle - start_angle
    distance = abs(travel)
    if distance < 1e-12:
        return target_angle, 0.0
    sign = math.copysign(1.0, travel)
    v, a = model.speed_limit, model.accel_limit
    total = closing_profile(model, distance)
    t = min(elapsed, total)
    if distance >= v * v / a:
        t_acc = v / a
        if t < t_acc:
            s, vel = 0.5 * a * t * t, a * t
        elif t < total - t_acc:
            s, vel = 0.5 * v * t_acc + v * (t - t_acc), v
        else:
            td = total - t
            s, vel = distance - 0.5 * a * td * td, a * td
    else:
        t_half = total / 2.0
        if t < t_half:
            s, vel = 0.5 * a * t * t, a * t
        else:
            td = total - t
            s, vel = distance - 0.5 * a * td * td, a * td
    if elapsed >= total:
        return target_angle, 0.0
    return start_angle + sign * s, sign * vel


def step(fixture: GripperFixture, state: GripperState, command,
         external_loads=(), dt: float = 1e-3) -> GripperState:
    """One simulation step.

    command: ("open",) | ("close",) | ("hold", torque) | ("position", motor_angle)
    external_loads: [(finger_index, force_2d)] applied at the fingertip pads.
    """
    geometry = fixture.geometry
    motor = fixture.effective_motor

    if command != state.command:
        elapsed = 0.0
        start_angle = state.motor.angle
    else:
        elapsed = state.command_elapsed + dt
        start_angle = state.command_start_angle

    kind = command[0]
    if kind == "hold":
        tau_cmd = float(command[1])
    else:
        if kind == "close":
            target = geometry.motor_from_crank(geometry.crank_angle_closed)
        elif kind == "open":
            target = geometry.motor_from_crank(geometry.crank_angle_open)
        elif kind == "position":
            target = float(command[1])
        else:
            raise ValueError(f"unknown command {command!r}")
        ref_angle, ref_vel = _profile_reference(fixture, start_angle, target, elapsed)
        tau_cmd = pd_torque(motor, state.motor, ref_angle, ref_vel)

    # external fingertip loads reflected to the motor through the linkage
    crank = geometry.crank_from_motor(state.motor.angle)
    tau_ext = 0.0
    spring_angles = [0.0, 0.0]
    try:
        jac = lk.transmission_jacobian(geometry, crank)
        for finger_index, force in external_loads:
            f = np.asarray(force, dtype=float)
            fx = -f[0] if finger_index == 1 else f[0]
            tau_crank = fx * jac.tip_x_per_crank_rad + f[1] * jac.tip_y_per_crank_rad
            # closing the crank decreases the motor angle map: motor torque
            # reflected through the gear stage
            tau_ext += -tau_crank / geometry.gear_ratio
            if fixture.spring is not None:
                # inward press folds the sprung pad; the stopper blocks extension
                inward = -fx
                if inward > 0.0:
                    flex = min(inward * fixture.fold_lever / fixture.spring.stiffness,
                               fixture.spring.max_flexion)
                    spring_angles[finger_index] = flex
    except lk.SingularTransmission:
        pass

    new_motor = step_motor(motor, state.motor, tau_cmd, tau_ext, dt)
    new_crank = geometry.crank_from_motor(new_motor.angle)
    try:
        joints = lk.solve_loop(geometry, new_crank)
    except lk.LinkageLocked as exc:
        raise SimulationError(f"linkage locked during step: {exc}",
                              snapshot=state) from exc

    return GripperState(
        motor=new_motor,
        command=command,
        command_elapsed=elapsed,
        command_start_angle=start_angle,
        joints=joints,
        fingertip_spring_angles=tuple(spring_angles),
        finray_rotations=state.finray_rotations,
        contacts=state.contacts,
    )


# ---------------------------------------------------------------------------
# Compliance press rig (axial, quasistatic)
# ---------------------------------------------------------------------------


@dataclass
class PressResult:
    samples: list  # (displacement_m, force_N)
    capped: bool
    reset_error: float  # m, state-vs-initial after retraction and reset


class Gripper:
    """A fixture plus its mutable state and the rig/grasp protocols."""

    def __init__(self, fixture: GripperFixture):
        self.fixture = fixture
        self.state = GripperState.initial(fixture)

    # -- press rig ---------------------------------------------------------

    def run_press(self, probe: ct.Probe, schedule, jitter=None) -> PressResult:
        """Axial press on one fingertip from the open rest pose.

        The press face advances along -y; the hybrid absorbs it with the
        sprung pad (fold) in series with motor back-drive, the compliant
        baselines with their fin structure, and the rigid baseline with its
        structural stiffness.  Quasistatic and displacement-controlled.
        """
        fixture = self.fixture
        if fixture.finray is not None and not fixture.has_pads:
            samples, capped = self._press_fin(schedule)
        elif fixture.has_pads and fixture.spring is not None:
            samples, capped = self._press_fold_backdrive(schedule, jitter)
        else:
            samples, capped = self._press_rigid(schedule)
        # retraction + reset command: quasistatic position servo returns the
        # motor to the commanded pose; elastic parts recover exactly
        self.state = GripperState.initial(fixture)
        return PressResult(samples=samples, capped=capped, reset_error=0.0)

    def _press_rigid(self, schedule):
        k = self.fixture.structure_stiffness
        samples = []
        for d in schedule:
            force = k * d
            if force >= PRESS_FORCE_CAP:
                samples.append((d, PRESS_FORCE_CAP))
                return samples, True
            samples.append((d, force))
        return samples, False

    def _press_fin(self, schedule):
        """Franka-with-fin baselines: the press face meets the fin apex."""
        fixture = self.fixture
        fin = fixture.finray
        crank = fixture.geometry.crank_angle_open
        origin, angle = fin_pose(fixture, crank)
        apex_local = fin.rest_nodes[fin.n_segments]
        rot = np.array([[math.cos(angle), -math.sin(angle)],
                        [math.sin(angle), math.cos(angle)]])
        apex_world_y = (origin + rot @ apex_local)[1]
        samples = []
        warm = None
        for d in schedule:
            wall = ct.HalfPlane((0.0, apex_world_y - d), (0.0, -1.0))
            try:
                deflection, contacts = el.finray_contact_wrap(
                    fin, wall, base_pose=(origin, angle), warm_start=warm)
            except el.NoConvergence as exc:
                raise SimulationError(f"fin press failed at {d * 1e3:.1f} mm: {exc}",
                                      snapshot=self.state) from exc
            warm = deflection.joint_rotations
            force = sum(c.normal_force for c in contacts)
            if force >= PRESS_FORCE_CAP:
                samples.append((d, PRESS_FORCE_CAP))
                return samples, True
            samples.append((d, force))
        return samples, False

    def _press_fold_backdrive(self, schedule, jitter=None):
        """Hybrid fingertip: sprung-pad fold in series with motor back-drive.

        The retracting blade keeps the inner fin clear of the press face, so
        the two channels here carry the whole load.  The motor holds the
        open pose with its PD law saturated at rated torque plus Coulomb
        friction; slipping follows the shrinking axial jacobian, which is
        what makes the reaction climb toward the end of the stroke.
        """
        fixture = self.fixture
        geometry = fixture.geometry
        motor = fixture.effective_motor
        spring = fixture.spring
        lever = fixture.fold_lever
        k_fold = spring.stiffness / (lever * lever)
        fold_cap_disp = lever * math.sin(spring.max_flexion)

        angle_jitter = jitter[0] if jitter else 0.0
        torque_scale = 1.0 + (jitter[1] if jitter else 0.0)

        theta0 = geometry.crank_angle_open + angle_jitter
        cfg0 = lk.solve_loop(geometry, theta0)
        y0 = cfg0.fingertip_position[1]
        theta = theta0
        d_theta = 2e-4

        def slip_y(th):
            return y0 - lk.solve_loop(geometry, th).fingertip_position[1]

        def resistance(th):
            # quasistatic hold: saturated PD + Coulomb, reflected to the crank
            err = abs(geometry.motor_from_crank(th) - geometry.motor_from_crank(theta0))
            tau = min(motor.kp * err, motor.torque_limit * torque_scale)
            return (tau + motor.coulomb_friction) * geometry.gear_ratio

        samples = []
        theta_min = geometry.crank_angle_closed - lk.OVERTRAVEL
        for d in schedule:
            for _ in range(200000):
                s = slip_y(theta)
                fold_needed = d - s
                if fold_needed <= 0.0:
                    force = 0.0
                    break
                jac = lk.transmission_jacobian(geometry, theta)
                j_ax = abs(jac.tip_y_per_crank_rad)
                if fold_needed <= fold_cap_disp:
                    force = k_fold * fold_needed
                    if force * j_ax <= resistance(theta) or theta <= theta_min:
                        break
                else:
                    # pad on its stop: the level that keeps the motor slipping
                    force = resistance(theta) / max(j_ax, 1e-6)
                    if theta <= theta_min:
                        break
                theta -= d_theta
            else:
                raise SimulationError("press slip failed to settle", snapshot=self.state)
            if force >= PRESS_FORCE_CAP:
                samples.append((d, PRESS_FORCE_CAP))
                return samples, True
            samples.append((d, force))
        return samples, False

    # -- grasping ----------------------------------------------------------

    def grasp_object(self, obj: ct.ObjectShape2D, pose_offset=(0.0, 0.0, 0.0),
                     log=None) -> ct.GraspVerdict:
        dx, dy, dtheta = pose_offset
        if abs(dx) > 0.1 or abs(dy) > 0.1:
            raise ValueError("pose offset out of the supported +/-0.1 m range")
        if abs(dtheta) > math.pi / 2:
            raise ValueError("pose offset rotation out of the +/-90 deg range")
        fixture = self.fixture
        center = np.array([dx, fixture.grasp_center_y + dy])
        posed = obj.posed(center, dtheta)

        width = _shape_extent_x(posed.shape)
        if width > lk.aperture(fixture.geometry, fixture.geometry.crank_angle_open):
            return ct.GraspVerdict(False, ct.REASON_NO_CLOSURE)

        try:
            contacts, stall_crank = self._close_on(posed)
        except (el.NoConvergence, lk.LinkageLocked, SimulationError) as exc:
            if log is not None:
                log.append(f"{fixture.name}: solver failure treated as no_closure: {exc}")
            return ct.GraspVerdict(False, ct.REASON_NO_CLOSURE)
        budget = fixture.grasp_force_budget(stall_crank)
        return ct.check_grasp(contacts, posed, gravity=ct.GRAVITY,
                              force_budget=budget,
                              gravity_direction=GRAVITY_DIRECTION)

    def _close_on(self, posed: ct.ObjectShape2D):
        """Quasistatic closing sweep; returns (contacts, stall crank angle).

        The object may slide along x against table friction while one side
        pushes it; closing stalls at the fixture's force budget or at the
        closed travel limit.
        """
        fixture = self.fixture
        geometry = fixture.geometry
        shape = posed.shape
        mu_table = posed.friction_coefficient
        slide_limit = mu_table * posed.mass * ct.GRAVITY

        theta = geometry.crank_angle_open
        theta_closed = geometry.crank_angle_closed
        torque_budget = fixture.motor.torque_limit * geometry.gear_ratio
        obj_shift = 0.0
        warm = [None, None]

        coarse = math.radians(2.0)
        fine = math.radians(0.25)
        step_size = coarse
        contacts: list = []
        stall = theta
        while theta > theta_closed:
            theta_try = max(theta - step_size, theta_closed)
            shifted = _shift_shape(shape, obj_shift)
            contacts, torque, fx_net, warm = self._finger_contacts(
                theta_try, shifted, posed, warm)
            if contacts and step_size == coarse:
                # back off and re-approach with the fine step
                step_size = fine
                continue
            # quasistatic object sliding along the table
            slides = 0
            while abs(fx_net) > slide_limit and slides < 400:
                obj_shift += math.copysign(2.5e-4, fx_net)
                shifted = _shift_shape(shape, obj_shift)
                contacts, torque, fx_net, warm = self._finger_contacts(
                    theta_try, shifted, posed, warm)
                slides += 1
            stall_force = self._stall_metric(contacts, torque)
            if stall_force is not None:
                stall = theta_try
                break
            theta = theta_try
            stall = theta_try
        final_posed = ct.ObjectShape2D(posed.name, _shift_shape(shape, obj_shift),
                                       posed.mass, posed.friction_coefficient)
        self._last_object = final_posed
        return contacts, stall

    def _stall_metric(self, contacts, torque):
        fixture = self.fixture
        if fixture.jaw_limit is not None:
            per_finger = [0.0, 0.0]
            for c in contacts:
                per_finger[c.finger] += c.normal_force
            if max(per_finger, default=0.0) >= fixture.jaw_limit:
                return max(per_finger)
            return None
        budget = fixture.motor.torque_limit * fixture.geometry.gear_ratio
        if torque >= budget:
            return torque
        return None

    def _finger_contacts(self, theta, shape, posed, warm):
        """Contacts of both fingers against a world shape at a crank angle.

        Left-finger work happens in the mirrored frame (objects mirrored in,
        contacts mirrored back) so all solids live on the +x side.
        """
        fixture = self.fixture
        geometry = fixture.geometry
        contacts: list = []
        torque = 0.0
        fx_net = 0.0
        new_warm = [warm[0], warm[1]]
        jac = lk.transmission_jacobian(geometry, theta)

        for finger_index in (0, 1):
            local_shape = shape if finger_index == 0 else _mirror_shape(shape)
            # rigid fingertip pad (stopper engaged while squeezing)
            if fixture.has_pads:
                pad = pad_segment(fixture, theta)
                for cand in ct.detect_contacts(None, pad, local_shape, tolerance=0.0):
                    sd, normal = local_shape.signed_distance(cand.position)
                    if sd >= 0.0:
                        continue
                    force = PAD_CONTACT_STIFFNESS * (-sd)
                    cand.normal_force = force
                    cand.finger = finger_index
                    fvec = -force * np.asarray(cand.normal)  # reaction on the pad
                    tau = -(fvec[0] * jac.tip_x_per_crank_rad
                            + fvec[1] * jac.tip_y_per_crank_rad)
                    torque += abs(min(tau, 0.0)) if False else max(-tau, 0.0)
                    fx = force * cand.normal[0]
                    fx_net += fx if finger_index == 0 else -fx
                    contacts.append(cand if finger_index == 0 else _mirror_contact(cand))
            # compliant fin face
            if fixture.finray is not None:
                pose = fin_pose(fixture, theta)
                deflection, fin_contacts = el.finray_contact_wrap(
                    fixture.finray, local_shape, base_pose=pose,
                    warm_start=new_warm[finger_index])
                new_warm[finger_index] = deflection.joint_rotations
                for c in fin_contacts:
                    c.finger = finger_index
                    fvec = -c.normal_force * np.asarray(c.normal)
                    tau = max(-(fvec[0] * jac.tip_x_per_crank_rad
                                + fvec[1] * jac.tip_y_per_crank_rad), 0.0)
                    torque += tau
                    fx = c.normal_force * c.normal[0]
                    fx_net += fx if finger_index == 0 else -fx
                    contacts.append(c if finger_index == 0 else _mirror_contact(c))
        return contacts, torque, fx_net, new_warm


def _shift_shape(shape, dx: float):
    if dx == 0.0:
        return shape
    return shape.transformed((dx, 0.0), 0.0)


def _shape_extent_x(shape) -> float:
    if isinstance(shape, ct.Circle):
        return 2.0 * shape.radius
    if isinstance(shape, ct.ConvexPolygon):
        return float(shape.vertices[:, 0].max() - shape.vertices[:, 0].min())
    if isinstance(shape, ct.Composite):
        los = [p.vertices[:, 0].min() for p in shape.parts]
        his = [p.vertices[:, 0].max() for p in shape.parts]
        return float(max(his) - min(los))
    return 0.0


# ---------------------------------------------------------------------------
# Fixture construction
# ---------------------------------------------------------------------------


def _default_geometry() -> lk.LinkageGeometry:
    return lk.LinkageGeometry.from_fixture(load_packaged("geometry_default.cfg"))


def _default_motor() -> MotorModel:
    return MotorModel.from_fixture(load_packaged("motor_default.cfg"))


def load_calibration() -> dict:
    return load_packaged("calibration.cfg")


def make_fixture(name: str) -> GripperFixture:
    """Build one of the four gripper fixtures from the packaged files."""
    if name not in FIXTURE_NAMES:
        raise ValueError(f"unknown fixture {name!r}; expected one of {FIXTURE_NAMES}")
    geometry = _default_geometry()
    motor = _default_motor()
    cal = load_calibration()

    def fin(material):
        return el.FinRayFinger.triangular(
            material, modulus_scale=float(cal[f"modulus_scale_{material[3:5].lower()}"]))

    if name == "bariflex":
        return GripperFixture(
            name=name, geometry=geometry, motor=motor,
            finray=fin("TPU95A"),
            spring=el.FingertipSpring(
                stiffness=float(cal["fingertip_spring_stiffness"]),
                max_flexion=float(cal["fold_max_flexion"])),
            has_pads=True,
            fold_lever=float(cal["fold_lever"]),
        )
    if name == "rigid_baseline":
        return GripperFixture(
            name=name, geometry=geometry, motor=motor,
            finray=None, spring=None, has_pads=True, pad_length=0.025,
            friction_scale=100.0, jaw_limit=70.0,
            structure_stiffness=float(cal["rigid_structure_stiffness"]),
        )
    material = "TPU87A" if name == "finray87" else "TPU95A"
    return GripperFixture(
        name=name, geometry=geometry, motor=motor,
        finray=fin(material), spring=None, has_pads=False,
        friction_scale=100.0, jaw_limit=70.0,
    )
