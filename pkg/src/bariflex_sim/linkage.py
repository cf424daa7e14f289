"""Closed-form kinematics and dimensional synthesis of the finger 4-bar.

One finger of the gripper is a planar 4-bar: ground link (palm), crank
(driven through the gear-pinion stage), coupler (carries the fingertip
pad), and rocker.  The two fingers are mirror images about the gripper
centerline, so everything here is computed for the +x finger and mirrored
by callers.

Frame conventions
-----------------
* Gripper centerline is x = 0; +y points distal (palm bar at y ~ 0, finger
  blades extending toward +y).
* The crank pivot sits at ``(palm_halfwidth, 0)`` and the ground link lies
  along +x, so both fixed pivots are on the palm bar.
* All mechanism angles (crank, rocker, coupler) are measured relative to
  the ground-link direction.  A parallelogram therefore has constant
  coupler angle 0: the coupler translates, carrying a near-vertical finger
  blade mounted on it through ``fingertip_offset``.
* The crank sweeps the lower half plane (pointing away from the fingers),
  clear of the fold poses where crank and ground align.
* Aperture is twice the fingertip x-coordinate (mirrored fingers).

The link lengths themselves are not catalog data; they are recovered by
``synthesize_geometry`` against the published stroke / fingertip-force /
tip-excursion targets and frozen as a fixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

GROUND_MOUNT_ANGLE = 0.0  # ground link lies along +x (outboard)

BRANCH_ELBOW_UP = "elbow_up"
BRANCH_ELBOW_DOWN = "elbow_down"

DEFAULT_GEAR_RATIO = 37.0 / 24.0
DEFAULT_RANGE_OF_MOTION = math.radians(86.5)
OVERTRAVEL = math.radians(5.0)  # collisions may push past the commanded range

LOOP_TOLERANCE = 1e-9  # m
SINGULAR_JACOBIAN = 1e-9  # m/rad


class LinkageLocked(RuntimeError):
    """Coupler cannot reach the rocker circle: infeasible pose or geometry."""


class SynthesisFailed(RuntimeError):
    """No feasible geometry found within the iteration budget."""


class SingularTransmission(RuntimeError):
    """Transmission jacobian magnitude below the singularity threshold."""


@dataclass(frozen=True)
class LinkageGeometry:
    ground_length: float
    crank_length: float
    coupler_length: float
    rocker_length: float
    fingertip_offset: tuple[float, float]  # in the coupler frame (x along coupler)
    palm_halfwidth: float
    gear_ratio: float = DEFAULT_GEAR_RATIO
    crank_angle_open: float = 0.0
    crank_angle_closed: float = 0.0
    branch: str = BRANCH_ELBOW_UP

    def __post_init__(self):
        for name in ("ground_length", "crank_length", "coupler_length", "rocker_length"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.palm_halfwidth <= 0.0 or self.gear_ratio <= 0.0:
            raise ValueError("palm_halfwidth and gear_ratio must be positive")
        if self.branch not in (BRANCH_ELBOW_UP, BRANCH_ELBOW_DOWN):
            raise ValueError(f"unknown branch {self.branch!r}")

    @property
    def crank_pivot(self) -> np.ndarray:
        return np.array([self.palm_halfwidth, 0.0])

    @property
    def rocker_pivot(self) -> np.ndarray:
        u = np.array([math.cos(GROUND_MOUNT_ANGLE), math.sin(GROUND_MOUNT_ANGLE)])
        return self.crank_pivot + self.ground_length * u

    @property
    def range_of_motion(self) -> float:
        return self.crank_angle_open - self.crank_angle_closed

    def motor_range(self) -> float:
        """Motor-side travel for the full crank range."""
        return self.range_of_motion * self.gear_ratio

    def crank_from_motor(self, motor_angle: float) -> float:
        """Motor angle 0 = open, increasing = closing."""
        return self.crank_angle_open - motor_angle / self.gear_ratio

    def motor_from_crank(self, crank_angle: float) -> float:
        return (self.crank_angle_open - crank_angle) * self.gear_ratio

    def to_fixture(self) -> dict:
        return {
            "ground_length": self.ground_length,
            "crank_length": self.crank_length,
            "coupler_length": self.coupler_length,
            "rocker_length": self.rocker_length,
            "fingertip_offset_x": self.fingertip_offset[0],
            "fingertip_offset_y": self.fingertip_offset[1],
            "palm_halfwidth": self.palm_halfwidth,
            "gear_ratio": self.gear_ratio,
            "crank_open_deg": math.degrees(self.crank_angle_open),
            "crank_closed_deg": math.degrees(self.crank_angle_closed),
            "branch": self.branch,
        }

    @classmethod
    def from_fixture(cls, data: dict) -> "LinkageGeometry":
        return cls(
            ground_length=float(data["ground_length"]),
            crank_length=float(data["crank_length"]),
            coupler_length=float(data["coupler_length"]),
            rocker_length=float(data["rocker_length"]),
            fingertip_offset=(float(data["fingertip_offset_x"]), float(data["fingertip_offset_y"])),
            palm_halfwidth=float(data["palm_halfwidth"]),
            gear_ratio=float(data["gear_ratio"]),
            crank_angle_open=math.radians(float(data["crank_open_deg"])),
            crank_angle_closed=math.radians(float(data["crank_closed_deg"])),
            branch=str(data["branch"]),
        )


@dataclass(frozen=True)
class JointConfiguration:
    crank_angle: float
    rocker_angle: float
    coupler_angle: float
    fingertip_position: np.ndarray
    fingertip_orientation: float
    crank_joint: np.ndarray  # crank/coupler joint (world)
    rocker_joint: np.ndarray  # coupler/rocker joint (world)

    def loop_residual(self, geometry: LinkageGeometry) -> float:
        """|ground + crank_vec - coupler_vec - rocker_vec| for the closed loop."""
        a = geometry.crank_pivot
        d = geometry.rocker_pivot
        ground = d - a
        crank_vec = self.crank_joint - a
        coupler_vec = self.rocker_joint - self.crank_joint
        rocker_vec = self.rocker_joint - d
        return float(np.linalg.norm(ground + rocker_vec - crank_vec - coupler_vec))


@dataclass(frozen=True)
class SynthesisConstraints:
    max_aperture: float = 0.200
    max_tip_excursion: float = math.radians(10.0)
    range_of_motion: float = DEFAULT_RANGE_OF_MOTION
    inner_grasp_depth: float = 0.060
    size_box: tuple[float, float] = (0.125, 0.255)  # W x H
    closed_aperture: float = 0.001
    rated_torque: float = 0.6  # N*m, for the mid-range force window
    mid_force_target: float = 11.0  # N
    mid_force_tolerance: float = 0.25  # relative

    def __post_init__(self):
        if min(self.max_aperture, self.range_of_motion, self.inner_grasp_depth) <= 0:
            raise ValueError("constraints must be positive")
        if self.max_tip_excursion < 0:
            raise ValueError("max_tip_excursion must be >= 0")


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def solve_loop(geometry: LinkageGeometry, crank_angle: float) -> JointConfiguration:
    """Closed-form loop closure via circle intersection with branch selection.

    Raises LinkageLocked when the coupler circle (about the crank joint)
    does not intersect the rocker circle (about the rocker pivot).
    """
    a = geometry.crank_pivot
    d = geometry.rocker_pivot
    theta_abs = GROUND_MOUNT_ANGLE + crank_angle
    b = a + geometry.crank_length * np.array([math.cos(theta_abs), math.sin(theta_abs)])

    bd = d - b
    dist = float(np.linalg.norm(bd))
    r1 = geometry.coupler_length
    r2 = geometry.rocker_length
    if dist < 1e-12:
        raise LinkageLocked("crank joint coincides with rocker pivot")
    # circle(b, r1) n circle(d, r2)
    along = (r1 * r1 - r2 * r2 + dist * dist) / (2.0 * dist)
    h_sq = r1 * r1 - along * along
    if h_sq < 0.0:
        raise LinkageLocked(
            f"coupler cannot reach rocker at crank angle {math.degrees(crank_angle):.2f} deg "
            f"(gap {math.sqrt(-h_sq):.3e} m)"
        )
    h = math.sqrt(h_sq)
    u = bd / dist
    perp = np.array([-u[1], u[0]])
    sign = 1.0 if geometry.branch == BRANCH_ELBOW_UP else -1.0
    c = b + along * u + sign * h * perp

    coupler_abs = math.atan2(c[1] - b[1], c[0] - b[0])
    rocker_abs = math.atan2(c[1] - d[1], c[0] - d[0])
    coupler_angle = _wrap(coupler_abs - GROUND_MOUNT_ANGLE)
    rocker_angle = _wrap(rocker_abs - GROUND_MOUNT_ANGLE)
    tip = b + _rot(coupler_abs) @ np.asarray(geometry.fingertip_offset)
    return JointConfiguration(
        crank_angle=crank_angle,
        rocker_angle=rocker_angle,
        coupler_angle=coupler_angle,
        fingertip_position=tip,
        fingertip_orientation=coupler_angle,
        crank_joint=b,
        rocker_joint=c,
    )


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def aperture(geometry: LinkageGeometry, crank_angle: float) -> float:
    """Fingertip-to-fingertip opening: twice the tip x of the +x finger."""
    return 2.0 * float(solve_loop(geometry, crank_angle).fingertip_position[0])


@dataclass(frozen=True)
class TransmissionJacobian:
    aperture_per_motor_rad: float  # m/rad at the motor shaft
    tip_x_per_crank_rad: float  # m/rad at the crank
    tip_y_per_crank_rad: float  # m/rad at the crank
    orientation_per_crank_rad: float  # rad/rad


def _perp(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def transmission_jacobian(geometry: LinkageGeometry, crank_angle: float) -> TransmissionJacobian:
    """Analytic differential of the fingertip motion w.r.t. crank and motor angles.

    Differentiates the loop-closure constraints directly: the rocker joint
    velocity is perpendicular to the rocker, and its component along the
    coupler matches the crank joint's.  Tested elsewhere against a central
    finite difference of the closed-form solution.
    """
    cfg = solve_loop(geometry, crank_angle)
    a = geometry.crank_pivot
    d = geometry.rocker_pivot
    b, c = cfg.crank_joint, cfg.rocker_joint

    db = _perp(b - a)  # d crank joint / d crank angle
    e_coupler = c - b
    e_rocker = c - d
    denom = float(e_coupler @ _perp(e_rocker))
    if abs(denom) < 1e-15:
        raise SingularTransmission("dead point: coupler aligned with rocker")
    lam = float(e_coupler @ db) / denom
    dc = lam * _perp(e_rocker)

    de = dc - db
    dori = float(e_coupler[0] * de[1] - e_coupler[1] * de[0]) / float(e_coupler @ e_coupler)
    dtip = db + dori * _perp(cfg.fingertip_position - b)
    # motor angle increases when the crank closes: d crank / d motor = -1/gear
    d_ap_d_motor = 2.0 * dtip[0] * (-1.0 / geometry.gear_ratio)
    return TransmissionJacobian(
        aperture_per_motor_rad=float(d_ap_d_motor),
        tip_x_per_crank_rad=float(dtip[0]),
        tip_y_per_crank_rad=float(dtip[1]),
        orientation_per_crank_rad=float(dori),
    )


def fingertip_force(geometry: LinkageGeometry, crank_angle: float, motor_torque: float) -> float:
    """Quasistatic fingertip squeeze force from motor torque (virtual work).

    F = tau * gear_ratio / (d tip_x / d crank_angle); positive torque closes
    the gripper and produces a positive (inward) pinch force.
    """
    jac = transmission_jacobian(geometry, crank_angle)
    if abs(jac.tip_x_per_crank_rad) < SINGULAR_JACOBIAN:
        raise SingularTransmission(
            f"|d tip_x / d crank| = {abs(jac.tip_x_per_crank_rad):.3e} m/rad at "
            f"{math.degrees(crank_angle):.2f} deg"
        )
    return motor_torque * geometry.gear_ratio / jac.tip_x_per_crank_rad


def backdrive_threshold(coulomb_friction: float, gear_ratio: float,
                        jac: TransmissionJacobian) -> float:
    """Minimum steady fingertip force that overcomes rotor Coulomb friction.

    The fingertip force maps to motor torque through the crank jacobian and
    the gear stage; motion starts once that torque exceeds the Coulomb
    level.
    """
    if abs(jac.tip_x_per_crank_rad) < SINGULAR_JACOBIAN:
        raise SingularTransmission("transmission singular: no finite backdrive threshold")
    return coulomb_friction * gear_ratio / abs(jac.tip_x_per_crank_rad)


# ---------------------------------------------------------------------------
# Dimensional synthesis
# ---------------------------------------------------------------------------

_PALM_HALFWIDTH = 0.030
_BLADE_OFFSET = 0.145  # coupler-frame y offset of the pad: finger blade length
_CRANK_MID = math.radians(289.75)  # crank sweep center, clear of both fold poses

_APERTURE_TOL = 1e-3  # m
_ANGLE_TOL = math.radians(0.5)


def _candidate_geometry(params: np.ndarray, constraints: SynthesisConstraints) -> LinkageGeometry:
    ground, crank, rocker, coupler, skew, offset_x = params
    half = constraints.range_of_motion / 2.0
    mid = _CRANK_MID + skew
    return LinkageGeometry(
        ground_length=ground,
        crank_length=crank,
        coupler_length=coupler,
        rocker_length=rocker,
        fingertip_offset=(offset_x, _BLADE_OFFSET),
        palm_halfwidth=_PALM_HALFWIDTH,
        crank_angle_open=mid + half,
        crank_angle_closed=mid - half,
        branch=BRANCH_ELBOW_UP,
    )


def _select_branch(geom: LinkageGeometry) -> LinkageGeometry:
    """Pick the elbow branch whose coupler tracks the ground direction.

    The physical mechanism cannot change branch at runtime, so the choice is
    made once per geometry: the branch with the smaller coupler-angle
    magnitude over the range is the finger-curling-inward assembly.
    """
    best = None
    for branch in (BRANCH_ELBOW_UP, BRANCH_ELBOW_DOWN):
        g = replace(geom, branch=branch)
        try:
            spread = max(
                abs(solve_loop(g, ang).coupler_angle)
                for ang in np.linspace(g.crank_angle_closed, g.crank_angle_open, 7)
            )
        except LinkageLocked:
            continue
        if best is None or spread < best[0]:
            best = (spread, g)
    if best is None:
        raise LinkageLocked("no feasible branch")
    return best[1]


def _evaluate(geom: LinkageGeometry, constraints: SynthesisConstraints, n: int = 33):
    """Sweep the crank range (plus overtravel) and collect the synthesis metrics."""
    lo = geom.crank_angle_closed - OVERTRAVEL
    hi = geom.crank_angle_open + OVERTRAVEL
    angles = np.linspace(lo, hi, n)
    tips_x = []
    orientations = []
    for ang in angles:
        cfg = solve_loop(geom, ang)
        tips_x.append(cfg.fingertip_position[0])
        orientations.append(cfg.fingertip_orientation)
    tips_x = np.asarray(tips_x)
    orientations = np.unwrap(np.asarray(orientations))
    in_range = (angles >= geom.crank_angle_closed - 1e-12) & (angles <= geom.crank_angle_open + 1e-12)
    excursion = float(orientations[in_range].max() - orientations[in_range].min())
    a_open = aperture(geom, geom.crank_angle_open)
    a_closed = aperture(geom, geom.crank_angle_closed)
    slopes = np.diff(tips_x) / np.diff(angles)
    mid = 0.5 * (geom.crank_angle_open + geom.crank_angle_closed)
    force_mid = fingertip_force(geom, mid, constraints.rated_torque)
    return a_open, a_closed, excursion, slopes, force_mid


def _penalty(params: np.ndarray, constraints: SynthesisConstraints) -> float:
    ground, crank, rocker, coupler, skew, _ = params
    if min(ground, crank, rocker, coupler) <= 1e-3 or abs(skew) > math.radians(15.0):
        return 1e9
    box_w, box_h = constraints.size_box
    links_fit = (
        max(ground, crank, rocker, coupler, _BLADE_OFFSET) <= box_h
        and _PALM_HALFWIDTH + ground <= box_w / 2.0 + 1e-12
    )
    if not links_fit:
        return 1e9
    try:
        geom = _candidate_geometry(params, constraints)
        geom = _select_branch(geom)
        a_open, a_closed, excursion, slopes, force_mid = _evaluate(geom, constraints)
    except (LinkageLocked, SingularTransmission):
        return 1e9

    cost = 0.0
    cost += ((a_open - constraints.max_aperture) / _APERTURE_TOL) ** 2
    cost += ((a_closed - constraints.closed_aperture) / _APERTURE_TOL) ** 2
    # hinge well inside the excursion limit so the result keeps margin
    over = max(0.0, excursion - 0.8 * constraints.max_tip_excursion)
    cost += (over / _ANGLE_TOL) ** 2 * 100.0
    # aperture must be strictly monotonic over the operating range
    if slopes.min() <= 0.0:
        cost += 1e6 * (1.0 + abs(slopes.min()))
    lo = constraints.mid_force_target * (1.0 - constraints.mid_force_tolerance)
    hi = constraints.mid_force_target * (1.0 + constraints.mid_force_tolerance)
    if force_mid < lo:
        cost += ((lo - force_mid) * 10.0) ** 2
    elif force_mid > hi:
        cost += ((force_mid - hi) * 10.0) ** 2
    return cost


def synthesize_geometry(constraints: SynthesisConstraints | None = None,
                        seed: int = 0) -> LinkageGeometry:
    """Recover a feasible linkage from the published targets.

    Coarse grid over the link lengths (the near-parallelogram family is in
    the grid by construction) followed by Nelder-Mead refinement of the
    best seeds, with small deterministic multi-start perturbations drawn
    from ``seed``.  Raises SynthesisFailed when nothing meets the 1 mm /
    0.5 deg tolerances.
    """
    from scipy.optimize import minimize

    constraints = constraints or SynthesisConstraints()
    rng = np.random.default_rng(seed)

    # parallelogram stroke relation: tip x sweep = crank * |cos spread|
    half = constraints.range_of_motion / 2.0
    stroke = (constraints.max_aperture - constraints.closed_aperture) / 2.0

    seeds = []
    for ground in (0.024, 0.032):
        for skew in (-0.08, 0.0, 0.08):
            mid = _CRANK_MID + skew
            spread = abs(math.cos(mid + half) - math.cos(mid - half))
            if spread < 1e-6:
                continue
            crank = stroke / spread
            if crank > constraints.size_box[1]:
                continue
            # parallelogram: rocker = crank, coupler = ground; offset_x set
            # so the open pose lands at half the target aperture
            offset_x = constraints.max_aperture / 2.0 - (
                _PALM_HALFWIDTH + crank * math.cos(mid + half)
            )
            seeds.append(np.array([ground, crank, crank, ground, skew, offset_x]))
    base_count = len(seeds)
    if base_count == 0:
        raise SynthesisFailed("targets infeasible at this scale: no grid seed fits the size box")
    for _ in range(6):
        base = seeds[int(rng.integers(0, base_count))].copy()
        base[:4] *= 1.0 + 0.08 * rng.standard_normal(4)
        base[4] += 0.03 * rng.standard_normal()
        seeds.append(base)

    scored = sorted(seeds, key=lambda p: _penalty(p, constraints))
    best_params, best_cost = None, math.inf
    for start in scored[:4]:
        res = minimize(
            _penalty, start, args=(constraints,), method="Nelder-Mead",
            options={"maxiter": 4000, "xatol": 1e-7, "fatol": 1e-10},
        )
        if res.fun < best_cost:
            best_params, best_cost = res.x, res.fun

    if best_params is None or best_cost >= 1e6:
        raise SynthesisFailed(f"no feasible geometry (best penalty {best_cost:.3g})")

    geom = _select_branch(_candidate_geometry(best_params, constraints))
    a_open, a_closed, excursion, slopes, force_mid = _evaluate(geom, constraints)
    ok = (
        abs(a_open - constraints.max_aperture) <= _APERTURE_TOL
        and a_closed <= constraints.closed_aperture + _APERTURE_TOL
        and excursion <= constraints.max_tip_excursion + 1e-9
        and slopes.min() > 0.0
    )
    if not ok:
        raise SynthesisFailed(
            f"tolerances not met: open {a_open:.4f} m, closed {a_closed:.4f} m, "
            f"excursion {math.degrees(excursion):.2f} deg"
        )
    return geom
