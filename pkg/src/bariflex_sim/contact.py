"""2D object geometry, contact detection, and grasp feasibility.

Objects are desk-scale cross-sections in the grasp plane: the plane through
both fingertips with x along the closing axis and y vertical (gravity -y,
lift +y).  Contacts obey Coulomb friction cones; grasp success is a small
linear feasibility problem (force closure against the weight wrench within
the gripper's force budget).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PENALTY_STIFFNESS = 1e5  # N/m, quadratic contact penalty
PENALTY_TOLERANCE = 1e-4  # m, acceptable penetration at working forces

GRAVITY = 9.81  # m/s^2


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# Shapes: each supports signed_distance(p) -> (sd, outward_normal)
# sd < 0 inside; the normal is d(sd)/dp (unit, pointing away from the shape).
# ---------------------------------------------------------------------------


class Circle:
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def signed_distance(self, p):
        d = np.asarray(p, dtype=float) - self.center
        r = float(np.hypot(d[0], d[1]))
        if r < 1e-12:
            return -self.radius, np.array([1.0, 0.0])
        return r - self.radius, d / r

    def transformed(self, origin, angle):
        return Circle(np.asarray(origin) + _rot(angle) @ self.center, self.radius)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius


class ConvexPolygon:
    """Convex CCW polygon. Signed distance is exact outside and inside."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError("need at least 3 planar vertices")
        cross = np.array([
            _cross2(v[(i + 1) % len(v)] - v[i], v[(i + 2) % len(v)] - v[(i + 1) % len(v)])
            for i in range(len(v))
        ])
        if np.any(cross <= 0):
            raise ValueError("polygon must be convex and counterclockwise")
        self.vertices = v
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        # outward normals of a CCW polygon
        self.normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / lengths[:, None]

    def signed_distance(self, p):
        p = np.asarray(p, dtype=float)
        plane = np.einsum("ij,ij->i", self.normals, p[None, :] - self.vertices)
        if plane.max() <= 0.0:  # inside: nearest face plane
            k = int(np.argmax(plane))
            return float(plane[k]), self.normals[k].copy()
        # outside: exact distance to the boundary
        best = None
        for i in range(len(self.vertices)):
            a = self.vertices[i]
            b = self.vertices[(i + 1) % len(self.vertices)]
            ab = b - a
            t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
            q = a + t * ab
            d = float(np.linalg.norm(p - q))
            if best is None or d < best[0]:
                n = (p - q) / d if d > 1e-12 else self.normals[i].copy()
                best = (d, n)
        return best

    def transformed(self, origin, angle):
        r = _rot(angle)
        return ConvexPolygon((r @ self.vertices.T).T + np.asarray(origin))

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())


class Composite:
    """Union of convex parts (e.g. an L-shaped cross-section)."""

    def __init__(self, parts):
        if not parts:
            raise ValueError("need at least one part")
        self.parts = list(parts)

    def signed_distance(self, p):
        best = None
        for part in self.parts:
            sd, n = part.signed_distance(p)
            if best is None or sd < best[0]:
                best = (sd, n)
        return best

    def transformed(self, origin, angle):
        return Composite([part.transformed(origin, angle) for part in self.parts])

    def bounding_radius(self) -> float:
        return max(part.bounding_radius() for part in self.parts)


class HalfPlane:
    """Everything behind a boundary line: sd = n . (p - q0)."""

    def __init__(self, point, outward_normal):
        self.point = np.asarray(point, dtype=float)
        n = np.asarray(outward_normal, dtype=float)
        self.normal = n / np.linalg.norm(n)

    def signed_distance(self, p):
        sd = float(np.dot(self.normal, np.asarray(p, dtype=float) - self.point))
        return sd, self.normal.copy()

    def transformed(self, origin, angle):
        r = _rot(angle)
        return HalfPlane(np.asarray(origin) + r @ self.point, r @ self.normal)

    def bounding_radius(self) -> float:
        return math.inf


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


# ---------------------------------------------------------------------------
# Objects
# ---------------------------------------------------------------------------


@dataclass
class ObjectShape2D:
    """A graspable cross-section with mass, friction, and canonical pose."""

    name: str
    shape: Circle | ConvexPolygon | Composite
    mass: float
    friction_coefficient: float = 0.4
    canonical_orientation: float = 0.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not (0.0 < self.friction_coefficient <= 2.0):
            raise ValueError("friction coefficient must be in (0, 2]")

    def posed(self, center, orientation: float) -> "ObjectShape2D":
        """Shape placed in the world: rotated about its local origin, then moved."""
        shape = self.shape.transformed(center, self.canonical_orientation + orientation)
        return ObjectShape2D(self.name, shape, self.mass, self.friction_coefficient, 0.0)

    @property
    def weight(self) -> float:
        return self.mass * GRAVITY


@dataclass
class ContactPoint:
    position: np.ndarray
    normal: np.ndarray  # unit, into the object
    normal_force: float = 0.0  # N, >= 0
    tangential_force: float = 0.0  # N
    finger: int = 0  # which jaw produced it

    def __post_init__(self):
        if self.normal_force < -1e-12:
            raise ValueError("normal force must be >= 0")

    def cone_consistent(self, mu: float, tol: float = 1e-9) -> bool:
        return abs(self.tangential_force) <= mu * self.normal_force + tol


@dataclass(frozen=True)
class Probe:
    direction: tuple[float, float] = (0.0, -1.0)
    displacement: float = 0.040
    stiffness: float = 1e6  # near-rigid rig

    def __post_init__(self):
        if self.displacement < 0:
            raise ValueError("displacement must be >= 0")


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def detect_contacts(chain_nodes, pad_segment, obj, tolerance: float = 1e-4):
    """Contact candidates between finger geometry and an object.

    chain_nodes: (n, 2) flexible-beam node positions (may be empty).
    pad_segment: (p0, p1) rigid fingertip pad, or None.
    Returns ContactPoint candidates (zero forces) for every node whose
    penetration exceeds -tolerance, plus the deepest point of each
    contiguous contact run along the pad.
    """
    shape = obj.shape if isinstance(obj, ObjectShape2D) else obj
    out = []
    if chain_nodes is not None:
        for node in np.atleast_2d(np.asarray(chain_nodes, dtype=float)):
            sd, normal = shape.signed_distance(node)
            if sd <= tolerance:
                out.append(ContactPoint(position=node.copy(), normal=-normal))
    if pad_segment is not None:
        p0, p1 = (np.asarray(p, dtype=float) for p in pad_segment)
        length = float(np.linalg.norm(p1 - p0))
        n_samples = max(2, int(math.ceil(length / 1e-3)) + 1)
        ts = np.linspace(0.0, 1.0, n_samples)
        run = []
        for t in ts:
            point = p0 + t * (p1 - p0)
            sd, normal = shape.signed_distance(point)
            if sd <= tolerance:
                run.append((sd, normal, point))
            elif run:
                out.append(_deepest(run))
                run = []
        if run:
            out.append(_deepest(run))
    return out


def _deepest(run):
    sd, normal, point = min(run, key=lambda item: item[0])
    return ContactPoint(position=point.copy(), normal=-normal)


# ---------------------------------------------------------------------------
# Grasp feasibility
# ---------------------------------------------------------------------------

REASON_NO_CONTACT = "no_contact"
REASON_INSUFFICIENT_FRICTION = "insufficient_friction"
REASON_INSUFFICIENT_FORCE = "insufficient_force"
REASON_NO_CLOSURE = "no_closure"


@dataclass(frozen=True)
class GraspVerdict:
    success: bool
    reason: str | None = None

    def __bool__(self):
        return self.success


def _wrench_feasible(contacts, obj, gravity, mu, budget) -> bool:
    """LP: cone forces at the contacts balancing the weight wrench.

    Variables per contact: normal magnitude n_i >= 0 and tangential t_i with
    |t_i| <= mu n_i; per-finger sum of normals <= budget.
    """
    from scipy.optimize import linprog

    m = len(contacts)
    com = _center_of_mass(obj)
    weight = obj.mass * gravity

    n_vars = 2 * m
    a_eq = np.zeros((3, n_vars))
    for i, c in enumerate(contacts):
        nhat = np.asarray(c.normal, dtype=float)
        that = np.array([-nhat[1], nhat[0]])
        r = np.asarray(c.position, dtype=float) - com
        a_eq[0, 2 * i] = nhat[0]
        a_eq[0, 2 * i + 1] = that[0]
        a_eq[1, 2 * i] = nhat[1]
        a_eq[1, 2 * i + 1] = that[1]
        a_eq[2, 2 * i] = _cross2(r, nhat)
        a_eq[2, 2 * i + 1] = _cross2(r, that)
    b_eq = np.array([0.0, weight, 0.0])

    rows = []
    rhs = []
    for i in range(m):
        for sign in (1.0, -1.0):
            row = np.zeros(n_vars)
            row[2 * i] = -mu
            row[2 * i + 1] = sign
            rows.append(row)
            rhs.append(0.0)
    fingers = sorted({c.finger for c in contacts})
    if budget is not None and math.isfinite(budget):
        for f in fingers:
            row = np.zeros(n_vars)
            for i, c in enumerate(contacts):
                if c.finger == f:
                    row[2 * i] = 1.0
            rows.append(row)
            rhs.append(budget)
    a_ub = np.vstack(rows)
    b_ub = np.asarray(rhs)
    bounds = [(0.0, None), (None, None)] * m
    res = linprog(
        c=np.zeros(n_vars), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=bounds, method="highs",
    )
    return res.status == 0


def _center_of_mass(obj: ObjectShape2D):
    shape = obj.shape
    if isinstance(shape, Circle):
        return shape.center.copy()
    if isinstance(shape, ConvexPolygon):
        return shape.vertices.mean(axis=0)
    if isinstance(shape, Composite):
        # area-weighted centroid of the convex parts
        total_area = 0.0
        acc = np.zeros(2)
        for part in shape.parts:
            area, centroid = _polygon_area_centroid(part)
            total_area += area
            acc += area * centroid
        return acc / total_area
    raise TypeError(f"unsupported shape {type(shape)!r}")


def _polygon_area_centroid(poly: ConvexPolygon):
    v = poly.vertices
    x, y = v[:, 0], v[:, 1]
    xr, yr = np.roll(x, -1), np.roll(y, -1)
    cross = x * yr - xr * y
    area = 0.5 * cross.sum()
    cx = ((x + xr) * cross).sum() / (6.0 * area)
    cy = ((y + yr) * cross).sum() / (6.0 * area)
    return abs(area), np.array([cx, cy])


def check_grasp(contacts, obj: ObjectShape2D, gravity: float = GRAVITY,
                force_budget: float = 11.0) -> GraspVerdict:
    """Quasistatic lift test: can cone-feasible contact forces within the
    per-finger budget balance the object's weight wrench?

    Failure attribution probes one cause at a time: if a (bounded) friction
    bump alone fixes the problem the grasp was friction-limited; if lifting
    the force budget fixes it the gripper was too weak; if nothing does,
    the contact geometry cannot close the wrench.
    """
    if not contacts:
        return GraspVerdict(False, REASON_NO_CONTACT)
    mu = obj.friction_coefficient
    if _wrench_feasible(contacts, obj, gravity, mu, force_budget):
        return GraspVerdict(True)
    mu_probe = min(2.0, max(1.0, 3.0 * mu))
    if _wrench_feasible(contacts, obj, gravity, mu_probe, force_budget):
        return GraspVerdict(False, REASON_INSUFFICIENT_FRICTION)
    if _wrench_feasible(contacts, obj, gravity, mu, None) or _wrench_feasible(
            contacts, obj, gravity, mu_probe, None):
        return GraspVerdict(False, REASON_INSUFFICIENT_FORCE)
    return GraspVerdict(False, REASON_NO_CLOSURE)


def press_probe(gripper, probe: Probe, displacement_schedule):
    """Compliance-rig protocol: advance the probe along the schedule and
    record the reactive force; stop at the 60 N cap; reset afterwards.

    Delegates the coupled elastic/back-drive equilibrium to the gripper
    assembly; this wrapper owns the protocol (monotone schedule, cap,
    reset-to-initial check).
    """
    schedule = [float(d) for d in displacement_schedule]
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("displacement schedule must be monotone increasing")
    if schedule and schedule[-1] > 0.060:
        raise ValueError("schedule exceeds the 60 mm rig travel")
    return gripper.run_press(probe, schedule)
